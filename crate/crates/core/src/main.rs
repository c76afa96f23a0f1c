fn main() {
    std::process::exit(dualmesh::cli::main());
}
