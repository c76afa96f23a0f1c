//! ASCII OFF and COFF.
//!
//! COFF vertex lines carry `x y z r g b [a]`. Colors are read as integers in
//! `0..=255` when every channel parses as an integer, and as floats in
//! `[0, 1]` otherwise. The writer emits plain OFF, or COFF with float colors
//! when the mesh has colors.

use std::fmt::Write as _;

use nalgebra::{Point3, Vector3};

use super::Mesh;
use crate::error::{Error, Location, Result};

/// Tokens of the file with their 1-based line numbers, comments stripped.
fn tokens(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("");
        let toks: Vec<&str> = line.split_ascii_whitespace().collect();
        (!toks.is_empty()).then_some((i + 1, toks))
    })
}

pub fn parse_off(bytes: &[u8]) -> Result<Mesh> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::parse(Location::Byte(e.valid_up_to()), "OFF file is not valid UTF-8"))?;
    let mut lines = tokens(text);
    let eof = |line: usize| Error::parse(Location::Line(line), "unexpected end of file");

    let (mut lineno, mut toks) = lines.next().ok_or_else(|| eof(1))?;
    let colored = match toks[0] {
        "OFF" => false,
        "COFF" => true,
        other => {
            return Err(Error::parse(
                Location::Line(lineno),
                format!("expected OFF or COFF, found {other:?}"),
            ))
        }
    };
    // counts may share the magic line
    toks.remove(0);
    if toks.is_empty() {
        (lineno, toks) = lines.next().ok_or_else(|| eof(lineno + 1))?;
    }
    let count = |s: &str, line: usize| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::parse(Location::Line(line), format!("bad count {s:?}")))
    };
    if toks.len() < 2 {
        return Err(Error::parse(Location::Line(lineno), "expected vertex and face counts"));
    }
    let nv = count(toks[0], lineno)?;
    let nf = count(toks[1], lineno)?;

    let cap = text.len() / 6;
    let mut positions = Vec::with_capacity(nv.min(cap));
    let mut colors = Vec::with_capacity(if colored { nv.min(cap) } else { 0 });
    for _ in 0..nv {
        let (line, t) = lines.next().ok_or_else(|| eof(lineno + 1))?;
        lineno = line;
        let expect = if colored { 6 } else { 3 };
        if t.len() < expect {
            return Err(Error::parse(
                Location::Line(line),
                format!("expected {expect} values, found {}", t.len()),
            ));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(Location::Line(line), format!("bad number {s:?}")))
        };
        positions.push(Point3::new(num(t[0])?, num(t[1])?, num(t[2])?));
        if colored {
            let rgb = &t[3..6];
            let c = if rgb.iter().all(|s| s.parse::<i64>().is_ok()) {
                Vector3::new(num(rgb[0])?, num(rgb[1])?, num(rgb[2])?) / 255.0
            } else {
                Vector3::new(num(rgb[0])?, num(rgb[1])?, num(rgb[2])?)
            };
            colors.push(c);
        }
    }
    let mut faces = Vec::with_capacity(nf.min(cap));
    for _ in 0..nf {
        let (line, t) = lines.next().ok_or_else(|| eof(lineno + 1))?;
        lineno = line;
        let idx = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::parse(Location::Line(line), format!("bad vertex index {s:?}")))
        };
        let k = idx(t[0])?;
        if k != 3 {
            return Err(Error::parse(
                Location::Line(line),
                format!("non-triangle face with {k} vertices"),
            ));
        }
        if t.len() < 4 {
            return Err(Error::parse(Location::Line(line), "face line is too short"));
        }
        faces.push([idx(t[1])?, idx(t[2])?, idx(t[3])?]);
    }
    Ok(Mesh {
        positions,
        faces,
        colors: colored.then_some(colors),
        normals: None,
        labels: None,
    })
}

/// Normals and labels are not representable and are dropped.
pub fn encode_off(mesh: &Mesh) -> Vec<u8> {
    let mut s = String::new();
    s.push_str(if mesh.colors.is_some() { "COFF\n" } else { "OFF\n" });
    let _ = writeln!(s, "{} {} 0", mesh.vertex_count(), mesh.face_count());
    for (i, p) in mesh.positions.iter().enumerate() {
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if let Some(c) = &mesh.colors {
            let _ = write!(s, " {:?} {:?} {:?}", c[i].x, c[i].y, c[i].z);
        }
        s.push('\n');
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s.into_bytes()
}
