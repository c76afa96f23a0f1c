//! Procedural meshes for tests, fuzz seeds and the toy segmentation benchmark.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::{compute_vertex_normals, Label, Mesh};

/// Flat `nx` x `ny` vertex grid in the z = 0 plane.
pub fn grid_mesh(nx: usize, ny: usize, spacing: f64) -> Mesh {
    let mut m = Mesh::default();
    add_patch(
        &mut m,
        Point3::origin(),
        Vector3::x() * spacing * (nx - 1) as f64,
        Vector3::y() * spacing * (ny - 1) as f64,
        nx,
        ny,
    );
    m
}

/// Jittered height field with about `n` vertices inside the unit cube.
pub fn random_mesh(n: usize, seed: u64) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = ((n as f64).sqrt().ceil() as usize).max(2);
    let h = 1.0 / (side - 1) as f64;
    let mut m = Mesh::default();
    for j in 0..side {
        for i in 0..side {
            m.positions.push(Point3::new(
                (i as f64 + rng.gen_range(-0.3..0.3)) * h,
                (j as f64 + rng.gen_range(-0.3..0.3)) * h,
                rng.gen_range(0.0..0.3),
            ));
        }
    }
    grid_faces(&mut m, 0, side, side);
    m
}

fn grid_faces(m: &mut Mesh, base: usize, nu: usize, nv: usize) {
    for j in 0..nv - 1 {
        for i in 0..nu - 1 {
            let a = base + j * nu + i;
            let b = a + 1;
            let c = a + nu;
            let d = c + 1;
            m.faces.push([a, b, d]);
            m.faces.push([a, d, c]);
        }
    }
}

/// Appends a triangulated parallelogram `origin + s*u + t*v`, `s, t in [0, 1]`.
fn add_patch(m: &mut Mesh, origin: Point3<f64>, u: Vector3<f64>, v: Vector3<f64>, nu: usize, nv: usize) {
    let base = m.positions.len();
    for j in 0..nv {
        for i in 0..nu {
            let s = i as f64 / (nu - 1) as f64;
            let t = j as f64 / (nv - 1) as f64;
            m.positions.push(origin + u * s + v * t);
        }
    }
    grid_faces(m, base, nu, nv);
}

pub const TOY_CLASSES: usize = 3;
pub const TOY_FLOOR: Label = 0;
pub const TOY_WALL: Label = 1;
pub const TOY_BOX: Label = 2;

/// Parameters of the toy room generator.
#[derive(Debug, Clone, Copy)]
pub struct ToySceneConfig {
    /// Floor tiles per side.
    pub tiles: usize,
    /// Wall height in tiles.
    pub wall_rows: usize,
    pub boxes: usize,
    /// Tile pitch in meters; each tile is `pitch - gap` wide.
    pub pitch: f64,
    pub gap: f64,
    /// Vertices per tile side.
    pub tile_res: usize,
}

impl Default for ToySceneConfig {
    fn default() -> Self {
        Self {
            tiles: 6,
            wall_rows: 3,
            boxes: 2,
            pitch: 0.5,
            gap: 0.05,
            tile_res: 6,
        }
    }
}

/// A room built from disconnected square tiles: a floor, one wall along the
/// far edge and cubic boxes standing in floor tile slots. Every tile, box
/// top and box side is the same square, so a tile's own surface says nothing
/// about its class; only spatial context does. Colors are noise drawn from
/// one distribution for every class.
pub fn toy_scene(seed: u64, cfg: &ToySceneConfig) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Mesh::default();
    let mut labels: Vec<Label> = Vec::new();
    let side = cfg.pitch - cfg.gap;
    let r = cfg.tile_res;

    let mut slots: Vec<(usize, usize)> = (0..cfg.tiles)
        .flat_map(|i| (0..cfg.tiles - 1).map(move |j| (i, j)))
        .collect();
    let mut box_slots = Vec::new();
    for _ in 0..cfg.boxes.min(slots.len()) {
        let k = rng.gen_range(0..slots.len());
        box_slots.push(slots.swap_remove(k));
    }

    let mut patch = |m: &mut Mesh, o: Point3<f64>, u: Vector3<f64>, v: Vector3<f64>, label: Label| {
        add_patch(m, o, u, v, r, r);
        labels.resize(m.positions.len(), label);
    };
    let ex = Vector3::x() * side;
    let ey = Vector3::y() * side;
    let ez = Vector3::z() * side;

    for i in 0..cfg.tiles {
        for j in 0..cfg.tiles {
            let o = Point3::new(i as f64 * cfg.pitch, j as f64 * cfg.pitch, 0.0);
            if box_slots.contains(&(i, j)) {
                patch(&mut m, o + ez, ex, ey, TOY_BOX);
                patch(&mut m, o, ex, ez, TOY_BOX);
                patch(&mut m, o + ey, ez, ex, TOY_BOX);
                patch(&mut m, o, ez, ey, TOY_BOX);
                patch(&mut m, o + ex, ey, ez, TOY_BOX);
            } else {
                patch(&mut m, o, ex, ey, TOY_FLOOR);
            }
        }
    }
    let y_wall = cfg.tiles as f64 * cfg.pitch;
    for i in 0..cfg.tiles {
        for k in 0..cfg.wall_rows {
            let o = Point3::new(i as f64 * cfg.pitch, y_wall, k as f64 * cfg.pitch);
            patch(&mut m, o, ex, ez, TOY_WALL);
        }
    }

    for p in &mut m.positions {
        for k in 0..3 {
            p[k] += rng.gen_range(-0.004..0.004);
        }
    }
    let mut m = compute_vertex_normals(&m);
    m.colors = Some(
        (0..m.vertex_count())
            .map(|_| {
                let g: f64 = rng.gen_range(0.3..0.7);
                Vector3::new(g, g, g) + Vector3::from_fn(|_, _| rng.gen_range(-0.05..0.05))
            })
            .collect(),
    );
    m.labels = Some(labels);
    m
}
