//! Hierarchy directories.
//!
//! ```text
//! manifest.json          strategy, configuration and per-level counts
//! level_{l}.ply          binary PLY of every level
//! trace_{l}.txt          level l -> l+1, one coarse index per fine vertex
//! input_trace.txt        raw input -> level 0 (only with a pre-pass)
//! edges_{l}_geo.txt      geodesic edges, one directed `i j` per line
//! edges_{l}_euc.txt      Euclidean edges, when they were built
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EuclideanEdges, Hierarchy, HierarchyConfig, PoolingTraceMap};
use crate::error::{Error, Result};
use crate::mesh::{ply, MeshFormat};
use crate::neighborhoods::{EdgeSet, NeighborhoodKind};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelManifest {
    pub vertices: usize,
    pub faces: usize,
    pub geodesic_edges: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub euclidean: Option<NeighborhoodKind>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub euclidean_edges: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyManifest {
    pub version: u32,
    pub strategy: String,
    pub config: HierarchyConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub input_vertices: Option<usize>,
    pub levels: Vec<LevelManifest>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl HierarchyManifest {
    pub fn of(h: &Hierarchy) -> Self {
        Self {
            version: MANIFEST_VERSION,
            strategy: h.config.strategy_name().to_string(),
            config: h.config.clone(),
            input_vertices: h.input_trace.as_ref().map(|t| t.fine_count()),
            levels: h
                .levels
                .iter()
                .enumerate()
                .map(|(l, m)| LevelManifest {
                    vertices: m.vertex_count(),
                    faces: m.face_count(),
                    geodesic_edges: h.geodesic_edges[l].num_edges(),
                    euclidean: h.euclidean_edges[l].as_ref().map(|e| e.kind),
                    euclidean_edges: h.euclidean_edges[l].as_ref().map(|e| e.edges.num_edges()),
                })
                .collect(),
            warnings: h.warnings.clone(),
        }
    }
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, bytes).map_err(|e| Error::io_path(p, e))
}

fn read_text(dir: &Path, name: &str) -> Result<Option<String>> {
    let p = dir.join(name);
    match std::fs::read_to_string(&p) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io_path(p, e)),
    }
}

/// Writes the hierarchy. With `create_dir` the directory (and parents) are
/// created; otherwise a missing directory is an error. Output bytes depend
/// only on the hierarchy.
pub fn serialize_hierarchy(h: &Hierarchy, dir: &Path, create_dir: bool) -> Result<()> {
    h.validate()?;
    if create_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io_path(dir, e))?;
    } else if !dir.is_dir() {
        return Err(Error::io_path(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ));
    }
    let manifest = serde_json::to_string_pretty(&HierarchyManifest::of(h))?;
    write(dir, "manifest.json", manifest.as_bytes())?;
    for (l, m) in h.levels.iter().enumerate() {
        write(
            dir,
            &format!("level_{l}.ply"),
            &ply::encode_ply(m, ply::PlyEncoding::BinaryLittleEndian),
        )?;
        write(
            dir,
            &format!("edges_{l}_geo.txt"),
            h.geodesic_edges[l].to_text().as_bytes(),
        )?;
        if let Some(e) = &h.euclidean_edges[l] {
            write(dir, &format!("edges_{l}_euc.txt"), e.edges.to_text().as_bytes())?;
        }
    }
    for (l, t) in h.traces.iter().enumerate() {
        write(dir, &format!("trace_{l}.txt"), t.to_text().as_bytes())?;
    }
    if let Some(t) = &h.input_trace {
        write(dir, "input_trace.txt", t.to_text().as_bytes())?;
    }
    Ok(())
}

/// Reads a directory written by [`serialize_hierarchy`] and validates it.
pub fn deserialize_hierarchy(dir: &Path) -> Result<Hierarchy> {
    let text = read_text(dir, "manifest.json")?.ok_or_else(|| {
        Error::io_path(
            dir.join("manifest.json"),
            std::io::Error::new(std::io::ErrorKind::NotFound, "missing hierarchy manifest"),
        )
    })?;
    let manifest: HierarchyManifest = serde_json::from_str(&text)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Invalid(format!(
            "unsupported hierarchy manifest version {}",
            manifest.version
        )));
    }
    if manifest.levels.is_empty() {
        return Err(Error::Invalid("manifest lists no levels".into()));
    }
    let depth = manifest.levels.len();
    let mut levels = Vec::with_capacity(depth);
    let mut geodesic_edges = Vec::with_capacity(depth);
    let mut euclidean_edges = Vec::with_capacity(depth);
    for (l, lm) in manifest.levels.iter().enumerate() {
        let mesh = crate::mesh::load_mesh(&dir.join(format!("level_{l}.ply")), MeshFormat::PlyBinary)?;
        if mesh.vertex_count() != lm.vertices || mesh.face_count() != lm.faces {
            return Err(Error::Invalid(format!(
                "level {l}: manifest lists {} vertices and {} faces, file has {} and {}",
                lm.vertices,
                lm.faces,
                mesh.vertex_count(),
                mesh.face_count()
            )));
        }
        let name = format!("edges_{l}_geo.txt");
        let geo =
            read_text(dir, &name)?.ok_or_else(|| Error::Invalid(format!("missing geodesic edges for level {l}")))?;
        geodesic_edges.push(EdgeSet::parse_text(&geo, lm.vertices, &name)?);
        let euc = match lm.euclidean {
            Some(kind) => {
                let name = format!("edges_{l}_euc.txt");
                let text = read_text(dir, &name)?
                    .ok_or_else(|| Error::Invalid(format!("missing Euclidean edges for level {l}")))?;
                Some(EuclideanEdges {
                    kind,
                    edges: EdgeSet::parse_text(&text, lm.vertices, &name)?,
                })
            }
            None => None,
        };
        euclidean_edges.push(euc);
        levels.push(mesh);
    }
    let mut traces = Vec::with_capacity(depth - 1);
    for l in 0..depth - 1 {
        let name = format!("trace_{l}.txt");
        let text = read_text(dir, &name)?.ok_or_else(|| Error::Invalid(format!("missing trace map for level {l}")))?;
        traces.push(PoolingTraceMap::parse_text(
            &text,
            manifest.levels[l + 1].vertices,
            &name,
        )?);
    }
    let input_trace = match manifest.input_vertices {
        Some(_) => {
            let text =
                read_text(dir, "input_trace.txt")?.ok_or_else(|| Error::Invalid("missing input trace".into()))?;
            Some(PoolingTraceMap::parse_text(
                &text,
                manifest.levels[0].vertices,
                "input_trace.txt",
            )?)
        }
        None => None,
    };
    let h = Hierarchy {
        levels,
        traces,
        geodesic_edges,
        euclidean_edges,
        input_trace,
        config: manifest.config,
        warnings: manifest.warnings,
    };
    h.validate()?;
    Ok(h)
}
