//! PLY reading and writing (ASCII and binary little endian).
//!
//! Recognized vertex properties are `x y z`, `red green blue`, `nx ny nz` and
//! `label`; anything else is parsed and dropped. Integer color channels are
//! scaled to `[0, 1]` by the maximum of their type (255 for `uchar`). Faces
//! come from the first list property of the `face` element and must be
//! triangles. A negative label is read as [`UNLABELED`].
//!
//! The writer stores positions, colors and normals as `double`, so a binary
//! round trip is bit-exact. Labels are written as `int` with `-1` for
//! unlabeled vertices.

use std::fmt::Write as _;

use nalgebra::{Point3, Vector3};

use super::{Label, Mesh, UNLABELED};
use crate::error::{Error, Location, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }

    /// Full-scale value used to map integer color channels to `[0, 1]`.
    fn color_scale(self) -> f64 {
        match self {
            Scalar::I8 => i8::MAX as f64,
            Scalar::U8 => u8::MAX as f64,
            Scalar::I16 => i16::MAX as f64,
            Scalar::U16 => u16::MAX as f64,
            Scalar::I32 => i32::MAX as f64,
            Scalar::U32 => u32::MAX as f64,
            Scalar::F32 | Scalar::F64 => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
enum PropertyType {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    ty: PropertyType,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    encoding: PlyEncoding,
    elements: Vec<Element>,
    body_start: usize,
    lines: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0usize;
    let mut lineno = 0usize;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();

    loop {
        if pos >= bytes.len() {
            return Err(Error::parse(
                Location::Line(lineno + 1),
                "unexpected end of file inside the header",
            ));
        }
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|e| pos + e)
            .unwrap_or(bytes.len());
        lineno += 1;
        let raw = &bytes[pos..end];
        pos = (end + 1).min(bytes.len());
        let line = std::str::from_utf8(raw)
            .map_err(|_| Error::parse(Location::Line(lineno), "header is not valid UTF-8"))?
            .trim_end_matches('\r')
            .trim();
        let err = |m: String| Error::parse(Location::Line(lineno), m);

        if lineno == 1 {
            if line != "ply" {
                return Err(err("missing `ply` magic".into()));
            }
            continue;
        }
        let mut tok = line.split_ascii_whitespace();
        match tok.next() {
            None => continue,
            Some("comment") | Some("obj_info") => continue,
            Some("format") => {
                let fmt = tok.next().unwrap_or("");
                encoding = Some(match fmt {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    other => return Err(err(format!("unsupported PLY format {other:?}"))),
                });
            }
            Some("element") => {
                let (Some(name), Some(count), None) = (tok.next(), tok.next(), tok.next()) else {
                    return Err(err(format!("malformed element line {line:?}")));
                };
                let count: usize = count.parse().map_err(|_| err(format!("bad element count {count:?}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let Some(element) = elements.last_mut() else {
                    return Err(err("property before any element".into()));
                };
                let parts: Vec<&str> = tok.collect();
                let property = match parts.as_slice() {
                    ["list", c, i, name] => {
                        let count = Scalar::parse(c)
                            .filter(|s| s.is_integer())
                            .ok_or_else(|| err(format!("bad list count type {c:?}")))?;
                        let item = Scalar::parse(i).ok_or_else(|| err(format!("unknown property type {i:?}")))?;
                        Property {
                            name: name.to_string(),
                            ty: PropertyType::List { count, item },
                        }
                    }
                    [t, name] => Property {
                        name: name.to_string(),
                        ty: PropertyType::Scalar(
                            Scalar::parse(t).ok_or_else(|| err(format!("unknown property type {t:?}")))?,
                        ),
                    },
                    _ => return Err(err(format!("malformed property line {line:?}"))),
                };
                element.properties.push(property);
            }
            Some("end_header") => {
                let encoding = encoding.ok_or_else(|| err("missing format line".into()))?;
                return Ok(Header {
                    encoding,
                    elements,
                    body_start: pos,
                    lines: lineno,
                });
            }
            Some(other) => return Err(err(format!("unexpected header keyword {other:?}"))),
        }
    }
}

/// Streams values out of the body in either encoding.
trait ValueSource {
    /// Called before each element item; ASCII readers advance to the next line.
    fn begin_item(&mut self) -> Result<()>;
    fn scalar(&mut self, ty: Scalar) -> Result<f64>;
    fn end_item(&mut self) -> Result<()>;
    fn location(&self) -> Location;
    fn remaining_hint(&self) -> usize;
}

struct AsciiSource<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line_offset: usize,
    current: Vec<&'a str>,
    cursor: usize,
    lineno: usize,
    remaining_bytes: usize,
}

impl<'a> AsciiSource<'a> {
    fn new(text: &'a str, line_offset: usize) -> Self {
        Self {
            lines: text.lines().enumerate(),
            line_offset,
            current: Vec::new(),
            cursor: 0,
            lineno: line_offset,
            remaining_bytes: text.len(),
        }
    }
}

impl ValueSource for AsciiSource<'_> {
    fn begin_item(&mut self) -> Result<()> {
        loop {
            let Some((i, line)) = self.lines.next() else {
                return Err(Error::parse(
                    Location::Line(self.lineno + 1),
                    "unexpected end of file in body",
                ));
            };
            self.lineno = self.line_offset + i + 1;
            self.remaining_bytes = self.remaining_bytes.saturating_sub(line.len() + 1);
            let toks: Vec<&str> = line.split_ascii_whitespace().collect();
            if !toks.is_empty() {
                self.current = toks;
                self.cursor = 0;
                return Ok(());
            }
        }
    }

    fn scalar(&mut self, ty: Scalar) -> Result<f64> {
        let tok = self
            .current
            .get(self.cursor)
            .ok_or_else(|| Error::parse(Location::Line(self.lineno), "too few values on line"))?;
        self.cursor += 1;
        let v: f64 = if ty.is_integer() {
            tok.parse::<i64>()
                .map(|v| v as f64)
                .map_err(|_| Error::parse(Location::Line(self.lineno), format!("bad integer {tok:?}")))?
        } else {
            tok.parse::<f64>()
                .map_err(|_| Error::parse(Location::Line(self.lineno), format!("bad number {tok:?}")))?
        };
        Ok(v)
    }

    fn end_item(&mut self) -> Result<()> {
        if self.cursor != self.current.len() {
            return Err(Error::parse(Location::Line(self.lineno), "too many values on line"));
        }
        Ok(())
    }

    fn location(&self) -> Location {
        Location::Line(self.lineno)
    }

    fn remaining_hint(&self) -> usize {
        self.remaining_bytes
    }
}

struct BinarySource<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ValueSource for BinarySource<'_> {
    fn begin_item(&mut self) -> Result<()> {
        Ok(())
    }

    fn scalar(&mut self, ty: Scalar) -> Result<f64> {
        let n = ty.size();
        let Some(b) = self.bytes.get(self.pos..self.pos + n) else {
            return Err(Error::parse(
                Location::Byte(self.pos),
                "unexpected end of file in binary body",
            ));
        };
        self.pos += n;
        Ok(match ty {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b.try_into().expect("8 bytes")),
        })
    }

    fn end_item(&mut self) -> Result<()> {
        Ok(())
    }

    fn location(&self) -> Location {
        Location::Byte(self.pos)
    }

    fn remaining_hint(&self) -> usize {
        self.bytes.len().saturating_sub(self.pos)
    }
}

struct VertexLayout {
    xyz: [usize; 3],
    rgb: Option<([usize; 3], f64)>,
    normal: Option<[usize; 3]>,
    label: Option<usize>,
}

impl VertexLayout {
    fn from_element(e: &Element) -> Result<Self> {
        let find = |n: &str| -> Option<(usize, Scalar)> {
            e.properties.iter().enumerate().find_map(|(i, p)| match p.ty {
                PropertyType::Scalar(s) if p.name == n => Some((i, s)),
                _ => None,
            })
        };
        let triple = |a: &str, b: &str, c: &str| -> Option<([usize; 3], Scalar)> {
            let (i, s) = find(a)?;
            Some(([i, find(b)?.0, find(c)?.0], s))
        };
        let (xyz, _) = triple("x", "y", "z")
            .ok_or_else(|| Error::parse(Location::Line(0), "vertex element lacks x/y/z scalar properties"))?;
        let rgb = triple("red", "green", "blue")
            .or_else(|| triple("r", "g", "b"))
            .map(|(idx, s)| (idx, s.color_scale()));
        let normal = triple("nx", "ny", "nz").map(|x| x.0);
        let label = find("label").map(|x| x.0);
        Ok(Self {
            xyz,
            rgb,
            normal,
            label,
        })
    }
}

fn read_body(header: &Header, src: &mut dyn ValueSource) -> Result<Mesh> {
    let mut mesh = Mesh::default();
    let mut saw_vertex = false;
    let mut row: Vec<f64> = Vec::new();
    let mut list_items: Vec<f64> = Vec::new();

    for element in &header.elements {
        let is_vertex = element.name == "vertex";
        let is_face = element.name == "face";
        let layout = if is_vertex {
            if saw_vertex {
                return Err(Error::parse(src.location(), "duplicate vertex element"));
            }
            saw_vertex = true;
            let l = VertexLayout::from_element(element)?;
            let cap = element.count.min(src.remaining_hint());
            mesh.positions.reserve(cap);
            if l.rgb.is_some() {
                mesh.colors = Some(Vec::with_capacity(cap));
            }
            if l.normal.is_some() {
                mesh.normals = Some(Vec::with_capacity(cap));
            }
            if l.label.is_some() {
                mesh.labels = Some(Vec::with_capacity(cap));
            }
            Some(l)
        } else {
            None
        };
        let face_list = if is_face {
            element
                .properties
                .iter()
                .position(|p| matches!(p.ty, PropertyType::List { .. }))
        } else {
            None
        };
        if is_face && face_list.is_none() && element.count > 0 {
            return Err(Error::parse(src.location(), "face element has no list property"));
        }

        for _ in 0..element.count {
            src.begin_item()?;
            row.clear();
            let mut face: Option<[usize; 3]> = None;
            for (pi, p) in element.properties.iter().enumerate() {
                match p.ty {
                    PropertyType::Scalar(s) => row.push(src.scalar(s)?),
                    PropertyType::List { count, item } => {
                        row.push(f64::NAN);
                        let loc = src.location();
                        let n = src.scalar(count)?;
                        if !(n >= 0.0) {
                            return Err(Error::parse(loc, format!("negative list length {n}")));
                        }
                        let n = n as usize;
                        if Some(pi) == face_list && n != 3 {
                            return Err(Error::parse(loc, format!("non-triangle face with {n} vertices")));
                        }
                        if n > src.remaining_hint().max(3) {
                            return Err(Error::parse(loc, format!("list length {n} exceeds input size")));
                        }
                        list_items.clear();
                        for _ in 0..n {
                            list_items.push(src.scalar(item)?);
                        }
                        if Some(pi) == face_list {
                            if !item.is_integer() {
                                return Err(Error::parse(loc, "face indices must be integers"));
                            }
                            let mut f = [0usize; 3];
                            for (k, &v) in list_items.iter().enumerate() {
                                if v < 0.0 {
                                    return Err(Error::parse(loc, format!("negative face index {v}")));
                                }
                                f[k] = v as usize;
                            }
                            face = Some(f);
                        }
                    }
                }
            }
            src.end_item()?;
            if let Some(l) = &layout {
                mesh.positions
                    .push(Point3::new(row[l.xyz[0]], row[l.xyz[1]], row[l.xyz[2]]));
                if let (Some((idx, scale)), Some(c)) = (l.rgb, mesh.colors.as_mut()) {
                    c.push(Vector3::new(row[idx[0]], row[idx[1]], row[idx[2]]) / scale);
                }
                if let (Some(idx), Some(n)) = (l.normal, mesh.normals.as_mut()) {
                    n.push(Vector3::new(row[idx[0]], row[idx[1]], row[idx[2]]));
                }
                if let (Some(idx), Some(ls)) = (l.label, mesh.labels.as_mut()) {
                    ls.push(to_label(row[idx]));
                }
            }
            if let Some(f) = face {
                mesh.faces.push(f);
            }
        }
    }
    if !saw_vertex {
        return Err(Error::parse(src.location(), "no vertex element"));
    }
    Ok(mesh)
}

fn to_label(v: f64) -> Label {
    if v >= 0.0 && v < UNLABELED as f64 && v.fract() == 0.0 {
        v as Label
    } else {
        UNLABELED
    }
}

/// Parses a PLY file without validating mesh invariants.
pub fn parse_ply(bytes: &[u8]) -> Result<Mesh> {
    let header = parse_header(bytes)?;
    let body = &bytes[header.body_start..];
    match header.encoding {
        PlyEncoding::Ascii => {
            let text = std::str::from_utf8(body).map_err(|e| {
                Error::parse(
                    Location::Byte(header.body_start + e.valid_up_to()),
                    "ASCII body is not valid UTF-8",
                )
            })?;
            let mut src = AsciiSource::new(text, header.lines);
            read_body(&header, &mut src)
        }
        PlyEncoding::BinaryLittleEndian => {
            let mut src = BinarySource {
                bytes,
                pos: header.body_start,
            };
            read_body(&header, &mut src)
        }
    }
}

pub fn encode_ply(mesh: &Mesh, encoding: PlyEncoding) -> Vec<u8> {
    let mut h = String::new();
    h.push_str("ply\n");
    h.push_str(match encoding {
        PlyEncoding::Ascii => "format ascii 1.0\n",
        PlyEncoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    let _ = writeln!(h, "element vertex {}", mesh.vertex_count());
    h.push_str("property double x\nproperty double y\nproperty double z\n");
    if mesh.colors.is_some() {
        h.push_str("property double red\nproperty double green\nproperty double blue\n");
    }
    if mesh.normals.is_some() {
        h.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    if mesh.labels.is_some() {
        h.push_str("property int label\n");
    }
    let _ = writeln!(h, "element face {}", mesh.face_count());
    h.push_str("property list uchar int vertex_indices\nend_header\n");

    let label_value = |l: Label| -> i32 {
        if l == UNLABELED {
            -1
        } else {
            l as i32
        }
    };

    match encoding {
        PlyEncoding::Ascii => {
            let mut s = h;
            for i in 0..mesh.vertex_count() {
                let p = mesh.positions[i];
                let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
                if let Some(c) = &mesh.colors {
                    let _ = write!(s, " {} {} {}", c[i].x, c[i].y, c[i].z);
                }
                if let Some(n) = &mesh.normals {
                    let _ = write!(s, " {} {} {}", n[i].x, n[i].y, n[i].z);
                }
                if let Some(l) = &mesh.labels {
                    let _ = write!(s, " {}", label_value(l[i]));
                }
                s.push('\n');
            }
            for f in &mesh.faces {
                let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
            }
            s.into_bytes()
        }
        PlyEncoding::BinaryLittleEndian => {
            let mut b = h.into_bytes();
            for i in 0..mesh.vertex_count() {
                for v in mesh.positions[i].iter() {
                    b.extend_from_slice(&v.to_le_bytes());
                }
                if let Some(c) = &mesh.colors {
                    for v in c[i].iter() {
                        b.extend_from_slice(&v.to_le_bytes());
                    }
                }
                if let Some(n) = &mesh.normals {
                    for v in n[i].iter() {
                        b.extend_from_slice(&v.to_le_bytes());
                    }
                }
                if let Some(l) = &mesh.labels {
                    b.extend_from_slice(&label_value(l[i]).to_le_bytes());
                }
            }
            for f in &mesh.faces {
                b.push(3);
                for &v in f {
                    b.extend_from_slice(&(v as i32).to_le_bytes());
                }
            }
            b
        }
    }
}
