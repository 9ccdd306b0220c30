//! PLY, OBJ and STL readers and writers.
//!
//! Loaders keep the authored topology: no vertex welding, no reorientation.
//! Polygons in OBJ and PLY are fan-triangulated around their first vertex.

use std::fs;
use std::io::Write;
use std::path::Path;

use micp_core::mesh::MeshError;
use micp_core::{TriangleMesh, Vec3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshIoError {
    #[error("cannot read {path}")]
    Read { path: String, source: std::io::Error },
    #[error("cannot write {path}")]
    Write { path: String, source: std::io::Error },
    #[error("unsupported mesh format: {0}")]
    Unsupported(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    PlyAscii,
    PlyBinary,
    Obj,
    StlAscii,
    StlBinary,
}

impl MeshFormat {
    /// Guess from the file extension. PLY and STL default to binary.
    pub fn from_extension(path: &Path) -> Option<MeshFormat> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "ply" => Some(MeshFormat::PlyBinary),
            "obj" => Some(MeshFormat::Obj),
            "stl" => Some(MeshFormat::StlBinary),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Ply,
    Obj,
    Stl,
}

fn sniff(bytes: &[u8]) -> Option<Family> {
    if bytes.starts_with(b"ply") {
        return Some(Family::Ply);
    }
    if bytes.len() >= 84 {
        let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
        if 84 + 50 * n == bytes.len() {
            return Some(Family::Stl);
        }
    }
    let head = String::from_utf8_lossy(&bytes[..bytes.len().min(4096)]);
    let trimmed = head.trim_start();
    if trimmed.starts_with("solid") && head.contains("facet") {
        return Some(Family::Stl);
    }
    if head
        .lines()
        .any(|l| l.starts_with("v ") || l.starts_with("f ") || l.starts_with("v\t"))
    {
        return Some(Family::Obj);
    }
    None
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh, MeshIoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| MeshIoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let family = match MeshFormat::from_extension(path) {
        Some(MeshFormat::PlyAscii | MeshFormat::PlyBinary) => Family::Ply,
        Some(MeshFormat::Obj) => Family::Obj,
        Some(MeshFormat::StlAscii | MeshFormat::StlBinary) => Family::Stl,
        None => sniff(&bytes).ok_or_else(|| MeshIoError::Unsupported(path.display().to_string()))?,
    };
    parse_mesh(&bytes, family)
}

/// Parses a mesh from memory, detecting the format from its content.
pub fn parse_mesh_bytes(bytes: &[u8]) -> Result<TriangleMesh, MeshIoError> {
    let family = sniff(bytes).ok_or_else(|| MeshIoError::Unsupported("unrecognized content".into()))?;
    parse_mesh(bytes, family)
}

fn parse_mesh(bytes: &[u8], family: Family) -> Result<TriangleMesh, MeshIoError> {
    let (vertices, faces) = match family {
        Family::Ply => parse_ply(bytes)?,
        Family::Obj => parse_obj(bytes)?,
        Family::Stl => parse_stl(bytes)?,
    };
    Ok(TriangleMesh::new(vertices, faces)?)
}

pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>, format: MeshFormat) -> Result<(), MeshIoError> {
    let path = path.as_ref();
    let bytes = encode_mesh(mesh, format);
    fs::write(path, bytes).map_err(|source| MeshIoError::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn encode_mesh(mesh: &TriangleMesh, format: MeshFormat) -> Vec<u8> {
    match format {
        MeshFormat::PlyAscii => write_ply(mesh, false),
        MeshFormat::PlyBinary => write_ply(mesh, true),
        MeshFormat::Obj => write_obj(mesh),
        MeshFormat::StlAscii => write_stl_ascii(mesh),
        MeshFormat::StlBinary => write_stl_binary(mesh),
    }
}

fn fan(polygon: &[u32], faces: &mut Vec<[u32; 3]>) {
    for k in 1..polygon.len().saturating_sub(1) {
        faces.push([polygon[0], polygon[k], polygon[k + 1]]);
    }
}

// ---------------------------------------------------------------- PLY

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
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

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct PlyHeader {
    binary: bool,
    elements: Vec<Element>,
    body_offset: usize,
    body_line: usize,
}

fn parse_ply_header(bytes: &[u8]) -> Result<PlyHeader, MeshIoError> {
    let mut offset = 0;
    let mut line_no = 0;
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| MeshIoError::Malformed("PLY header has no end_header".into()))?;
        let line = std::str::from_utf8(&bytes[offset..offset + end])
            .map_err(|_| MeshIoError::Malformed("PLY header is not text".into()))?
            .trim();
        offset += end + 1;
        line_no += 1;
        let err = |msg: &str| MeshIoError::Parse {
            line: line_no,
            msg: msg.to_string(),
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["ply"] if line_no == 1 => {}
            _ if line_no == 1 => return Err(err("missing ply magic")),
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => return Err(MeshIoError::Unsupported(format!("PLY format {other}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| err("bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let element = elements.last_mut().ok_or_else(|| err("property before element"))?;
                element.properties.push(Property::List {
                    name: name.to_string(),
                    count: Scalar::parse(count).ok_or_else(|| err("unknown list count type"))?,
                    item: Scalar::parse(item).ok_or_else(|| err("unknown list item type"))?,
                });
            }
            ["property", ty, name] => {
                let element = elements.last_mut().ok_or_else(|| err("property before element"))?;
                element.properties.push(Property::Scalar {
                    name: name.to_string(),
                    ty: Scalar::parse(ty).ok_or_else(|| err("unknown property type"))?,
                });
            }
            ["end_header"] => break,
            _ => return Err(err("unrecognized header line")),
        }
    }
    let binary = binary.ok_or_else(|| MeshIoError::Malformed("PLY header has no format line".into()))?;
    Ok(PlyHeader {
        binary,
        elements,
        body_offset: offset,
        body_line: line_no,
    })
}

fn is_index_list(name: &str) -> bool {
    name == "vertex_indices" || name == "vertex_index"
}

/// Decoded values of one element record: scalars in declaration order and
/// the vertex index list (or else the first list property).
struct Record {
    scalars: Vec<(usize, f64)>,
    list: Vec<f64>,
}

fn parse_ply(bytes: &[u8]) -> Result<(Vec<Vec3>, Vec<[u32; 3]>), MeshIoError> {
    let header = parse_ply_header(bytes)?;
    let body = &bytes[header.body_offset..];
    let mut vertices = Vec::new();
    let mut faces = Vec::new();

    let mut ascii_lines = if header.binary {
        None
    } else {
        let text = std::str::from_utf8(body).map_err(|_| MeshIoError::Malformed("PLY body is not text".into()))?;
        Some(
            text.lines()
                .enumerate()
                .map(|(i, l)| (header.body_line + i + 1, l))
                .filter(|(_, l)| !l.trim().is_empty()),
        )
    };
    let mut cursor = 0usize;

    for element in &header.elements {
        let xyz: Vec<Option<usize>> = ["x", "y", "z"]
            .iter()
            .map(|axis| {
                element
                    .properties
                    .iter()
                    .position(|p| matches!(p, Property::Scalar { name, .. } if name == axis))
            })
            .collect();
        let is_vertex = element.name == "vertex";
        let is_face = element.name == "face";
        if is_vertex && xyz.iter().any(Option::is_none) {
            return Err(MeshIoError::Malformed("vertex element lacks x, y or z".into()));
        }
        for _ in 0..element.count {
            let (record, line) = match ascii_lines.as_mut() {
                Some(lines) => {
                    let (line_no, text) = lines.next().ok_or_else(|| {
                        MeshIoError::Malformed(format!("PLY body ends inside element {}", element.name))
                    })?;
                    (read_ascii_record(element, text, line_no)?, line_no)
                }
                None => (read_binary_record(element, body, &mut cursor)?, 0),
            };
            if is_vertex {
                let get = |k: usize| {
                    let idx = xyz[k].unwrap();
                    record.scalars.iter().find(|(i, _)| *i == idx).map(|(_, v)| *v).unwrap()
                };
                vertices.push(Vec3::new(get(0), get(1), get(2)));
            } else if is_face {
                let mut polygon = Vec::with_capacity(record.list.len());
                for &v in &record.list {
                    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                        return Err(MeshIoError::Parse {
                            line,
                            msg: format!("invalid vertex index {v}"),
                        });
                    }
                    polygon.push(v as u32);
                }
                if polygon.len() < 3 {
                    return Err(MeshIoError::Parse {
                        line,
                        msg: "face with fewer than three vertices".into(),
                    });
                }
                fan(&polygon, &mut faces);
            }
        }
    }
    Ok((vertices, faces))
}

fn read_ascii_record(element: &Element, text: &str, line: usize) -> Result<Record, MeshIoError> {
    let err = |msg: &str| MeshIoError::Parse {
        line,
        msg: msg.to_string(),
    };
    let mut tokens = text.split_whitespace();
    let mut next = || -> Result<f64, MeshIoError> {
        tokens
            .next()
            .ok_or_else(|| err("too few values"))?
            .parse::<f64>()
            .map_err(|_| err("not a number"))
    };
    let mut record = Record {
        scalars: Vec::new(),
        list: Vec::new(),
    };
    for (i, p) in element.properties.iter().enumerate() {
        match p {
            Property::Scalar { .. } => record.scalars.push((i, next()?)),
            Property::List { name, .. } => {
                let n = next()?;
                if n < 0.0 || n.fract() != 0.0 {
                    return Err(err("bad list length"));
                }
                let items: Result<Vec<f64>, _> = (0..n as usize).map(|_| next()).collect();
                let items = items?;
                if record.list.is_empty() || is_index_list(name) {
                    record.list = items;
                }
            }
        }
    }
    Ok(record)
}

fn read_binary_record(element: &Element, body: &[u8], cursor: &mut usize) -> Result<Record, MeshIoError> {
    let mut take = |ty: Scalar| -> Result<f64, MeshIoError> {
        let end = *cursor + ty.size();
        if end > body.len() {
            return Err(MeshIoError::Malformed(format!(
                "PLY body ends inside element {}",
                element.name
            )));
        }
        let v = ty.read_le(&body[*cursor..end]);
        *cursor = end;
        Ok(v)
    };
    let mut record = Record {
        scalars: Vec::new(),
        list: Vec::new(),
    };
    for (i, p) in element.properties.iter().enumerate() {
        match p {
            Property::Scalar { ty, .. } => record.scalars.push((i, take(*ty)?)),
            Property::List { name, count, item } => {
                let n = take(*count)?;
                if n < 0.0 {
                    return Err(MeshIoError::Malformed("negative list length".into()));
                }
                let items: Result<Vec<f64>, _> = (0..n as usize).map(|_| take(*item)).collect();
                let items = items?;
                if record.list.is_empty() || is_index_list(name) {
                    record.list = items;
                }
            }
        }
    }
    Ok(record)
}

fn write_ply(mesh: &TriangleMesh, binary: bool) -> Vec<u8> {
    let mut out = Vec::new();
    let format = if binary { "binary_little_endian" } else { "ascii" };
    write!(
        out,
        "ply\nformat {format} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertex_count(),
        mesh.face_count()
    )
    .unwrap();
    if binary {
        for v in mesh.vertices() {
            for k in 0..3 {
                out.extend_from_slice(&v[k].to_le_bytes());
            }
        }
        for f in mesh.faces() {
            out.push(3);
            for &i in f {
                out.extend_from_slice(&(i as i32).to_le_bytes());
            }
        }
    } else {
        for v in mesh.vertices() {
            writeln!(out, "{} {} {}", v.x, v.y, v.z).unwrap();
        }
        for f in mesh.faces() {
            writeln!(out, "3 {} {} {}", f[0], f[1], f[2]).unwrap();
        }
    }
    out
}

// ---------------------------------------------------------------- OBJ

fn parse_obj(bytes: &[u8]) -> Result<(Vec<Vec3>, Vec<[u32; 3]>), MeshIoError> {
    let text = std::str::from_utf8(bytes).map_err(|_| MeshIoError::Malformed("OBJ is not text".into()))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |msg: String| MeshIoError::Parse { line: line_no, msg };
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Result<Vec<f64>, _> = tokens.take(3).map(str::parse::<f64>).collect();
                let coords = coords.map_err(|_| err("vertex coordinate is not a number".into()))?;
                if coords.len() != 3 {
                    return Err(err("vertex needs three coordinates".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut polygon = Vec::new();
                for token in tokens {
                    let index: i64 = token
                        .split('/')
                        .next()
                        .unwrap_or("")
                        .parse()
                        .map_err(|_| err(format!("bad face index {token:?}")))?;
                    let resolved = match index {
                        0 => return Err(err("face index 0 is invalid".into())),
                        i if i > 0 => i - 1,
                        i => vertices.len() as i64 + i,
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(err(format!("face index {index} out of range")));
                    }
                    polygon.push(resolved as u32);
                }
                if polygon.len() < 3 {
                    return Err(err("face with fewer than three vertices".into()));
                }
                fan(&polygon, &mut faces);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

fn write_obj(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::new();
    for v in mesh.vertices() {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    out
}

// ---------------------------------------------------------------- STL

fn parse_stl(bytes: &[u8]) -> Result<(Vec<Vec3>, Vec<[u32; 3]>), MeshIoError> {
    if bytes.len() >= 84 {
        let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
        if 84 + 50 * n == bytes.len() {
            return Ok(parse_stl_binary(bytes, n));
        }
    }
    let text =
        std::str::from_utf8(bytes).map_err(|_| MeshIoError::Malformed("STL is neither binary nor text".into()))?;
    if !text.trim_start().starts_with("solid") {
        return Err(MeshIoError::Malformed(
            "binary STL size does not match its triangle count".into(),
        ));
    }
    parse_stl_ascii(text)
}

fn parse_stl_binary(bytes: &[u8], n: usize) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let mut vertices = Vec::with_capacity(3 * n);
    let mut faces = Vec::with_capacity(n);
    for t in 0..n {
        let base = 84 + 50 * t + 12;
        for k in 0..3 {
            let at = |j: usize| {
                let o = base + 12 * k + 4 * j;
                f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as f64
            };
            vertices.push(Vec3::new(at(0), at(1), at(2)));
        }
        let first = (3 * t) as u32;
        faces.push([first, first + 1, first + 2]);
    }
    (vertices, faces)
}

fn parse_stl_ascii(text: &str) -> Result<(Vec<Vec3>, Vec<[u32; 3]>), MeshIoError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut pending = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |msg: &str| MeshIoError::Parse {
            line: line_no,
            msg: msg.to_string(),
        };
        let mut tokens = raw.split_whitespace();
        match tokens.next() {
            Some("vertex") => {
                let coords: Result<Vec<f64>, _> = tokens.map(str::parse::<f64>).collect();
                let coords = coords.map_err(|_| err("vertex coordinate is not a number"))?;
                if coords.len() != 3 {
                    return Err(err("vertex needs three coordinates"));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
                pending += 1;
            }
            Some("endloop") => {
                if pending != 3 {
                    return Err(err("facet loop must have exactly three vertices"));
                }
                let first = (vertices.len() - 3) as u32;
                faces.push([first, first + 1, first + 2]);
                pending = 0;
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

fn write_stl_ascii(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "solid mesh").unwrap();
    for (f, n) in mesh.face_normals().iter().enumerate() {
        writeln!(out, "facet normal {} {} {}\nouter loop", n.x, n.y, n.z).unwrap();
        for v in mesh.triangle(f) {
            writeln!(out, "vertex {} {} {}", v.x, v.y, v.z).unwrap();
        }
        writeln!(out, "endloop\nendfacet").unwrap();
    }
    writeln!(out, "endsolid mesh").unwrap();
    out
}

fn write_stl_binary(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = vec![0u8; 80];
    out[..4].copy_from_slice(b"micp");
    out.extend_from_slice(&(mesh.face_count() as u32).to_le_bytes());
    for (f, n) in mesh.face_normals().iter().enumerate() {
        for k in 0..3 {
            out.extend_from_slice(&(n[k] as f32).to_le_bytes());
        }
        for v in mesh.triangle(f) {
            for k in 0..3 {
                out.extend_from_slice(&(v[k] as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}
