//! PLY reader/writer: `ascii` and `binary_little_endian`, triangle faces,
//! optional per-vertex color and the custom `label` / `material` properties.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{create, open, Label, Location, MeshIoError, TriangleMesh};
use crate::geom::{Point3, Triangle};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
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

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug, Clone)]
enum PropertyKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropertyKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    /// Lines consumed, including `end_header`.
    lines: u64,
}

/// Line reader that keeps track of the line number and byte offset.
struct Lines<R> {
    inner: R,
    line: u64,
    offset: u64,
    buf: Vec<u8>,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<Option<String>, MeshIoError> {
        self.buf.clear();
        let n = self.inner.read_until(b'\n', &mut self.buf)?;
        if n == 0 {
            return Ok(None);
        }
        self.line += 1;
        self.offset += n as u64;
        let s = std::str::from_utf8(&self.buf).map_err(|_| MeshIoError::Malformed {
            at: Location::Line(self.line),
            msg: "line is not valid UTF-8".into(),
        })?;
        Ok(Some(s.trim_end_matches(['\n', '\r']).to_string()))
    }
}

fn parse_header<R: BufRead>(lines: &mut Lines<R>) -> Result<Header, MeshIoError> {
    let header_err = |line: u64, msg: String| MeshIoError::Header { at: Location::Line(line), msg };
    match lines.next_line()? {
        Some(l) if l.trim() == "ply" => {}
        _ => return Err(header_err(1, "missing `ply` magic".into())),
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let Some(line) = lines.next_line()? else {
            return Err(header_err(lines.line + 1, "missing `end_header`".into()));
        };
        let n = lines.line;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => continue,
            ["comment", ..] | ["obj_info", ..] => continue,
            ["format", fmt, version] => {
                if *version != "1.0" {
                    return Err(header_err(n, format!("unsupported version {version}")));
                }
                format = Some(match *fmt {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(header_err(n, format!("unsupported format `{other}`"))),
                });
            }
            ["element", name, count] => {
                let count = count.parse().map_err(|_| header_err(n, format!("bad element count `{count}`")))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new() });
            }
            ["property", "list", count, item, name] => {
                let el = elements.last_mut().ok_or_else(|| header_err(n, "property before any element".into()))?;
                let count = Scalar::parse(count)
                    .filter(|s| s.is_integer())
                    .ok_or_else(|| header_err(n, format!("bad list count type `{count}`")))?;
                let item = Scalar::parse(item).ok_or_else(|| header_err(n, format!("bad list item type `{item}`")))?;
                el.properties.push(Property { name: name.to_string(), kind: PropertyKind::List { count, item } });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| header_err(n, "property before any element".into()))?;
                let ty = Scalar::parse(ty).ok_or_else(|| header_err(n, format!("bad type `{ty}`")))?;
                el.properties.push(Property { name: name.to_string(), kind: PropertyKind::Scalar(ty) });
            }
            ["end_header"] => break,
            _ => return Err(header_err(n, format!("unrecognized line `{line}`"))),
        }
    }
    let format = format.ok_or_else(|| header_err(lines.line, "missing `format` line".into()))?;
    Ok(Header { format, elements, lines: lines.line })
}

#[derive(Default)]
struct VertexSlots {
    x: Option<usize>,
    y: Option<usize>,
    z: Option<usize>,
    rgb: Option<[usize; 3]>,
    label: Option<usize>,
    material: Option<usize>,
}

impl VertexSlots {
    fn from_element(el: &Element, at: Location) -> Result<Self, MeshIoError> {
        let find = |name: &str| el.properties.iter().position(|p| p.name == name);
        let mut s = VertexSlots {
            x: find("x"),
            y: find("y"),
            z: find("z"),
            label: find("label"),
            material: find("material"),
            rgb: None,
        };
        if let (Some(r), Some(g), Some(b)) = (find("red"), find("green"), find("blue")) {
            s.rgb = Some([r, g, b]);
        }
        if s.x.is_none() || s.y.is_none() || s.z.is_none() {
            return Err(MeshIoError::Header { at, msg: "vertex element lacks x/y/z".into() });
        }
        if el.properties.iter().any(|p| matches!(p.kind, PropertyKind::List { .. })) {
            return Err(MeshIoError::Header { at, msg: "list properties on vertices are not supported".into() });
        }
        Ok(s)
    }
}

#[derive(Default)]
struct MeshBuilder {
    vertices: Vec<Point3>,
    colors: Vec<[u8; 3]>,
    labels: Vec<Label>,
    materials: Vec<u8>,
    has_color: bool,
    faces: Vec<(Triangle, Location)>,
    raw_faces: Vec<([i64; 3], Location)>,
}

impl MeshBuilder {
    fn push_vertex(&mut self, slots: &VertexSlots, values: &[f64]) {
        self.vertices.push(Point3::new(values[slots.x.unwrap()], values[slots.y.unwrap()], values[slots.z.unwrap()]));
        if let Some([r, g, b]) = slots.rgb {
            self.colors.push([values[r] as u8, values[g] as u8, values[b] as u8]);
        }
        self.labels.push(slots.label.map_or(Label::Inlier, |i| Label::from_byte(values[i] as u8)));
        self.materials.push(slots.material.map_or(0, |i| values[i] as u8));
    }

    fn finish(mut self) -> Result<TriangleMesh, MeshIoError> {
        let n = self.vertices.len();
        for (idx, at) in self.raw_faces.drain(..) {
            if let Some(&bad) = idx.iter().find(|&&i| i < 0 || i as usize >= n) {
                return Err(MeshIoError::IndexOutOfRange { at, index: bad, count: n });
            }
            self.faces.push((Triangle(idx.map(|i| i as u32)), at));
        }
        let colors = self.has_color.then_some(self.colors);
        TriangleMesh::from_parts(
            self.vertices,
            self.faces.into_iter().map(|(f, _)| f).collect(),
            colors,
            self.labels,
            self.materials,
        )
    }
}

fn is_face_list(p: &Property) -> bool {
    matches!(p.kind, PropertyKind::List { .. }) && (p.name == "vertex_indices" || p.name == "vertex_index")
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<TriangleMesh, MeshIoError> {
    let path = path.as_ref();
    let file = open(path)?;
    read_ply_from(BufReader::new(file)).map_err(|e| e.in_file(path))
}

pub fn read_ply_from<R: BufRead>(reader: R) -> Result<TriangleMesh, MeshIoError> {
    let mut lines = Lines { inner: reader, line: 0, offset: 0, buf: Vec::new() };
    let header = parse_header(&mut lines)?;
    let mut mesh = MeshBuilder::default();
    let mut vertex_seen = false;
    for el in &header.elements {
        if el.name == "vertex" {
            if vertex_seen {
                return Err(MeshIoError::Header {
                    at: Location::Line(header.lines),
                    msg: "duplicate vertex element".into(),
                });
            }
            vertex_seen = true;
            let slots = VertexSlots::from_element(el, Location::Line(header.lines))?;
            mesh.has_color = slots.rgb.is_some();
        }
    }
    match header.format {
        PlyFormat::Ascii => read_ascii_body(&mut lines, &header, &mut mesh)?,
        PlyFormat::BinaryLittleEndian => {
            let start = lines.offset;
            let mut body = Vec::new();
            lines.inner.read_to_end(&mut body)?;
            read_binary_body(&body, start, &header, &mut mesh)?;
        }
    }
    mesh.finish()
}

fn read_ascii_body<R: BufRead>(
    lines: &mut Lines<R>,
    header: &Header,
    mesh: &mut MeshBuilder,
) -> Result<(), MeshIoError> {
    for el in &header.elements {
        let slots =
            (el.name == "vertex").then(|| VertexSlots::from_element(el, Location::Line(header.lines))).transpose()?;
        let mut values = vec![0.0; el.properties.len()];
        for _ in 0..el.count {
            let line = loop {
                match lines.next_line()? {
                    Some(l) if l.trim().is_empty() => continue,
                    Some(l) => break l,
                    None => {
                        return Err(MeshIoError::Truncated {
                            at: Location::Line(lines.line + 1),
                            msg: format!("expected more `{}` rows", el.name),
                        })
                    }
                }
            };
            let at = Location::Line(lines.line);
            let mut tokens = line.split_whitespace();
            let mut next = |what: &str| -> Result<f64, MeshIoError> {
                let tok = tokens
                    .next()
                    .ok_or_else(|| MeshIoError::Malformed { at, msg: format!("missing value for `{what}`") })?;
                tok.parse::<f64>().map_err(|_| MeshIoError::Malformed { at, msg: format!("bad number `{tok}`") })
            };
            for (pi, p) in el.properties.iter().enumerate() {
                match p.kind {
                    PropertyKind::Scalar(_) => values[pi] = next(&p.name)?,
                    PropertyKind::List { .. } => {
                        let count = next(&p.name)? as usize;
                        let items = (0..count).map(|_| next(&p.name)).collect::<Result<Vec<_>, _>>()?;
                        if el.name == "face" && is_face_list(p) {
                            push_face(mesh, &items, at)?;
                        }
                    }
                }
            }
            if let Some(slots) = &slots {
                mesh.push_vertex(slots, &values);
            }
        }
    }
    Ok(())
}

fn push_face(mesh: &mut MeshBuilder, items: &[f64], at: Location) -> Result<(), MeshIoError> {
    if items.len() != 3 {
        return Err(MeshIoError::NonTriangleFace { at, count: items.len() });
    }
    mesh.raw_faces.push(([items[0] as i64, items[1] as i64, items[2] as i64], at));
    Ok(())
}

fn read_binary_body(body: &[u8], start: u64, header: &Header, mesh: &mut MeshBuilder) -> Result<(), MeshIoError> {
    let mut pos = 0usize;
    let mut take = |n: usize, what: &str| -> Result<(&[u8], Location), MeshIoError> {
        let at = Location::Byte(start + pos as u64);
        if pos + n > body.len() {
            return Err(MeshIoError::Truncated { at, msg: format!("need {n} bytes for {what}") });
        }
        let s = &body[pos..pos + n];
        pos += n;
        Ok((s, at))
    };
    for el in &header.elements {
        let slots =
            (el.name == "vertex").then(|| VertexSlots::from_element(el, Location::Line(header.lines))).transpose()?;
        let mut values = vec![0.0; el.properties.len()];
        for _ in 0..el.count {
            for (pi, p) in el.properties.iter().enumerate() {
                match p.kind {
                    PropertyKind::Scalar(ty) => {
                        let (b, _) = take(ty.size(), &p.name)?;
                        values[pi] = ty.decode_le(b);
                    }
                    PropertyKind::List { count, item } => {
                        let (b, at) = take(count.size(), &p.name)?;
                        let n = count.decode_le(b);
                        if n < 0.0 {
                            return Err(MeshIoError::Malformed { at, msg: "negative list length".into() });
                        }
                        let n = n as usize;
                        let (b, _) = take(n * item.size(), &p.name)?;
                        if el.name == "face" && is_face_list(p) {
                            let items: Vec<f64> = b.chunks_exact(item.size()).map(|c| item.decode_le(c)).collect();
                            push_face(mesh, &items, at)?;
                        }
                    }
                }
            }
            if let Some(slots) = &slots {
                mesh.push_vertex(slots, &values);
            }
        }
    }
    Ok(())
}

pub fn write_ply(mesh: &TriangleMesh, path: impl AsRef<Path>, format: PlyFormat) -> Result<(), MeshIoError> {
    let path = path.as_ref();
    let file = create(path)?;
    let mut w = BufWriter::new(file);
    write_ply_to(mesh, &mut w, format).and_then(|_| w.flush().map_err(MeshIoError::from)).map_err(|e| e.in_file(path))
}

/// Coordinates are written as `double` so read/write round-trips are exact.
pub fn write_ply_to<W: Write>(mesh: &TriangleMesh, w: &mut W, format: PlyFormat) -> Result<(), MeshIoError> {
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(w, "ply\nformat {fmt} 1.0")?;
    writeln!(w, "element vertex {}", mesh.vertex_count())?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    if mesh.colors().is_some() {
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
    }
    writeln!(w, "property uchar label\nproperty uchar material")?;
    writeln!(w, "element face {}", mesh.faces().len())?;
    writeln!(w, "property list uchar int vertex_indices\nend_header")?;

    let colors = mesh.colors();
    for (i, v) in mesh.vertices().iter().enumerate() {
        let label = mesh.labels()[i].to_byte();
        let material = mesh.materials()[i];
        match format {
            PlyFormat::Ascii => {
                write!(w, "{} {} {}", v.x, v.y, v.z)?;
                if let Some(c) = colors {
                    write!(w, " {} {} {}", c[i][0], c[i][1], c[i][2])?;
                }
                writeln!(w, " {label} {material}")?;
            }
            PlyFormat::BinaryLittleEndian => {
                for c in v.to_array() {
                    w.write_all(&c.to_le_bytes())?;
                }
                if let Some(c) = colors {
                    w.write_all(&c[i])?;
                }
                w.write_all(&[label, material])?;
            }
        }
    }
    for f in mesh.faces() {
        match format {
            PlyFormat::Ascii => writeln!(w, "3 {} {} {}", f.0[0], f.0[1], f.0[2])?,
            PlyFormat::BinaryLittleEndian => {
                w.write_all(&[3u8])?;
                for i in f.0 {
                    w.write_all(&(i as i32).to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const RIGHT_TRIANGLE: &str = "ply
format ascii 1.0
comment unit right triangle
element vertex 3
property float x
property float y
property float z
element face 1
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
0 1 0
3 0 1 2
";

    #[test]
    fn reads_unit_triangle() {
        let m = read_ply_from(RIGHT_TRIANGLE.as_bytes()).unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.faces(), &[Triangle::new(0, 1, 2)]);
        assert_eq!(m.labels(), &[Label::Inlier; 3]);
        assert_eq!(m.materials(), &[0; 3]);
        assert!(m.colors().is_none());
    }

    #[test]
    fn rejects_quad_with_line_number() {
        let src = RIGHT_TRIANGLE.replace("3 0 1 2", "4 0 1 2 2");
        let err = read_ply_from(src.as_bytes()).unwrap_err();
        assert!(matches!(err, MeshIoError::NonTriangleFace { at: Location::Line(14), count: 4 }), "{err}");
        assert!(err.to_string().contains("non-triangle face"));
    }

    #[test]
    fn rejects_out_of_range_index() {
        let src = RIGHT_TRIANGLE.replace("3 0 1 2", "3 0 1 7");
        let err = read_ply_from(src.as_bytes()).unwrap_err();
        assert!(matches!(err, MeshIoError::IndexOutOfRange { index: 7, count: 3, .. }), "{err}");
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(matches!(read_ply_from("plx\n".as_bytes()), Err(MeshIoError::Header { at: Location::Line(1), .. })));
        let src = RIGHT_TRIANGLE.replace("format ascii 1.0", "format binary_big_endian 1.0");
        assert!(matches!(read_ply_from(src.as_bytes()), Err(MeshIoError::Header { .. })));
        let src = RIGHT_TRIANGLE.replace("end_header\n", "");
        assert!(read_ply_from(src.as_bytes()).is_err());
    }

    #[test]
    fn truncated_ascii_body() {
        let src = RIGHT_TRIANGLE.replace("3 0 1 2\n", "");
        let err = read_ply_from(src.as_bytes()).unwrap_err();
        assert!(matches!(err, MeshIoError::Truncated { at: Location::Line(14), .. }), "{err}");
    }

    #[test]
    fn reads_labels_colors_and_skips_unknown_elements() {
        let src = "ply
format ascii 1.0
element vertex 3
property double x
property double y
property double z
property float nx
property uchar red
property uchar green
property uchar blue
property uchar label
property uchar material
element face 1
property uchar flags
property list uchar uint vertex_index
element edge 1
property int a
property int b
end_header
0 0 0 0.5 10 20 30 0 2
1 0 0 0.5 11 21 31 1 2
0 1 0 0.5 12 22 32 1 3
7 3 2 1 0
0 1
";
        let m = read_ply_from(src.as_bytes()).unwrap();
        assert_eq!(m.labels(), &[Label::Outlier, Label::Inlier, Label::Inlier]);
        assert_eq!(m.materials(), &[2, 2, 3]);
        assert_eq!(m.colors().unwrap()[2], [12, 22, 32]);
        assert_eq!(m.faces(), &[Triangle::new(2, 1, 0)]);
    }

    #[test]
    fn binary_float32_and_truncation_offset() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n".to_vec();
        let header_len = bytes.len() as u64;
        for v in [[0f32, 0., 0.], [1., 0., 0.], [0., 1., 0.]] {
            for c in v {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
        bytes.push(3);
        for i in [0i32, 1, 2] {
            bytes.extend_from_slice(&i.to_le_bytes());
        }
        let m = read_ply_from(bytes.as_slice()).unwrap();
        assert_eq!(m.vertices()[1], Point3::new(1.0, 0.0, 0.0));
        assert_eq!(m.faces().len(), 1);

        bytes.truncate(bytes.len() - 2);
        let err = read_ply_from(bytes.as_slice()).unwrap_err();
        // Face list items start after 36 vertex bytes and the 1-byte count.
        assert!(matches!(err, MeshIoError::Truncated { at: Location::Byte(o), .. } if o == header_len + 37), "{err}");
    }
}
