//! Mesh readers (Triangle-style `.node`/`.ele`, legacy ASCII VTK) and
//! writers (the same two formats, VTK with point scalars).
//!
//! VTK output layout, byte for byte:
//!
//! ```text
//! # vtk DataFile Version 3.0
//! <title>
//! ASCII
//! DATASET UNSTRUCTURED_GRID
//! POINTS <V> double
//! <x> <y> 0            (one line per vertex)
//! CELLS <E> <4E>
//! 3 <a> <b> <c>        (one line per triangle, 0-based)
//! CELL_TYPES <E>
//! 5                    (E lines)
//! POINT_DATA <V>       (only when fields are given)
//! SCALARS <name> double 1
//! LOOKUP_TABLE default
//! <value>              (V lines, per field)
//! ```
//!
//! Every floating-point number is written with Rust's `{:e}` formatting,
//! the shortest representation that round-trips.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::Mesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    /// Two files `<base>.node` and `<base>.ele`.
    NodeEle,
    /// Legacy ASCII VTK unstructured grid with triangle cells.
    VtkLegacyAscii,
}

impl FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node-ele" => Ok(MeshFormat::NodeEle),
            "vtk" | "vtk-legacy-ascii" => Ok(MeshFormat::VtkLegacyAscii),
            other => Err(Error::InvalidArgument(format!("unknown mesh format `{other}`"))),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_owned(),
        line,
        msg: msg.into(),
    }
}

/// Reads a triangulation from disk. For [`MeshFormat::NodeEle`] the path
/// may name either file or the common base name.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<Mesh> {
    let (vertices, triangles) = match format {
        MeshFormat::NodeEle => {
            let base = match path.extension().and_then(|e| e.to_str()) {
                Some("node") | Some("ele") => path.with_extension(""),
                _ => path.to_owned(),
            };
            let node = append_ext(&base, "node");
            let ele = append_ext(&base, "ele");
            let (vertices, first_index) = parse_node(&node, &read(&node)?)?;
            let triangles = parse_ele(&ele, &read(&ele)?, first_index)?;
            (vertices, triangles)
        }
        MeshFormat::VtkLegacyAscii => parse_vtk(path, &read(path)?)?,
    };
    Mesh::new(vertices, triangles)
}

fn append_ext(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Non-empty, comment-stripped lines with 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("");
        let fields: Vec<&str> = line.split_whitespace().collect();
        (!fields.is_empty()).then_some((i + 1, fields))
    })
}

fn parse_field<T: FromStr>(path: &Path, line: usize, s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| format_err(path, line, format!("cannot parse {what} from `{s}`")))
}

fn parse_node(path: &Path, text: &str) -> Result<(Vec<[f64; 2]>, usize)> {
    let mut lines = data_lines(text);
    let (hl, header) = lines
        .next()
        .ok_or_else(|| format_err(path, 1, "missing header"))?;
    if header.len() < 2 {
        return Err(format_err(path, hl, "header must be `V 2 <attributes> <markers>`"));
    }
    let count: usize = parse_field(path, hl, header[0], "vertex count")?;
    let dim: usize = parse_field(path, hl, header[1], "dimension")?;
    if dim != 2 {
        return Err(format_err(path, hl, format!("dimension must be 2, got {dim}")));
    }
    let mut vertices = vec![[f64::NAN; 2]; count];
    let mut first_index = None;
    let mut n = 0;
    for (ln, fields) in lines {
        if n == count {
            return Err(format_err(path, ln, "more vertex lines than declared"));
        }
        if fields.len() < 3 {
            return Err(format_err(path, ln, "expected `index x y`"));
        }
        let idx: usize = parse_field(path, ln, fields[0], "vertex index")?;
        let base = *first_index.get_or_insert(idx);
        if base > 1 {
            return Err(format_err(path, ln, "vertex numbering must start at 0 or 1"));
        }
        let slot = idx
            .checked_sub(base)
            .filter(|&s| s < count)
            .ok_or_else(|| format_err(path, ln, format!("vertex index {idx} out of range")))?;
        if !vertices[slot][0].is_nan() {
            return Err(format_err(path, ln, format!("duplicate vertex index {idx}")));
        }
        vertices[slot] = [
            parse_field(path, ln, fields[1], "x coordinate")?,
            parse_field(path, ln, fields[2], "y coordinate")?,
        ];
        n += 1;
    }
    if n != count {
        return Err(format_err(
            path,
            text.lines().count(),
            format!("declared {count} vertices, found {n}"),
        ));
    }
    Ok((vertices, first_index.unwrap_or(1)))
}

fn parse_ele(path: &Path, text: &str, base: usize) -> Result<Vec<[usize; 3]>> {
    let mut lines = data_lines(text);
    let (hl, header) = lines
        .next()
        .ok_or_else(|| format_err(path, 1, "missing header"))?;
    if header.len() < 2 {
        return Err(format_err(path, hl, "header must be `E 3 <attributes>`"));
    }
    let count: usize = parse_field(path, hl, header[0], "triangle count")?;
    let per: usize = parse_field(path, hl, header[1], "nodes per triangle")?;
    if per != 3 {
        return Err(format_err(path, hl, format!("only 3-node triangles are supported, got {per}")));
    }
    let mut triangles = Vec::with_capacity(count);
    for (ln, fields) in lines {
        if triangles.len() == count {
            return Err(format_err(path, ln, "more triangle lines than declared"));
        }
        if fields.len() < 4 {
            return Err(format_err(path, ln, "expected `index v1 v2 v3`"));
        }
        let mut tri = [0usize; 3];
        for k in 0..3 {
            let v: usize = parse_field(path, ln, fields[k + 1], "vertex index")?;
            // out-of-range indices are left for Mesh::new to report
            tri[k] = v
                .checked_sub(base)
                .ok_or_else(|| format_err(path, ln, format!("vertex index {v} below {base}")))?;
        }
        triangles.push(tri);
    }
    if triangles.len() != count {
        return Err(format_err(
            path,
            text.lines().count(),
            format!("declared {count} triangles, found {}", triangles.len()),
        ));
    }
    Ok(triangles)
}

type RawMesh = (Vec<[f64; 2]>, Vec<[usize; 3]>);

fn parse_vtk(path: &Path, text: &str) -> Result<RawMesh> {
    let lines: Vec<&str> = text.lines().collect();
    if !lines.first().is_some_and(|l| l.starts_with("# vtk DataFile")) {
        return Err(format_err(path, 1, "missing `# vtk DataFile` header"));
    }
    match lines.get(2).map(|l| l.trim()) {
        Some("ASCII") => {}
        _ => return Err(format_err(path, 3, "only ASCII legacy files are supported")),
    }
    // tokens after the three header lines, tagged with their line numbers
    let tokens: Vec<(usize, &str)> = lines
        .iter()
        .enumerate()
        .skip(3)
        .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
        .collect();
    let mut pos = 0;
    let next = |pos: &mut usize, what: &str| -> Result<(usize, &str)> {
        let t = tokens.get(*pos).copied().ok_or_else(|| {
            format_err(path, lines.len(), format!("unexpected end of file, expected {what}"))
        })?;
        *pos += 1;
        Ok(t)
    };

    let mut points: Option<Vec<[f64; 2]>> = None;
    let mut cells: Option<Vec<Vec<usize>>> = None;
    let mut types: Option<Vec<u32>> = None;
    while pos < tokens.len() {
        let (ln, kw) = next(&mut pos, "keyword")?;
        match kw.to_ascii_uppercase().as_str() {
            "DATASET" => {
                let (ln, kind) = next(&mut pos, "dataset type")?;
                if !kind.eq_ignore_ascii_case("UNSTRUCTURED_GRID") {
                    return Err(format_err(path, ln, format!("unsupported dataset `{kind}`")));
                }
            }
            "POINTS" => {
                let (ln, n) = next(&mut pos, "point count")?;
                let n: usize = parse_field(path, ln, n, "point count")?;
                next(&mut pos, "point data type")?;
                let mut pts = Vec::with_capacity(n);
                for _ in 0..n {
                    let mut xyz = [0.0; 3];
                    for c in &mut xyz {
                        let (ln, t) = next(&mut pos, "coordinate")?;
                        *c = parse_field(path, ln, t, "coordinate")?;
                    }
                    pts.push([xyz[0], xyz[1]]);
                }
                points = Some(pts);
            }
            "CELLS" => {
                let (ln, n) = next(&mut pos, "cell count")?;
                let n: usize = parse_field(path, ln, n, "cell count")?;
                let (ln2, size) = next(&mut pos, "cell list size")?;
                if size.eq_ignore_ascii_case("OFFSETS") {
                    return Err(format_err(path, ln2, "VTK 5 OFFSETS/CONNECTIVITY layout is not supported"));
                }
                let _size: usize = parse_field(path, ln2, size, "cell list size")?;
                let mut list = Vec::with_capacity(n);
                for _ in 0..n {
                    let (ln, k) = next(&mut pos, "cell size")?;
                    let k: usize = parse_field(path, ln, k, "cell size")?;
                    let mut c = Vec::with_capacity(k);
                    for _ in 0..k {
                        let (ln, t) = next(&mut pos, "cell vertex")?;
                        c.push(parse_field(path, ln, t, "cell vertex")?);
                    }
                    list.push(c);
                }
                cells = Some(list);
            }
            "CELL_TYPES" => {
                let (ln, n) = next(&mut pos, "cell type count")?;
                let n: usize = parse_field(path, ln, n, "cell type count")?;
                let mut list = Vec::with_capacity(n);
                for _ in 0..n {
                    let (ln, t) = next(&mut pos, "cell type")?;
                    list.push(parse_field(path, ln, t, "cell type")?);
                }
                types = Some(list);
            }
            "POINT_DATA" | "CELL_DATA" | "FIELD" => break,
            other => {
                return Err(format_err(path, ln, format!("unexpected keyword `{other}`")));
            }
        }
    }

    let points = points.ok_or_else(|| format_err(path, lines.len(), "no POINTS section"))?;
    let cells = cells.ok_or_else(|| format_err(path, lines.len(), "no CELLS section"))?;
    let types = types.ok_or_else(|| format_err(path, lines.len(), "no CELL_TYPES section"))?;
    if types.len() != cells.len() {
        return Err(format_err(
            path,
            lines.len(),
            format!("{} cells but {} cell types", cells.len(), types.len()),
        ));
    }
    let mut triangles = Vec::new();
    for (i, (cell, &ty)) in cells.iter().zip(&types).enumerate() {
        match ty {
            5 if cell.len() == 3 => triangles.push([cell[0], cell[1], cell[2]]),
            // vertices, poly-vertices, lines and poly-lines carry no area
            1..=4 => {}
            _ => {
                return Err(format_err(
                    path,
                    lines.len(),
                    format!("cell {i} has unsupported type {ty} with {} vertices", cell.len()),
                ));
            }
        }
    }
    Ok((points, triangles))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

/// Writes `<base>.node` and `<base>.ele` with 1-based numbering.
pub fn write_node_ele(base: &Path, mesh: &Mesh) -> Result<()> {
    let mut node = format!("{} 2 0 0\n", mesh.num_vertices());
    for (i, v) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(node, "{} {:e} {:e}", i + 1, v[0], v[1]);
    }
    let mut ele = format!("{} 3 0\n", mesh.num_triangles());
    for (i, t) in mesh.triangles().iter().enumerate() {
        let _ = writeln!(ele, "{} {} {} {}", i + 1, t[0] + 1, t[1] + 1, t[2] + 1);
    }
    write(&append_ext(base, "node"), &node)?;
    write(&append_ext(base, "ele"), &ele)
}

/// Renders the VTK document described in the module docs.
pub fn vtk_string(mesh: &Mesh, title: &str, fields: &[(&str, &[f64])]) -> Result<String> {
    let nv = mesh.num_vertices();
    let ne = mesh.num_triangles();
    for (name, values) in fields {
        if values.len() != nv {
            return Err(Error::InvalidArgument(format!(
                "field `{name}` has {} values for {nv} vertices",
                values.len()
            )));
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("invalid field name `{name}`")));
        }
    }
    let mut out = String::with_capacity(64 * (nv + ne));
    let title = title.lines().next().unwrap_or("");
    let _ = write!(
        out,
        "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS {nv} double\n"
    );
    for v in mesh.vertices() {
        let _ = writeln!(out, "{:e} {:e} 0", v[0], v[1]);
    }
    let _ = writeln!(out, "CELLS {ne} {}", 4 * ne);
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {ne}");
    for _ in 0..ne {
        out.push_str("5\n");
    }
    if !fields.is_empty() {
        let _ = writeln!(out, "POINT_DATA {nv}");
        for (name, values) in fields {
            let _ = write!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default\n");
            for x in values.iter() {
                let _ = writeln!(out, "{x:e}");
            }
        }
    }
    Ok(out)
}

/// Writes a legacy ASCII VTK file with optional point scalars.
pub fn write_vtk(path: &Path, mesh: &Mesh, title: &str, fields: &[(&str, &[f64])]) -> Result<()> {
    write(path, &vtk_string(mesh, title, fields)?)
}
