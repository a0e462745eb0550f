//! Legacy ASCII VTK polydata: the subset that carries a surface mesh and the
//! Cp / Cfx / Cfy / Cfz point arrays.

use std::path::Path;

use super::fmt_f64;
use crate::error::{Error, Result};
use crate::geom::SurfacePointCloud;

const SCALAR_NAMES: [&str; 4] = ["Cp", "Cfx", "Cfy", "Cfz"];

struct Tokens<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str, pos: usize) -> Self {
        Self { text, pos }
    }

    /// Next whitespace-separated token and its byte offset.
    fn next(&mut self) -> Option<(&'a str, usize)> {
        let bytes = self.text.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < bytes.len() && !bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        Some((&self.text[start..self.pos], start))
    }

    fn peek(&self) -> Option<(&'a str, usize)> {
        Tokens::new(self.text, self.pos).next()
    }

    fn expect(&mut self, what: &str) -> Result<(&'a str, usize)> {
        self.next().ok_or_else(|| err(format!("unexpected end of file, expected {what}"), "<eof>", self.text.len()))
    }

    fn keyword(&mut self, kw: &str) -> Result<usize> {
        let (t, off) = self.expect(kw)?;
        if t != kw {
            return Err(err(format!("expected {kw}"), t, off));
        }
        Ok(off)
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let (t, off) = self.expect(what)?;
        t.parse().map_err(|_| err(format!("{what} must be a non-negative integer"), t, off))
    }

    /// `n` numbers belonging to `block`.
    fn numbers(&mut self, n: usize, block: &str) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let Some((t, off)) = self.next() else {
                return Err(err(
                    format!("{block} block truncated: expected {n} values, found {k}"),
                    "<eof>",
                    self.text.len(),
                ));
            };
            match t.parse::<f64>() {
                Ok(v) if v.is_finite() => out.push(v),
                _ => {
                    return Err(err(
                        format!("{block} block: expected {n} numeric values, value {k} is not a finite number"),
                        t,
                        off,
                    ))
                }
            }
        }
        Ok(out)
    }
}

fn err(message: String, token: &str, offset: usize) -> Error {
    Error::Format {
        message,
        token: token.to_string(),
        offset,
    }
}

fn check_type(tok: &mut Tokens<'_>) -> Result<()> {
    let (t, off) = tok.expect("data type")?;
    match t {
        "float" | "double" => Ok(()),
        _ => Err(err("unsupported data type, expected float or double".into(), t, off)),
    }
}

/// Parses a legacy ASCII polydata file.
pub fn parse_vtk(text: &str) -> Result<SurfacePointCloud> {
    let mut lines = text.split_inclusive('\n');
    let mut pos = 0;
    let mut line = |pos: &mut usize| -> Option<(&str, usize)> {
        let l = lines.next()?;
        let at = *pos;
        *pos += l.len();
        Some((l.trim_end_matches(['\n', '\r']), at))
    };
    let (h, off) = line(&mut pos).ok_or_else(|| err("empty file".into(), "<eof>", 0))?;
    if !h.starts_with("# vtk DataFile Version") {
        return Err(err("missing legacy VTK header".into(), h.split_whitespace().next().unwrap_or(""), off));
    }
    line(&mut pos).ok_or_else(|| err("missing title line".into(), "<eof>", text.len()))?;
    let (enc, off) = line(&mut pos).ok_or_else(|| err("missing encoding line".into(), "<eof>", text.len()))?;
    if enc.trim() != "ASCII" {
        return Err(err("only ASCII legacy files are supported".into(), enc.trim(), off));
    }

    let mut tok = Tokens::new(text, pos);
    tok.keyword("DATASET")?;
    let (kind, off) = tok.expect("dataset type")?;
    if kind != "POLYDATA" {
        return Err(err("only POLYDATA datasets are supported".into(), kind, off));
    }
    tok.keyword("POINTS")?;
    let n = tok.count("point count")?;
    check_type(&mut tok)?;
    let raw = tok.numbers(3 * n, "POINTS")?;
    let points: Vec<[f64; 3]> = raw.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();

    let mut cloud = SurfacePointCloud {
        points,
        normals: Vec::new(),
        polygons: Vec::new(),
        cp: None,
        cfx: None,
        cfy: None,
        cfz: None,
    };
    let mut have_normals = false;
    let mut in_point_data = false;
    while let Some((t, off)) = tok.next() {
        match t {
            "POLYGONS" if !in_point_data => {
                let m = tok.count("polygon count")?;
                let size = tok.count("polygon list size")?;
                let mut used = 0;
                for _ in 0..m {
                    let (vt, voff) = tok.expect("polygon vertex count")?;
                    let k: usize = vt
                        .parse()
                        .map_err(|_| err("polygon vertex count must be an integer".into(), vt, voff))?;
                    let mut poly = Vec::with_capacity(k);
                    for _ in 0..k {
                        let (it, ioff) = tok.expect("polygon vertex index")?;
                        let i: usize = it
                            .parse()
                            .map_err(|_| err("polygon vertex index must be an integer".into(), it, ioff))?;
                        if i >= n {
                            return Err(err(format!("polygon vertex index out of range for {n} points"), it, ioff));
                        }
                        poly.push(i);
                    }
                    used += k + 1;
                    cloud.polygons.push(poly);
                }
                if used != size {
                    return Err(err(format!("POLYGONS size {size} does not match {used} listed values"), t, off));
                }
            }
            "POINT_DATA" => {
                let m = tok.count("point data count")?;
                if m != n {
                    return Err(err(format!("POINT_DATA count {m} differs from {n} points"), t, off));
                }
                in_point_data = true;
            }
            "SCALARS" if in_point_data => {
                let (name, noff) = tok.expect("array name")?;
                if !SCALAR_NAMES.contains(&name) {
                    return Err(err("unknown scalar array, expected Cp, Cfx, Cfy or Cfz".into(), name, noff));
                }
                check_type(&mut tok)?;
                if let Some((c, coff)) = tok.peek() {
                    if c.parse::<usize>().is_ok() {
                        tok.next();
                        if c != "1" {
                            return Err(err("only single-component scalars are supported".into(), c, coff));
                        }
                    }
                }
                tok.keyword("LOOKUP_TABLE")?;
                tok.expect("lookup table name")?;
                let v = tok.numbers(n, name)?;
                let slot = match name {
                    "Cp" => &mut cloud.cp,
                    "Cfx" => &mut cloud.cfx,
                    "Cfy" => &mut cloud.cfy,
                    _ => &mut cloud.cfz,
                };
                *slot = Some(v);
            }
            "NORMALS" if in_point_data => {
                tok.expect("normals name")?;
                check_type(&mut tok)?;
                let v = tok.numbers(3 * n, "NORMALS")?;
                cloud.normals = v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
                have_normals = true;
            }
            _ => return Err(err("unsupported or misplaced section".into(), t, off)),
        }
    }
    if !have_normals {
        cloud.normals = vertex_normals(&cloud.points, &cloud.polygons);
    }
    Ok(cloud)
}

/// Area-weighted vertex normals from polygon connectivity (fan triangulation).
pub fn vertex_normals(points: &[[f64; 3]], polygons: &[Vec<usize>]) -> Vec<[f64; 3]> {
    let mut acc = vec![[0.0; 3]; points.len()];
    for poly in polygons {
        if poly.len() < 3 {
            continue;
        }
        let o = points[poly[0]];
        let mut nrm = [0.0; 3];
        for w in poly[1..].windows(2) {
            let (a, b) = (points[w[0]], points[w[1]]);
            let u = [a[0] - o[0], a[1] - o[1], a[2] - o[2]];
            let v = [b[0] - o[0], b[1] - o[1], b[2] - o[2]];
            // Cross product length is twice the triangle area.
            nrm[0] += 0.5 * (u[1] * v[2] - u[2] * v[1]);
            nrm[1] += 0.5 * (u[2] * v[0] - u[0] * v[2]);
            nrm[2] += 0.5 * (u[0] * v[1] - u[1] * v[0]);
        }
        for &i in poly {
            for c in 0..3 {
                acc[i][c] += nrm[c];
            }
        }
    }
    acc.into_iter()
        .map(|n| {
            let l = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if l > 0.0 {
                [n[0] / l, n[1] / l, n[2] / l]
            } else {
                [0.0, 0.0, 0.0]
            }
        })
        .collect()
}

pub fn read_surface_fields(path: &Path) -> Result<SurfacePointCloud> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| {
        err(
            "not a text file (binary VTK is unsupported)".into(),
            "<binary>",
            e.valid_up_to(),
        )
    })?;
    parse_vtk(text)
}

/// Canonical legacy ASCII polydata text for `cloud`.
pub fn format_vtk(cloud: &SurfacePointCloud, title: &str) -> String {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str(title.lines().next().unwrap_or(""));
    s.push_str("\nASCII\nDATASET POLYDATA\n");
    s.push_str(&format!("POINTS {} double\n", cloud.points.len()));
    for p in &cloud.points {
        s.push_str(&format!("{} {} {}\n", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2])));
    }
    if !cloud.polygons.is_empty() {
        let size: usize = cloud.polygons.iter().map(|p| p.len() + 1).sum();
        s.push_str(&format!("POLYGONS {} {size}\n", cloud.polygons.len()));
        for poly in &cloud.polygons {
            s.push_str(&poly.len().to_string());
            for i in poly {
                s.push(' ');
                s.push_str(&i.to_string());
            }
            s.push('\n');
        }
    }
    s.push_str(&format!("POINT_DATA {}\n", cloud.points.len()));
    if cloud.normals.len() == cloud.points.len() {
        s.push_str("NORMALS Normals double\n");
        for n in &cloud.normals {
            s.push_str(&format!("{} {} {}\n", fmt_f64(n[0]), fmt_f64(n[1]), fmt_f64(n[2])));
        }
    }
    for (name, v) in SCALAR_NAMES.iter().zip([&cloud.cp, &cloud.cfx, &cloud.cfy, &cloud.cfz]) {
        if let Some(v) = v {
            s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
            for x in v {
                s.push_str(&fmt_f64(*x));
                s.push('\n');
            }
        }
    }
    s
}

pub fn write_surface_fields(path: &Path, cloud: &SurfacePointCloud, title: &str) -> Result<()> {
    std::fs::write(path, format_vtk(cloud, title)).map_err(|e| Error::io(path, e))
}
