use super::{planform_stations, PlanformParams, StationTable};
use crate::error::{Error, Result};

/// Surface points with outward unit normals and optional field channels.
///
/// Coordinates are in units of the centerline chord. `cfy` is carried only so
/// that files containing it round-trip; nothing downstream consumes it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfacePointCloud {
    pub points: Vec<[f64; 3]>,
    pub normals: Vec<[f64; 3]>,
    /// Polygon connectivity (indices into `points`), empty when unknown.
    pub polygons: Vec<Vec<usize>>,
    pub cp: Option<Vec<f64>>,
    pub cfx: Option<Vec<f64>>,
    pub cfy: Option<Vec<f64>>,
    pub cfz: Option<Vec<f64>>,
}

impl SurfacePointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks array lengths, the minimum point count and unit normals.
    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if n < 3 {
            return Err(Error::Domain(format!("point cloud needs at least 3 points, has {n}")));
        }
        if self.normals.len() != n {
            return Err(Error::Domain(format!(
                "normals length {} does not match {n} points",
                self.normals.len()
            )));
        }
        for (name, ch) in [
            ("cp", &self.cp),
            ("cfx", &self.cfx),
            ("cfy", &self.cfy),
            ("cfz", &self.cfz),
        ] {
            if let Some(v) = ch {
                if v.len() != n {
                    return Err(Error::Domain(format!(
                        "channel {name} has {} values for {n} points",
                        v.len()
                    )));
                }
            }
        }
        for (i, nrm) in self.normals.iter().enumerate() {
            let len = norm(*nrm);
            if (len - 1.0).abs() > 1e-6 {
                return Err(Error::Domain(format!("normal {i} has length {len}")));
            }
        }
        Ok(())
    }

    /// Per-point 6-vector `[x, y, z, nx, ny, nz]`.
    pub fn features(&self) -> Vec<[f64; 6]> {
        self.points
            .iter()
            .zip(&self.normals)
            .map(|(p, n)| [p[0], p[1], p[2], n[0], n[1], n[2]])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceOptions {
    pub n_chord: usize,
    pub n_span: usize,
    /// Maximum thickness-to-chord ratio of the symmetric section.
    pub thickness: f64,
    /// Also emit the mirrored (`y < 0`) half.
    pub full_span: bool,
}

impl SurfaceOptions {
    pub fn new(n_chord: usize, n_span: usize) -> Self {
        Self {
            n_chord,
            n_span,
            thickness: 0.12,
            full_span: false,
        }
    }
}

/// Where on the loft a point was generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    /// Local chord fraction from the leading edge.
    pub xi: f64,
    /// Spanwise position (signed, mirrored half negative).
    pub y: f64,
    pub upper: bool,
    pub local_chord: f64,
    /// Surface slope dz/dx along the local chord.
    pub slope: f64,
}

#[derive(Debug, Clone)]
pub struct LoftedSurface {
    pub cloud: SurfacePointCloud,
    pub samples: Vec<SurfaceSample>,
    pub stations: StationTable,
}

/// Half-thickness of a symmetric 4-digit section at chord fraction `xi`.
fn thickness_half(xi: f64, tau: f64) -> f64 {
    5.0 * tau
        * (0.2969 * xi.sqrt() - 0.1260 * xi - 0.3516 * xi * xi + 0.2843 * xi.powi(3)
            - 0.1015 * xi.powi(4))
}

fn thickness_slope(xi: f64, tau: f64) -> f64 {
    5.0 * tau
        * (0.5 * 0.2969 / xi.sqrt() - 0.1260 - 2.0 * 0.3516 * xi + 3.0 * 0.2843 * xi * xi
            - 4.0 * 0.1015 * xi.powi(3))
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Lofts a symmetric thickness law along the planform and samples it on a
/// cosine-spaced chordwise, uniform spanwise grid of cell centres.
///
/// Points are ordered upper surface then lower surface, each span-major.
pub fn loft(p: &PlanformParams, opts: &SurfaceOptions) -> Result<LoftedSurface> {
    if opts.n_chord < 4 || opts.n_span < 4 {
        return Err(Error::Argument(format!(
            "surface grid needs n_chord >= 4 and n_span >= 4, got {} x {}",
            opts.n_chord, opts.n_span
        )));
    }
    let stations = planform_stations(p)?;
    if let Some(s) = stations.0.iter().find(|s| s.chord <= 0.0) {
        return Err(Error::Domain(format!("degenerate station at y = {}", s.y)));
    }
    let tau = opts.thickness;
    let half = stations.half_span();
    let surf = |xi: f64, y: f64, sign: f64| -> [f64; 3] {
        let (le, c) = stations.section_at(y);
        [le + xi * c, y, sign * thickness_half(xi, tau) * c]
    };

    let (nc, ns) = (opts.n_chord, opts.n_span);
    let per_side = nc * ns;
    let mut cloud = SurfacePointCloud::default();
    let mut samples = Vec::with_capacity(2 * per_side);
    let h = 1e-6;
    for (side, sign) in [(true, 1.0), (false, -1.0)] {
        for j in 0..ns {
            let y = (j as f64 + 0.5) / ns as f64 * half;
            for i in 0..nc {
                let xi = 0.5 * (1.0 - (std::f64::consts::PI * (i as f64 + 0.5) / nc as f64).cos());
                let (_, c) = stations.section_at(y);
                let pt = surf(xi, y, sign);
                let d_xi = sub(surf(xi + h, y, sign), surf(xi - h, y, sign));
                let d_y = sub(surf(xi, y + h, sign), surf(xi, y - h, sign));
                let mut n = cross(d_xi, d_y);
                // d_xi x d_y points up on both sides; flip it below the chord plane.
                if !side {
                    n = n.map(|v| -v);
                }
                let len = norm(n);
                cloud.points.push(pt);
                cloud.normals.push(n.map(|v| v / len));
                samples.push(SurfaceSample {
                    xi,
                    y,
                    upper: side,
                    local_chord: c,
                    slope: sign * thickness_slope(xi, tau),
                });
            }
        }
    }
    for side in 0..2 {
        for j in 0..ns - 1 {
            for i in 0..nc - 1 {
                let a = side * per_side + j * nc + i;
                let quad = vec![a, a + 1, a + nc + 1, a + nc];
                cloud.polygons.push(if side == 0 {
                    quad
                } else {
                    quad.into_iter().rev().collect()
                });
            }
        }
    }
    if opts.full_span {
        let n = cloud.points.len();
        for k in 0..n {
            let [x, y, z] = cloud.points[k];
            let [nx, ny, nz] = cloud.normals[k];
            cloud.points.push([x, -y, z]);
            cloud.normals.push([nx, -ny, nz]);
            let mut s = samples[k];
            s.y = -s.y;
            samples.push(s);
        }
        let polys: Vec<Vec<usize>> = cloud
            .polygons
            .iter()
            .map(|q| q.iter().rev().map(|&i| i + n).collect())
            .collect();
        cloud.polygons.extend(polys);
    }
    Ok(LoftedSurface {
        cloud,
        samples,
        stations,
    })
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Half-span surface with the default 12% section.
pub fn synthesize_surface(p: &PlanformParams, n_chord: usize, n_span: usize) -> Result<SurfacePointCloud> {
    Ok(loft(p, &SurfaceOptions::new(n_chord, n_span))?.cloud)
}

/// Full-span projected area of the loft, integrated as a sum of shoelace
/// areas over a chordwise x spanwise quad grid aligned with the stations.
pub fn lofted_planform_area(p: &PlanformParams, n_chord: usize, n_span_per_segment: usize) -> Result<f64> {
    let st = planform_stations(p)?;
    let mut area = 0.0;
    for k in 0..3 {
        let (y0, y1) = (st.0[k].y, st.0[k + 1].y);
        for j in 0..n_span_per_segment {
            let ya = y0 + (y1 - y0) * j as f64 / n_span_per_segment as f64;
            let yb = y0 + (y1 - y0) * (j + 1) as f64 / n_span_per_segment as f64;
            let (la, ca) = st.section_at(ya);
            let (lb, cb) = st.section_at(yb);
            for i in 0..n_chord {
                let (u0, u1) = (i as f64 / n_chord as f64, (i + 1) as f64 / n_chord as f64);
                let quad = [
                    (la + u0 * ca, ya),
                    (la + u1 * ca, ya),
                    (lb + u1 * cb, yb),
                    (lb + u0 * cb, yb),
                ];
                let mut s = 0.0;
                for q in 0..4 {
                    let (xa, ya) = quad[q];
                    let (xb, yb) = quad[(q + 1) % 4];
                    s += xa * yb - xb * ya;
                }
                area += 0.5 * s.abs();
            }
        }
    }
    Ok(2.0 * area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{lhs_planforms, ParamBox};

    #[test]
    fn midpoint_grid_has_expected_size() {
        let p = ParamBox::default().midpoint();
        let c = synthesize_surface(&p, 16, 16).unwrap();
        assert_eq!(c.len(), 512);
        c.validate().unwrap();
    }

    #[test]
    fn normals_unit_and_outward() {
        for p in lhs_planforms(&ParamBox::default(), 10, 2).unwrap() {
            let s = loft(&p, &SurfaceOptions::new(12, 9)).unwrap();
            assert_eq!(s.cloud.len(), 2 * 12 * 9);
            for (n, smp) in s.cloud.normals.iter().zip(&s.samples) {
                assert!((norm(*n) - 1.0).abs() < 1e-6);
                // Near the crest the normal points away from the chord plane.
                if (smp.xi - 0.3).abs() < 0.1 {
                    assert_eq!(n[2] > 0.0, smp.upper);
                }
            }
        }
    }

    #[test]
    fn full_span_is_mirror_symmetric() {
        let p = ParamBox::default().midpoint();
        let mut o = SurfaceOptions::new(6, 5);
        o.full_span = true;
        let s = loft(&p, &o).unwrap();
        let n = s.cloud.len();
        assert_eq!(n, 4 * 6 * 5);
        for k in 0..n {
            let [x, y, z] = s.cloud.points[k];
            assert!(s.cloud.points.contains(&[x, -y, z]));
        }
    }

    #[test]
    fn lofted_area_matches_trapezoid_sum() {
        for p in lhs_planforms(&ParamBox::default(), 20, 8).unwrap() {
            let st = planform_stations(&p).unwrap().0;
            let mut trap = 0.0;
            for k in 0..3 {
                trap += 0.5 * (st[k].chord + st[k + 1].chord) * (st[k + 1].y - st[k].y);
            }
            let a = lofted_planform_area(&p, 7, 5).unwrap();
            assert!((a - 2.0 * trap).abs() < 1e-12, "{a} vs {}", 2.0 * trap);
        }
    }

    #[test]
    fn small_grid_rejected() {
        let p = ParamBox::default().midpoint();
        assert!(synthesize_surface(&p, 3, 8).is_err());
    }
}
