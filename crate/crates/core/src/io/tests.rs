use proptest::prelude::*;

use super::*;
use crate::error::Error;
use crate::geom::{lhs_conditions, lhs_planforms, ParamBox, SurfacePointCloud};
use crate::surrogate::{oracle_aero, LdConfig, LdSurrogate};

fn synthetic_records(n: usize, seed: u64) -> Vec<CaseRecord> {
    let ps = lhs_planforms(&ParamBox::default(), n, seed).unwrap();
    let fcs = lhs_conditions(n, seed + 1).unwrap();
    ps.iter()
        .zip(&fcs)
        .enumerate()
        .map(|(i, (p, fc))| {
            let c = crate::surrogate::OracleConfig::default().coefficients(p, fc).unwrap();
            CaseRecord {
                case_id: format!("case_{i:05}"),
                params: *p,
                altitude_kft: fc.altitude_kft,
                mach: fc.mach,
                centerline_length: fc.centerline_length,
                alpha_deg: fc.alpha_deg,
                cl: c.cl,
                cd: c.cd,
                cm: c.cm,
                ld: c.cl / c.cd,
                field_file: (i % 2 == 0).then(|| format!("fields/case_{i:05}.vtk")),
                out_of_box: false,
            }
        })
        .collect()
}

#[test]
fn cases_round_trip() {
    let recs = synthetic_records(100, 3);
    let mut buf = Vec::new();
    write_cases_to(&mut buf, &recs).unwrap();
    let t = read_cases_from(buf.as_slice(), None).unwrap();
    assert!(t.errors.is_empty(), "{:?}", t.errors);
    assert_eq!(t.records, recs);
    let mut again = Vec::new();
    write_cases_to(&mut again, &t.records).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn zero_drag_row_rejected_with_line() {
    let recs = synthetic_records(3, 1);
    let mut buf = Vec::new();
    write_cases_to(&mut buf, &recs).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut f: Vec<String> = lines[2].split(',').map(String::from).collect();
    f[15] = "0".into();
    lines[2] = f.join(",");
    let t = read_cases_from(lines.join("\n").as_bytes(), None).unwrap();
    assert_eq!(t.records.len(), 2);
    assert_eq!(t.errors.len(), 1);
    assert_eq!(t.errors[0].line, 3);
    assert!(t.errors[0].message.contains("division"), "{}", t.errors[0].message);
}

#[test]
fn malformed_rows_are_reported_not_dropped() {
    let text = "case_id,B1,B2,B3,C2,C3,C4,S1,S3,X3,alt_kft,M_inf,C1,alpha,CL,CD,CM\n\
                a,0.15,0.1,0.5,0.7,0.2,0.07,50,30,0.6,10,0.3,2,3,0.5,0.02,-0.1\n\
                b,0.15,zz,0.5,0.7,0.2,0.07,50,30,0.6,10,0.3,2,3,0.5,0.02,-0.1\n\
                c,0.15,0.1\n\
                d,0.45,0.1,0.5,0.7,0.2,0.07,50,30,0.6,10,0.3,2,3,0.5,0.02,-0.1\n";
    let t = read_cases_from(text.as_bytes(), None).unwrap();
    assert_eq!(t.records.len(), 2);
    assert!(!t.records[0].out_of_box);
    assert!(t.records[1].out_of_box);
    assert_eq!(t.records[0].ld, 0.5 / 0.02);
    let lines: Vec<u64> = t.errors.iter().map(|e| e.line).collect();
    assert_eq!(lines, vec![3, 4]);
    assert!(t.errors[0].message.contains("B2"));
}

#[test]
fn stored_ld_must_match() {
    let text = "case_id,B1,B2,B3,C2,C3,C4,S1,S3,X3,alt_kft,M_inf,C1,alpha,CL,CD,CM,LD\n\
                a,0.15,0.1,0.5,0.7,0.2,0.07,50,30,0.6,10,0.3,2,3,0.5,0.02,-0.1,25.5\n";
    let t = read_cases_from(text.as_bytes(), None).unwrap();
    assert_eq!(t.errors.len(), 1);
}

#[test]
fn missing_columns_listed() {
    let text = "case_id,B1,B2,C2,C3,C4,S1,S3,X3,alt_kft,M_inf,C1,CL,CD,CM\n";
    match read_cases_from(text.as_bytes(), None) {
        Err(Error::Schema(m)) => {
            assert!(m.contains("B3") && m.contains("alpha"), "{m}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn column_map_bridges_foreign_names() {
    let map = ColumnMap::from_toml("[columns]\nB1 = \"b1_over_c1\"\nalpha = \"aoa_deg\"\n").unwrap();
    let text = "aoa_deg,case_id,b1_over_c1,B2,B3,C2,C3,C4,S1,S3,X3,alt_kft,M_inf,C1,CL,CD,CM\n\
                3,a,0.15,0.1,0.5,0.7,0.2,0.07,50,30,0.6,10,0.3,2,0.5,0.02,-0.1\n";
    let t = read_cases_from(text.as_bytes(), Some(&map)).unwrap();
    assert_eq!(t.records.len(), 1);
    assert_eq!(t.records[0].params.b1, 0.15);
    assert_eq!(t.records[0].alpha_deg, 3.0);
    assert!(ColumnMap::from_toml("[columns]\nwingspan = \"w\"\n").is_err());
}

const FIXTURE: &str = "# vtk DataFile Version 3.0
two triangles
ASCII
DATASET POLYDATA
POINTS 4 float
0 0 0
1 0 0
1 1 0
0 1 0.5
POLYGONS 2 8
3 0 1 2
3 0 2 3
POINT_DATA 4
SCALARS Cp float 1
LOOKUP_TABLE default
-0.5 0.25 1.0 -1.5
SCALARS Cfx double
LOOKUP_TABLE default
0.001 0.002 0.003 0.004
SCALARS Cfy float 1
LOOKUP_TABLE default
0 0 0 1e-4
SCALARS Cfz float 1
LOOKUP_TABLE default
1e-5 2e-5 3e-5 4e-5
";

#[test]
fn vtk_fixture_parses_exactly() {
    let c = parse_vtk(FIXTURE).unwrap();
    assert_eq!(c.points, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.5]]);
    assert_eq!(c.polygons, vec![vec![0, 1, 2], vec![0, 2, 3]]);
    assert_eq!(c.cp, Some(vec![-0.5, 0.25, 1.0, -1.5]));
    assert_eq!(c.cfx, Some(vec![0.001, 0.002, 0.003, 0.004]));
    assert_eq!(c.cfy, Some(vec![0.0, 0.0, 0.0, 1e-4]));
    assert_eq!(c.cfz, Some(vec![1e-5, 2e-5, 3e-5, 4e-5]));
    // Vertex 1 touches only the flat triangle.
    assert_eq!(c.normals[1], [0.0, 0.0, 1.0]);
    for n in &c.normals {
        assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() < 1e-12);
    }
    // Vertex 3 only touches the tilted triangle (0,2,3).
    let s = 1.0 / 1.5f64.sqrt();
    let want = [0.5 * s, -0.5 * s, s];
    for k in 0..3 {
        assert!((c.normals[3][k] - want[k]).abs() < 1e-12, "{:?}", c.normals[3]);
    }
}

fn format_error(r: crate::Result<SurfacePointCloud>) -> (String, String, usize) {
    match r {
        Err(Error::Format { message, token, offset }) => (message, token, offset),
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn truncated_points_block_located() {
    let text = FIXTURE.replace("0 1 0.5\n", "").replace("POLYGONS 2 8\n3 0 1 2\n3 0 2 3\n", "");
    let cut = &text[..text.find("POINT_DATA").unwrap()];
    let (m, tok, off) = format_error(parse_vtk(cut));
    assert!(m.contains("POINTS") && m.contains("12"), "{m}");
    assert_eq!(tok, "<eof>");
    assert_eq!(off, cut.len());
}

#[test]
fn unsupported_inputs_located() {
    let (m, tok, off) = format_error(parse_vtk(&FIXTURE.replace("ASCII", "BINARY")));
    assert!(m.contains("ASCII"));
    assert_eq!(tok, "BINARY");
    assert_eq!(off, FIXTURE.find("ASCII").unwrap());

    let (_, tok, off) = format_error(parse_vtk(&FIXTURE.replace("POLYDATA", "UNSTRUCTURED_GRID")));
    assert_eq!(tok, "UNSTRUCTURED_GRID");
    assert_eq!(off, FIXTURE.find("POLYDATA").unwrap());

    let bad = FIXTURE.replace("SCALARS Cfy", "SCALARS Pressure");
    let (m, tok, off) = format_error(parse_vtk(&bad));
    assert!(m.contains("unknown scalar"));
    assert_eq!(tok, "Pressure");
    assert_eq!(off, bad.find("Pressure").unwrap());

    let bad = FIXTURE.replace("3 0 2 3", "3 0 2 9");
    let (_, tok, _) = format_error(parse_vtk(&bad));
    assert_eq!(tok, "9");

    let (_, tok, _) = format_error(parse_vtk(&FIXTURE.replace("0.002", "abc")));
    assert_eq!(tok, "abc");
}

#[test]
fn binary_file_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("b.vtk");
    std::fs::write(&p, [0x23, 0x20, 0xff, 0xfe, 0x00]).unwrap();
    let (_, tok, off) = format_error(read_surface_fields(&p));
    assert_eq!(tok, "<binary>");
    assert_eq!(off, 2);
}

fn arb_cloud() -> impl Strategy<Value = SurfacePointCloud> {
    (3usize..20).prop_flat_map(|n| {
        let pts = prop::collection::vec(prop::array::uniform3(-1e3f64..1e3), n);
        let nrm = prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), n);
        let f = || prop::option::of(prop::collection::vec(prop::num::f64::NORMAL, n));
        let polys = prop::collection::vec(prop::collection::vec(0..n, 3..5), 0..6);
        (pts, nrm, polys, f(), f(), f(), f()).prop_map(|(points, normals, polygons, cp, cfx, cfy, cfz)| {
            SurfacePointCloud {
                points,
                normals,
                polygons,
                cp,
                cfx,
                cfy,
                cfz,
            }
        })
    })
}

proptest! {
    #[test]
    fn vtk_round_trip_is_bit_stable(c in arb_cloud()) {
        let text = format_vtk(&c, "round trip");
        let back = parse_vtk(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(format_vtk(&back, "round trip"), text);
    }
}

#[test]
fn oracle_surface_round_trips_through_file() {
    let p = ParamBox::default().midpoint();
    let fc = lhs_conditions(1, 0).unwrap()[0];
    let c = oracle_aero(&p, &fc, &crate::geom::SurfaceOptions::new(6, 5)).unwrap().surface;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.vtk");
    write_surface_fields(&path, &c, "oracle").unwrap();
    assert_eq!(read_surface_fields(&path).unwrap(), c);
}

fn trained_like_ld() -> LdSurrogate {
    let mut m = LdSurrogate::new(LdConfig { hidden: 8, depth: 2 }, 11);
    m.output_scaler.mean = vec![10.0];
    m
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let m = trained_like_ld();
    let bytes = encode_checkpoint(&m).unwrap();
    let back: LdSurrogate = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back, m);
    let p = ParamBox::default().midpoint();
    let fc = lhs_conditions(1, 3).unwrap()[0];
    assert_eq!(
        back.predict_ld(&p, &fc).unwrap().to_bits(),
        m.predict_ld(&p, &fc).unwrap().to_bits()
    );
    assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
}

#[test]
fn checkpoint_rejects_corruption_and_wrong_kind() {
    let m = trained_like_ld();
    let mut bytes = encode_checkpoint(&m).unwrap();
    let k = bytes.len() / 2;
    bytes[k] ^= 1;
    assert!(matches!(decode_checkpoint::<LdSurrogate>(&bytes), Err(Error::Integrity(_))));
    let bytes = encode_checkpoint(&m).unwrap();
    assert!(matches!(
        decode_checkpoint::<LdSurrogate>(&bytes[..bytes.len() - 10]),
        Err(Error::Integrity(_))
    ));
    assert!(matches!(
        decode_checkpoint::<crate::diffusion::CdmModel>(&bytes),
        Err(Error::Integrity(_))
    ));
}

#[test]
fn checkpoint_tampered_shape_reports_expected_and_found() {
    let m = trained_like_ld();
    let bytes = encode_checkpoint(&m).unwrap();
    let (mut h, data) = decode_header(&bytes).unwrap();
    let data = data.to_vec();
    let b = &mut h.buffers[0];
    std::mem::swap(&mut b.rows, &mut b.cols);
    let forged = reseal(&h, &data).unwrap();
    let e = decode_checkpoint::<LdSurrogate>(&forged).unwrap_err().to_string();
    assert!(e.contains("expected shape (14, 8)") && e.contains("found (8, 14)"), "{e}");

    let (mut h, _) = decode_header(&bytes).unwrap();
    h.format_version = 99;
    let forged = reseal(&h, &data).unwrap();
    let e = decode_checkpoint::<LdSurrogate>(&forged).unwrap_err().to_string();
    assert!(e.contains("version 99"), "{e}");

    let (mut h, _) = decode_header(&bytes).unwrap();
    h.conditioning_order.swap(0, 1);
    let forged = reseal(&h, &data).unwrap();
    assert!(decode_checkpoint::<LdSurrogate>(&forged).is_err());
}

#[test]
fn missing_checkpoint_names_path() {
    let e = load_checkpoint::<LdSurrogate>(std::path::Path::new("/nonexistent/ld.ckpt")).unwrap_err();
    assert!(e.to_string().contains("/nonexistent/ld.ckpt"));
    assert_eq!(e.exit_code(), 1);
}
