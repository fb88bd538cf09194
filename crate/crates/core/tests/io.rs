use triscale::asymptotic_forced::frequency_response_curve;
use triscale::asymptotic_free::backbone_frequency;
use triscale::io::{fmt_num, write_backbone, write_json, write_response_curve, write_table, write_trajectory};
use triscale::model::OscillatorParams;

fn forced() -> OscillatorParams<f64> {
    OscillatorParams { omega: 1.0, c: 1.0, d: 1.0, lambda: 0.5, epsilon: 0.01, f_m: 1.0, sigma: 0.0 }
}

fn read_rows(bytes: &[u8]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn numbers_round_trip_exactly() {
    for x in [0.0, 1.0, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, std::f64::consts::PI] {
        assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
    }
    assert_eq!(fmt_num(1.5), "1.5000000000000000e0");
}

#[test]
fn backbone_csv_round_trip() {
    let p = OscillatorParams::free(1.0, 1.0, 1.0, 0.01);
    let amps: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
    let mut buf = Vec::new();
    write_backbone(&mut buf, &p, &amps).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(!text.contains('\r'));
    let (header, rows) = read_rows(&buf);
    assert_eq!(header, ["a", "nu", "nu_order1"]);
    assert_eq!(rows.len(), amps.len());
    for (row, a) in rows.iter().zip(&amps) {
        assert_eq!(row[0].parse::<f64>().unwrap(), *a);
        assert_eq!(row[1].parse::<f64>().unwrap(), backbone_frequency(*a, &p));
    }
}

#[test]
fn response_curve_csv_is_deterministic() {
    let render = || {
        let p = forced();
        let curve = frequency_response_curve(&p, (-2.0, 4.0), 100).unwrap();
        let mut buf = Vec::new();
        write_response_curve(&mut buf, &curve, &p).unwrap();
        buf
    };
    let (a, b) = (render(), render());
    assert_eq!(a, b);
    let (header, rows) = read_rows(&a);
    assert_eq!(header, ["sigma", "forcing_freq", "a", "beta", "gamma", "stable", "residual", "trace_j", "det_j"]);
    for row in &rows {
        let beta: f64 = row[3].parse().unwrap();
        let gamma: f64 = row[4].parse().unwrap();
        assert_eq!(gamma, -beta);
        assert!(row[5] == "true" || row[5] == "false");
    }
}

#[test]
fn trajectory_header_and_scale() {
    let mut buf = Vec::new();
    write_trajectory(&mut buf, &[0.0, 1.0], &[vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]], 0.5).unwrap();
    let (header, rows) = read_rows(&buf);
    assert_eq!(header, ["t", "u_1", "u_2", "v_1", "v_2"]);
    assert_eq!(rows[1][4].parse::<f64>().unwrap(), 4.0);
}

#[test]
fn table_and_json_output() {
    let mut buf = Vec::new();
    write_table(&mut buf, &["x", "y"], vec![vec![1.0f64, 2.0]]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "x,y\n1.0000000000000000e0,2.0000000000000000e0\n");
    let mut buf = Vec::new();
    write_json(&mut buf, &forced()).unwrap();
    let s = String::from_utf8(buf).unwrap();
    assert!(s.ends_with("}\n"));
    let back: OscillatorParams<f64> = serde_json::from_str(&s).unwrap();
    assert_eq!(back, forced());
}
