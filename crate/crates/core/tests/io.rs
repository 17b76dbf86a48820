use fracnet::io::{load_csv, parse_csv, save_csv, to_csv_string, RunConfig};
use fracnet::{Error, ErrorKind, Series};
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn two_channel_file_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rec.csv");
    std::fs::write(&path, "# sample_rate: 160\nFz,Cz\n1,2\n3,4\n5.5,-6e-3\n").unwrap();
    let s: Series = load_csv(&path).unwrap();
    assert_eq!((s.channels(), s.len()), (2, 3));
    assert_eq!(s.label(1), "Cz");
    assert_eq!(s.sample_rate, Some(160.0));
    assert_eq!(s.values()[(1, 2)], -6e-3);
}

#[test]
fn errors_name_line_path_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "a,b\n1,2\n3\n").unwrap();
    let err = load_csv::<f64>(&path).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("bad.csv") && msg.contains(":3:"), "{msg}");
    assert_eq!(err.kind(), ErrorKind::Data);

    let err = parse_csv::<f64>("a,b\n1,2\n3,x\n").unwrap_err();
    assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    assert!(err.to_string().contains('b'), "{err}");

    let missing = load_csv::<f64>(dir.path().join("nope.csv")).unwrap_err();
    assert!(missing.to_string().contains("nope.csv"));
    assert_eq!(missing.kind(), ErrorKind::Data);
}

#[test]
fn non_finite_cells_are_rejected() {
    assert!(parse_csv::<f64>("a\n1\nNaN\n").is_err());
    assert!(parse_csv::<f64>("a\n1\ninf\n").is_err());
}

#[test]
fn config_rejects_bad_channel_references() {
    let cfg = RunConfig::from_json(
        r#"{"version": 1, "data": {"kind": "three_node", "noise_var": 0.001, "initial": [1, 2, 0], "len": 50},
            "hidden": [7]}"#,
    )
    .unwrap();
    let data = cfg.dataset(std::path::Path::new(".")).unwrap();
    assert!(cfg.splits(data.channels()).is_err());

    let cfg = RunConfig::from_json(
        r#"{"version": 1, "data": {"kind": "three_node", "noise_var": 0.001, "initial": [1, 2, 0], "len": 50},
            "alpha": [0.5, 0.5]}"#,
    )
    .unwrap();
    let data = cfg.dataset(std::path::Path::new(".")).unwrap();
    assert!(cfg.channel_orders(&data).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_then_load_is_bitwise(
        values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 2..60),
        channels in 1usize..4,
        rate in prop::option::of(1.0f64..1000.0),
    ) {
        let len = values.len() / channels;
        prop_assume!(len >= 2);
        let m = DMatrix::from_fn(channels, len, |c, t| values[t * channels + c]);
        let mut s = Series::new(m).unwrap();
        s.sample_rate = rate;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        save_csv(&path, &s).unwrap();
        let back: Series = load_csv(&path).unwrap();
        prop_assert_eq!(back.sample_rate, rate);
        for (a, b) in s.values().iter().zip(back.values().iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(to_csv_string(&back), to_csv_string(&s));
    }
}
