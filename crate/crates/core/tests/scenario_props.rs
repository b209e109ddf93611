use std::fs;

use proptest::prelude::*;
use wentzell::model::VariantKind;
use wentzell::scenario::{parse_config, preset, run, RunOptions};

#[test]
fn identical_configs_give_identical_outputs() {
    let cfg = parse_config("preset = \"3c\"\nn = 60\nt_end = 15.0\nseed = 9\n", "test").unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let dirs = [tmp.path().join("first"), tmp.path().join("second")];
    for d in &dirs {
        run(&cfg, &RunOptions { certify: true, resolvent_check: true, out_dir: Some(d.clone()) }).unwrap();
    }
    for file in ["trajectory.csv", "functionals.csv", "report.json", "config.toml"] {
        let (a, b) = (fs::read(dirs[0].join(file)).unwrap(), fs::read(dirs[1].join(file)).unwrap());
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs");
    }
}

#[test]
fn report_fields_round_trip_through_json() {
    let cfg = parse_config("preset = \"2b\"\nn = 30\nt_end = 5.0\n", "test").unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let report = run(&cfg, &RunOptions { certify: true, resolvent_check: false, out_dir: Some(tmp.path().into()) })
        .unwrap()
        .report;
    let text = fs::read_to_string(tmp.path().join("report.json")).unwrap();
    let back: wentzell::RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(value["decay"]["M"].is_number());
    assert!(value["certification"]["C"].is_number());
}

#[test]
fn functional_rows_parse_at_full_precision() {
    let cfg = parse_config("preset = \"1b\"\nn = 20\nt_end = 2.0\nsample_stride = 7\n", "test").unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&cfg, &RunOptions { out_dir: Some(tmp.path().into()), ..RunOptions::default() }).unwrap();
    let text = fs::read_to_string(tmp.path().join("functionals.csv")).unwrap();
    let rows: Vec<Vec<f64>> =
        text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), out.functionals.len());
    for (row, s) in rows.iter().zip(&out.functionals) {
        assert_eq!(row[0].to_bits(), s.t.to_bits());
        assert_eq!(row[5].to_bits(), s.gamma.to_bits());
    }
    let last = rows.last().unwrap();
    assert_eq!(last[0], out.report.t_final);
}

fn variant_strategy() -> impl Strategy<Value = VariantKind> {
    prop_oneof![Just(VariantKind::W2W1), Just(VariantKind::W1D), Just(VariantKind::W2D), Just(VariantKind::W1W1)]
}

proptest! {
    #[test]
    fn config_round_trip(
        name in prop::sample::select(vec!["1a", "1b", "1c", "2a", "2b", "2c", "3a", "3b", "3c"]),
        n in 2usize..500,
        stride in 1usize..200,
        kp in 0.0f64..1e3,
        variant in variant_strategy(),
        ell in prop::option::of(0.0f64..0.1),
        a_nodes in prop::option::of(prop::collection::vec(0.1f64..5.0, 3)),
    ) {
        let mut cfg = preset(name).unwrap();
        cfg.n = n;
        cfg.sample_stride = stride;
        cfg.control.kp = kp;
        cfg.variant = variant;
        if variant != VariantKind::W2W1 {
            cfg.control.v1_ref = 0.0;
        }
        if !variant.has_integrator() {
            cfg.control.alpha2 = 0.0;
        } else if variant == VariantKind::W2D {
            cfg.control.alpha2 = 50.0;
        }
        cfg.analysis.ell = ell;
        if let Some(a) = a_nodes {
            cfg.n = 2;
            cfg.physical.a = wentzell::scenario::NodalValue::Nodes(a);
        }
        let text = cfg.to_toml().unwrap();
        let back = parse_config(&text, "round trip").unwrap();
        prop_assert_eq!(back, cfg);
    }
}
