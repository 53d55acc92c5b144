//! End-to-end checks of the command-line surface: file round trips,
//! determinism under seeds, recovery on near-noiseless data, and exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

use rgp_cli::bundle::CurveBundle;
use rgp_cli::commands::{
    cmd_convergence, cmd_fit, cmd_simulate, cmd_test2, null_csv_path, Preset, SimulateSource,
    Test2Args,
};
use rgp_core::estimate::FitMethod;
use rgp_core::model::presets;

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rgp_cli_tests_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn rgp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rgp"))
}

#[test]
fn simulate_is_byte_identical_under_seed() {
    let a = tmp("sim_a.json");
    let b = tmp("sim_b.json");
    cmd_simulate(&SimulateSource::Preset(Preset::SpdDemo), 5, 42, &a).unwrap();
    cmd_simulate(&SimulateSource::Preset(Preset::SpdDemo), 5, 42, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn simulate_zero_curves_gives_valid_empty_bundle() {
    let p = tmp("sim_empty.json");
    cmd_simulate(&SimulateSource::Preset(Preset::S2Hetero), 0, 1, &p).unwrap();
    let bundle = CurveBundle::load(&p).unwrap();
    assert!(bundle.curves.is_empty());
    assert_eq!(bundle.times.len(), 100);
    assert!(bundle.to_curves().unwrap().is_empty());
}

#[test]
fn bundle_roundtrip_through_disk_is_exact() {
    let p = tmp("roundtrip.json");
    cmd_simulate(&SimulateSource::Preset(Preset::So3Synthetic), 3, 7, &p).unwrap();
    let bundle = CurveBundle::load(&p).unwrap();
    let again = tmp("roundtrip2.json");
    bundle.save(&again).unwrap();
    let reloaded = CurveBundle::load(&again).unwrap();
    for (a, b) in bundle
        .curves
        .iter()
        .flatten()
        .flatten()
        .zip(reloaded.curves.iter().flatten().flatten())
    {
        assert_eq!(a, b);
    }
}

#[test]
fn fit_recovers_preset_mean_on_low_noise_bundle() {
    // spd-demo already has variance around 1e-3; n = 60 pins the mean well
    let model = presets::spd_demo(100).unwrap();
    let curves = model.simulate(60, 11).unwrap();
    let p = tmp("fit_in.json");
    CurveBundle::from_curves(&curves, None).unwrap().save(&p).unwrap();
    let out = tmp("fit_out.json");
    let report = cmd_fit(&p, FitMethod::Fre, 5, &out).unwrap();
    for (i, row) in report.m_w.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            assert!(
                (v - model.params.m_w[(i, j)]).abs() < 0.05,
                "entry ({},{}): {} vs {}",
                i,
                j,
                v,
                model.params.m_w[(i, j)]
            );
        }
    }
    assert!(out.exists());
}

#[test]
fn fit_on_near_noiseless_model_file_recovers_mean_exactly() {
    // a model file with covariance small enough that the estimate must sit
    // within 1e-6 of the truth, but large enough to avoid degeneracy
    let model = presets::spd_demo(100).unwrap();
    let mf = serde_json::json!({
        "manifold": {"kind": "spd", "d": 3, "q": 4},
        "m_w": (0..3).map(|i| (0..5).map(|j| model.params.m_w[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "u_w": [[1e-12, 0.0, 0.0], [0.0, 1e-12, 0.0], [0.0, 0.0, 1e-12]],
        "v_w": (0..5).map(|i| (0..5).map(|j| model.params.v_w[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "b": [1.0, 0.0, 0.0, 1.0],
        "r": 100
    });
    let mf_path = tmp("model_file.json");
    std::fs::write(&mf_path, serde_json::to_string(&mf).unwrap()).unwrap();
    let bundle_path = tmp("mf_bundle.json");
    cmd_simulate(&SimulateSource::ModelFile(mf_path), 25, 3, &bundle_path).unwrap();
    let out = tmp("mf_fit.json");
    let report = cmd_fit(&bundle_path, FitMethod::Fre, 5, &out).unwrap();
    for (i, row) in report.m_w.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            assert!((v - model.params.m_w[(i, j)]).abs() < 1e-6);
        }
    }
}

#[test]
fn convergence_writes_rows_and_medians() {
    let out = tmp("conv.csv");
    let summary = cmd_convergence(Preset::SpdDemo, &[10], 3, &out).unwrap();
    assert_eq!(summary.rows.len(), 3);
    assert_eq!(summary.medians.len(), 1);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("n,seed,metric_m,metric_u,metric_v\n"));
    assert_eq!(text.lines().count(), 1 + 3 + 1);
    assert!(text.lines().last().unwrap().starts_with("10,median,"));
}

#[test]
fn convergence_rejects_unsorted_n_list() {
    let out = tmp("conv_bad.csv");
    assert!(cmd_convergence(Preset::SpdDemo, &[25, 10], 2, &out).is_err());
}

#[test]
fn test2_identical_groups_has_p_one() {
    let model = presets::so3_synthetic(40).unwrap();
    let curves = model.simulate(10, 5).unwrap();
    let mut both = curves.clone();
    both.extend(curves.clone());
    let labels: Vec<String> =
        (0..20).map(|i| if i < 10 { "a".into() } else { "b".into() }).collect();
    let p = tmp("test2_in.json");
    CurveBundle::from_curves(&both, Some(labels)).unwrap().save(&p).unwrap();
    let out = tmp("test2_out.json");
    let args = Test2Args {
        input: p,
        input2: None,
        r: 9,
        seed: 1,
        method: FitMethod::Fre,
        bootstrap: false,
        k: 10,
        out: out.clone(),
    };
    let result = cmd_test2(&args).unwrap();
    assert_eq!(result.j_observed, 0.0);
    assert_eq!(result.p_value, 1.0);
    assert!(out.exists());
    let hist = std::fs::read_to_string(null_csv_path(&out)).unwrap();
    assert_eq!(hist.lines().count(), 1 + 9);
}

#[test]
fn test2_without_labels_is_usage_error() {
    let model = presets::so3_synthetic(30).unwrap();
    let curves = model.simulate(6, 2).unwrap();
    let p = tmp("test2_nolabels.json");
    CurveBundle::from_curves(&curves, None).unwrap().save(&p).unwrap();
    let out = tmp("test2_nolabels_out.json");
    let args = Test2Args {
        input: p.clone(),
        input2: None,
        r: 5,
        seed: 1,
        method: FitMethod::Fre,
        bootstrap: false,
        k: 10,
        out,
    };
    let err = cmd_test2(&args).unwrap_err();
    assert!(matches!(err, rgp_cli::error::CliError::Usage(_)));

    // and through the binary: exit code 2
    let status = rgp()
        .args(["test2", "--in"])
        .arg(&p)
        .args(["--R", "5", "--out"])
        .arg(tmp("t2cli.json"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn unknown_method_flag_exits_2() {
    let status = rgp()
        .args(["fit", "--in", "nope.json", "--method", "bogus", "--k", "5", "--out", "x.json"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn unknown_preset_exits_2() {
    let status = rgp()
        .args(["simulate", "--preset", "mystery", "--n", "1", "--seed", "0", "--out", "x.json"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn missing_input_file_exits_1() {
    let status = rgp()
        .args(["fit", "--in", "/nonexistent/bundle.json", "--k", "5", "--out"])
        .arg(tmp("missing.json"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn simulate_binary_runs_and_same_seed_matches() {
    let a = tmp("bin_a.json");
    let b = tmp("bin_b.json");
    for p in [&a, &b] {
        let status = rgp()
            .args(["simulate", "--preset", "spd-demo", "--n", "3", "--seed", "9", "--out"])
            .arg(p)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn fit_rejects_k_not_below_r() {
    // r = 20 time points with k = 25 basis functions cannot be fit
    let model = presets::spd_demo(20).unwrap();
    let curves = model.simulate(4, 1).unwrap();
    let p = tmp("fit_smallr.json");
    CurveBundle::from_curves(&curves, None).unwrap().save(&p).unwrap();
    let out: &Path = &tmp("fit_smallr_out.json");
    assert!(cmd_fit(&p, FitMethod::Fre, 25, out).is_err());
}
