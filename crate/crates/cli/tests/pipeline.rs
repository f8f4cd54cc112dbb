//! Pipeline-level integration tests: configuration handling, sweep
//! invariants, loss equivalence on clean data, and process exit codes.

use std::path::Path;
use std::process::Command;

use qns_cli::config::{Config, RatesSection, SweepSection};
use qns_cli::datagen::{frequency_seed, generate_datasets, truth_at};
use qns_cli::output::{digest_value, Provenance};
use qns_cli::sweep::run_fits;
use qns_core::estimation::LossFunction;

const PEAK_HZ: f64 = 1.961e6;

fn prov(seed: u64) -> Provenance {
    Provenance::new("pipeline-test", &serde_json::json!({}), seed)
}

fn reduced_cfg(freqs: Vec<f64>) -> SweepSection {
    SweepSection {
        rabi_frequencies_hz: freqs,
        source: "reduced".into(),
        shots: 2000,
        ..SweepSection::default()
    }
}

#[test]
fn empty_config_document_equals_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.json");
    std::fs::write(&path, "{}").unwrap();
    let loaded = Config::load(Some(&path)).unwrap();
    assert_eq!(
        digest_value(&loaded.canonical_json()),
        digest_value(&Config::default().canonical_json())
    );
}

#[test]
fn config_rejects_bad_values() {
    let bad = [
        serde_json::json!({"sweep": {"rabi_frequencies_hz": []}}),
        serde_json::json!({"sweep": {"rabi_frequencies_hz": [1e6, 1e6]}}),
        serde_json::json!({"sweep": {"source": "psychic"}}),
        serde_json::json!({"sweep": {"sampling": "vibes"}}),
        serde_json::json!({"sweep": {"contamination_p": 1.5}}),
    ];
    for doc in bad {
        let cfg: Config = serde_json::from_value(doc.clone()).unwrap();
        assert!(cfg.sweep.validate().is_err(), "accepted {doc}");
    }
}

#[test]
fn frequency_substreams_are_distinct() {
    let a = frequency_seed(1, 1.9e6, "data");
    assert_ne!(a, frequency_seed(1, 1.9e6, "contaminate"));
    assert_ne!(a, frequency_seed(1, 2.0e6, "data"));
    assert_ne!(a, frequency_seed(2, 1.9e6, "data"));
    assert_eq!(a, frequency_seed(1, 1.9e6, "data"));
}

#[test]
fn warm_and_cold_sweeps_agree_on_clean_data() {
    let cfg = reduced_cfg(vec![1.93e6, PEAK_HZ]);
    let params = qns_cli::config::NoiseSection::default().params().unwrap();
    let rates = RatesSection::default().rates().unwrap();
    let datasets = generate_datasets(&cfg, &params, &rates, 3, &prov(3)).unwrap();
    let loss = LossFunction::Huber { delta0: 1.0 };

    let warm = run_fits(&datasets, &cfg, &rates, &loss).unwrap();
    let cold_cfg = SweepSection {
        warm_start: false,
        ..cfg
    };
    let cold = run_fits(&datasets, &cold_cfg, &rates, &loss).unwrap();
    for (w, c) in warm.iter().zip(&cold) {
        let wt = w.theta.unwrap().pack();
        let ct = c.theta.unwrap().pack();
        for (a, b) in wt.iter().zip(&ct) {
            let scale = a.abs().max(b.abs()).max(1.0);
            assert!((a - b).abs() / scale < 1e-3, "warm {a} vs cold {b}");
        }
    }
}

#[test]
fn repeated_cold_sweeps_are_identical() {
    // With warm start off each frequency is an independent job; repeated runs
    // (and any worker-pool schedule) must give bitwise-equal fits.
    let cfg = SweepSection {
        warm_start: false,
        ..reduced_cfg(vec![1.93e6, PEAK_HZ])
    };
    let params = qns_cli::config::NoiseSection::default().params().unwrap();
    let rates = RatesSection::default().rates().unwrap();
    let datasets = generate_datasets(&cfg, &params, &rates, 3, &prov(3)).unwrap();
    let loss = LossFunction::Huber { delta0: 1.0 };
    let a = run_fits(&datasets, &cfg, &rates, &loss).unwrap();
    let b = run_fits(&datasets, &cfg, &rates, &loss).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.theta.unwrap().pack(), y.theta.unwrap().pack());
        assert_eq!(x.intervals, y.intervals);
    }
}

#[test]
fn losses_agree_on_clean_data_at_peak() {
    let cfg = reduced_cfg(vec![PEAK_HZ]);
    let params = qns_cli::config::NoiseSection::default().params().unwrap();
    let rates = RatesSection::default().rates().unwrap();
    let datasets = generate_datasets(&cfg, &params, &rates, 5, &prov(5)).unwrap();
    let huber = run_fits(
        &datasets,
        &cfg,
        &rates,
        &LossFunction::Huber { delta0: 1.0 },
    )
    .unwrap();
    let quad = run_fits(&datasets, &cfg, &rates, &LossFunction::Quadratic).unwrap();
    let h = huber[0].theta.unwrap().pack();
    let q = quad[0].theta.unwrap().pack();
    let truth = truth_at(&params, PEAK_HZ, 0.0).pack();
    // 2% of the dominant component; finite-shot scatter makes tighter
    // per-component comparisons meaningless for the near-zero components.
    let scale = truth[..8].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for k in 0..8 {
        assert!(
            (h[k] - q[k]).abs() <= 0.02 * scale,
            "component {k}: huber {} vs quadratic {}",
            h[k],
            q[k]
        );
    }
}

#[test]
fn sweep_emits_both_signs_per_frequency() {
    let config = Config {
        sweep: SweepSection {
            sampling: "exact".into(),
            ..reduced_cfg(vec![1.93e6, PEAK_HZ])
        },
        ..Config::default()
    };
    let dir = tempfile::tempdir().unwrap();
    qns_cli::commands::cmd_sweep(&config, dir.path(), 1).unwrap();

    let text = std::fs::read_to_string(dir.path().join("spectra.csv")).unwrap();
    assert!(text.starts_with("# command: sweep\n"));
    assert!(text.contains("# config_digest: "));
    assert!(text.contains("# master_seed: 1\n"));
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("omega_hz"))
        .collect();
    assert_eq!(rows.len(), 4);
    for f in [1.93e6, PEAK_HZ] {
        for sign in [1.0, -1.0] {
            let want = format!("{}", sign * f);
            assert!(
                rows.iter().any(|r| r.split(',').next() == Some(want.as_str())),
                "missing row at {want}"
            );
        }
    }
}

fn run_qns(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_qns"))
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn exit_codes_follow_failure_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();

    // Missing config file: I/O error.
    assert_eq!(
        run_qns(&["--config", "/nonexistent/cfg.json", "--out", out_s, "sweep"]),
        4
    );

    // Malformed JSON: configuration error.
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    assert_eq!(
        run_qns(&["--config", bad.to_str().unwrap(), "--out", out_s, "sweep"]),
        2
    );

    // Invalid field value: configuration error.
    let invalid = dir.path().join("invalid.json");
    std::fs::write(&invalid, r#"{"sweep": {"source": "psychic"}}"#).unwrap();
    assert_eq!(
        run_qns(&["--config", invalid.to_str().unwrap(), "--out", out_s, "sweep"]),
        2
    );

    // Reconstruct with no stored datasets: I/O error.
    std::fs::create_dir_all(out.join("data")).unwrap();
    assert_eq!(run_qns(&["--out", out_s, "reconstruct"]), 4);

    // Success path.
    let good = dir.path().join("good.json");
    std::fs::write(
        &good,
        format!(
            r#"{{"sweep": {{"rabi_frequencies_hz": [{PEAK_HZ}], "source": "reduced", "sampling": "exact"}}}}"#
        ),
    )
    .unwrap();
    assert_eq!(
        run_qns(&["--config", good.to_str().unwrap(), "--out", out_s, "sweep"]),
        0
    );
}

#[test]
fn generate_then_reconstruct_matches_sweep() {
    let config = Config {
        sweep: SweepSection {
            sampling: "exact".into(),
            ..reduced_cfg(vec![PEAK_HZ])
        },
        ..Config::default()
    };
    let sweep_dir = tempfile::tempdir().unwrap();
    qns_cli::commands::cmd_sweep(&config, sweep_dir.path(), 1).unwrap();
    let split_dir = tempfile::tempdir().unwrap();
    qns_cli::commands::cmd_generate_data(&config, split_dir.path(), 1).unwrap();
    qns_cli::commands::cmd_reconstruct(&config, split_dir.path(), 1).unwrap();

    let strip = |p: &Path| -> String {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(
        strip(&sweep_dir.path().join("spectra.csv")),
        strip(&split_dir.path().join("spectra.csv"))
    );
}
