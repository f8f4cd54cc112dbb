//! Top-level command implementations shared by the binary and the
//! integration tests.

use std::path::{Path, PathBuf};

use qns_core::estimation::LossFunction;
use qns_core::experiment::write_dataset;
use qns_core::noise::PARAM_NAMES;

use crate::config::Config;
use crate::datagen::{frequency_stem, generate_datasets, load_datasets, truth_at};
use crate::output::{csv_writer, write_json, write_provenance_file, Provenance};
use crate::simulate::{simulate_ramsey, simulate_spinlock};
use crate::sweep::{loss_from_config, run_fits, write_sweep_outputs, FreqFit};
use crate::CliError;

fn provenance(command: &str, config: &Config, seed: u64) -> Provenance {
    Provenance::new(command, &config.canonical_json(), seed)
}

fn finish(out: &Path, prov: &Provenance, config: &Config) -> Result<(), CliError> {
    write_provenance_file(out, prov, &config.canonical_json())
}

pub fn cmd_simulate_ramsey(config: &Config, out: &Path, seed: u64) -> Result<(), CliError> {
    let prov = provenance("simulate-ramsey", config, seed);
    simulate_ramsey(&config.ramsey, &config.noise, &config.rates, out, &prov)?;
    finish(out, &prov, config)
}

pub fn cmd_simulate_spinlock(config: &Config, out: &Path, seed: u64) -> Result<(), CliError> {
    let prov = provenance("simulate-spinlock", config, seed);
    simulate_spinlock(&config.spinlock, out, &prov)?;
    finish(out, &prov, config)
}

fn write_datasets(
    config: &Config,
    out: &Path,
    seed: u64,
    prov: &Provenance,
) -> Result<(), CliError> {
    let cfg = &config.sweep;
    cfg.validate()?;
    let params = config.noise.params()?;
    let rates = config.rates.rates()?;
    let datasets = generate_datasets(cfg, &params, &rates, seed, prov)?;
    let data_dir = out.join("data");
    std::fs::create_dir_all(&data_dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", data_dir.display())))?;
    for ds in &datasets {
        let path = data_dir.join(format!("{}.csv", frequency_stem(ds.metadata.omega_rabi_hz)));
        write_dataset(ds, &path).map_err(CliError::from)?;
    }
    Ok(())
}

pub fn cmd_generate_data(config: &Config, out: &Path, seed: u64) -> Result<(), CliError> {
    let prov = provenance("generate-data", config, seed);
    write_datasets(config, out, seed, &prov)?;
    finish(out, &prov, config)
}

fn dataset_dir(config: &Config, out: &Path) -> PathBuf {
    config
        .sweep
        .dataset_dir
        .clone()
        .unwrap_or_else(|| out.join("data"))
}

pub fn cmd_reconstruct(config: &Config, out: &Path, seed: u64) -> Result<(), CliError> {
    let cfg = &config.sweep;
    cfg.validate()?;
    let prov = provenance("reconstruct", config, seed);
    let rates = config.rates.rates()?;
    let datasets = load_datasets(&dataset_dir(config, out))?;
    let loss = loss_from_config(cfg);
    let fits = run_fits(&datasets, cfg, &rates, &loss)?;
    write_sweep_outputs(out, &prov, cfg, &rates, &datasets, &fits)?;
    finish(out, &prov, config)
}

pub fn cmd_sweep(config: &Config, out: &Path, seed: u64) -> Result<(), CliError> {
    let cfg = &config.sweep;
    cfg.validate()?;
    let prov = provenance("sweep", config, seed);
    let params = config.noise.params()?;
    let rates = config.rates.rates()?;
    let datasets = generate_datasets(cfg, &params, &rates, seed, &prov)?;
    let data_dir = out.join("data");
    std::fs::create_dir_all(&data_dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", data_dir.display())))?;
    for ds in &datasets {
        let path = data_dir.join(format!("{}.csv", frequency_stem(ds.metadata.omega_rabi_hz)));
        write_dataset(ds, &path).map_err(CliError::from)?;
    }
    let loss = loss_from_config(cfg);
    let fits = run_fits(&datasets, cfg, &rates, &loss)?;
    write_sweep_outputs(out, &prov, cfg, &rates, &datasets, &fits)?;
    finish(out, &prov, config)
}

fn median(values: &mut Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn component_value(fit: &FreqFit, idx: usize) -> Option<f64> {
    fit.theta.as_ref().map(|t| t.pack()[idx])
}

pub fn cmd_compare_loss(config: &Config, out: &Path, seed: u64) -> Result<(), CliError> {
    let cfg = &config.sweep;
    cfg.validate()?;
    let prov = provenance("compare-loss", config, seed);
    let params = config.noise.params()?;
    let rates = config.rates.rates()?;
    let datasets = if cfg.source == "datasets" {
        load_datasets(&dataset_dir(config, out))?
    } else {
        generate_datasets(cfg, &params, &rates, seed, &prov)?
    };
    let huber = LossFunction::Huber {
        delta0: cfg.huber_delta0,
    };
    let huber_fits = run_fits(&datasets, cfg, &rates, &huber)?;
    let quad_fits = run_fits(&datasets, cfg, &rates, &LossFunction::Quadratic)?;

    const KRAD: f64 = 1e3;
    let mut writer = csv_writer(&out.join("compare.csv"), &prov)?;
    writer
        .write_record([
            "omega_hz",
            "component",
            "truth",
            "huber",
            "quadratic",
            "huber_abs_err",
            "quadratic_abs_err",
        ])
        .map_err(|e| CliError::Io(e.to_string()))?;

    let mut medians = serde_json::Map::new();
    for (idx, name) in PARAM_NAMES.iter().take(8).enumerate() {
        let mut huber_errs = Vec::new();
        let mut quad_errs = Vec::new();
        for (hf, qf) in huber_fits.iter().zip(&quad_fits) {
            let truth = truth_at(&params, hf.omega_hz, cfg.delta_omega_hz).pack()[idx];
            let (Some(h), Some(q)) = (component_value(hf, idx), component_value(qf, idx)) else {
                continue;
            };
            let he = (h - truth).abs();
            let qe = (q - truth).abs();
            huber_errs.push(he);
            quad_errs.push(qe);
            writer
                .write_record([
                    format!("{}", hf.omega_hz),
                    name.to_string(),
                    format!("{}", truth / KRAD),
                    format!("{}", h / KRAD),
                    format!("{}", q / KRAD),
                    format!("{}", he / KRAD),
                    format!("{}", qe / KRAD),
                ])
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
        medians.insert(
            name.to_string(),
            serde_json::json!({
                "huber_median_abs_err": median(&mut huber_errs) / KRAD,
                "quadratic_median_abs_err": median(&mut quad_errs) / KRAD,
            }),
        );
    }
    writer.flush().map_err(|e| CliError::Io(e.to_string()))?;
    write_json(
        &out.join("compare_summary.json"),
        &prov,
        serde_json::json!({
            "units": "1e3 rad/s",
            "contamination_p": cfg.contamination_p,
            "medians": medians,
        }),
    )?;
    finish(out, &prov, config)
}
