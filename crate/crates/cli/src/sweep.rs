//! Frequency-sweep reconstruction: ascending-order warm-started fits, per
//! frequency covariance and confidence intervals, and result emission.

use std::f64::consts::TAU;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use qns_core::confidence::{confidence_intervals, mestimator_covariance, second_order_tensor};
use qns_core::dynamics::{DriveConfig, QubitRates};
use qns_core::estimation::{fit_spectrum, model_predictions, FitConfig, LossFunction};
use qns_core::experiment::ObservationSet;
use qns_core::noise::{SpectrumVector, PARAM_NAMES};

use crate::config::SweepSection;
use crate::datagen::frequency_stem;
use crate::output::{csv_writer, write_json, Provenance};
use crate::CliError;

/// Outcome of one per-frequency reconstruction.
#[derive(Debug, Clone, Serialize)]
pub struct FreqFit {
    pub omega_hz: f64,
    pub theta: Option<SpectrumVector>,
    pub final_cost: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub solver_fallbacks: usize,
    /// 95% intervals per parameter, rad/s, pack order.
    pub intervals: Option<Vec<(f64, f64)>>,
    pub covariance_error: Option<String>,
    pub error: Option<String>,
}

impl FreqFit {
    fn failed(omega_hz: f64, message: String) -> Self {
        Self {
            omega_hz,
            theta: None,
            final_cost: None,
            converged: false,
            iterations: 0,
            solver_fallbacks: 0,
            intervals: None,
            covariance_error: None,
            error: Some(message),
        }
    }
}

pub fn loss_from_config(cfg: &SweepSection) -> LossFunction {
    match cfg.loss.as_str() {
        "quadratic" => LossFunction::Quadratic,
        _ => LossFunction::Huber {
            delta0: cfg.huber_delta0,
        },
    }
}

fn fit_one(
    data: &ObservationSet,
    fit_cfg: &FitConfig,
    loss: &LossFunction,
    rates: &QubitRates,
    second_order: bool,
) -> FreqFit {
    let omega_hz = data.metadata.omega_rabi_hz;
    let res = match fit_spectrum(data, fit_cfg, loss, rates, None) {
        Ok(res) => res,
        Err(e) => return FreqFit::failed(omega_hz, e.to_string()),
    };
    let drive = DriveConfig::spin_locking(TAU * omega_hz, 0.0);
    let tensor = if second_order {
        match second_order_tensor(&res.theta, data, &drive, rates, None, fit_cfg) {
            Ok(t) => Some(t),
            Err(e) => {
                log::warn!("second-order tensor at {omega_hz} Hz failed: {e}");
                None
            }
        }
    } else {
        None
    };
    let (intervals, covariance_error) =
        match mestimator_covariance(&res.jacobian, &res.residuals, loss, tensor.as_ref()) {
            Ok(report) => {
                let theta = ndarray::Array1::from(res.theta.pack().to_vec());
                match confidence_intervals(&theta, &report, 0.95) {
                    Ok(iv) => (Some(iv), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            }
            Err(e) => (None, Some(e.to_string())),
        };
    FreqFit {
        omega_hz,
        theta: Some(res.theta),
        final_cost: Some(res.final_cost),
        converged: res.converged,
        iterations: res.iterations,
        solver_fallbacks: res.solver_fallbacks,
        intervals,
        covariance_error,
        error: None,
    }
}

/// Fit every dataset; with warm start the sweep is sequential and each fit
/// starts from the previous optimum, otherwise frequencies run in parallel
/// from the configured guess.
pub fn run_fits(
    datasets: &[ObservationSet],
    cfg: &SweepSection,
    rates: &QubitRates,
    loss: &LossFunction,
) -> Result<Vec<FreqFit>, CliError> {
    let mut fit_cfg = FitConfig::default();
    fit_cfg.max_iterations = cfg.max_iterations;
    let fits: Vec<FreqFit> = if cfg.warm_start {
        let mut out = Vec::with_capacity(datasets.len());
        let mut warm: Option<SpectrumVector> = None;
        for data in datasets {
            let mut local = fit_cfg.clone();
            if let Some(w) = &warm {
                local.initial_guess = *w;
            }
            let fit = fit_one(data, &local, loss, rates, cfg.second_order);
            if let Some(theta) = &fit.theta {
                warm = Some(*theta);
            }
            out.push(fit);
        }
        out
    } else {
        datasets
            .par_iter()
            .map(|data| fit_one(data, &fit_cfg, loss, rates, cfg.second_order))
            .collect()
    };
    if fits.iter().all(|f| f.error.is_some()) {
        return Err(CliError::AllFitsFailed);
    }
    Ok(fits)
}

const KRAD: f64 = 1e3;

/// One spectra.csv row (spectra and intervals in 10^3 rad/s).
fn spectra_row(fit: &FreqFit, positive: bool) -> Vec<String> {
    let omega_hz = if positive { fit.omega_hz } else { -fit.omega_hz };
    let mut row = vec![format!("{omega_hz}")];
    // pack order: [s11+, s22+, re12+, im12+, s11-, s22-, re12-, im12-, dW]
    let offset = if positive { 0 } else { 4 };
    for k in 0..4 {
        let idx = offset + k;
        let (value, lo, hi) = match (&fit.theta, &fit.intervals) {
            (Some(theta), Some(iv)) => {
                let v = theta.pack()[idx];
                (v, iv[idx].0, iv[idx].1)
            }
            (Some(theta), None) => {
                let v = theta.pack()[idx];
                (v, f64::NAN, f64::NAN)
            }
            _ => (f64::NAN, f64::NAN, f64::NAN),
        };
        row.push(format!("{}", value / KRAD));
        row.push(format!("{}", lo / KRAD));
        row.push(format!("{}", hi / KRAD));
    }
    let delta_omega_hz = fit.theta.map_or(f64::NAN, |t| t.delta_omega / TAU);
    row.push(format!("{delta_omega_hz}"));
    row.push(format!("{}", fit.converged));
    row
}

/// Emit spectra.csv, per-frequency diagnostics under fits/, and sweep.json.
pub fn write_sweep_outputs(
    out: &Path,
    prov: &Provenance,
    cfg: &SweepSection,
    rates: &QubitRates,
    datasets: &[ObservationSet],
    fits: &[FreqFit],
) -> Result<(), CliError> {
    let mut writer = csv_writer(&out.join("spectra.csv"), prov)?;
    writer
        .write_record([
            "omega_hz",
            "s11",
            "s11_ci_low",
            "s11_ci_high",
            "s22",
            "s22_ci_low",
            "s22_ci_high",
            "re_s12",
            "re_s12_ci_low",
            "re_s12_ci_high",
            "im_s12",
            "im_s12_ci_low",
            "im_s12_ci_high",
            "delta_omega_hz",
            "converged",
        ])
        .map_err(|e| CliError::Io(e.to_string()))?;
    for fit in fits {
        for positive in [true, false] {
            writer
                .write_record(spectra_row(fit, positive))
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    writer.flush().map_err(|e| CliError::Io(e.to_string()))?;

    for (fit, data) in fits.iter().zip(datasets) {
        let stem = frequency_stem(fit.omega_hz);
        let mut summary = serde_json::to_value(fit).expect("fit serializes");
        summary
            .as_object_mut()
            .unwrap()
            .insert("param_names".into(), serde_json::json!(PARAM_NAMES));
        write_json(&out.join("fits").join(format!("{stem}.json")), prov, summary)?;

        let Some(theta) = &fit.theta else { continue };
        let drive = DriveConfig::spin_locking(TAU * fit.omega_hz, 0.0);
        let predictions = match model_predictions(theta, data, &drive, rates) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("diagnostics at {} Hz failed: {e}", fit.omega_hz);
                continue;
            }
        };
        let mut res_writer = csv_writer(&out.join("fits").join(format!("{stem}_curves.csv")), prov)?;
        res_writer
            .write_record(["state", "time_s", "observable", "mean", "std", "model", "residual"])
            .map_err(|e| CliError::Io(e.to_string()))?;
        for (rec, model) in data.records.iter().zip(&predictions) {
            let state: String = format!(
                "{}{}",
                rec.state[0].as_str(),
                rec.state[1].as_str()
            );
            res_writer
                .write_record([
                    state,
                    format!("{}", rec.time_s),
                    rec.observable.as_string(),
                    format!("{}", rec.mean),
                    format!("{}", rec.std),
                    format!("{model}"),
                    format!("{}", (rec.mean - model) / rec.std),
                ])
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
        res_writer.flush().map_err(|e| CliError::Io(e.to_string()))?;
    }

    write_json(
        &out.join("sweep.json"),
        prov,
        serde_json::json!({
            "loss": cfg.loss,
            "warm_start": cfg.warm_start,
            "param_names": PARAM_NAMES,
            "frequencies": fits,
        }),
    )
}
