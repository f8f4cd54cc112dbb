//! Robust M-estimation of the spectrum vector at one Rabi frequency: loss
//! functions, normalized residuals against reduced-ME predictions, and a
//! bound-constrained iteratively-reweighted least-squares minimizer with
//! Levenberg-style damping.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use ndarray_linalg::Solve;
use rayon::prelude::*;

use crate::dynamics::{spinlock_initial_state, DriveConfig, QubitRates, ResonatorInit, SpinLabel};
use crate::error::{Error, Result};
use crate::experiment::{ObservableLabel, ObservationSet};
use crate::noise::SpectrumVector;
use crate::qcore::Propagator;

const TAU: f64 = std::f64::consts::TAU;
/// Absolute finite-difference floors: spectral components (rad/s) and δΩ.
const FD_FLOOR_SPECTRUM: f64 = 10.0;
const FD_FLOOR_DELTA_OMEGA: f64 = TAU * 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossFunction {
    Quadratic,
    /// Quadratic for |z| <= delta0, linear beyond.
    Huber { delta0: f64 },
}

impl LossFunction {
    pub fn huber_default() -> Self {
        LossFunction::Huber { delta0: 1.0 }
    }

    /// (value, first derivative ψ, second derivative).
    pub fn eval(&self, z: f64) -> (f64, f64, f64) {
        match self {
            LossFunction::Quadratic => (z * z / 2.0, z, 1.0),
            LossFunction::Huber { delta0 } => {
                let d = *delta0;
                if z.abs() <= d {
                    (z * z / 2.0, z, 1.0)
                } else {
                    (d * (z.abs() - d / 2.0), d * z.signum(), 0.0)
                }
            }
        }
    }
}

/// Per-observable residual weight map; missing entries default to 1.
pub type WeightMap = HashMap<ObservableLabel, f64>;

/// Solver settings and parameter bounds (packed ordering of
/// [`SpectrumVector::pack`]).
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub initial_guess: SpectrumVector,
    pub lower: [f64; 9],
    pub upper: [f64; 9],
    pub max_iterations: usize,
    pub cost_tol: f64,
    pub grad_tol: f64,
    pub fd_rel_step: f64,
    /// Absolute finite-difference floor for spectral components, rad/s.
    pub fd_floor_spectrum: f64,
    /// Absolute finite-difference floor for δΩ, rad/s.
    pub fd_floor_delta_omega: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        let mut lower = [f64::NEG_INFINITY; 9];
        let mut upper = [f64::INFINITY; 9];
        for i in [0, 1, 4, 5] {
            lower[i] = 0.0;
        }
        lower[8] = -TAU * 200e3;
        upper[8] = TAU * 200e3;
        Self {
            // Uniform 1 kHz guess across the spectral components, δΩ = 0.
            initial_guess: SpectrumVector {
                s11_plus: TAU * 1e3,
                s22_plus: TAU * 1e3,
                re_s12_plus: TAU * 1e3,
                im_s12_plus: TAU * 1e3,
                s11_minus: TAU * 1e3,
                s22_minus: TAU * 1e3,
                re_s12_minus: TAU * 1e3,
                im_s12_minus: TAU * 1e3,
                delta_omega: 0.0,
            },
            lower,
            upper,
            max_iterations: 200,
            cost_tol: 1e-8,
            grad_tol: 1e-8,
            fd_rel_step: 1e-6,
            fd_floor_spectrum: FD_FLOOR_SPECTRUM,
            fd_floor_delta_omega: FD_FLOOR_DELTA_OMEGA,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        for i in 0..9 {
            if self.lower[i] > self.upper[i] {
                return Err(Error::InvalidParameter(format!(
                    "bound {i}: lower {} > upper {}",
                    self.lower[i], self.upper[i]
                )));
            }
        }
        for i in [0, 1, 4, 5] {
            if self.lower[i] < 0.0 {
                return Err(Error::InvalidParameter(
                    "self-spectrum lower bounds must be >= 0".into(),
                ));
            }
        }
        Ok(())
    }

    fn clip(&self, theta: &mut [f64; 9]) {
        for i in 0..9 {
            theta[i] = theta[i].clamp(self.lower[i], self.upper[i]);
        }
    }

    pub fn fd_step(&self, theta: &[f64; 9], k: usize) -> f64 {
        let floor = if k == 8 {
            self.fd_floor_delta_omega
        } else {
            self.fd_floor_spectrum
        };
        (self.fd_rel_step * theta[k].abs()).max(floor)
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: SpectrumVector,
    pub final_cost: f64,
    /// Residuals at the optimum, dataset order.
    pub residuals: Array1<f64>,
    /// Finite-difference Jacobian ∂z/∂θ at the optimum.
    pub jacobian: Array2<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Damping escalations after a singular or non-decreasing solve.
    pub solver_fallbacks: usize,
}

/// Model predictions for every dataset record under the reduced ME built
/// from `theta`.
pub fn model_predictions(
    theta: &SpectrumVector,
    data: &ObservationSet,
    drive: &DriveConfig,
    rates: &QubitRates,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("empty dataset".into()));
    }
    let l = crate::dynamics::build_reduced_me(theta, drive, rates)?;
    let prop = Propagator::new(&l)?;

    // Unique (state, sorted times) cells present in the data.
    let mut per_state: HashMap<[SpinLabel; 2], Vec<f64>> = HashMap::new();
    for rec in &data.records {
        let times = per_state.entry(rec.state).or_default();
        if !times.iter().any(|t| t.total_cmp(&rec.time_s).is_eq()) {
            times.push(rec.time_s);
        }
    }
    let mut values: HashMap<([SpinLabel; 2], u64, String), f64> = HashMap::new();
    let mut labels: Vec<ObservableLabel> = Vec::new();
    for rec in &data.records {
        if !labels.contains(&rec.observable) {
            labels.push(rec.observable);
        }
    }
    let observables: Vec<_> = labels.iter().map(|l| l.to_observable()).collect();
    for (state, times) in &mut per_state {
        times.sort_by(f64::total_cmp);
        let rho0 = spinlock_initial_state(*state, ResonatorInit::None)?;
        let states = prop.propagate(&rho0, times)?;
        for (rho, &t) in states.iter().zip(times.iter()) {
            for (label, obs) in labels.iter().zip(&observables) {
                values.insert((*state, t.to_bits(), label.as_string()), obs.evaluate(rho)?);
            }
        }
    }
    data.records
        .iter()
        .map(|rec| {
            values
                .get(&(rec.state, rec.time_s.to_bits(), rec.observable.as_string()))
                .copied()
                .ok_or_else(|| Error::Schema("missing model prediction".into()))
        })
        .collect()
}

/// Normalized residuals z_α = w_α (Ō_α − ⟨O_α⟩) / σ̄_α in dataset order.
pub fn residuals(
    theta: &SpectrumVector,
    data: &ObservationSet,
    drive: &DriveConfig,
    rates: &QubitRates,
    weights: Option<&WeightMap>,
) -> Result<Array1<f64>> {
    let predictions = model_predictions(theta, data, drive, rates)?;
    let mut z = Array1::zeros(data.len());
    for (i, (rec, pred)) in data.records.iter().zip(&predictions).enumerate() {
        if rec.std <= 0.0 {
            return Err(Error::Schema(format!("record {i}: std must be > 0")));
        }
        let w = weights
            .and_then(|m| m.get(&rec.observable).copied())
            .unwrap_or(1.0);
        z[i] = w * (rec.mean - pred) / rec.std;
    }
    Ok(z)
}

fn total_cost(loss: &LossFunction, z: &Array1<f64>) -> f64 {
    z.iter().map(|&zi| loss.eval(zi).0).sum()
}

fn drive_from_metadata(data: &ObservationSet) -> DriveConfig {
    DriveConfig::spin_locking(TAU * data.metadata.omega_rabi_hz, 0.0)
}

/// Forward-difference Jacobian ∂z/∂θ at `theta`.
pub fn jacobian(
    theta: &SpectrumVector,
    data: &ObservationSet,
    drive: &DriveConfig,
    rates: &QubitRates,
    weights: Option<&WeightMap>,
    config: &FitConfig,
) -> Result<Array2<f64>> {
    let z0 = residuals(theta, data, drive, rates, weights)?;
    fd_jacobian(&theta.pack(), &z0, data, drive, rates, weights, config)
}

fn fd_jacobian(
    theta: &[f64; 9],
    z0: &Array1<f64>,
    data: &ObservationSet,
    drive: &DriveConfig,
    rates: &QubitRates,
    weights: Option<&WeightMap>,
    config: &FitConfig,
) -> Result<Array2<f64>> {
    let columns: Vec<Array1<f64>> = (0..9)
        .into_par_iter()
        .map(|k| -> Result<Array1<f64>> {
            let mut h = config.fd_step(theta, k);
            let mut shifted = *theta;
            if shifted[k] + h > config.upper[k] {
                h = -h;
            }
            shifted[k] += h;
            let z = residuals(
                &SpectrumVector::unpack(&shifted)?,
                data,
                drive,
                rates,
                weights,
            )?;
            Ok((z - z0) / h)
        })
        .collect::<Result<_>>()?;
    let mut j = Array2::zeros((z0.len(), 9));
    for (k, col) in columns.iter().enumerate() {
        j.column_mut(k).assign(col);
    }
    Ok(j)
}

fn gradient(j: &Array2<f64>, z: &Array1<f64>, loss: &LossFunction) -> Array1<f64> {
    let psi: Array1<f64> = z.mapv(|zi| loss.eval(zi).1);
    j.t().dot(&psi)
}

fn projected_grad_norm(g: &Array1<f64>, theta: &[f64; 9], config: &FitConfig) -> f64 {
    let mut norm: f64 = 0.0;
    for k in 0..9 {
        let at_lower = theta[k] <= config.lower[k] && g[k] > 0.0;
        let at_upper = theta[k] >= config.upper[k] && g[k] < 0.0;
        if !(at_lower || at_upper) {
            norm = norm.max(g[k].abs());
        }
    }
    norm
}

/// Fit the spectrum vector (and δΩ) to one dataset. The Rabi frequency is
/// taken from the dataset metadata. Never fails on non-convergence; the
/// returned flag reports it.
pub fn fit_spectrum(
    data: &ObservationSet,
    config: &FitConfig,
    loss: &LossFunction,
    rates: &QubitRates,
    weights: Option<&WeightMap>,
) -> Result<FitResult> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidParameter("empty dataset".into()));
    }
    let drive = drive_from_metadata(data);
    let mut theta = config.initial_guess.pack();
    config.clip(&mut theta);

    let mut z = residuals(&SpectrumVector::unpack(&theta)?, data, &drive, rates, weights)?;
    let mut cost = total_cost(loss, &z);
    let mut j = fd_jacobian(&theta, &z, data, &drive, rates, weights, config)?;
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut fallbacks = 0;

    'outer: for iter in 0..config.max_iterations {
        iterations = iter + 1;
        let g = gradient(&j, &z, loss);
        if projected_grad_norm(&g, &theta, config) < config.grad_tol {
            converged = true;
            break;
        }
        // Robust Gauss-Newton Hessian JᵀWJ with IRLS weights ψ(z)/z.
        let w: Array1<f64> = z.mapv(|zi| {
            if zi == 0.0 {
                1.0
            } else {
                loss.eval(zi).1 / zi
            }
        });
        let jw = {
            let mut jw = j.clone();
            for (mut row, &wi) in jw.rows_mut().into_iter().zip(w.iter()) {
                row.mapv_inplace(|x| x * wi);
            }
            jw
        };
        let h = j.t().dot(&jw);

        let mut accepted = false;
        for _ in 0..25 {
            let mut damped = h.clone();
            for k in 0..9 {
                let d = h[(k, k)].abs().max(1e-30);
                damped[(k, k)] += mu * d;
            }
            let step = match damped.solve(&g.mapv(|x| -x)) {
                Ok(s) => s,
                Err(_) => {
                    fallbacks += 1;
                    mu *= 10.0;
                    continue;
                }
            };
            let mut theta_try = theta;
            for k in 0..9 {
                theta_try[k] += step[k];
            }
            config.clip(&mut theta_try);
            if theta_try == theta {
                fallbacks += 1;
                mu *= 10.0;
                continue;
            }
            let z_try = residuals(
                &SpectrumVector::unpack(&theta_try)?,
                data,
                &drive,
                rates,
                weights,
            )?;
            let cost_try = total_cost(loss, &z_try);
            if cost_try < cost {
                let rel_drop = (cost - cost_try) / cost.max(1e-300);
                theta = theta_try;
                z = z_try;
                cost = cost_try;
                mu = (mu / 3.0).max(1e-12);
                accepted = true;
                j = fd_jacobian(&theta, &z, data, &drive, rates, weights, config)?;
                if rel_drop < config.cost_tol {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            fallbacks += 1;
            mu *= 10.0;
        }
        if !accepted {
            // Damping exhausted without improvement: local minimum to
            // solver precision.
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        theta: SpectrumVector::unpack(&theta)?,
        final_cost: cost,
        residuals: z,
        jacobian: j,
        converged,
        iterations,
        solver_fallbacks: fallbacks,
    })
}
