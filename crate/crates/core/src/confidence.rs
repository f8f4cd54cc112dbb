//! Asymptotic M-estimator covariance (sandwich form) and normal-quantile
//! confidence intervals, with an optional second-order curvature correction.
//!
//! The derivation assumes independent, identically distributed residuals;
//! residuals sharing shots are weakly correlated, which is ignored here as
//! in the underlying analysis.

use ndarray::{Array1, Array2, Array3};
use ndarray_linalg::{Eigh, UPLO};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dynamics::{DriveConfig, QubitRates};
use crate::error::{Error, Result};
use crate::estimation::{jacobian, FitConfig, LossFunction, WeightMap};
use crate::experiment::ObservationSet;
use crate::noise::SpectrumVector;

const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct CovarianceReport {
    /// p x p symmetric parameter covariance.
    pub sigma_theta: Array2<f64>,
    pub used_second_order: bool,
}

fn invert_spd(a: &Array2<f64>) -> Result<Array2<f64>> {
    let (evals, evecs) = a.eigh(UPLO::Lower)?;
    let max = evals.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()));
    let (min_idx, min_val) = evals
        .iter()
        .enumerate()
        .min_by(|(_, x), (_, y)| x.abs().total_cmp(&y.abs()))
        .map(|(i, v)| (i, *v))
        .unwrap();
    if min_val <= 0.0 || max / min_val > CONDITION_LIMIT {
        return Err(Error::NonIdentifiable(evecs.column(min_idx).to_vec()));
    }
    let p = a.nrows();
    let mut inv = Array2::zeros((p, p));
    for k in 0..p {
        let v = evecs.column(k);
        for i in 0..p {
            for j in 0..p {
                inv[(i, j)] += v[i] * v[j] / evals[k];
            }
        }
    }
    Ok(inv)
}

/// Sandwich covariance Σ = A⁻¹ (Jᵀ D² J) A⁻¹ with A = Jᵀ Δ J, where
/// D = diag(ψ(z)) and Δ = diag(λ''(z)). When `second_order` carries the
/// tensor ∂²z_α/∂θ_k∂θ_ℓ, A gains the Σ_α ψ(z_α) ∂²z_α term.
pub fn mestimator_covariance(
    j: &Array2<f64>,
    z: &Array1<f64>,
    loss: &LossFunction,
    second_order: Option<&Array3<f64>>,
) -> Result<CovarianceReport> {
    let (n, p) = j.dim();
    if z.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "Jacobian has {n} rows but {} residuals",
            z.len()
        )));
    }
    let psi: Array1<f64> = z.mapv(|zi| loss.eval(zi).1);
    let ddot: Array1<f64> = z.mapv(|zi| loss.eval(zi).2);

    let mut a = Array2::zeros((p, p));
    let mut b = Array2::zeros((p, p));
    for alpha in 0..n {
        let row = j.row(alpha);
        for k in 0..p {
            for l in 0..p {
                a[(k, l)] += ddot[alpha] * row[k] * row[l];
                b[(k, l)] += psi[alpha] * psi[alpha] * row[k] * row[l];
            }
        }
    }
    if let Some(tensor) = second_order {
        if tensor.dim() != (n, p, p) {
            return Err(Error::DimensionMismatch(format!(
                "second-order tensor shape {:?}, expected ({n}, {p}, {p})",
                tensor.dim()
            )));
        }
        for alpha in 0..n {
            for k in 0..p {
                for l in 0..p {
                    a[(k, l)] += psi[alpha] * tensor[(alpha, k, l)];
                }
            }
        }
    }
    // Enforce exact symmetry before the eigendecomposition.
    let a = (&a + &a.t()) / 2.0;
    let a_inv = invert_spd(&a)?;
    let sigma = a_inv.dot(&b).dot(&a_inv);
    let sigma = (&sigma + &sigma.t()) / 2.0;
    Ok(CovarianceReport {
        sigma_theta: sigma,
        used_second_order: second_order.is_some(),
    })
}

/// Symmetric normal-quantile intervals θ̂_ℓ ± q √Σ_ℓℓ.
pub fn confidence_intervals(
    theta_hat: &Array1<f64>,
    report: &CovarianceReport,
    level: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(0.0..1.0).contains(&level) || level <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    if theta_hat.len() != report.sigma_theta.nrows() {
        return Err(Error::DimensionMismatch(
            "theta and covariance size mismatch".into(),
        ));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let q = normal.inverse_cdf(0.5 + level / 2.0);
    Ok(theta_hat
        .iter()
        .enumerate()
        .map(|(l, &t)| {
            let half = q * report.sigma_theta[(l, l)].max(0.0).sqrt();
            (t - half, t + half)
        })
        .collect())
}

/// Tensor ∂²z_α/∂θ_k∂θ_ℓ by central finite differences of the Jacobian,
/// step 10x the Jacobian step.
pub fn second_order_tensor(
    theta: &SpectrumVector,
    data: &ObservationSet,
    drive: &DriveConfig,
    rates: &QubitRates,
    weights: Option<&WeightMap>,
    config: &FitConfig,
) -> Result<Array3<f64>> {
    let n = data.len();
    let mut tensor = Array3::zeros((n, 9, 9));
    let flat = theta.pack();
    for l in 0..9 {
        let s = 10.0 * config.fd_step(&flat, l);
        let mut plus = flat;
        plus[l] += s;
        let mut minus = flat;
        minus[l] -= s;
        let jp = jacobian(&SpectrumVector::unpack(&plus)?, data, drive, rates, weights, config)?;
        let jm = jacobian(&SpectrumVector::unpack(&minus)?, data, drive, rates, weights, config)?;
        for alpha in 0..n {
            for k in 0..9 {
                tensor[(alpha, k, l)] = (jp[(alpha, k)] - jm[(alpha, k)]) / (2.0 * s);
            }
        }
    }
    // Mixed partials commute; symmetrize away finite-difference asymmetry.
    for alpha in 0..n {
        for k in 0..9 {
            for l in (k + 1)..9 {
                let avg = (tensor[(alpha, k, l)] + tensor[(alpha, l, k)]) / 2.0;
                tensor[(alpha, k, l)] = avg;
                tensor[(alpha, l, k)] = avg;
            }
        }
    }
    Ok(tensor)
}
