//! Engineered photon-shot-noise model: Lorentzian two-qubit spectra, the
//! time-domain correlation function, steady-state photon number, and the
//! spectrum-vector parameterization used by the estimator.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shot-noise model parameters. `chi1`, `chi2`, `delta_c` are signed angular
/// frequencies in rad/s; `kappa` is the resonator damping rate in 1/s;
/// `nbar` is the dimensionless steady-state photon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotNoiseParams {
    pub chi1: f64,
    pub chi2: f64,
    pub kappa: f64,
    pub delta_c: f64,
    pub nbar: f64,
}

impl ShotNoiseParams {
    pub fn new(chi1: f64, chi2: f64, kappa: f64, delta_c: f64, nbar: f64) -> Result<Self> {
        if kappa <= 0.0 {
            return Err(Error::InvalidParameter(format!("kappa must be > 0, got {kappa}")));
        }
        if nbar < 0.0 {
            return Err(Error::InvalidParameter(format!("nbar must be >= 0, got {nbar}")));
        }
        Ok(Self {
            chi1,
            chi2,
            kappa,
            delta_c,
            nbar,
        })
    }

    fn chi(&self, j: usize) -> f64 {
        if j == 0 {
            self.chi1
        } else {
            self.chi2
        }
    }

    /// Resonator drive amplitude (rad/s) that produces `nbar` at the
    /// configured detuning and damping.
    pub fn drive_amplitude(&self) -> f64 {
        (self.nbar * ((self.kappa / 2.0).powi(2) + self.delta_c.powi(2))).sqrt()
    }
}

/// 2x2 Hermitian spectrum matrix S_jk(ω) = χj χk n̄ κ / [(ω+Δc)² + (κ/2)²],
/// entries in rad/s.
pub fn shot_noise_spectrum(p: &ShotNoiseParams, omega: f64) -> Array2<C64> {
    let lorentzian = p.nbar * p.kappa / ((omega + p.delta_c).powi(2) + (p.kappa / 2.0).powi(2));
    let mut s = Array2::zeros((2, 2));
    for j in 0..2 {
        for k in 0..2 {
            s[(j, k)] = C64::new(p.chi(j) * p.chi(k) * lorentzian, 0.0);
        }
    }
    s
}

/// Time-domain correlation matrix C_jk(t) = χj χk n̄ e^{-κ|t|/2 - iΔc t}.
pub fn correlation_function(p: &ShotNoiseParams, t: f64) -> Array2<C64> {
    let envelope = C64::new(-p.kappa * t.abs() / 2.0, -p.delta_c * t).exp();
    let mut c = Array2::zeros((2, 2));
    for j in 0..2 {
        for k in 0..2 {
            c[(j, k)] = envelope * p.chi(j) * p.chi(k) * p.nbar;
        }
    }
    c
}

/// Steady-state photon number n̄ = ε² / [(κ/2)² + Δc²] of the driven-damped
/// resonator.
pub fn steady_state_nbar(epsilon: f64, kappa: f64, delta_c: f64) -> Result<f64> {
    if kappa <= 0.0 {
        return Err(Error::InvalidParameter(format!("kappa must be > 0, got {kappa}")));
    }
    Ok(epsilon.powi(2) / ((kappa / 2.0).powi(2) + delta_c.powi(2)))
}

/// The 8 real spectral components at ±Ω plus the Rabi-frequency difference
/// nuisance parameter, all in rad/s.
///
/// Flat ordering (see [`SpectrumVector::pack`]):
/// `[S11(+Ω), S22(+Ω), Re S12(+Ω), Im S12(+Ω), S11(-Ω), S22(-Ω),
///   Re S12(-Ω), Im S12(-Ω), δΩ]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpectrumVector {
    pub s11_plus: f64,
    pub s22_plus: f64,
    pub re_s12_plus: f64,
    pub im_s12_plus: f64,
    pub s11_minus: f64,
    pub s22_minus: f64,
    pub re_s12_minus: f64,
    pub im_s12_minus: f64,
    pub delta_omega: f64,
}

pub const SPECTRUM_COMPONENTS: usize = 8;
pub const PARAM_NAMES: [&str; 9] = [
    "s11_plus",
    "s22_plus",
    "re_s12_plus",
    "im_s12_plus",
    "s11_minus",
    "s22_minus",
    "re_s12_minus",
    "im_s12_minus",
    "delta_omega",
];

impl SpectrumVector {
    /// Sample the shot-noise model at ±Ω (δΩ = 0).
    pub fn from_shot_noise(p: &ShotNoiseParams, omega: f64) -> Self {
        let sp = shot_noise_spectrum(p, omega);
        let sm = shot_noise_spectrum(p, -omega);
        Self {
            s11_plus: sp[(0, 0)].re,
            s22_plus: sp[(1, 1)].re,
            re_s12_plus: sp[(0, 1)].re,
            im_s12_plus: sp[(0, 1)].im,
            s11_minus: sm[(0, 0)].re,
            s22_minus: sm[(1, 1)].re,
            re_s12_minus: sm[(0, 1)].re,
            im_s12_minus: sm[(0, 1)].im,
            delta_omega: 0.0,
        }
    }

    pub fn uniform(value: f64) -> Self {
        Self {
            s11_plus: value,
            s22_plus: value,
            re_s12_plus: value,
            im_s12_plus: value,
            s11_minus: value,
            s22_minus: value,
            re_s12_minus: value,
            im_s12_minus: value,
            delta_omega: 0.0,
        }
    }

    pub fn pack(&self) -> [f64; 9] {
        [
            self.s11_plus,
            self.s22_plus,
            self.re_s12_plus,
            self.im_s12_plus,
            self.s11_minus,
            self.s22_minus,
            self.re_s12_minus,
            self.im_s12_minus,
            self.delta_omega,
        ]
    }

    /// Inverse of [`pack`](Self::pack). Accepts 8 components (δΩ = 0) or 9.
    pub fn unpack(flat: &[f64]) -> Result<Self> {
        if flat.len() != 8 && flat.len() != 9 {
            return Err(Error::DimensionMismatch(format!(
                "spectrum vector needs 8 or 9 components, got {}",
                flat.len()
            )));
        }
        Ok(Self {
            s11_plus: flat[0],
            s22_plus: flat[1],
            re_s12_plus: flat[2],
            im_s12_plus: flat[3],
            s11_minus: flat[4],
            s22_minus: flat[5],
            re_s12_minus: flat[6],
            im_s12_minus: flat[7],
            delta_omega: if flat.len() == 9 { flat[8] } else { 0.0 },
        })
    }

    pub fn s12_plus(&self) -> C64 {
        C64::new(self.re_s12_plus, self.im_s12_plus)
    }

    pub fn s12_minus(&self) -> C64 {
        C64::new(self.re_s12_minus, self.im_s12_minus)
    }

    /// Positive semidefiniteness of the 2x2 spectrum matrix at both signs.
    /// Estimator-internal instances may violate this transiently.
    pub fn is_physical(&self) -> bool {
        let ok = |s11: f64, s22: f64, s12: C64| {
            let scale = s11.abs().max(s22.abs()).max(s12.norm()).max(1e-300);
            s11 >= -1e-12 * scale
                && s22 >= -1e-12 * scale
                && s12.norm_sqr() <= s11 * s22 + 1e-9 * scale * scale
        };
        ok(self.s11_plus, self.s22_plus, self.s12_plus())
            && ok(self.s11_minus, self.s22_minus, self.s12_minus())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    const TWO_PI: f64 = std::f64::consts::TAU;

    /// Shot-noise parameters used for the full-sweep reconstruction.
    pub(crate) fn sweep_params() -> ShotNoiseParams {
        ShotNoiseParams::new(
            -TWO_PI * 29.1e3,
            -TWO_PI * 59.5e3,
            TWO_PI * 198e3,
            TWO_PI * 1.961e6,
            0.127,
        )
        .unwrap()
    }

    #[test]
    fn no_photons_no_noise() {
        let p = ShotNoiseParams::new(1e5, 2e5, 1e6, 5e6, 0.0).unwrap();
        for omega in [-5e6, 0.0, 5e6] {
            let s = shot_noise_spectrum(&p, omega);
            assert!(s.iter().all(|x| x.norm() == 0.0));
        }
    }

    #[test]
    fn peak_values_at_minus_delta_c() {
        // Direct evaluation of the Lorentzian at its peak:
        // S_jj(-Δc) = 4 χj² n̄ / κ.
        let p = sweep_params();
        let s = shot_noise_spectrum(&p, -p.delta_c);
        let s11_expected = 4.0 * p.chi1 * p.chi1 * p.nbar / p.kappa;
        let s12_expected = 4.0 * p.chi1 * p.chi2 * p.nbar / p.kappa;
        assert_relative_eq!(s[(0, 0)].re, s11_expected, max_relative = 1e-12);
        assert_relative_eq!(s[(0, 1)].re, s12_expected, max_relative = 1e-12);
        // Frozen values computed from the closed form above.
        assert_relative_eq!(s[(0, 0)].re, 1.3653e4, max_relative = 1e-3);
        assert_relative_eq!(s[(0, 1)].re, 2.7915e4, max_relative = 1e-3);
        assert_eq!(s[(0, 1)].im, 0.0);
    }

    #[test]
    fn correlation_at_zero_lag_and_hermiticity() {
        let p = sweep_params();
        let c0 = correlation_function(&p, 0.0);
        assert_relative_eq!(c0[(0, 1)].re, p.chi1 * p.chi2 * p.nbar, max_relative = 1e-12);
        for t in [-3e-6, -1e-7, 2e-6] {
            let ct = correlation_function(&p, t);
            let cmt = correlation_function(&p, -t);
            for j in 0..2 {
                for k in 0..2 {
                    let diff = (ct[(j, k)].conj() - cmt[(j, k)]).norm();
                    assert!(diff < 1e-12 * ct[(j, k)].norm().max(1.0));
                }
            }
        }
    }

    /// Quadrature oracle: trapezoidal Fourier transform of C(τ) over
    /// τ ∈ [-40/κ, 40/κ].
    fn fourier_of_correlation(p: &ShotNoiseParams, omega: f64) -> f64 {
        let t_max = 40.0 / p.kappa;
        let n = 400_000usize;
        let dt = 2.0 * t_max / n as f64;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..=n {
            let t = -t_max + i as f64 * dt;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let phase = C64::new(0.0, -omega * t).exp();
            acc += correlation_function(p, t)[(0, 1)] * phase * w;
        }
        (acc * dt).re
    }

    #[test]
    fn spectrum_matches_fourier_transform_of_correlation() {
        let p = sweep_params();
        let peak = -p.delta_c;
        let numeric = fourier_of_correlation(&p, peak);
        let analytic = shot_noise_spectrum(&p, peak)[(0, 1)].re;
        assert_relative_eq!(numeric, analytic, max_relative = 1e-4);
        for omega in [peak - 3.0 * p.kappa, peak + 5.0 * p.kappa, -peak] {
            let numeric = fourier_of_correlation(&p, omega);
            let analytic = shot_noise_spectrum(&p, omega)[(0, 1)].re;
            assert_relative_eq!(numeric, analytic, max_relative = 1e-3);
        }
    }

    #[test]
    fn steady_state_nbar_closed_form() {
        assert_eq!(steady_state_nbar(0.0, 1e6, 3e6).unwrap(), 0.0);
        assert_abs_diff_eq!(steady_state_nbar(5e5, 1e6, 0.0).unwrap(), 1.0, epsilon = 1e-12);
        // Inverting the formula for the sweep parameters.
        let p = sweep_params();
        let eps = p.drive_amplitude();
        assert_relative_eq!(eps, 4.396e6, max_relative = 1e-3);
        assert_relative_eq!(
            steady_state_nbar(eps, p.kappa, p.delta_c).unwrap(),
            p.nbar,
            max_relative = 1e-12
        );
    }

    #[test]
    fn pack_ordering_pinned() {
        let mut s = SpectrumVector::default();
        s.re_s12_plus = 7.0;
        assert_eq!(s.pack()[2], 7.0);
        s.delta_omega = -3.0;
        assert_eq!(s.pack()[8], -3.0);
        let zeros = SpectrumVector::unpack(&[0.0; 8]).unwrap();
        assert_eq!(zeros, SpectrumVector::default());
        assert!(SpectrumVector::unpack(&[0.0; 5]).is_err());
    }

    #[test]
    fn rank_one_structure_and_asymmetry() {
        let p = sweep_params();
        for omega in [-p.delta_c, p.delta_c, 0.3e6, -4e6] {
            let s = shot_noise_spectrum(&p, omega);
            let det = s[(0, 0)].re * s[(1, 1)].re - s[(0, 1)].norm_sqr();
            let scale = (s[(0, 0)].re * s[(1, 1)].re).abs().max(1e-300);
            assert!(det.abs() / scale < 1e-8);
        }
        // Quantum-noise asymmetry for Δc ≠ 0.
        let sp = shot_noise_spectrum(&p, p.delta_c.abs())[(0, 0)].re;
        let sm = shot_noise_spectrum(&p, -p.delta_c.abs())[(0, 0)].re;
        assert!((sp - sm).abs() > 1e3);
    }

    #[test]
    fn peak_location_on_grid() {
        let p = sweep_params();
        let grid: Vec<f64> = (0..4001)
            .map(|i| -3.0e7 + i as f64 * (6.0e7 / 4000.0))
            .collect();
        let argmax = grid
            .iter()
            .cloned()
            .max_by(|a, b| {
                shot_noise_spectrum(&p, *a)[(0, 0)]
                    .re
                    .total_cmp(&shot_noise_spectrum(&p, *b)[(0, 0)].re)
            })
            .unwrap();
        let resolution = 6.0e7 / 4000.0;
        assert!((argmax - (-p.delta_c)).abs() <= resolution);
    }

    proptest! {
        #[test]
        fn pack_unpack_round_trip(flat in proptest::array::uniform9(-1e6f64..1e6)) {
            let s = SpectrumVector::unpack(&flat).unwrap();
            prop_assert_eq!(s.pack(), flat);
        }

        #[test]
        fn shot_noise_vectors_are_physical(omega in -1e8f64..1e8, nbar in 0.0f64..2.0) {
            let p = ShotNoiseParams::new(-1.8e5, -3.7e5, 1.2e6, 1.2e7, nbar).unwrap();
            let s = SpectrumVector::from_shot_noise(&p, omega);
            prop_assert!(s.is_physical());
        }
    }
}
