//! Master-equation builders: the reduced two-qubit generator for correlated
//! dephasing (with Rabi-frequency difference and T1 corrections), the full
//! quantum-optical generators in the Ramsey and spin-locking frames, and
//! decay-curve evaluation.
//!
//! Two-qubit operators live on qubit1 ⊗ qubit2 (⊗ resonator for the optical
//! models). Spin-locking dynamics are expressed directly in the dressed
//! basis, where |+x⟩ and |-x⟩ are the first and second basis vectors and
//! τz = diag(1, -1); the implicit π/2 pulses of the sequence never appear.

use ndarray::{Array1, Array2};
use ndarray_linalg::Eig;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{ShotNoiseParams, SpectrumVector};
use crate::qcore::{
    annihilation, c, correlated_term, dagger, expect, identity, kron, lindbladian, number_op,
    sigma_minus, sigma_plus, sigma_x, sigma_y, sigma_z, trace, unvectorize, DensityMatrix,
    Liouvillian, Op, Propagator,
};

/// Phenomenological qubit decay rates, all in 1/s.
///
/// `gamma1` are lab-frame longitudinal relaxation rates 1/T1, `gamma_phi`
/// lab-frame pure dephasing rates (Ramsey model only), `gamma_up`/`gamma_dn`
/// the spin-locking-frame rates for uncorrelated noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QubitRates {
    pub gamma1: [f64; 2],
    pub gamma_phi: [f64; 2],
    pub gamma_up: [f64; 2],
    pub gamma_dn: [f64; 2],
}

impl QubitRates {
    pub fn validate(&self) -> Result<()> {
        for r in self
            .gamma1
            .iter()
            .chain(&self.gamma_phi)
            .chain(&self.gamma_up)
            .chain(&self.gamma_dn)
        {
            if *r < 0.0 {
                return Err(Error::NegativeRate(*r));
            }
        }
        Ok(())
    }
}

/// Drive settings. `omega_rabi` is the mean Rabi frequency Ω = (Ω1+Ω2)/2 and
/// `delta_omega` the difference δΩ = Ω1-Ω2, both rad/s.
///
/// `delta_q` are the qubit-drive detunings; `None` means the builders cancel
/// the photon-induced Stark shift automatically. `epsilon` is the resonator
/// drive amplitude; `None` derives it from the target photon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub omega_rabi: f64,
    pub delta_omega: f64,
    pub delta_q: [Option<f64>; 2],
    pub epsilon: Option<f64>,
}

impl DriveConfig {
    pub fn spin_locking(omega_rabi: f64, delta_omega: f64) -> Self {
        Self {
            omega_rabi,
            delta_omega,
            delta_q: [None, None],
            epsilon: None,
        }
    }

    pub fn ramsey(delta_q1: f64, delta_q2: f64) -> Self {
        Self {
            omega_rabi: 0.0,
            delta_omega: 0.0,
            delta_q: [Some(delta_q1), Some(delta_q2)],
            epsilon: None,
        }
    }

    pub fn rabi_frequencies(&self) -> [f64; 2] {
        [
            self.omega_rabi + self.delta_omega / 2.0,
            self.omega_rabi - self.delta_omega / 2.0,
        ]
    }
}

/// Dressed-basis single-qubit state labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpinLabel {
    PlusX,
    MinusX,
}

impl SpinLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpinLabel::PlusX => "+x",
            SpinLabel::MinusX => "-x",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "+x" => Ok(SpinLabel::PlusX),
            "-x" => Ok(SpinLabel::MinusX),
            other => Err(Error::Schema(format!("unknown state label '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    pub fn parse(ch: char) -> Result<Self> {
        match ch {
            'x' => Ok(Axis::X),
            'y' => Ok(Axis::Y),
            'z' => Ok(Axis::Z),
            other => Err(Error::Schema(format!("unknown axis '{other}'"))),
        }
    }

    pub fn pauli(&self) -> Op {
        match self {
            Axis::X => sigma_x(),
            Axis::Y => sigma_y(),
            Axis::Z => sigma_z(),
        }
    }
}

/// Lift a single-qubit operator to the two-qubit space (qubit index 0 or 1).
pub fn on_qubit(op: &Op, qubit: usize) -> Op {
    let id = identity(2);
    match qubit {
        0 => kron(op, &id),
        _ => kron(&id, op),
    }
}

/// Lift a two-qubit operator onto the qubits ⊗ resonator space.
pub fn with_resonator(op4: &Op, fock_dim: usize) -> Op {
    kron(op4, &identity(fock_dim))
}

/// Measurable quantity evaluated along a decay curve.
#[derive(Debug, Clone)]
pub enum Observable {
    /// ⟨O⟩.
    Single { label: String, op: Op },
    /// Covariance ⟨AB⟩ - ⟨A⟩⟨B⟩ of two commuting observables.
    Covariance { label: String, op_a: Op, op_b: Op },
}

impl Observable {
    pub fn label(&self) -> &str {
        match self {
            Observable::Single { label, .. } => label,
            Observable::Covariance { label, .. } => label,
        }
    }

    pub fn evaluate(&self, rho: &DensityMatrix) -> Result<f64> {
        match self {
            Observable::Single { op, .. } => expect(op, rho),
            Observable::Covariance { op_a, op_b, .. } => {
                let joint = expect(&op_a.dot(op_b), rho)?;
                Ok(joint - expect(op_a, rho)? * expect(op_b, rho)?)
            }
        }
    }
}

/// ⟨τ^ℓ_j⟩ observable, optionally lifted onto the optical space.
pub fn tau_observable(axis: Axis, qubit: usize, fock_dim: Option<usize>) -> Observable {
    let mut op = on_qubit(&axis.pauli(), qubit);
    if let Some(n) = fock_dim {
        op = with_resonator(&op, n);
    }
    Observable::Single {
        label: format!("tau{}{}", axis.as_str(), qubit + 1),
        op,
    }
}

/// K_{ℓ1ℓ2} = ⟨τ^ℓ1_1 τ^ℓ2_2⟩ - ⟨τ^ℓ1_1⟩⟨τ^ℓ2_2⟩.
pub fn k_observable(l1: Axis, l2: Axis, fock_dim: Option<usize>) -> Observable {
    let mut op_a = on_qubit(&l1.pauli(), 0);
    let mut op_b = on_qubit(&l2.pauli(), 1);
    if let Some(n) = fock_dim {
        op_a = with_resonator(&op_a, n);
        op_b = with_resonator(&op_b, n);
    }
    Observable::Covariance {
        label: format!("K{}{}", l1.as_str(), l2.as_str()),
        op_a,
        op_b,
    }
}

fn spectrum_entry(s: &SpectrumVector, j: usize, k: usize, positive: bool) -> C64 {
    // S21 = S12* is imposed, never independent.
    match (j, k, positive) {
        (0, 0, true) => c(s.s11_plus, 0.0),
        (0, 0, false) => c(s.s11_minus, 0.0),
        (1, 1, true) => c(s.s22_plus, 0.0),
        (1, 1, false) => c(s.s22_minus, 0.0),
        (0, 1, true) => s.s12_plus(),
        (0, 1, false) => s.s12_minus(),
        (1, 0, true) => s.s12_plus().conj(),
        (1, 0, false) => s.s12_minus().conj(),
        _ => unreachable!(),
    }
}

/// Reduced two-qubit generator (16x16) for correlated dephasing noise with
/// Rabi-frequency difference and T1 terms. With `delta_omega = 0` and
/// `gamma1 = 0` this is the ideal correlated-decay generator.
pub fn build_reduced_me(
    s: &SpectrumVector,
    drive: &DriveConfig,
    rates: &QubitRates,
) -> Result<Liouvillian> {
    rates.validate()?;
    if drive.omega_rabi <= 0.0 {
        return Err(Error::InvalidParameter(
            "spin-locking requires omega_rabi > 0".into(),
        ));
    }
    let [omega1, omega2] = [
        drive.omega_rabi + s.delta_omega / 2.0,
        drive.omega_rabi - s.delta_omega / 2.0,
    ];
    let tz = [on_qubit(&sigma_z(), 0), on_qubit(&sigma_z(), 1)];
    let tp = [on_qubit(&sigma_plus(), 0), on_qubit(&sigma_plus(), 1)];
    let tm = [on_qubit(&sigma_minus(), 0), on_qubit(&sigma_minus(), 1)];

    let h = tz[0].mapv(|x| x * (omega1 / 2.0)) + tz[1].mapv(|x| x * (omega2 / 2.0));
    let mut l = lindbladian(&h, &[])?.matrix().clone();

    for j in 0..2 {
        for k in 0..2 {
            // S_jk(-Ω) [τ-_k ρ τ+_j - ½{τ+_j τ-_k, ρ}]
            l = l + correlated_term(&tp[j], &tm[k])
                .mapv(|x| x * spectrum_entry(s, j, k, false));
            // S_jk(+Ω) [τ+_k ρ τ-_j - ½{τ-_j τ+_k, ρ}]
            l = l + correlated_term(&tm[j], &tp[k])
                .mapv(|x| x * spectrum_entry(s, j, k, true));
        }
    }

    for j in 0..2 {
        let quarter = rates.gamma1[j] / 4.0;
        for jump in [&tz[j], &tp[j], &tm[j]] {
            l = l + crate::qcore::dissipator_matrix(jump).mapv(|x| x * quarter);
        }
    }

    let mut liouv = Liouvillian::from_matrix(4, l)?;
    liouv.nonphysical_spectra = !s.is_physical();
    if liouv.nonphysical_spectra {
        // Routine during fitting, where the optimizer probes non-physical
        // parameter vectors; the flag on the generator records it.
        log::debug!("building reduced generator from non-physical spectra");
    }
    Ok(liouv)
}

fn resolve_epsilon(p: &ShotNoiseParams, drive: &DriveConfig) -> f64 {
    drive.epsilon.unwrap_or_else(|| p.drive_amplitude())
}

/// Full spin-locking generator on qubit1 ⊗ qubit2 ⊗ resonator (Fock-truncated
/// to `fock_dim` levels).
pub fn build_spinlock_optical_me(
    p: &ShotNoiseParams,
    drive: &DriveConfig,
    rates: &QubitRates,
    fock_dim: usize,
) -> Result<Liouvillian> {
    rates.validate()?;
    if drive.omega_rabi <= 0.0 {
        return Err(Error::InvalidParameter(
            "spin-locking requires omega_rabi > 0".into(),
        ));
    }
    let epsilon = resolve_epsilon(p, drive);
    let a = kron(&identity(4), &annihilation(fock_dim));
    let n_op = kron(&identity(4), &number_op(fock_dim));
    let chis = [p.chi1, p.chi2];
    let rabis = drive.rabi_frequencies();

    let mut h: Op = n_op.mapv(|x| x * p.delta_c) + (&a + &dagger(&a)).mapv(|x| x * epsilon);
    for j in 0..2 {
        let tz = with_resonator(&on_qubit(&sigma_z(), j), fock_dim);
        let tx = with_resonator(&on_qubit(&sigma_x(), j), fock_dim);
        h = h + tz.mapv(|x| x * (rabis[j] / 2.0));
        // -χj (a†a - n̄) τx_j
        let fluct = &n_op - &identity(4 * fock_dim).mapv(|x| x * p.nbar);
        h = h - fluct.dot(&tx).mapv(|x| x * chis[j]);
        // Residual drive detuning beyond the automatic Stark cancellation
        // appears along -τx/2 in the dressed basis.
        if let Some(dq) = drive.delta_q[j] {
            let residual = dq + 2.0 * chis[j] * p.nbar;
            h = h - tx.mapv(|x| x * (residual / 2.0));
        }
    }

    let mut dissipators: Vec<(f64, Op)> = vec![(p.kappa, a)];
    for j in 0..2 {
        let tz = with_resonator(&on_qubit(&sigma_z(), j), fock_dim);
        let tp = with_resonator(&on_qubit(&sigma_plus(), j), fock_dim);
        let tm = with_resonator(&on_qubit(&sigma_minus(), j), fock_dim);
        let quarter = rates.gamma1[j] / 4.0;
        dissipators.push((quarter, tz));
        dissipators.push((quarter, tp.clone()));
        dissipators.push((quarter, tm.clone()));
        dissipators.push((rates.gamma_dn[j], tm));
        dissipators.push((rates.gamma_up[j], tp));
    }
    lindbladian(&h, &dissipators)
}

/// Full Ramsey-frame generator on qubit1 ⊗ qubit2 ⊗ resonator.
pub fn build_ramsey_optical_me(
    p: &ShotNoiseParams,
    drive: &DriveConfig,
    rates: &QubitRates,
    fock_dim: usize,
) -> Result<Liouvillian> {
    rates.validate()?;
    let epsilon = resolve_epsilon(p, drive);
    let a = kron(&identity(4), &annihilation(fock_dim));
    let n_op = kron(&identity(4), &number_op(fock_dim));
    let chis = [p.chi1, p.chi2];

    let mut h: Op = n_op.mapv(|x| x * p.delta_c) + (&a + &dagger(&a)).mapv(|x| x * epsilon);
    for j in 0..2 {
        let sz = with_resonator(&on_qubit(&sigma_z(), j), fock_dim);
        let dq = drive.delta_q[j].unwrap_or(0.0);
        h = h + sz.mapv(|x| x * (dq / 2.0));
        h = h + n_op.dot(&sz).mapv(|x| x * chis[j]);
    }

    let mut dissipators: Vec<(f64, Op)> = vec![(p.kappa, a)];
    for j in 0..2 {
        let sz = with_resonator(&on_qubit(&sigma_z(), j), fock_dim);
        let sm = with_resonator(&on_qubit(&sigma_minus(), j), fock_dim);
        dissipators.push((rates.gamma1[j], sm));
        dissipators.push((rates.gamma_phi[j] / 2.0, sz));
    }
    lindbladian(&h, &dissipators)
}

/// Unique steady state of a generator, from the eigenvector with eigenvalue
/// of smallest magnitude. Ambiguity from degenerate zero eigenvalues is an
/// error.
pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    let (vals, vecs) = l.matrix().eig()?;
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[a].norm().total_cmp(&vals[b].norm()));
    let scale = vals.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    if vals.len() > 1 && vals[idx[1]].norm() < 1e-10 * scale {
        return Err(Error::DegenerateSteadyState(format!(
            "two eigenvalues of magnitude <= {:.3e}",
            vals[idx[1]].norm()
        )));
    }
    let v: Array1<C64> = vecs.column(idx[0]).to_owned();
    let raw = unvectorize(&v, l.dim());
    let mut herm = raw.clone();
    let d = dagger(&raw);
    herm.zip_mut_with(&d, |x, y| *x = (*x + *y) / 2.0);
    let tr = trace(&herm);
    if tr.norm() < 1e-12 {
        return Err(Error::DegenerateSteadyState("traceless null vector".into()));
    }
    DensityMatrix::new(herm.mapv(|x| x / tr))
}

/// Driven-damped cavity steady state on a truncated Fock space.
pub fn cavity_steady_state(
    epsilon: f64,
    delta_c: f64,
    kappa: f64,
    fock_dim: usize,
) -> Result<DensityMatrix> {
    let a = annihilation(fock_dim);
    let h = number_op(fock_dim).mapv(|x| x * delta_c) + (&a + &dagger(&a)).mapv(|x| x * epsilon);
    let l = lindbladian(&h, &[(kappa, a)])?;
    steady_state(&l)
}

/// How the resonator factor of a spin-locking initial state is prepared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResonatorInit {
    /// Qubit-only state (reduced models).
    None,
    /// Driven-damped steady state, as when the noise drive has been on well
    /// before the sequence starts.
    Steady {
        params: ShotNoiseParams,
        epsilon: Option<f64>,
        fock_dim: usize,
    },
}

/// Dressed-basis product state for the spin-locking sequence.
pub fn spinlock_initial_state(
    labels: [SpinLabel; 2],
    resonator: ResonatorInit,
) -> Result<DensityMatrix> {
    let ket1 = |label: SpinLabel| -> Array1<C64> {
        match label {
            SpinLabel::PlusX => ndarray::array![c(1., 0.), c(0., 0.)],
            SpinLabel::MinusX => ndarray::array![c(0., 0.), c(1., 0.)],
        }
    };
    let mut ket = Array1::zeros(4);
    let k1 = ket1(labels[0]);
    let k2 = ket1(labels[1]);
    for i in 0..2 {
        for j in 0..2 {
            ket[i * 2 + j] = k1[i] * k2[j];
        }
    }
    let qubits = DensityMatrix::pure(&ket)?;
    match resonator {
        ResonatorInit::None => Ok(qubits),
        ResonatorInit::Steady {
            params,
            epsilon,
            fock_dim,
        } => {
            let eps = epsilon.unwrap_or_else(|| params.drive_amplitude());
            let res = cavity_steady_state(eps, params.delta_c, params.kappa, fock_dim)?;
            DensityMatrix::new(kron(qubits.matrix(), res.matrix()))
        }
    }
}

/// Projector onto the top Fock level of the qubits ⊗ resonator space, used
/// to detect truncation violations.
pub fn top_fock_projector(fock_dim: usize) -> Op {
    let mut proj = Array2::zeros((fock_dim, fock_dim));
    proj[(fock_dim - 1, fock_dim - 1)] = c(1., 0.);
    kron(&identity(4), &proj)
}

const TRUNCATION_TOL: f64 = 1e-6;

/// Expectation values of `observables` along the evolution: entry `(q, r)` is
/// observable `r` at time `q`.
///
/// When `fock_dim` is given, the top-Fock population is monitored at every
/// output time and an error advising a larger truncation is raised if it
/// exceeds 1e-6.
pub fn decay_curves(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    times: &[f64],
    observables: &[Observable],
    fock_dim: Option<usize>,
) -> Result<Array2<f64>> {
    let prop = Propagator::new(l)?;
    decay_curves_with(&prop, rho0, times, observables, fock_dim)
}

/// Same as [`decay_curves`] with a caller-cached propagator.
pub fn decay_curves_with(
    prop: &Propagator,
    rho0: &DensityMatrix,
    times: &[f64],
    observables: &[Observable],
    fock_dim: Option<usize>,
) -> Result<Array2<f64>> {
    let states = prop.propagate(rho0, times)?;
    let guard = fock_dim.map(top_fock_projector);
    let mut out = Array2::zeros((times.len(), observables.len()));
    for (q, (state, &t)) in states.iter().zip(times).enumerate() {
        if let Some(proj) = &guard {
            let pop = expect(proj, state)?;
            if pop > TRUNCATION_TOL {
                return Err(Error::Truncation {
                    population: pop,
                    time_s: t,
                    fock_dim: fock_dim.unwrap(),
                });
            }
        }
        for (r, obs) in observables.iter().enumerate() {
            out[(q, r)] = obs.evaluate(state)?;
        }
    }
    Ok(out)
}

/// π/2 rotation about +y on both qubits (Ramsey pulse), lifted onto the
/// optical space.
pub fn ramsey_pulse(fock_dim: usize) -> Op {
    let angle = std::f64::consts::FRAC_PI_4;
    // exp(-i (π/4) σy) = cos(π/4) I - i sin(π/4) σy
    let u = identity(2).mapv(|x| x * angle.cos())
        + sigma_y().mapv(|x| x * c(0., -1.) * angle.sin());
    with_resonator(&kron(&u, &u), fock_dim)
}

pub fn apply_unitary(rho: &DensityMatrix, u: &Op) -> Result<DensityMatrix> {
    DensityMatrix::new(u.dot(rho.matrix()).dot(&dagger(u)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{max_abs_diff, partial_trace, propagate, vectorize};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const TWO_PI: f64 = std::f64::consts::TAU;

    fn zero_rates() -> QubitRates {
        QubitRates::default()
    }

    #[test]
    fn zero_spectra_pure_precession() {
        let s = SpectrumVector::default();
        let drive = DriveConfig::spin_locking(TWO_PI * 2e6, 0.0);
        let l = build_reduced_me(&s, &drive, &zero_rates()).unwrap();
        let rho0 = spinlock_initial_state([SpinLabel::PlusX, SpinLabel::MinusX], ResonatorInit::None)
            .unwrap();
        let obs = [tau_observable(Axis::Z, 0, None), tau_observable(Axis::Z, 1, None)];
        let curves = decay_curves(&l, &rho0, &[0.0, 5e-6, 5e-5], &obs, None).unwrap();
        for q in 0..3 {
            assert_abs_diff_eq!(curves[(q, 0)], 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(curves[(q, 1)], -1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn reduced_me_matches_superoperator_oracle() {
        // Independent construction: apply the map
        // ρ ↦ -i[H,ρ] + Σ_jk L_jk ρ to each matrix unit and compare columns.
        let s = SpectrumVector {
            s11_plus: 1.3e4,
            s22_plus: 2.1e4,
            re_s12_plus: 0.9e4,
            im_s12_plus: -0.4e4,
            s11_minus: 3.0e4,
            s22_minus: 1.1e4,
            re_s12_minus: 1.4e4,
            im_s12_minus: 0.2e4,
            delta_omega: 0.0,
        };
        let omega = TWO_PI * 1.961e6;
        let drive = DriveConfig::spin_locking(omega, 0.0);
        let l = build_reduced_me(&s, &drive, &zero_rates()).unwrap();

        let tz = [on_qubit(&sigma_z(), 0), on_qubit(&sigma_z(), 1)];
        let tp = [on_qubit(&sigma_plus(), 0), on_qubit(&sigma_plus(), 1)];
        let tm = [on_qubit(&sigma_minus(), 0), on_qubit(&sigma_minus(), 1)];
        let h = tz[0].mapv(|x| x * (omega / 2.0)) + tz[1].mapv(|x| x * (omega / 2.0));

        let apply = |rho: &Op| -> Op {
            let mut out = h.dot(rho).mapv(|x| x * c(0., -1.))
                - rho.dot(&h).mapv(|x| x * c(0., -1.));
            for j in 0..2 {
                for k in 0..2 {
                    let s_m = spectrum_entry(&s, j, k, false);
                    let s_p = spectrum_entry(&s, j, k, true);
                    let anti_m = tp[j].dot(&tm[k]);
                    out = out
                        + (tm[k].dot(rho).dot(&tp[j])
                            - (anti_m.dot(rho) + rho.dot(&anti_m)).mapv(|x| x * 0.5))
                        .mapv(|x| x * s_m);
                    let anti_p = tm[j].dot(&tp[k]);
                    out = out
                        + (tp[k].dot(rho).dot(&tm[j])
                            - (anti_p.dot(rho) + rho.dot(&anti_p)).mapv(|x| x * 0.5))
                        .mapv(|x| x * s_p);
                }
            }
            out
        };

        for col in 0..16 {
            let (i, j) = (col % 4, col / 4);
            let mut unit = Array2::zeros((4, 4));
            unit[(i, j)] = c(1., 0.);
            let mapped = vectorize(&apply(&unit));
            for row in 0..16 {
                let got = l.matrix()[(row, col)];
                assert!(
                    (got - mapped[row]).norm() < 1e-9 * omega.max(1.0),
                    "mismatch at ({row},{col}): {got} vs {}",
                    mapped[row]
                );
            }
        }
    }

    #[test]
    fn symmetric_uncorrelated_decay_rate() {
        // S11(±Ω)=S22(±Ω)=γ, S12=0: each dressed qubit decays at
        // S(+Ω)+S(-Ω) = 2γ toward ⟨τz⟩ = 0.
        let gamma = 2.0e4;
        let s = SpectrumVector {
            s11_plus: gamma,
            s22_plus: gamma,
            s11_minus: gamma,
            s22_minus: gamma,
            ..Default::default()
        };
        let drive = DriveConfig::spin_locking(TWO_PI * 2e6, 0.0);
        let l = build_reduced_me(&s, &drive, &zero_rates()).unwrap();
        let rho0 =
            spinlock_initial_state([SpinLabel::PlusX, SpinLabel::PlusX], ResonatorInit::None).unwrap();
        let obs = [tau_observable(Axis::Z, 0, None), tau_observable(Axis::Z, 1, None)];
        let times = [0.0, 5e-6, 2e-5, 5e-5];
        let curves = decay_curves(&l, &rho0, &times, &obs, None).unwrap();
        for (q, &t) in times.iter().enumerate() {
            let expected = (-2.0 * gamma * t).exp();
            assert_relative_eq!(curves[(q, 0)], expected, max_relative = 1e-8);
            assert_relative_eq!(curves[(q, 1)], expected, max_relative = 1e-8);
        }
    }

    #[test]
    fn delta_omega_enters_only_the_hamiltonian() {
        let s = SpectrumVector {
            s11_plus: 1e4,
            s22_plus: 2e4,
            re_s12_plus: 5e3,
            im_s12_plus: 1e3,
            s11_minus: 3e4,
            s22_minus: 2.5e4,
            re_s12_minus: 9e3,
            im_s12_minus: -2e3,
            delta_omega: 0.0,
        };
        let drive = DriveConfig::spin_locking(TWO_PI * 2e6, 0.0);
        let ideal = build_reduced_me(&s, &drive, &zero_rates()).unwrap();
        let delta = TWO_PI * 37e3;
        let mut s2 = s;
        s2.delta_omega = delta;
        let modified = build_reduced_me(&s2, &drive, &zero_rates()).unwrap();
        // L(δΩ) - L(0) = -i[(δΩ/4)(τz1 - τz2), ·]
        let h_diff = (on_qubit(&sigma_z(), 0) - on_qubit(&sigma_z(), 1)).mapv(|x| x * (delta / 4.0));
        let expected = lindbladian(&h_diff, &[]).unwrap();
        let diff = modified.matrix() - ideal.matrix();
        // Tolerance covers f64 cancellation at the Ω/2 ~ 1e7 scale.
        assert!(max_abs_diff(&diff, expected.matrix()) < 1e-6);
    }

    #[test]
    fn nonphysical_spectra_flagged_not_fatal() {
        let s = SpectrumVector {
            s11_plus: 1e3,
            s22_plus: 1e3,
            re_s12_plus: 5e4, // violates |S12|² ≤ S11 S22
            ..Default::default()
        };
        let drive = DriveConfig::spin_locking(TWO_PI * 2e6, 0.0);
        let l = build_reduced_me(&s, &drive, &zero_rates()).unwrap();
        assert!(l.nonphysical_spectra);
    }

    #[test]
    fn cavity_steady_state_photon_number() {
        let kappa = TWO_PI * 198e3;
        let delta_c = TWO_PI * 1.961e6;
        let nbar_target = 0.127;
        let epsilon = (nbar_target * ((kappa / 2.0f64).powi(2) + delta_c.powi(2))).sqrt();
        let rho = cavity_steady_state(epsilon, delta_c, kappa, 8).unwrap();
        let n_expect = expect(&number_op(8), &rho).unwrap();
        assert_relative_eq!(n_expect, nbar_target, max_relative = 1e-6);
    }

    #[test]
    fn spinlock_initial_states() {
        let minus = spinlock_initial_state([SpinLabel::MinusX, SpinLabel::MinusX], ResonatorInit::None)
            .unwrap();
        let obs = tau_observable(Axis::Z, 0, None);
        assert_abs_diff_eq!(obs.evaluate(&minus).unwrap(), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(minus.purity(), 1.0, epsilon = 1e-12);

        let p = ShotNoiseParams::new(-1.8e5, -3.7e5, TWO_PI * 198e3, TWO_PI * 1.961e6, 0.127).unwrap();
        let full = spinlock_initial_state(
            [SpinLabel::PlusX, SpinLabel::MinusX],
            ResonatorInit::Steady {
                params: p,
                epsilon: None,
                fock_dim: 8,
            },
        )
        .unwrap();
        let qubits = partial_trace(&full, &[2, 2, 8], &[0, 1]).unwrap();
        assert_abs_diff_eq!(qubits.purity(), 1.0, epsilon = 1e-9);
        let n_full = kron(&identity(4), &number_op(8));
        assert_relative_eq!(expect(&n_full, &full).unwrap(), 0.127, max_relative = 1e-5);
    }

    #[test]
    fn chi_zero_decouples_qubits_from_resonator() {
        let p = ShotNoiseParams::new(0.0, 0.0, TWO_PI * 198e3, TWO_PI * 1.961e6, 0.127).unwrap();
        let drive = DriveConfig::spin_locking(TWO_PI * 2e6, 0.0);
        let rates = QubitRates {
            gamma1: [1.1e4, 1.8e4],
            ..Default::default()
        };
        let fock = 6;
        let l_full = build_spinlock_optical_me(&p, &drive, &rates, fock).unwrap();
        let rho0 = spinlock_initial_state(
            [SpinLabel::PlusX, SpinLabel::PlusX],
            ResonatorInit::Steady {
                params: p,
                epsilon: None,
                fock_dim: fock,
            },
        )
        .unwrap();
        let times = [0.0, 1e-5, 4e-5];
        let obs_full: Vec<Observable> = vec![
            tau_observable(Axis::Z, 0, Some(fock)),
            k_observable(Axis::Z, Axis::Z, Some(fock)),
        ];
        let curves_full = decay_curves(&l_full, &rho0, &times, &obs_full, Some(fock)).unwrap();

        let l_red = build_reduced_me(&SpectrumVector::default(), &drive, &rates).unwrap();
        let rho0_red =
            spinlock_initial_state([SpinLabel::PlusX, SpinLabel::PlusX], ResonatorInit::None).unwrap();
        let obs_red: Vec<Observable> =
            vec![tau_observable(Axis::Z, 0, None), k_observable(Axis::Z, Axis::Z, None)];
        let curves_red = decay_curves(&l_red, &rho0_red, &times, &obs_red, None).unwrap();
        for q in 0..times.len() {
            assert_abs_diff_eq!(curves_full[(q, 0)], curves_red[(q, 0)], epsilon = 1e-8);
            assert_abs_diff_eq!(curves_full[(q, 1)], curves_red[(q, 1)], epsilon = 1e-8);
        }
    }

    #[test]
    fn truncation_violation_reported() {
        // Strong drive on a tiny Fock space must trip the guard.
        let p = ShotNoiseParams::new(-1.8e5, -3.7e5, TWO_PI * 198e3, 0.0, 2.0).unwrap();
        let drive = DriveConfig::spin_locking(TWO_PI * 2e6, 0.0);
        let fock = 2;
        let l = build_spinlock_optical_me(&p, &drive, &zero_rates(), fock).unwrap();
        let rho0 = spinlock_initial_state([SpinLabel::MinusX, SpinLabel::MinusX], ResonatorInit::None)
            .unwrap();
        let rho0 = DensityMatrix::new(kron(
            rho0.matrix(),
            DensityMatrix::maximally_mixed(fock).matrix(),
        ))
        .unwrap();
        let obs = [tau_observable(Axis::Z, 0, Some(fock))];
        let err = decay_curves(&l, &rho0, &[0.0, 1e-5], &obs, Some(fock)).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }), "got {err}");
    }

    #[test]
    fn ramsey_no_photons_no_correlation() {
        let p = ShotNoiseParams::new(-1.8e5, -3.7e5, TWO_PI * 198e3, 0.0, 0.0).unwrap();
        let drive = DriveConfig {
            epsilon: Some(0.0),
            ..DriveConfig::ramsey(-TWO_PI * 1.265e6, TWO_PI * 0.299e6)
        };
        let rates = QubitRates {
            gamma1: [1.0 / 87e-6, 1.0 / 54e-6],
            gamma_phi: [87.7e3, 31.0e3],
            ..Default::default()
        };
        let fock = 3;
        let l = build_ramsey_optical_me(&p, &drive, &rates, fock).unwrap();
        // Ground state, vacuum resonator; explicit π/2 pulse starts the fringe.
        let mut ket = Array1::zeros(4 * fock);
        ket[3 * fock] = c(1., 0.); // |0,0⟩ ⊗ |vac⟩: qubit index 3 = (σz=-1, σz=-1)
        let ground = DensityMatrix::pure(&ket).unwrap();
        let pulsed = apply_unitary(&ground, &ramsey_pulse(fock)).unwrap();
        let states = propagate(&l, &pulsed, &[0.0, 2e-6, 6e-6]).unwrap();
        let pulse = ramsey_pulse(fock);
        for state in &states {
            let measured = apply_unitary(state, &pulse).unwrap();
            let czz = k_observable(Axis::Z, Axis::Z, Some(fock));
            assert!(czz.evaluate(&measured).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn decay_curve_edge_cases() {
        let rho0 =
            spinlock_initial_state([SpinLabel::PlusX, SpinLabel::PlusX], ResonatorInit::None).unwrap();
        let obs: Vec<Observable> = vec![
            tau_observable(Axis::Z, 0, None),
            tau_observable(Axis::Z, 1, None),
            k_observable(Axis::Z, Axis::Z, None),
            k_observable(Axis::X, Axis::Y, None),
        ];
        let l0 = lindbladian(&Array2::zeros((4, 4)), &[]).unwrap();
        let curves = decay_curves(&l0, &rho0, &[0.0, 1e-5], &obs, None).unwrap();
        for q in 0..2 {
            assert_abs_diff_eq!(curves[(q, 0)], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(curves[(q, 1)], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(curves[(q, 2)], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(curves[(q, 3)], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn asymmetric_uncorrelated_decay_oracle() {
        // Independent qubits with S(+Ω) ≠ S(-Ω): each relaxes at
        // Γj = Sjj(+Ω)+Sjj(-Ω) toward [Sjj(+Ω)-Sjj(-Ω)] / Γj.
        let s = SpectrumVector {
            s11_plus: 0.4e4,
            s22_plus: 0.9e4,
            s11_minus: 2.6e4,
            s22_minus: 1.7e4,
            ..Default::default()
        };
        let drive = DriveConfig::spin_locking(TWO_PI * 2e6, 0.0);
        let l = build_reduced_me(&s, &drive, &zero_rates()).unwrap();
        let rho0 =
            spinlock_initial_state([SpinLabel::PlusX, SpinLabel::PlusX], ResonatorInit::None).unwrap();
        let times = [0.0, 1e-5, 4e-5, 2e-4, 1e-3];
        let obs = [tau_observable(Axis::Z, 0, None), tau_observable(Axis::Z, 1, None)];
        let curves = decay_curves(&l, &rho0, &times, &obs, None).unwrap();
        let analytic = |sp: f64, sm: f64, t: f64| -> f64 {
            let rate = sp + sm;
            let ss = (sp - sm) / rate;
            ss + (1.0 - ss) * (-rate * t).exp()
        };
        for (q, &t) in times.iter().enumerate() {
            assert_abs_diff_eq!(curves[(q, 0)], analytic(s.s11_plus, s.s11_minus, t), epsilon = 1e-9);
            assert_abs_diff_eq!(curves[(q, 1)], analytic(s.s22_plus, s.s22_minus, t), epsilon = 1e-9);
        }
        let ss = steady_state(&l).unwrap();
        let tz1 = tau_observable(Axis::Z, 0, None).evaluate(&ss).unwrap();
        let expected_ss = (s.s11_plus - s.s11_minus) / (s.s11_plus + s.s11_minus);
        assert_abs_diff_eq!(tz1, expected_ss, epsilon = 1e-9);
    }

    #[test]
    fn rank_one_pure_decay_has_dark_state() {
        // Perfectly correlated noise acting only at -Ω (pure collective
        // decay) leaves the singlet χ2|+x,-x⟩ - χ1|-x,+x⟩ dark, so the
        // steady state is ambiguous.
        let (chi1, chi2) = (0.8e2, 1.7e2);
        let s = SpectrumVector {
            s11_minus: chi1 * chi1,
            s22_minus: chi2 * chi2,
            re_s12_minus: chi1 * chi2,
            ..Default::default()
        };
        let drive = DriveConfig::spin_locking(TWO_PI * 2e6, 0.0);
        let l = build_reduced_me(&s, &drive, &zero_rates()).unwrap();
        let err = steady_state(&l).unwrap_err();
        assert!(matches!(err, Error::DegenerateSteadyState(_)), "got {err}");
    }
}
