//! Model-expectation simulations: Ramsey correlation maps over photon number
//! and spin-locking correlation maps over the swept Rabi frequency.

use std::f64::consts::TAU;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use qns_core::dynamics::{
    apply_unitary, build_ramsey_optical_me, build_spinlock_optical_me, cavity_steady_state,
    decay_curves, k_observable, on_qubit, ramsey_pulse, spinlock_initial_state, tau_observable,
    with_resonator, Axis, DriveConfig, Observable, ResonatorInit, SpinLabel,
};
use qns_core::qcore::{c, dagger, kron, sigma_z, DensityMatrix, Op};

use crate::config::{RamseySection, RatesSection, SpinlockSection};
use crate::output::{csv_writer, Provenance};
use crate::CliError;

/// Conjugate an observable by the closing pulse so expectations refer to the
/// post-pulse measurement basis.
fn conjugated(op: &Op, u: &Op) -> Op {
    dagger(u).dot(op).dot(u)
}

/// Ramsey observables after the closing π/2 pulse: ⟨σz1⟩, ⟨σz2⟩, C_zz.
fn ramsey_observables(fock_dim: usize) -> Vec<Observable> {
    let u = ramsey_pulse(fock_dim);
    let sz1 = conjugated(&with_resonator(&on_qubit(&sigma_z(), 0), fock_dim), &u);
    let sz2 = conjugated(&with_resonator(&on_qubit(&sigma_z(), 1), fock_dim), &u);
    vec![
        Observable::Single {
            label: "sz1".into(),
            op: sz1.clone(),
        },
        Observable::Single {
            label: "sz2".into(),
            op: sz2.clone(),
        },
        Observable::Covariance {
            label: "Czz".into(),
            op_a: sz1,
            op_b: sz2,
        },
    ]
}

/// Both qubits in the ground state (lower σz eigenstate) ⊗ cavity steady
/// state, before the opening pulse.
fn ramsey_initial_state(
    epsilon: f64,
    delta_c: f64,
    kappa: f64,
    fock_dim: usize,
) -> Result<DensityMatrix, qns_core::Error> {
    let mut ket = ndarray::Array1::zeros(4);
    ket[3] = c(1., 0.);
    let qubits = DensityMatrix::pure(&ket)?;
    let cavity = cavity_steady_state(epsilon, delta_c, kappa, fock_dim)?;
    let joint = DensityMatrix::new(kron(qubits.matrix(), cavity.matrix()))?;
    apply_unitary(&joint, &ramsey_pulse(fock_dim))
}

/// Simulate C_zz(t, n̄) and single-qubit fringes; rows (nbar, time_s, sz1,
/// sz2, czz).
pub fn simulate_ramsey(
    cfg: &RamseySection,
    shared_noise: &crate::config::NoiseSection,
    rates_cfg: &RatesSection,
    out: &Path,
    prov: &Provenance,
) -> Result<(), CliError> {
    cfg.validate()?;
    let noise_cfg = cfg.noise.unwrap_or(*shared_noise);
    let rates = rates_cfg.rates()?;
    let times = cfg.times_s();
    let observables = ramsey_observables(cfg.fock_dim);
    let drive = DriveConfig::ramsey(TAU * cfg.delta_q1_hz, TAU * cfg.delta_q2_hz);

    let curves: Vec<(f64, Array2<f64>)> = cfg
        .nbar_values
        .par_iter()
        .map(|&nbar| -> Result<_, qns_core::Error> {
            let params = noise_cfg.with_nbar(nbar).params().map_err(|e| {
                qns_core::Error::InvalidParameter(e.to_string())
            })?;
            let l = build_ramsey_optical_me(&params, &drive, &rates, cfg.fock_dim)?;
            let rho0 = ramsey_initial_state(
                params.drive_amplitude(),
                params.delta_c,
                params.kappa,
                cfg.fock_dim,
            )?;
            let data = decay_curves(&l, &rho0, &times, &observables, Some(cfg.fock_dim))?;
            Ok((nbar, data))
        })
        .collect::<Result<_, _>>()
        .map_err(CliError::from)?;

    let mut writer = csv_writer(&out.join("ramsey_czz.csv"), prov)?;
    writer
        .write_record(["nbar", "time_s", "sz1", "sz2", "czz"])
        .map_err(|e| CliError::Io(e.to_string()))?;
    for (nbar, data) in &curves {
        for (q, &t) in times.iter().enumerate() {
            writer
                .write_record([
                    format!("{nbar}"),
                    format!("{t}"),
                    format!("{}", data[(q, 0)]),
                    format!("{}", data[(q, 1)]),
                    format!("{}", data[(q, 2)]),
                ])
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    writer.flush().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

/// Simulate K̄zz(t, Ω1) and τ̄z decay curves at fixed Ω2; rows (omega1_hz,
/// time_s, tz1, tz2, kzz).
pub fn simulate_spinlock(cfg: &SpinlockSection, out: &Path, prov: &Provenance) -> Result<(), CliError> {
    cfg.validate()?;
    let params = cfg.noise.params()?;
    let rates = cfg.rates.rates()?;
    let times: Vec<f64> = cfg.times_us.iter().map(|t| t * 1e-6).collect();
    let observables = vec![
        tau_observable(Axis::Z, 0, Some(cfg.fock_dim)),
        tau_observable(Axis::Z, 1, Some(cfg.fock_dim)),
        k_observable(Axis::Z, Axis::Z, Some(cfg.fock_dim)),
    ];
    let resonator = ResonatorInit::Steady {
        params,
        epsilon: None,
        fock_dim: cfg.fock_dim,
    };

    let curves: Vec<(f64, Array2<f64>)> = cfg
        .omega1_values_hz
        .par_iter()
        .map(|&omega1_hz| -> Result<_, qns_core::Error> {
            let omega1 = TAU * omega1_hz;
            let omega2 = TAU * cfg.omega2_hz;
            let drive =
                DriveConfig::spin_locking((omega1 + omega2) / 2.0, omega1 - omega2);
            let l = build_spinlock_optical_me(&params, &drive, &rates, cfg.fock_dim)?;
            let rho0 =
                spinlock_initial_state([SpinLabel::MinusX, SpinLabel::MinusX], resonator)?;
            let data = decay_curves(&l, &rho0, &times, &observables, Some(cfg.fock_dim))?;
            Ok((omega1_hz, data))
        })
        .collect::<Result<_, _>>()
        .map_err(CliError::from)?;

    let mut writer = csv_writer(&out.join("spinlock_kzz.csv"), prov)?;
    writer
        .write_record(["omega1_hz", "time_s", "tz1", "tz2", "kzz"])
        .map_err(|e| CliError::Io(e.to_string()))?;
    for (omega1_hz, data) in &curves {
        for (q, &t) in times.iter().enumerate() {
            writer
                .write_record([
                    format!("{omega1_hz}"),
                    format!("{t}"),
                    format!("{}", data[(q, 0)]),
                    format!("{}", data[(q, 1)]),
                    format!("{}", data[(q, 2)]),
                ])
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    writer.flush().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}
