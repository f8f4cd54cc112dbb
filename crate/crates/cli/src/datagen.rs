//! Dataset acquisition for the sweep commands: synthesize from the reduced or
//! optical model, or load stored datasets. One dataset per Rabi frequency.

use std::f64::consts::TAU;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use qns_core::dynamics::{
    build_reduced_me, build_spinlock_optical_me, spinlock_initial_state, top_fock_projector,
    DriveConfig, QubitRates, ResonatorInit, SpinLabel,
};
use qns_core::experiment::{
    contaminate, read_dataset, synthesize, Metadata, ObservationSet, SamplingMode,
};
use qns_core::noise::{ShotNoiseParams, SpectrumVector};
use qns_core::qcore::{expect, partial_trace, DensityMatrix, Propagator};

use crate::config::SweepSection;
use crate::output::Provenance;
use crate::CliError;

/// Independent per-frequency substream of the master seed.
pub fn frequency_seed(master: u64, omega_hz: f64, salt: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(omega_hz.to_bits().to_le_bytes());
    h.update(salt.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Spectrum vector of the configured shot-noise model at ±Ω.
pub fn truth_at(params: &ShotNoiseParams, omega_hz: f64, delta_omega_hz: f64) -> SpectrumVector {
    let mut s = SpectrumVector::from_shot_noise(params, TAU * omega_hz);
    s.delta_omega = TAU * delta_omega_hz;
    s
}

fn sampling_mode(cfg: &SweepSection) -> SamplingMode {
    if cfg.sampling == "exact" {
        SamplingMode::Exact
    } else {
        SamplingMode::Shots
    }
}

fn base_metadata(
    cfg: &SweepSection,
    params: &ShotNoiseParams,
    omega_hz: f64,
    seed: u64,
    prov: &Provenance,
) -> Metadata {
    Metadata {
        omega_rabi_hz: omega_hz,
        seed,
        model: cfg.source.clone(),
        params: serde_json::json!({
            "shot_noise": params,
            "delta_omega_hz": cfg.delta_omega_hz,
            "fock_dim": cfg.fock_dim,
            "config_digest": prov.config_digest,
            "master_seed": prov.master_seed,
        }),
        contamination: None,
    }
}

fn generate_reduced(
    cfg: &SweepSection,
    params: &ShotNoiseParams,
    rates: &QubitRates,
    omega_hz: f64,
    seed: u64,
    prov: &Provenance,
) -> Result<ObservationSet, qns_core::Error> {
    let truth = truth_at(params, omega_hz, cfg.delta_omega_hz);
    let drive = DriveConfig::spin_locking(TAU * omega_hz, truth.delta_omega);
    let l = build_reduced_me(&truth, &drive, rates)?;
    let prop = Propagator::new(&l)?;
    let plan = cfg.plan().map_err(|e| qns_core::Error::Schema(e.to_string()))?;
    let times = plan.times.clone();
    synthesize(
        &plan,
        sampling_mode(cfg),
        base_metadata(cfg, params, omega_hz, seed, prov),
        move |state: &[SpinLabel; 2]| {
            let rho0 = spinlock_initial_state(*state, ResonatorInit::None)?;
            prop.propagate(&rho0, &times)
        },
    )
}

fn generate_optical(
    cfg: &SweepSection,
    params: &ShotNoiseParams,
    rates: &QubitRates,
    omega_hz: f64,
    seed: u64,
    prov: &Provenance,
) -> Result<ObservationSet, qns_core::Error> {
    let drive = DriveConfig::spin_locking(TAU * omega_hz, TAU * cfg.delta_omega_hz);
    let l = build_spinlock_optical_me(params, &drive, rates, cfg.fock_dim)?;
    let prop = Propagator::new(&l)?;
    let plan = cfg.plan().map_err(|e| qns_core::Error::Schema(e.to_string()))?;
    let times = plan.times.clone();
    let fock_dim = cfg.fock_dim;
    let resonator = ResonatorInit::Steady {
        params: *params,
        epsilon: None,
        fock_dim,
    };
    let guard = top_fock_projector(fock_dim);
    synthesize(
        &plan,
        sampling_mode(cfg),
        base_metadata(cfg, params, omega_hz, seed, prov),
        move |state: &[SpinLabel; 2]| {
            let rho0 = spinlock_initial_state(*state, resonator)?;
            let states = prop.propagate(&rho0, &times)?;
            states
                .iter()
                .zip(&times)
                .map(|(rho, &t)| {
                    let pop = expect(&guard, rho)?;
                    if pop > 1e-6 {
                        return Err(qns_core::Error::Truncation {
                            population: pop,
                            time_s: t,
                            fock_dim,
                        });
                    }
                    partial_trace(rho, &[4, fock_dim], &[0])
                })
                .collect::<Result<Vec<DensityMatrix>, _>>()
        },
    )
}

/// Synthesize datasets at every configured frequency (ascending order),
/// applying contamination when configured.
pub fn generate_datasets(
    cfg: &SweepSection,
    params: &ShotNoiseParams,
    rates: &QubitRates,
    master_seed: u64,
    prov: &Provenance,
) -> Result<Vec<ObservationSet>, CliError> {
    let freqs = cfg.sorted_frequencies();
    let sets: Vec<ObservationSet> = freqs
        .par_iter()
        .map(|&omega_hz| {
            let seed = frequency_seed(master_seed, omega_hz, "data");
            let obs = match cfg.source.as_str() {
                "reduced" => generate_reduced(cfg, params, rates, omega_hz, seed, prov),
                "optical" => generate_optical(cfg, params, rates, omega_hz, seed, prov),
                other => Err(qns_core::Error::Schema(format!("unknown source '{other}'"))),
            }?;
            if cfg.contamination_p > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(frequency_seed(
                    master_seed,
                    omega_hz,
                    "contaminate",
                ));
                contaminate(&obs, cfg.contamination_p, &mut rng)
            } else {
                Ok(obs)
            }
        })
        .collect::<Result<_, _>>()
        .map_err(CliError::from)?;
    Ok(sets)
}

/// Load every dataset CSV in a directory, sorted by Rabi frequency.
pub fn load_datasets(dir: &Path) -> Result<Vec<ObservationSet>, CliError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Io(format!("no dataset CSVs in {}", dir.display())));
    }
    let mut sets: Vec<ObservationSet> = paths
        .iter()
        .map(|p| read_dataset(p).map_err(CliError::from))
        .collect::<Result<_, _>>()?;
    sets.sort_by(|a, b| a.metadata.omega_rabi_hz.total_cmp(&b.metadata.omega_rabi_hz));
    Ok(sets)
}

/// File stem for a per-frequency artifact, stable across runs.
pub fn frequency_stem(omega_hz: f64) -> String {
    format!("omega_{:09.0}hz", omega_hz.round())
}
