//! Synthetic measurement campaign: finite-shot projective-measurement
//! sampling from model states, sample means and uncertainties, outlier
//! contamination, and dataset persistence.
//!
//! Every record draws from its own counter-based RNG substream derived from
//! (seed, state, time, observable), so generation is deterministic and
//! order-independent under parallel scheduling.

use std::path::Path;

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{k_observable, tau_observable, Axis, Observable, SpinLabel};
use crate::error::{Error, Result};
use crate::qcore::{expect, identity, kron, DensityMatrix};

pub const STD_FLOOR: f64 = 1e-3;
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Label of a measured quantity: single dressed-basis ⟨τz_j⟩ or a two-qubit
/// covariance K_{ℓ1ℓ2}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObservableLabel {
    /// ⟨τz_j⟩, qubit index 0 or 1.
    TauZ(usize),
    K(Axis, Axis),
}

impl ObservableLabel {
    pub fn as_string(&self) -> String {
        match self {
            ObservableLabel::TauZ(j) => format!("tauz{}", j + 1),
            ObservableLabel::K(l1, l2) => format!("K{}{}", l1.as_str(), l2.as_str()),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tauz1" => Ok(ObservableLabel::TauZ(0)),
            "tauz2" => Ok(ObservableLabel::TauZ(1)),
            _ => {
                let mut chars = s.chars();
                if chars.next() == Some('K') {
                    let l1 = Axis::parse(chars.next().unwrap_or(' '))?;
                    let l2 = Axis::parse(chars.next().unwrap_or(' '))?;
                    if chars.next().is_none() {
                        return Ok(ObservableLabel::K(l1, l2));
                    }
                }
                Err(Error::Schema(format!("unknown observable label '{s}'")))
            }
        }
    }

    /// Matching model observable on the two-qubit dressed space.
    pub fn to_observable(&self) -> Observable {
        match self {
            ObservableLabel::TauZ(j) => tau_observable(Axis::Z, *j, None),
            ObservableLabel::K(l1, l2) => k_observable(*l1, *l2, None),
        }
    }
}

fn state_string(state: &[SpinLabel; 2]) -> String {
    format!("{}{}", state[0].as_str(), state[1].as_str())
}

fn parse_state(s: &str) -> Result<[SpinLabel; 2]> {
    if s.len() != 4 {
        return Err(Error::Schema(format!("bad state label '{s}'")));
    }
    Ok([SpinLabel::parse(&s[..2])?, SpinLabel::parse(&s[2..])?])
}

/// Control and measurement settings for one spin-locking campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPlan {
    pub initial_states: Vec<[SpinLabel; 2]>,
    /// Evolution times in seconds, sorted ascending.
    pub times: Vec<f64>,
    pub observables: Vec<ObservableLabel>,
    pub shots: u64,
}

impl MeasurementPlan {
    /// Full tomography plan: 4 initial states, 26 times, 11 observables.
    pub fn full(shots: u64) -> Self {
        use SpinLabel::{MinusX, PlusX};
        let mut times_us: Vec<f64> = vec![1.0, 3.0, 5.0, 7.0, 9.0, 11.0];
        times_us.extend((0..12).map(|i| 16.0 + 5.0 * i as f64));
        times_us.extend((0..8).map(|i| 81.0 + 10.0 * i as f64));
        let mut observables = vec![ObservableLabel::TauZ(0), ObservableLabel::TauZ(1)];
        for l1 in Axis::ALL {
            for l2 in Axis::ALL {
                observables.push(ObservableLabel::K(l1, l2));
            }
        }
        Self {
            initial_states: vec![
                [PlusX, PlusX],
                [PlusX, MinusX],
                [MinusX, PlusX],
                [MinusX, MinusX],
            ],
            times: times_us.into_iter().map(|t| t * 1e-6).collect(),
            observables,
            shots,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_states.is_empty() || self.times.is_empty() || self.observables.is_empty() {
            return Err(Error::InvalidParameter("empty measurement plan".into()));
        }
        if self.shots < 2 {
            return Err(Error::InvalidParameter(format!(
                "shots must be >= 2, got {}",
                self.shots
            )));
        }
        if self.times.windows(2).any(|w| w[1] < w[0]) || self.times.iter().any(|&t| t < 0.0) {
            return Err(Error::InvalidParameter(
                "times must be nonnegative and sorted".into(),
            ));
        }
        Ok(())
    }

    pub fn record_count(&self) -> usize {
        self.initial_states.len() * self.times.len() * self.observables.len()
    }
}

/// One measured sample mean with its uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub state: [SpinLabel; 2],
    pub time_s: f64,
    pub observable: ObservableLabel,
    pub mean: f64,
    pub std: f64,
    pub shots: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contamination {
    pub p: f64,
    pub mask_digest: String,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub omega_rabi_hz: f64,
    pub seed: u64,
    /// "reduced", "optical", or "exact".
    pub model: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub contamination: Option<Contamination>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub records: Vec<Record>,
    pub metadata: Metadata,
}

impl ObservationSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// How sample means are produced from model states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Exact expectation values, std = floor.
    Exact,
    /// Finite-shot multinomial sampling with the plan's shot count.
    Shots,
}

fn record_rng(seed: u64, state: &str, time_s: f64, observable: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(state.as_bytes());
    h.update(time_s.to_le_bytes());
    h.update(observable.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

fn check_probability(p: f64, observable: &str) -> Result<f64> {
    if !(-1e-9..=1.0 + 1e-9).contains(&p) {
        return Err(Error::InvalidProbability {
            probability: p,
            observable: observable.to_string(),
        });
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Sequential-binomial multinomial draw of `m` trials.
fn multinomial(rng: &mut impl Rng, m: u64, probs: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = m;
    let mut mass = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() || mass <= 0.0 {
            counts[i] = remaining;
            break;
        }
        let cond = (p / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, cond).unwrap().sample(rng);
        counts[i] = draw;
        remaining -= draw;
        mass -= p;
    }
    counts
}

fn projector(axis: Axis, sign: f64) -> crate::qcore::Op {
    let pauli = axis.pauli();
    (identity(2) + pauli.mapv(|x| x * sign)).mapv(|x| x * 0.5)
}

/// Joint 4-outcome distribution of the (ℓ1, ℓ2) Pauli pair, ordering
/// (+,+), (+,-), (-,+), (-,-).
fn joint_distribution(
    rho: &DensityMatrix,
    l1: Axis,
    l2: Axis,
    observable: &str,
) -> Result<[f64; 4]> {
    let mut probs = [0.0; 4];
    for (idx, (a, b)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
        .iter()
        .enumerate()
    {
        let p = expect(&kron(&projector(l1, *a), &projector(l2, *b)), rho)?;
        probs[idx] = check_probability(p, observable)?;
    }
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

fn k_from_counts(counts: &[u64], m: f64) -> f64 {
    let signs = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
    let mut prod = 0.0;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (c, (a, b)) in counts.iter().zip(signs) {
        let f = *c as f64 / m;
        prod += a * b * f;
        m1 += a * f;
        m2 += b * f;
    }
    prod - m1 * m2
}

/// Sample one record's (mean, std) from the two-qubit dressed-basis state.
pub fn sample_observable(
    rho: &DensityMatrix,
    label: &ObservableLabel,
    shots: u64,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    let m = shots as f64;
    match label {
        ObservableLabel::TauZ(j) => {
            let name = label.as_string();
            let tz = crate::dynamics::on_qubit(&Axis::Z.pauli(), *j);
            let p_plus = check_probability((1.0 + expect(&tz, rho)?) / 2.0, &name)?;
            let k = Binomial::new(shots, p_plus).unwrap().sample(rng);
            let mean = 2.0 * k as f64 / m - 1.0;
            let std = ((1.0 - mean * mean) / m).max(0.0).sqrt().max(STD_FLOOR);
            Ok((mean, std))
        }
        ObservableLabel::K(l1, l2) => {
            let name = label.as_string();
            let probs = joint_distribution(rho, *l1, *l2, &name)?;
            let counts = multinomial(rng, shots, &probs);
            let mean = k_from_counts(&counts, m);
            // Nonparametric bootstrap over the paired shots.
            let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / m).collect();
            let mut acc = 0.0;
            let mut acc2 = 0.0;
            for _ in 0..BOOTSTRAP_RESAMPLES {
                let resample = multinomial(rng, shots, &empirical);
                let k = k_from_counts(&resample, m);
                acc += k;
                acc2 += k * k;
            }
            let n = BOOTSTRAP_RESAMPLES as f64;
            let var = (acc2 / n - (acc / n).powi(2)).max(0.0);
            Ok((mean, var.sqrt().max(STD_FLOOR)))
        }
    }
}

/// Build a dataset from a model: `provider` returns the two-qubit reduced
/// states at every plan time for a given initial state.
pub fn synthesize<F>(
    plan: &MeasurementPlan,
    mode: SamplingMode,
    metadata: Metadata,
    provider: F,
) -> Result<ObservationSet>
where
    F: Fn(&[SpinLabel; 2]) -> Result<Vec<DensityMatrix>> + Sync,
{
    plan.validate()?;
    let seed = metadata.seed;
    let per_state: Vec<(usize, Vec<DensityMatrix>)> = plan
        .initial_states
        .par_iter()
        .enumerate()
        .map(|(i, state)| {
            let states = provider(state)?;
            if states.len() != plan.times.len() {
                return Err(Error::DimensionMismatch(format!(
                    "provider returned {} states for {} times",
                    states.len(),
                    plan.times.len()
                )));
            }
            Ok((i, states))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (i, states) in &per_state {
        for (q, rho) in states.iter().enumerate() {
            cells.push((*i, q, rho));
        }
    }
    let records: Vec<Vec<Record>> = cells
        .par_iter()
        .map(|(i, q, rho)| -> Result<Vec<Record>> {
            let state = plan.initial_states[*i];
            let time_s = plan.times[*q];
            let mut out = Vec::with_capacity(plan.observables.len());
            for label in &plan.observables {
                let (mean, std) = match mode {
                    SamplingMode::Exact => {
                        (label.to_observable().evaluate(rho)?, STD_FLOOR)
                    }
                    SamplingMode::Shots => {
                        let mut rng = record_rng(
                            seed,
                            &state_string(&state),
                            time_s,
                            &label.as_string(),
                        );
                        sample_observable(rho, label, plan.shots, &mut rng)?
                    }
                };
                out.push(Record {
                    state,
                    time_s,
                    observable: *label,
                    mean,
                    std,
                    shots: match mode {
                        SamplingMode::Exact => 0,
                        SamplingMode::Shots => plan.shots,
                    },
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    Ok(ObservationSet {
        records: records.into_iter().flatten().collect(),
        metadata,
    })
}

/// Replace each sample mean with a Uniform(-1, 1) draw with probability `p`;
/// stds are unchanged and the mask is recorded in the metadata.
pub fn contaminate(obs: &ObservationSet, p: f64, rng: &mut impl Rng) -> Result<ObservationSet> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "contamination probability must be in [0, 1], got {p}"
        )));
    }
    let mut out = obs.clone();
    let mut indices = Vec::new();
    for (i, rec) in out.records.iter_mut().enumerate() {
        if rng.random::<f64>() < p {
            rec.mean = rng.random_range(-1.0..1.0);
            indices.push(i);
        }
    }
    let mut h = Sha256::new();
    for i in &indices {
        h.update((*i as u64).to_le_bytes());
    }
    out.metadata.contamination = Some(Contamination {
        p,
        mask_digest: format!("{:x}", h.finalize()),
        indices,
    });
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRecord {
    state: String,
    time_s: f64,
    observable: String,
    mean: f64,
    std: f64,
    shots: u64,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

/// Write the dataset CSV and its JSON metadata sidecar (same stem, `.json`).
pub fn write_dataset(obs: &ObservationSet, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for rec in &obs.records {
        writer.serialize(CsvRecord {
            state: state_string(&rec.state),
            time_s: rec.time_s,
            observable: rec.observable.as_string(),
            mean: rec.mean,
            std: rec.std,
            shots: rec.shots,
        })?;
    }
    writer.flush()?;
    let sidecar = serde_json::to_string_pretty(&obs.metadata)?;
    std::fs::write(sidecar_path(path), sidecar)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<ObservationSet> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<CsvRecord>().enumerate() {
        let row = row.map_err(|e| Error::Schema(format!("record {}: {e}", i + 1)))?;
        let locus = |msg: String| Error::Schema(format!("record {}: {msg}", i + 1));
        if row.std <= 0.0 {
            return Err(locus(format!("std must be > 0, got {}", row.std)));
        }
        let observable = ObservableLabel::parse(&row.observable)
            .map_err(|e| locus(e.to_string()))?;
        let limit = match observable {
            ObservableLabel::TauZ(_) => 1.0,
            ObservableLabel::K(..) => 2.0,
        };
        if row.mean.abs() > limit + 1e-9 {
            return Err(locus(format!(
                "mean {} out of range for {}",
                row.mean, row.observable
            )));
        }
        records.push(Record {
            state: parse_state(&row.state).map_err(|e| locus(e.to_string()))?,
            time_s: row.time_s,
            observable,
            mean: row.mean,
            std: row.std,
            shots: row.shots,
        });
    }
    let sidecar = std::fs::read_to_string(sidecar_path(path))?;
    let metadata: Metadata = serde_json::from_str(&sidecar)?;
    Ok(ObservationSet { records, metadata })
}
