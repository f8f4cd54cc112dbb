//! Dense complex operator algebra: Pauli and bosonic operators, tensor
//! products, vectorization, Lindblad superoperator construction, and
//! propagation of density matrices under time-independent generators.
//!
//! Vectorization is column-stacking throughout: `vec(A)[j*n + i] = A[i, j]`,
//! so that `vec(A X B) = (B^T ⊗ A) vec(X)`.

use ndarray::{Array1, Array2, ArrayView2};
use ndarray_linalg::{Eig, Eigh, Inverse, OperationNorm, Solve, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Dense complex square matrix representing a Hilbert-space operator.
pub type Op = Array2<C64>;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const EIGENVALUE_TOL: f64 = 1e-9;
/// Trace/Hermiticity drift above this is an error rather than silently fixed.
const DRIFT_LIMIT: f64 = 1e-6;
/// Eigenvector condition number beyond which propagation falls back to
/// scaling-and-squaring.
const EIG_COND_LIMIT: f64 = 1e8;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(dim: usize) -> Op {
    Array2::eye(dim)
}

pub fn sigma_x() -> Op {
    ndarray::array![[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]]
}

pub fn sigma_y() -> Op {
    ndarray::array![[c(0., 0.), c(0., -1.)], [c(0., 1.), c(0., 0.)]]
}

pub fn sigma_z() -> Op {
    ndarray::array![[c(1., 0.), c(0., 0.)], [c(0., 0.), c(-1., 0.)]]
}

/// Raising operator |1⟩⟨0| in the basis where σ_z = diag(1, -1).
pub fn sigma_plus() -> Op {
    ndarray::array![[c(0., 0.), c(1., 0.)], [c(0., 0.), c(0., 0.)]]
}

pub fn sigma_minus() -> Op {
    ndarray::array![[c(0., 0.), c(0., 0.)], [c(1., 0.), c(0., 0.)]]
}

/// Bosonic annihilation operator on a truncated Fock space.
pub fn annihilation(dim: usize) -> Op {
    let mut a = Array2::zeros((dim, dim));
    for n in 1..dim {
        a[(n - 1, n)] = c((n as f64).sqrt(), 0.);
    }
    a
}

pub fn number_op(dim: usize) -> Op {
    let mut n_op = Array2::zeros((dim, dim));
    for n in 0..dim {
        n_op[(n, n)] = c(n as f64, 0.);
    }
    n_op
}

pub fn dagger(a: &Op) -> Op {
    a.t().mapv(|x| x.conj())
}

/// Kronecker product, `dim = dimA * dimB`.
pub fn kron(a: &Op, b: &Op) -> Op {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            if aij == c(0., 0.) {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Column-stacking vectorization.
pub fn vectorize(a: &Op) -> Array1<C64> {
    let n = a.nrows();
    let mut v = Array1::zeros(n * n);
    for j in 0..n {
        for i in 0..n {
            v[j * n + i] = a[(i, j)];
        }
    }
    v
}

pub fn unvectorize(v: &Array1<C64>, dim: usize) -> Op {
    let mut a = Array2::zeros((dim, dim));
    for j in 0..dim {
        for i in 0..dim {
            a[(i, j)] = v[j * dim + i];
        }
    }
    a
}

pub fn max_abs_diff(a: &Op, b: &Op) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn hermiticity_drift(a: &Op) -> f64 {
    max_abs_diff(a, &dagger(a))
}

pub fn trace(a: &Op) -> C64 {
    a.diag().sum()
}

/// Density matrix: Hermitian, unit trace, positive semidefinite (to
/// numerical tolerance).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: Op,
}

impl DensityMatrix {
    pub fn new(mat: Op) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "density matrix must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let herm = hermiticity_drift(&mat);
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "Hermiticity drift {herm:.3e} exceeds {HERMITIAN_TOL:.0e}"
            )));
        }
        let tr = trace(&mat);
        if (tr - c(1., 0.)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!(
                "trace {tr} deviates from 1 beyond {TRACE_TOL:.0e}"
            )));
        }
        let (evals, _) = mat.eigh(UPLO::Lower)?;
        if let Some(min) = evals.iter().cloned().reduce(f64::min) {
            if min < -EIGENVALUE_TOL {
                return Err(Error::InvalidState(format!(
                    "negative eigenvalue {min:.3e} beyond -{EIGENVALUE_TOL:.0e}"
                )));
            }
        }
        Ok(Self { mat })
    }

    /// Pure state |ψ⟩⟨ψ| from a (not necessarily normalized) ket.
    pub fn pure(ket: &Array1<C64>) -> Result<Self> {
        let norm2: f64 = ket.iter().map(|x| x.norm_sqr()).sum();
        if norm2 <= 0.0 {
            return Err(Error::InvalidState("zero ket".into()));
        }
        let dim = ket.len();
        let mut mat = Array2::zeros((dim, dim));
        for i in 0..dim {
            for j in 0..dim {
                mat[(i, j)] = ket[i] * ket[j].conj() / norm2;
            }
        }
        Self::new(mat)
    }

    /// Wrap a matrix already known to be Hermitian and unit-trace without
    /// the positivity check. Propagation under generators built from
    /// non-physical spectra (transient estimator states) is not completely
    /// positive, so propagated states may have small negative eigenvalues.
    pub(crate) fn from_trusted(mat: Op) -> Self {
        Self { mat }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            mat: identity(dim).mapv(|x| x / dim as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &Op {
        &self.mat
    }

    pub fn purity(&self) -> f64 {
        trace(&self.mat.dot(&self.mat)).re
    }
}

/// Re Tr[O ρ]. Warns when the imaginary part is not negligible.
pub fn expect(observable: &Op, rho: &DensityMatrix) -> Result<f64> {
    if observable.nrows() != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "observable dim {} vs state dim {}",
            observable.nrows(),
            rho.dim()
        )));
    }
    let tr = trace(&observable.dot(rho.matrix()));
    if tr.im.abs() > 1e-9 {
        log::warn!("expectation value has imaginary part {:.3e}", tr.im);
    }
    Ok(tr.re)
}

/// Partial trace of a multipartite state with subsystem dimensions `dims`,
/// keeping the subsystems whose indices appear in `keep`.
pub fn partial_trace(rho: &DensityMatrix, dims: &[usize], keep: &[usize]) -> Result<DensityMatrix> {
    let total: usize = dims.iter().product();
    if total != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "product of dims {total} != state dim {}",
            rho.dim()
        )));
    }
    if keep.iter().any(|&k| k >= dims.len()) {
        return Err(Error::DimensionMismatch("keep index out of range".into()));
    }
    let n_sub = dims.len();
    let traced: Vec<usize> = (0..n_sub).filter(|i| !keep.contains(i)).collect();
    let keep_dim: usize = keep.iter().map(|&k| dims[k]).product();
    let traced_dim: usize = traced.iter().map(|&k| dims[k]).product();

    // Row-major index decomposition: subsystem 0 is the most significant.
    let strides: Vec<usize> = (0..n_sub)
        .map(|i| dims[i + 1..].iter().product::<usize>())
        .collect();
    let compose = |keep_idx: &[usize], traced_idx: &[usize]| -> usize {
        let mut full = 0;
        for (pos, &k) in keep.iter().enumerate() {
            full += keep_idx[pos] * strides[k];
        }
        for (pos, &t) in traced.iter().enumerate() {
            full += traced_idx[pos] * strides[t];
        }
        full
    };
    let unflatten = |mut idx: usize, subs: &[usize]| -> Vec<usize> {
        let mut out = vec![0; subs.len()];
        for pos in (0..subs.len()).rev() {
            out[pos] = idx % dims[subs[pos]];
            idx /= dims[subs[pos]];
        }
        out
    };

    let mut out = Array2::zeros((keep_dim, keep_dim));
    for a in 0..keep_dim {
        let ai = unflatten(a, keep);
        for b in 0..keep_dim {
            let bi = unflatten(b, keep);
            let mut acc = c(0., 0.);
            for t in 0..traced_dim {
                let ti = unflatten(t, &traced);
                acc += rho.matrix()[(compose(&ai, &ti), compose(&bi, &ti))];
            }
            out[(a, b)] = acc;
        }
    }
    let mut h = out.clone();
    let d = dagger(&out);
    h.zip_mut_with(&d, |x, y| *x = (*x + *y) / 2.0);
    DensityMatrix::new(h)
}

/// Superoperator acting on column-vectorized density matrices, units 1/s.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    dim: usize,
    mat: Array2<C64>,
    /// Set when built from a spectrum matrix that is not positive
    /// semidefinite; such generators arise transiently during optimization.
    pub nonphysical_spectra: bool,
}

impl Liouvillian {
    pub fn from_matrix(dim: usize, mat: Array2<C64>) -> Result<Self> {
        if mat.nrows() != dim * dim || mat.ncols() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "Liouvillian must be {0}x{0} for dim {dim}",
                dim * dim
            )));
        }
        Ok(Self {
            dim,
            mat,
            nonphysical_spectra: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.mat
    }

    /// Residual of the trace-preservation condition: ‖vec(I)† L‖_∞
    /// relative to ‖L‖_∞.
    pub fn trace_preservation_residual(&self) -> f64 {
        let vec_id = vectorize(&identity(self.dim));
        let left = vec_id.mapv(|x| x.conj()).dot(&self.mat);
        let max_left = left.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let max_l = self.mat.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if max_l == 0.0 {
            max_left
        } else {
            max_left / max_l
        }
    }
}

/// `vec(-i[H,ρ] + Σ γ (JρJ† − ½{J†J, ρ}))` for Hermitian `H` (rad/s) and
/// dissipators `(rate 1/s, jump operator)`.
pub fn lindbladian(h: &Op, dissipators: &[(f64, Op)]) -> Result<Liouvillian> {
    let dim = h.nrows();
    if h.ncols() != dim {
        return Err(Error::DimensionMismatch("Hamiltonian must be square".into()));
    }
    let id = identity(dim);
    let minus_i = c(0., -1.);
    let mut l = kron(&id, h).mapv(|x| x * minus_i) + kron(&h.t().to_owned(), &id).mapv(|x| x * -minus_i);
    for (rate, jump) in dissipators {
        if *rate < 0.0 {
            return Err(Error::NegativeRate(*rate));
        }
        if jump.nrows() != dim || jump.ncols() != dim {
            return Err(Error::DimensionMismatch("jump operator dim mismatch".into()));
        }
        l = l + dissipator_matrix(jump).mapv(|x| x * *rate);
    }
    Liouvillian::from_matrix(dim, l)
}

/// Vectorized `D[J]ρ = JρJ† − ½{J†J, ρ}`:
/// `J* ⊗ J − ½ I ⊗ J†J − ½ (J†J)^T ⊗ I`.
pub fn dissipator_matrix(jump: &Op) -> Array2<C64> {
    let dim = jump.nrows();
    let id = identity(dim);
    let jd = dagger(jump);
    let jdj = jd.dot(jump);
    kron(&jump.mapv(|x| x.conj()), jump)
        - kron(&id, &jdj).mapv(|x| x * 0.5)
        - kron(&jdj.t().to_owned(), &id).mapv(|x| x * 0.5)
}

/// Vectorized `B ρ A − ½{A B, ρ} = A^T ⊗ B − ½ I ⊗ AB − ½ (AB)^T ⊗ I`.
///
/// With `A = J†`, `B = J` this reduces to `dissipator_matrix`; with distinct
/// operators it realizes the correlated decay and absorption terms.
pub fn correlated_term(a: &Op, b: &Op) -> Array2<C64> {
    let dim = a.nrows();
    let id = identity(dim);
    let ab = a.dot(b);
    kron(&a.t().to_owned(), b)
        - kron(&id, &ab).mapv(|x| x * 0.5)
        - kron(&ab.t().to_owned(), &id).mapv(|x| x * 0.5)
}

enum PropagatorKind {
    /// exp(Lt) = V diag(e^{λt}) V⁻¹, cached decomposition.
    Spectral {
        eigvals: Array1<C64>,
        eigvecs: Array2<C64>,
        inv_eigvecs: Array2<C64>,
    },
    /// Fallback for ill-conditioned eigenbases.
    Pade { mat: Array2<C64> },
}

/// Cached propagator for a time-independent Liouvillian.
pub struct Propagator {
    dim: usize,
    kind: PropagatorKind,
}

impl Propagator {
    pub fn new(l: &Liouvillian) -> Result<Self> {
        let (eigvals, eigvecs) = l.mat.eig().map_err(|e| Error::Expm(e.to_string()))?;
        let inv = eigvecs.inv();
        let kind = match inv {
            Ok(inv_eigvecs) => {
                let cond = eigvecs.opnorm_one()? * inv_eigvecs.opnorm_one()?;
                if cond > EIG_COND_LIMIT {
                    PropagatorKind::Pade { mat: l.mat.clone() }
                } else {
                    PropagatorKind::Spectral {
                        eigvals,
                        eigvecs,
                        inv_eigvecs,
                    }
                }
            }
            Err(_) => PropagatorKind::Pade { mat: l.mat.clone() },
        };
        Ok(Self { dim: l.dim, kind })
    }

    /// Propagated states at each requested time.
    ///
    /// States are hermitized (ρ ← (ρ+ρ†)/2) and trace-renormalized when the
    /// drift is below 1e-6; larger drift is an error.
    pub fn propagate(&self, rho0: &DensityMatrix, times: &[f64]) -> Result<Vec<DensityMatrix>> {
        if rho0.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "state dim {} vs Liouvillian dim {}",
                rho0.dim(),
                self.dim
            )));
        }
        if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0) {
            return Err(Error::InvalidParameter(
                "times must be nonnegative and sorted".into(),
            ));
        }
        let v0 = vectorize(rho0.matrix());
        let mut out = Vec::with_capacity(times.len());
        match &self.kind {
            PropagatorKind::Spectral {
                eigvals,
                eigvecs,
                inv_eigvecs,
            } => {
                let w0 = inv_eigvecs.dot(&v0);
                for &t in times {
                    let phases: Array1<C64> =
                        eigvals.iter().zip(w0.iter()).map(|(l, w)| (l * t).exp() * w).collect();
                    let vt = eigvecs.dot(&phases);
                    out.push(finalize_state(&vt, self.dim, t)?);
                }
            }
            PropagatorKind::Pade { mat } => {
                // Step between requested times so each exponential argument
                // stays small; reuse exponentials of repeated gaps.
                let mut cache: Vec<(f64, Array2<C64>)> = Vec::new();
                let mut cur = v0;
                let mut t_prev = 0.0;
                for &t in times {
                    let gap = t - t_prev;
                    if gap > 0.0 {
                        let step = match cache.iter().find(|(g, _)| (*g - gap).abs() < 1e-15) {
                            Some((_, m)) => m.clone(),
                            None => {
                                let m = expm_pade(&mat.mapv(|x| x * gap))?;
                                cache.push((gap, m.clone()));
                                m
                            }
                        };
                        cur = step.dot(&cur);
                    }
                    t_prev = t;
                    out.push(finalize_state(&cur, self.dim, t)?);
                }
            }
        }
        Ok(out)
    }
}

fn finalize_state(v: &Array1<C64>, dim: usize, t: f64) -> Result<DensityMatrix> {
    let raw = unvectorize(v, dim);
    let herm_drift = hermiticity_drift(&raw);
    let tr = trace(&raw);
    let trace_drift = (tr - c(1., 0.)).norm();
    if herm_drift > DRIFT_LIMIT || trace_drift > DRIFT_LIMIT {
        return Err(Error::InvalidState(format!(
            "propagation drift at t={t:.3e}s: hermiticity {herm_drift:.3e}, trace {trace_drift:.3e}"
        )));
    }
    let mut h = raw.clone();
    let d = dagger(&raw);
    h.zip_mut_with(&d, |x, y| *x = (*x + *y) / 2.0);
    let h = h.mapv(|x| x / tr.re);
    Ok(DensityMatrix::from_trusted(h))
}

/// Convenience wrapper building a fresh `Propagator`.
pub fn propagate(l: &Liouvillian, rho0: &DensityMatrix, times: &[f64]) -> Result<Vec<DensityMatrix>> {
    Propagator::new(l)?.propagate(rho0, times)
}

/// Matrix exponential by scaling and squaring with a [13/13] Padé
/// approximant.
pub fn expm_pade(a: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch("expm needs a square matrix".into()));
    }
    let norm = a.opnorm_one()?;
    let theta13 = 5.371920351148152;
    let s = if norm > theta13 {
        (norm / theta13).log2().ceil() as i32
    } else {
        0
    };
    let a_scaled = a.mapv(|x| x / 2f64.powi(s));

    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let id = identity(n);
    let a2 = a_scaled.dot(&a_scaled);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);

    let u_inner = a6.mapv(|x| x * B[13]) + a4.mapv(|x| x * B[11]) + a2.mapv(|x| x * B[9]);
    let u = a_scaled.dot(
        &(a6.dot(&u_inner)
            + a6.mapv(|x| x * B[7])
            + a4.mapv(|x| x * B[5])
            + a2.mapv(|x| x * B[3])
            + id.mapv(|x| x * B[1])),
    );
    let v_inner = a6.mapv(|x| x * B[12]) + a4.mapv(|x| x * B[10]) + a2.mapv(|x| x * B[8]);
    let v = a6.dot(&v_inner)
        + a6.mapv(|x| x * B[6])
        + a4.mapv(|x| x * B[4])
        + a2.mapv(|x| x * B[2])
        + id.mapv(|x| x * B[0]);

    let p = &v + &u;
    let q = &v - &u;
    // Solve Q R = P column by column.
    let mut r = Array2::zeros((n, n));
    for j in 0..n {
        let col = q
            .solve(&p.column(j).to_owned())
            .map_err(|e| Error::Expm(format!("Padé solve failed: {e}")))?;
        r.column_mut(j).assign(&col);
    }
    let mut out = r;
    for _ in 0..s {
        out = out.dot(&out);
    }
    Ok(out)
}

/// Hermitian view helper used in tests and the experiment module.
pub fn as_view(a: &Op) -> ArrayView2<'_, C64> {
    a.view()
}
