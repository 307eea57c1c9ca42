//! Spin operators, Dicke states and the subradiant `J = 0` sector over the
//! `2^N` product basis.
//!
//! Basis convention: emitter 1 is the most significant bit and `|e⟩ = 1`,
//! so for two emitters the basis is `|gg⟩, |ge⟩, |eg⟩, |ee⟩`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Largest chain handled by the dense state representation.
pub const MAX_EMITTERS: usize = 12;

/// Bit mask of emitter `i` (0-based) in an `n`-emitter basis index.
#[inline]
pub fn emitter_bit(n: usize, i: usize) -> usize {
    1 << (n - 1 - i)
}

pub fn check_emitter_count(n: usize) -> Result<()> {
    if n == 0 || n > MAX_EMITTERS {
        return Err(Error::EmitterCount(format!(
            "N = {n} is outside 1..={MAX_EMITTERS} supported by the product-basis representation"
        )));
    }
    Ok(())
}

/// `C(n, k)` as a float (exact for the sizes used here).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Dimension `N!/((N/2+1)!(N/2)!)` of the `J = 0` sector.
pub fn subradiant_degeneracy(n: usize) -> Result<usize> {
    if n % 2 != 0 {
        return Err(Error::EmitterCount(format!("N = {n} is odd and has no J = 0 sector")));
    }
    let h = n / 2;
    Ok((binomial(n, h) / (h + 1) as f64).round() as usize)
}

/// Real sparse matrix stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp {
    pub dim: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseOp {
    fn from_fn(dim: usize, f: impl Fn(usize) -> Vec<(usize, f64)>) -> Self {
        // `f(col)` lists (row, value) pairs of column `col`.
        let mut rows = vec![Vec::new(); dim];
        for col in 0..dim {
            for (row, v) in f(col) {
                rows[row].push((col, v));
            }
        }
        Self { dim, rows }
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        self.rows
            .iter()
            .map(|r| r.iter().fold(C64::new(0.0, 0.0), |acc, &(c, x)| acc + v[c] * x))
            .collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |col| self.rows[col].iter().map(|&(c, v)| (c, v)).collect())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[(r, c)] += v;
            }
        }
        m
    }
}

/// Single-emitter and collective spin operators of an `n`-emitter chain.
#[derive(Debug, Clone)]
pub struct SpinOps {
    pub n: usize,
    pub sigma_minus: Vec<SparseOp>,
    pub sigma_plus: Vec<SparseOp>,
    pub j_minus: SparseOp,
    pub j_plus: SparseOp,
    pub j_z: SparseOp,
}

impl SpinOps {
    pub fn new(n: usize) -> Result<Self> {
        check_emitter_count(n)?;
        let dim = 1 << n;
        let sigma_minus: Vec<SparseOp> = (0..n)
            .map(|i| {
                let b = emitter_bit(n, i);
                SparseOp::from_fn(dim, |col| if col & b != 0 { vec![(col ^ b, 1.0)] } else { vec![] })
            })
            .collect();
        let sigma_plus: Vec<SparseOp> = sigma_minus.iter().map(SparseOp::transpose).collect();
        let j_minus = SparseOp::from_fn(dim, |col| {
            (0..n)
                .map(|i| emitter_bit(n, i))
                .filter(|b| col & b != 0)
                .map(|b| (col ^ b, 1.0))
                .collect()
        });
        let j_plus = j_minus.transpose();
        let j_z = SparseOp::from_fn(dim, |col| {
            let ones = col.count_ones() as f64;
            vec![(col, ones - 0.5 * n as f64)]
        });
        Ok(Self {
            n,
            sigma_minus,
            sigma_plus,
            j_minus,
            j_plus,
            j_z,
        })
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// `J² v = (J₊J₋ + J_z² − J_z) v`.
    pub fn j_squared(&self, v: &[C64]) -> Vec<C64> {
        let a = self.j_plus.apply(&self.j_minus.apply(v));
        let z = self.j_z.apply(v);
        let zz = self.j_z.apply(&z);
        (0..v.len()).map(|i| a[i] + zz[i] - z[i]).collect()
    }
}

/// Emitter-chain state: a unit vector or a density matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState {
    Pure { n: usize, amplitudes: DVector<C64> },
    Mixed { n: usize, rho: DMatrix<C64> },
}

impl QuantumState {
    pub fn pure(n: usize, amplitudes: DVector<C64>) -> Result<Self> {
        let s = QuantumState::Pure { n, amplitudes };
        s.validate(1e-12)?;
        Ok(s)
    }

    pub fn mixed(n: usize, rho: DMatrix<C64>) -> Result<Self> {
        let s = QuantumState::Mixed { n, rho };
        s.validate(1e-12)?;
        Ok(s)
    }

    /// Product state; `excited[i]` says whether emitter `i` is excited.
    pub fn product(excited: &[bool]) -> Result<Self> {
        let n = excited.len();
        check_emitter_count(n)?;
        let idx = excited
            .iter()
            .enumerate()
            .filter(|(_, e)| **e)
            .fold(0, |acc, (i, _)| acc | emitter_bit(n, i));
        let mut v = DVector::zeros(1 << n);
        v[idx] = C64::new(1.0, 0.0);
        Ok(QuantumState::Pure { n, amplitudes: v })
    }

    pub fn ground(n: usize) -> Result<Self> {
        Self::product(&vec![false; n])
    }

    pub fn all_excited(n: usize) -> Result<Self> {
        Self::product(&vec![true; n])
    }

    /// Maximally mixed state `I / 2^N`.
    pub fn maximally_mixed(n: usize) -> Result<Self> {
        check_emitter_count(n)?;
        let d = 1 << n;
        Ok(QuantumState::Mixed {
            n,
            rho: DMatrix::from_diagonal_element(d, d, C64::new(1.0 / d as f64, 0.0)),
        })
    }

    pub fn n(&self) -> usize {
        match self {
            QuantumState::Pure { n, .. } | QuantumState::Mixed { n, .. } => *n,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.n()
    }

    /// Check normalization, Hermiticity and positivity to `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        check_emitter_count(self.n())?;
        let d = self.dim();
        match self {
            QuantumState::Pure { amplitudes, .. } => {
                if amplitudes.len() != d {
                    return Err(Error::DimensionMismatch(format!(
                        "state vector has length {}, expected {d}",
                        amplitudes.len()
                    )));
                }
                let norm = amplitudes.norm();
                if (norm - 1.0).abs() > tol {
                    return Err(Error::InvalidState(format!("state norm {norm} differs from 1")));
                }
            }
            QuantumState::Mixed { rho, .. } => {
                if rho.nrows() != d || rho.ncols() != d {
                    return Err(Error::DimensionMismatch(format!(
                        "density matrix is {}x{}, expected {d}x{d}",
                        rho.nrows(),
                        rho.ncols()
                    )));
                }
                let tr = rho.trace();
                if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
                    return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
                }
                let herm = (rho - rho.adjoint()).norm();
                if herm > tol {
                    return Err(Error::InvalidState(format!("Hermiticity residual {herm:e}")));
                }
                let min = min_eigenvalue(rho);
                if min < -tol.max(1e-10) {
                    return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
                }
            }
        }
        Ok(())
    }

    pub fn density_matrix(&self) -> DMatrix<C64> {
        match self {
            QuantumState::Pure { amplitudes, .. } => amplitudes * amplitudes.adjoint(),
            QuantumState::Mixed { rho, .. } => rho.clone(),
        }
    }

    /// `⟨σ_i^+ σ_i^−⟩`, the excited population of emitter `i`.
    pub fn population(&self, i: usize) -> f64 {
        let n = self.n();
        let b = emitter_bit(n, i);
        match self {
            QuantumState::Pure { amplitudes, .. } => (0..self.dim())
                .filter(|a| a & b != 0)
                .map(|a| amplitudes[a].norm_sqr())
                .sum(),
            QuantumState::Mixed { rho, .. } => (0..self.dim()).filter(|a| a & b != 0).map(|a| rho[(a, a)].re).sum(),
        }
    }

    /// Total excitation `⟨Σ σ^+ σ^−⟩`.
    pub fn excitation(&self) -> f64 {
        (0..self.n()).map(|i| self.population(i)).sum()
    }

    /// `⟨σ_m^− σ_n^+⟩` for `m ≠ n`.
    pub fn exchange(&self, m: usize, n: usize) -> C64 {
        let nn = self.n();
        let (bm, bn) = (emitter_bit(nn, m), emitter_bit(nn, n));
        // σ_m^− σ_n^+ maps |a⟩ (m excited, n ground) to |a ^ bm ^ bn⟩.
        let sources = (0..self.dim()).filter(move |a| a & bm != 0 && a & bn == 0);
        match self {
            QuantumState::Pure { amplitudes, .. } => sources
                .map(|a| amplitudes[a ^ bm ^ bn].conj() * amplitudes[a])
                .sum(),
            QuantumState::Mixed { rho, .. } => sources.map(|a| rho[(a, a ^ bm ^ bn)]).sum(),
        }
    }
}

/// `⟨σ_m^−σ_n^+ + σ_n^−σ_m^+⟩`.
pub fn pair_correlator(state: &QuantumState, m: usize, n: usize) -> Result<f64> {
    let nn = state.n();
    if m == n || m >= nn || n >= nn {
        return Err(Error::Parameter {
            field: "pair".into(),
            reason: format!("need distinct emitters below {nn}, got ({m}, {n})"),
        });
    }
    Ok(2.0 * state.exchange(m, n).re)
}

/// Smallest eigenvalue of a Hermitian matrix via its real `2d × 2d`
/// embedding `[[A, −B], [B, A]]`.
pub fn min_eigenvalue(rho: &DMatrix<C64>) -> f64 {
    let d = rho.nrows();
    let emb = DMatrix::from_fn(2 * d, 2 * d, |i, j| {
        let (a, b) = (i % d, j % d);
        let z = 0.5 * (rho[(a, b)] + rho[(b, a)].conj());
        match (i < d, j < d) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    SymmetricEigen::new(emb).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Basis indices with exactly `k` excitations, in increasing order.
pub fn sector_indices(n: usize, k: usize) -> Vec<usize> {
    (0..1usize << n).filter(|a| a.count_ones() as usize == k).collect()
}

/// Symmetric Dicke state `|J = N/2, M⟩`.
pub fn dicke_state(n: usize, j: f64, m: f64) -> Result<QuantumState> {
    check_emitter_count(n)?;
    if (j - 0.5 * n as f64).abs() > 1e-12 {
        return Err(Error::Parameter {
            field: "J".into(),
            reason: format!("only the symmetric ladder J = N/2 = {} is built here; use subradiant_basis for J = 0", 0.5 * n as f64),
        });
    }
    let k = m + j;
    if m.abs() > j + 1e-12 || (k - k.round()).abs() > 1e-12 {
        return Err(Error::Parameter {
            field: "M".into(),
            reason: format!("M = {m} must satisfy |M| <= J with M + J integer"),
        });
    }
    let k = k.round() as usize;
    let idx = sector_indices(n, k);
    let amp = C64::new(1.0 / (idx.len() as f64).sqrt(), 0.0);
    let mut v = DVector::zeros(1 << n);
    for a in idx {
        v[a] = amp;
    }
    Ok(QuantumState::Pure { n, amplitudes: v })
}

/// `cos θ |eg⟩ + e^{iφ} sin θ |ge⟩` for two emitters.
pub fn shared_excitation_state(theta: f64, phi: f64) -> QuantumState {
    let mut v = DVector::zeros(4);
    v[0b10] = C64::new(theta.cos(), 0.0);
    v[0b01] = C64::from_polar(theta.sin(), phi);
    QuantumState::Pure { n: 2, amplitudes: v }
}

/// Orthonormal basis of the `J = 0` sector of `n` (even) emitters.
///
/// The sector is the kernel of `J₋` inside the half-filled block. Its gauge
/// is fixed by projecting the block's basis vectors onto the kernel in index
/// order and orthonormalizing with Gram–Schmidt, so the output is
/// reproducible and independent of the eigensolver's choices.
pub fn subradiant_basis(n: usize) -> Result<Vec<QuantumState>> {
    check_emitter_count(n)?;
    let dg = subradiant_degeneracy(n)?;
    let half = sector_indices(n, n / 2);
    let lower = sector_indices(n, n / 2 - 1);
    let pos = |a: usize| lower.binary_search(&a).expect("lowered index lies in the lower block");
    let mut jm = DMatrix::<f64>::zeros(lower.len(), half.len());
    for (c, &a) in half.iter().enumerate() {
        for i in 0..n {
            let b = emitter_bit(n, i);
            if a & b != 0 {
                jm[(pos(a ^ b), c)] += 1.0;
            }
        }
    }
    // JᵀJ = J₊J₋ = J(J+1) on M = 0, so the spectrum is {0, 2, 6, ...}.
    let eig = SymmetricEigen::new(jm.transpose() * &jm);
    let kernel: Vec<DVector<f64>> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l.abs() < 1e-6)
        .map(|(i, _)| eig.eigenvectors.column(i).into_owned())
        .collect();
    if kernel.len() != dg {
        return Err(Error::Singular(format!(
            "J = 0 kernel has dimension {}, expected {dg}",
            kernel.len()
        )));
    }
    let project = |v: &DVector<f64>| kernel.iter().fold(DVector::zeros(v.len()), |acc, k| acc + k * k.dot(v));

    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(dg);
    for c in 0..half.len() {
        if basis.len() == dg {
            break;
        }
        let mut v = project(&DVector::from_fn(half.len(), |i, _| if i == c { 1.0 } else { 0.0 }));
        for _ in 0..2 {
            for b in &basis {
                v -= b * b.dot(&v);
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            basis.push(v / norm);
        }
    }
    Ok(basis
        .into_iter()
        .map(|v| {
            let mut full = DVector::zeros(1 << n);
            for (i, &a) in half.iter().enumerate() {
                full[a] = C64::new(v[i], 0.0);
            }
            QuantumState::Pure { n, amplitudes: full }
        })
        .collect())
}
