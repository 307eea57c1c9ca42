//! Born–Markov master-equation dynamics of the emitter chain.
//!
//! ```text
//! dρ/dt = −i[H, ρ] + Σ_mn Γ_mn (σ_m⁻ ρ σ_n⁺ − ½{σ_m⁺σ_n⁻, ρ})
//! ```
//!
//! in units of `Γ0` (`ħ = 1`). Every term either conserves the excitation
//! number or lowers it by one, so the blocks `ρ_k` of fixed excitation number
//! `k` evolve on their own, fed only by `ρ_{k+1}`:
//!
//! ```text
//! dρ_k/dt = −i[H_k, ρ_k] − ½{G_k, ρ_k} + J(ρ_{k+1}),   G = Σ Γ_mn σ_m⁺σ_n⁻
//! ```
//!
//! The state is stored as these blocks. Coherences between different
//! excitation numbers never influence populations, correlators or forces,
//! and they are dropped. Every observable is therefore exact.
//!
//! The near-field exchange `Ω_mn` can exceed the decay rates by many orders
//! of magnitude. The default integrator therefore works in the eigenbasis of
//! each `H_k` and applies an exponential Runge–Kutta scheme (Cox–Matthews
//! ETD-RK4), so the coherent part is propagated exactly and the step only has
//! to resolve the dissipative time scale.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::coeffs::{couplings, CouplingSet, EmitterParams, Geometry};
use crate::dicke::{check_emitter_count, dicke_state, emitter_bit, sector_indices, subradiant_basis, QuantumState};
use crate::error::{Error, Result};
use crate::forces::sig9;
use crate::media::Medium;
use crate::quadrature::QuadratureSpec;

/// Largest accepted `h · Γ_max`.
pub const MAX_STEP_PRODUCT: f64 = 0.1;
/// Trace drift that aborts an integration.
pub const TRACE_ABORT: f64 = 1e-6;

/// Initial state of an evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    AllExcited,
    Ground,
    /// Symmetric Dicke state `|N/2, M⟩`.
    Dicke { m: f64 },
    /// Product state; `excited[i]` for emitter `i`.
    Product { excited: Vec<bool> },
    /// Member `index` of the deterministic `J = 0` basis.
    Subradiant { index: usize },
}

impl InitialState {
    pub fn build(&self, n: usize) -> Result<QuantumState> {
        match self {
            InitialState::AllExcited => QuantumState::all_excited(n),
            InitialState::Ground => QuantumState::ground(n),
            InitialState::Dicke { m } => dicke_state(n, 0.5 * n as f64, *m),
            InitialState::Product { excited } => {
                if excited.len() != n {
                    return Err(Error::Parameter {
                        field: "evolution.initial.excited".into(),
                        reason: format!("has {} entries for {n} emitters", excited.len()),
                    });
                }
                QuantumState::product(excited)
            }
            InitialState::Subradiant { index } => {
                let basis = subradiant_basis(n)?;
                let len = basis.len();
                basis.into_iter().nth(*index).ok_or_else(|| Error::Parameter {
                    field: "evolution.initial.index".into(),
                    reason: format!("the J = 0 sector has only {len} states"),
                })
            }
        }
    }
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Exponential integrator in the product basis when `H` is diagonal there,
    /// otherwise in the eigenbasis of `H`.
    Auto,
    /// Classical fourth-order Runge–Kutta on the full generator in the product
    /// basis; only suitable when `h ‖H‖` is small.
    Rk4,
    /// Exponential integrator in the eigenbasis of `H`.
    Exponential,
    /// Strang splitting: exact coherent half steps around a Runge–Kutta step
    /// of the dissipator, in the eigenbasis of `H`.
    Splitting,
}

/// Controls for [`evolve`]. Times are in units of `1/Γ0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSpec {
    pub t_end: f64,
    /// Step as a fraction of `1/Γ_max` (largest eigenvalue of the Γ matrix).
    pub step_factor: f64,
    /// Explicit step; overrides `step_factor`.
    pub step: Option<f64>,
    /// Steps between recorded samples; by default about 200 samples.
    pub output_stride: Option<usize>,
    pub initial: InitialState,
    pub integrator: Integrator,
    /// Compute the smallest eigenvalue of ρ at every sample.
    pub check_positivity: bool,
}

impl Default for EvolutionSpec {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            step_factor: 0.01,
            step: None,
            output_stride: None,
            initial: InitialState::AllExcited,
            integrator: Integrator::Auto,
            check_positivity: true,
        }
    }
}

impl EvolutionSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| Error::Parameter {
            field: format!("evolution.{field}"),
            reason,
        };
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(bad("t_end", format!("must be finite and > 0, got {}", self.t_end)));
        }
        if !(self.step_factor > 0.0 && self.step_factor < MAX_STEP_PRODUCT) {
            return Err(bad(
                "step_factor",
                format!("must lie in (0, {MAX_STEP_PRODUCT}), got {}", self.step_factor),
            ));
        }
        if let Some(h) = self.step {
            if !(h > 0.0) || !h.is_finite() {
                return Err(bad("step", format!("must be finite and > 0, got {h}")));
            }
        }
        if self.output_stride == Some(0) {
            return Err(bad("output_stride", "must be >= 1".into()));
        }
        Ok(())
    }
}

/// Complex matrix stored as two real matrices so products run on real gemm.
#[derive(Debug, Clone, PartialEq)]
struct CMat {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl CMat {
    fn zeros(n: usize) -> Self {
        Self {
            re: DMatrix::zeros(n, n),
            im: DMatrix::zeros(n, n),
        }
    }

    fn from_complex(m: &DMatrix<C64>) -> Self {
        Self {
            re: m.map(|c| c.re),
            im: m.map(|c| c.im),
        }
    }

    fn to_complex(&self) -> DMatrix<C64> {
        self.re.zip_map(&self.im, C64::new)
    }

    /// `a · self` for real `a`.
    fn left(&self, a: &DMatrix<f64>) -> Self {
        Self {
            re: a * &self.re,
            im: a * &self.im,
        }
    }

    /// `self · b` for real `b`.
    fn right(&self, b: &DMatrix<f64>) -> Self {
        Self {
            re: &self.re * b,
            im: &self.im * b,
        }
    }

    fn dim(&self) -> usize {
        self.re.nrows()
    }
}

/// Working basis of one excitation sector.
#[derive(Debug, Clone)]
enum Basis {
    Product,
    Eigen { v: DMatrix<f64>, vt: DMatrix<f64> },
}

impl Basis {
    /// Product-basis matrix from a working-basis one.
    fn to_product(&self, x: &CMat) -> CMat {
        match self {
            Basis::Product => x.clone(),
            Basis::Eigen { v, vt } => x.right(vt).left(v),
        }
    }

    fn from_product(&self, x: &CMat) -> CMat {
        match self {
            Basis::Product => x.clone(),
            Basis::Eigen { v, vt } => x.right(v).left(vt),
        }
    }

    fn transform_real(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Basis::Product => a.clone(),
            Basis::Eigen { v, vt } => vt * a * v,
        }
    }
}

/// Per-step multipliers of the exponential scheme, stored column-major like
/// the sector matrices.
#[derive(Debug, Clone)]
struct StepCoefficients {
    e_half: Vec<C64>,
    e_full: Vec<C64>,
    phi_half: Vec<C64>,
    f1: Vec<C64>,
    f2: Vec<C64>,
    f3: Vec<C64>,
}

/// `φ1, φ2, φ3` of `z`, by series near 0.
fn phis(z: C64) -> [C64; 3] {
    if z.norm() < 0.5 {
        // φ_k(z) = Σ_j z^j / (j + k)!
        let mut out = [C64::new(0.0, 0.0); 3];
        for (k, o) in out.iter_mut().enumerate() {
            let mut term = C64::new(1.0, 0.0);
            let mut fact = 1.0;
            for i in 1..=(k + 1) {
                fact *= i as f64;
            }
            term /= fact;
            let mut sum = C64::new(0.0, 0.0);
            for j in 0..30 {
                sum += term;
                term *= z / (j + k + 2) as f64;
            }
            *o = sum;
        }
        out
    } else {
        let e = z.exp();
        let p1 = (e - 1.0) / z;
        let p2 = (e - 1.0 - z) / (z * z);
        let p3 = (e - 1.0 - z - 0.5 * z * z) / (z * z * z);
        [p1, p2, p3]
    }
}

impl StepCoefficients {
    fn new(energies: &[f64], h: f64) -> Self {
        let n = energies.len();
        let mut s = Self {
            e_half: Vec::with_capacity(n * n),
            e_full: Vec::with_capacity(n * n),
            phi_half: Vec::with_capacity(n * n),
            f1: Vec::with_capacity(n * n),
            f2: Vec::with_capacity(n * n),
            f3: Vec::with_capacity(n * n),
        };
        for b in 0..n {
            for a in 0..n {
                let z = C64::new(0.0, -(energies[a] - energies[b]) * h);
                let [p1, p2, p3] = phis(z);
                let [q1, _, _] = phis(0.5 * z);
                s.e_half.push((0.5 * z).exp());
                s.e_full.push(z.exp());
                s.phi_half.push(0.5 * h * q1);
                s.f1.push(h * (p1 - 3.0 * p2 + 4.0 * p3));
                s.f2.push(h * (p2 - 2.0 * p3));
                s.f3.push(h * (-p2 + 4.0 * p3));
            }
        }
        s
    }
}

/// Sparse matrix in compressed-row form.
#[derive(Debug, Clone)]
struct Csr {
    ncols: usize,
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>, ncols: usize) -> Self {
        let mut ptr = Vec::with_capacity(rows.len() + 1);
        let (mut idx, mut val) = (Vec::new(), Vec::new());
        ptr.push(0);
        for row in rows {
            for (c, v) in row {
                idx.push(c);
                val.push(v);
            }
            ptr.push(idx.len());
        }
        Self { ncols, ptr, idx, val }
    }

    fn nrows(&self) -> usize {
        self.ptr.len() - 1
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols);
        for a in 0..self.nrows() {
            for j in self.ptr[a]..self.ptr[a + 1] {
                m[(a, self.idx[j])] += self.val[j];
            }
        }
        m
    }

    fn is_diagonal(&self) -> bool {
        (0..self.nrows()).all(|a| (self.ptr[a]..self.ptr[a + 1]).all(|j| self.idx[j] == a || self.val[j] == 0.0))
    }

    /// `y += self · x` for a complex vector stored as two real slices.
    fn mul_add_complex(&self, xr: &[f64], xi: &[f64], yr: &mut [f64], yi: &mut [f64]) {
        for (a, (or, oi)) in yr.iter_mut().zip(yi.iter_mut()).enumerate() {
            let (lo, hi) = (self.ptr[a], self.ptr[a + 1]);
            let (mut sr, mut si) = (0.0, 0.0);
            for (&c, &v) in self.idx[lo..hi].iter().zip(&self.val[lo..hi]) {
                sr += v * xr[c];
                si += v * xi[c];
            }
            *or += sr;
            *oi += si;
        }
    }

    /// `x · self` for a symmetric `self`, as column updates.
    fn right_symmetric(&self, x: &CMat) -> CMat {
        let d = x.re.nrows();
        let mut out = CMat::zeros(d);
        let (xr, xi) = (x.re.as_slice(), x.im.as_slice());
        let (yr, yi) = (out.re.as_mut_slice(), out.im.as_mut_slice());
        for b in 0..self.nrows() {
            let (dr, di) = (&mut yr[b * d..(b + 1) * d], &mut yi[b * d..(b + 1) * d]);
            for j in self.ptr[b]..self.ptr[b + 1] {
                let (c, v) = (self.idx[j], self.val[j]);
                axpy_slice(v, &xr[c * d..(c + 1) * d], dr);
                axpy_slice(v, &xi[c * d..(c + 1) * d], di);
            }
        }
        out
    }

    /// `self · x` for a complex matrix `x`.
    fn left(&self, x: &CMat) -> CMat {
        let (r, c, d) = (self.nrows(), x.re.ncols(), x.re.nrows());
        let mut out = CMat {
            re: DMatrix::zeros(r, c),
            im: DMatrix::zeros(r, c),
        };
        let (xr, xi) = (x.re.as_slice(), x.im.as_slice());
        let (yr, yi) = (out.re.as_mut_slice(), out.im.as_mut_slice());
        for b in 0..c {
            self.mul_add_complex(
                &xr[b * d..(b + 1) * d],
                &xi[b * d..(b + 1) * d],
                &mut yr[b * r..(b + 1) * r],
                &mut yi[b * r..(b + 1) * r],
            );
        }
        out
    }
}

/// Sector operator applied from the left.
#[derive(Debug, Clone)]
enum Op {
    Dense(DMatrix<f64>),
    Sparse(Csr),
}

impl Op {
    /// `x · self`; the operator is symmetric.
    fn right(&self, x: &CMat) -> CMat {
        match self {
            Op::Dense(a) => x.right(a),
            Op::Sparse(a) => a.right_symmetric(x),
        }
    }

    fn left(&self, x: &CMat) -> CMat {
        match self {
            Op::Dense(a) => x.left(a),
            Op::Sparse(a) => a.left(x),
        }
    }
}

/// Static data of one excitation sector.
#[derive(Debug, Clone)]
struct Sector {
    /// Global basis indices, increasing.
    states: Vec<usize>,
    /// For each local state: (emitter, local index in sector k+1) of every
    /// single raising that stays in the basis.
    ups: Vec<Vec<(usize, usize)>>,
    /// Basis the block is stored in.
    basis: Basis,
    /// Diagonal of the linear part (exponential schemes).
    energies: Vec<f64>,
    g: Op,
    /// Hamiltonian kept in the source term (plain Runge–Kutta only).
    h_source: Option<Op>,
    /// Eigenvectors of `H` for the coherent substeps of the splitting scheme.
    coherent: Option<(DMatrix<f64>, DMatrix<f64>)>,
    /// Force operator in the storage basis.
    force: DMatrix<f64>,
}

fn local_index(states: &[usize], a: usize) -> usize {
    states.binary_search(&a).expect("state belongs to the sector")
}

/// Real symmetric operator `diag(d(a)) + Σ hop` in one sector, where
/// `hop(to, from)` is the amplitude for moving an excitation from emitter
/// `from` to emitter `to`.
fn sector_operator(
    n: usize,
    states: &[usize],
    diag: impl Fn(usize) -> f64,
    hop: impl Fn(usize, usize) -> f64,
) -> Csr {
    let rows = states
        .iter()
        .map(|&a| {
            let mut row = vec![(local_index(states, a), diag(a))];
            for from in 0..n {
                let bf = emitter_bit(n, from);
                if a & bf == 0 {
                    continue;
                }
                for to in 0..n {
                    let bt = emitter_bit(n, to);
                    if to == from || a & bt != 0 {
                        continue;
                    }
                    let v = hop(from, to);
                    if v != 0.0 {
                        row.push((local_index(states, a ^ bf ^ bt), v));
                    }
                }
            }
            row
        })
        .collect();
    Csr::from_rows(rows, states.len())
}

/// Sector operators of the master equation and the force observable.
struct Generator {
    n: usize,
    mode: Integrator,
    /// Total Γ.
    gamma: DMatrix<f64>,
    sectors: Vec<Sector>,
}

/// Above this `h · (spread of H)` the exponential scheme loses accuracy and
/// the splitting scheme is used.
const STIFF_PHASE: f64 = 1.0;

impl Generator {
    fn new(c: &CouplingSet, integrator: Integrator, h: f64) -> Result<Self> {
        let n = c.n();
        check_emitter_count(n)?;
        let omega = c.omega_dd_total();
        let gamma = c.gamma_total();
        let hams: Vec<(Vec<usize>, Csr)> = (0..=n)
            .map(|k| {
                let states = sector_indices(n, k);
                let h = sector_operator(
                    n,
                    &states,
                    |a| {
                        (0..n)
                            .map(|i| if a & emitter_bit(n, i) != 0 { c.omega_plus[i] } else { c.omega_minus[i] })
                            .sum()
                    },
                    |to, from| omega[(to, from)],
                );
                (states, h)
            })
            .collect();
        let diagonal = hams.iter().all(|(_, h)| h.is_diagonal());
        let eigen: Option<Vec<SymmetricEigen<f64, nalgebra::Dyn>>> = match (integrator, diagonal) {
            (Integrator::Rk4, _) | (Integrator::Auto, true) => None,
            _ => Some(hams.iter().map(|(_, h)| SymmetricEigen::new(h.to_dense())).collect()),
        };
        let mode = match integrator {
            Integrator::Auto if diagonal => Integrator::Auto,
            Integrator::Auto => {
                let spread = eigen
                    .as_ref()
                    .expect("eigensystems computed")
                    .iter()
                    .map(|e| e.eigenvalues.max() - e.eigenvalues.min())
                    .fold(0.0, f64::max);
                if spread * h > STIFF_PHASE {
                    Integrator::Splitting
                } else {
                    Integrator::Exponential
                }
            }
            other => other,
        };

        let mut sectors = Vec::with_capacity(n + 1);
        for (k, (states, ham)) in hams.into_iter().enumerate() {
            let g = sector_operator(
                n,
                &states,
                |a| (0..n).filter(|&i| a & emitter_bit(n, i) != 0).map(|i| gamma[(i, i)]).sum(),
                |to, from| gamma[(to, from)],
            );
            let force = sector_operator(
                n,
                &states,
                |a| {
                    -(0..n)
                        .map(|i| {
                            if a & emitter_bit(n, i) != 0 {
                                c.d_omega_plus[i]
                            } else {
                                c.d_omega_minus[i]
                            }
                        })
                        .sum::<f64>()
                },
                |to, from| -c.d_omega_dd_sc[to][from],
            )
            .to_dense();
            let ups = if k < n {
                let upper = sector_indices(n, k + 1);
                states
                    .iter()
                    .map(|&a| {
                        (0..n)
                            .filter(|&i| a & emitter_bit(n, i) == 0)
                            .map(|i| (i, local_index(&upper, a | emitter_bit(n, i))))
                            .collect()
                    })
                    .collect()
            } else {
                vec![Vec::new(); states.len()]
            };
            let d = states.len();
            let sector = match mode {
                Integrator::Auto => Sector {
                    energies: ham.to_dense().diagonal().iter().copied().collect(),
                    states,
                    ups,
                    basis: Basis::Product,
                    g: Op::Sparse(g),
                    h_source: None,
                    coherent: None,
                    force,
                },
                Integrator::Rk4 => Sector {
                    states,
                    ups,
                    basis: Basis::Product,
                    energies: vec![0.0; d],
                    g: Op::Sparse(g),
                    h_source: Some(Op::Sparse(ham)),
                    coherent: None,
                    force,
                },
                Integrator::Splitting => {
                    let eig = &eigen.as_ref().expect("eigensystems computed")[k];
                    let v = eig.eigenvectors.clone();
                    let vt = v.transpose();
                    Sector {
                        states,
                        ups,
                        basis: Basis::Product,
                        energies: eig.eigenvalues.iter().copied().collect(),
                        g: Op::Sparse(g),
                        h_source: None,
                        coherent: Some((v, vt)),
                        force,
                    }
                }
                Integrator::Exponential => {
                    let eig = &eigen.as_ref().expect("eigensystems computed")[k];
                    let v = eig.eigenvectors.clone();
                    let vt = v.transpose();
                    let basis = Basis::Eigen { v, vt };
                    Sector {
                        g: Op::Dense(basis.transform_real(&g.to_dense())),
                        force: basis.transform_real(&force),
                        energies: eig.eigenvalues.iter().copied().collect(),
                        states,
                        ups,
                        basis,
                        h_source: None,
                        coherent: None,
                    }
                }
            };
            sectors.push(sector);
        }
        Ok(Self { n, mode, gamma, sectors })
    }

    /// `J(P) = Σ Γ_mn σ_m⁻ P σ_n⁺` from sector `k+1` into sector `k`, both
    /// in the product basis.
    fn jump(&self, k: usize, p: &CMat) -> CMat {
        let n = self.n;
        let s = &self.sectors[k];
        let d = s.states.len();
        let du = p.dim();
        let mut q = CMat::zeros(d);
        let (p_re, p_im) = (p.re.as_slice(), p.im.as_slice());
        // w_m = Σ_n Γ_mn P[:, b ∪ n] for the current column b, then
        // J[a, b] = Σ_{m ∉ a} w_m[a ∪ m].
        let mut w_re = vec![0.0; n * du];
        let mut w_im = vec![0.0; n * du];
        for b in 0..d {
            w_re.fill(0.0);
            w_im.fill(0.0);
            for &(nn, bb) in &s.ups[b] {
                let (cr, ci) = (&p_re[bb * du..(bb + 1) * du], &p_im[bb * du..(bb + 1) * du]);
                for m in 0..n {
                    let g = self.gamma[(nn, m)];
                    axpy_slice(g, cr, &mut w_re[m * du..(m + 1) * du]);
                    axpy_slice(g, ci, &mut w_im[m * du..(m + 1) * du]);
                }
            }
            for (a, ups) in s.ups.iter().enumerate() {
                let (mut re, mut im) = (0.0, 0.0);
                for &(m, aa) in ups {
                    re += w_re[m * du + aa];
                    im += w_im[m * du + aa];
                }
                q.re[(a, b)] = re;
                q.im[(a, b)] = im;
            }
        }
        q
    }

    /// Part of the generator outside the diagonal linear term, for every
    /// sector in its storage basis.
    fn source(&self, rho: &[CMat]) -> Vec<CMat> {
        let n = self.n;
        let mut out = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let s = &self.sectors[k];
            let r = &rho[k];
            // −½{G, ρ} with ρ Hermitian: X = ρG, Gρ + ρG = X† + X.
            let x = s.g.right(r);
            let mut re = (&x.re + x.re.transpose()) * -0.5;
            let mut im = (&x.im - x.im.transpose()) * -0.5;

            if let Some(h) = &s.h_source {
                // −i[H, ρ] with Y = Hρ: Hρ − ρH = Y − Y†.
                let y = h.left(r);
                re += &y.im + y.im.transpose();
                im -= &y.re - y.re.transpose();
            }
            if k < n {
                let upper = self.sectors[k + 1].basis.to_product(&rho[k + 1]);
                let j = s.basis.from_product(&self.jump(k, &upper));
                re += j.re;
                im += j.im;
            }
            out.push(CMat { re, im });
        }
        out
    }

    /// Exact coherent evolution `e^{−iHt} ρ e^{iHt}` of the splitting scheme,
    /// with `phase[a + b d] = e^{−i(E_a − E_b)t}`.
    fn coherent(&self, rho: &mut [CMat], phases: &[Vec<C64>]) {
        for ((r, s), ph) in rho.iter_mut().zip(&self.sectors).zip(phases) {
            if let Some((v, vt)) = &s.coherent {
                let x = hadamard(ph, &r.right(v).left(vt));
                *r = x.right(vt).left(v);
            } else {
                *r = hadamard(ph, r);
            }
        }
    }
}

#[multiversion::multiversion(targets = "simd")]
fn axpy_slice(a: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

fn hadamard_axpy(acc: &mut CMat, coef: &[C64], x: &CMat, scale: f64) {
    for (i, c) in coef.iter().enumerate() {
        let (xr, xi) = (x.re.as_slice()[i], x.im.as_slice()[i]);
        acc.re.as_mut_slice()[i] += scale * (c.re * xr - c.im * xi);
        acc.im.as_mut_slice()[i] += scale * (c.re * xi + c.im * xr);
    }
}

fn axpy(x: &CMat, y: &CMat, a: f64) -> CMat {
    CMat {
        re: &x.re + &y.re * a,
        im: &x.im + &y.im * a,
    }
}

fn hadamard(coef: &[C64], x: &CMat) -> CMat {
    let mut out = CMat::zeros(x.dim());
    hadamard_axpy(&mut out, coef, x, 1.0);
    out
}

/// Excitation-number blocks of a density matrix in the product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    pub n: usize,
    pub blocks: Vec<DMatrix<C64>>,
}

impl BlockState {
    pub fn from_state(state: &QuantumState) -> Result<Self> {
        let n = state.n();
        check_emitter_count(n)?;
        let blocks = (0..=n)
            .map(|k| {
                let idx = sector_indices(n, k);
                match state {
                    QuantumState::Pure { amplitudes, .. } => {
                        DMatrix::from_fn(idx.len(), idx.len(), |i, j| amplitudes[idx[i]] * amplitudes[idx[j]].conj())
                    }
                    QuantumState::Mixed { rho, .. } => DMatrix::from_fn(idx.len(), idx.len(), |i, j| rho[(idx[i], idx[j])]),
                }
            })
            .collect();
        Ok(Self { n, blocks })
    }

    /// Full density matrix with zero inter-sector coherences.
    pub fn to_state(&self) -> QuantumState {
        let d = 1 << self.n;
        let mut rho = DMatrix::zeros(d, d);
        for (k, b) in self.blocks.iter().enumerate() {
            let idx = sector_indices(self.n, k);
            for (i, &a) in idx.iter().enumerate() {
                for (j, &c) in idx.iter().enumerate() {
                    rho[(a, c)] = b[(i, j)];
                }
            }
        }
        QuantumState::Mixed { n: self.n, rho }
    }

    pub fn trace(&self) -> f64 {
        self.blocks.iter().map(|b| b.trace().re).sum()
    }
}

/// Sampled observables of one trajectory (times in `1/Γ0`, forces in
/// `ħ Γ0 k0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub step: f64,
    pub integrator: Integrator,
    pub times: Vec<f64>,
    pub force: Vec<f64>,
    pub excitation: Vec<f64>,
    pub trace_err: Vec<f64>,
    pub hermiticity_err: Vec<f64>,
    /// Smallest eigenvalue of ρ (NaN when not checked).
    pub min_eigenvalue: Vec<f64>,
    #[serde(skip)]
    pub final_state: Option<BlockState>,
}

fn resolve_step(c: &CouplingSet, spec: &EvolutionSpec) -> Result<f64> {
    let gmax = c.gamma_eigenvalues().last().copied().unwrap_or(1.0).max(1.0);
    let h = spec.step.unwrap_or(spec.step_factor / gmax);
    if h * gmax >= MAX_STEP_PRODUCT {
        return Err(Error::Parameter {
            field: "evolution.step".into(),
            reason: format!("h·Γ_max = {} must stay below {MAX_STEP_PRODUCT}", h * gmax),
        });
    }
    Ok(h)
}

/// Integrate the master equation from `initial` with the given couplings.
pub fn evolve(initial: &QuantumState, c: &CouplingSet, spec: &EvolutionSpec) -> Result<Trajectory> {
    spec.validate()?;
    let h = resolve_step(c, spec)?;
    evolve_with_step(initial, c, spec, h)
}

fn min_block_eigenvalue(rho: &CMat) -> f64 {
    let m = rho.to_complex();
    let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn evolve_with_step(initial: &QuantumState, c: &CouplingSet, spec: &EvolutionSpec, h_target: f64) -> Result<Trajectory> {
    let n = c.n();
    if initial.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} emitters, couplings have {n}",
            initial.n()
        )));
    }
    initial.validate(1e-10)?;
    c.check_psd(1e-10)?;
    let steps = (spec.t_end / h_target).ceil().max(1.0) as usize;
    let h = spec.t_end / steps as f64;
    let stride = spec.output_stride.unwrap_or((steps / 200).max(1));
    let generator = Generator::new(c, spec.integrator, h)?;
    let mode = generator.mode;
    let coefs: Vec<StepCoefficients> = generator
        .sectors
        .iter()
        .map(|s| StepCoefficients::new(&s.energies, h))
        .collect();

    let blocks = BlockState::from_state(initial)?;
    let mut rho: Vec<CMat> = blocks
        .blocks
        .iter()
        .zip(&generator.sectors)
        .map(|(b, s)| s.basis.from_product(&CMat::from_complex(b)))
        .collect();

    let mut traj = Trajectory {
        step: h,
        integrator: mode,
        times: Vec::new(),
        force: Vec::new(),
        excitation: Vec::new(),
        trace_err: Vec::new(),
        hermiticity_err: Vec::new(),
        min_eigenvalue: Vec::new(),
        final_state: None,
    };
    let record = |traj: &mut Trajectory, rho: &[CMat], t: f64| -> Result<()> {
        let mut force = 0.0;
        let mut trace = 0.0;
        let mut exc = 0.0;
        let mut herm = 0.0_f64;
        let mut min_eig = f64::INFINITY;
        for (k, (r, s)) in rho.iter().zip(&generator.sectors).enumerate() {
            let tr: f64 = r.re.diagonal().sum();
            trace += tr;
            exc += k as f64 * tr;
            force += r.re.dot(&s.force);
            let dr = (&r.re - r.re.transpose()).abs().max();
            let di = (&r.im + r.im.transpose()).abs().max();
            herm = herm.max(dr.max(di));
            if spec.check_positivity {
                min_eig = min_eig.min(min_block_eigenvalue(r));
            }
        }
        let drift = (trace - 1.0).abs();
        if !drift.is_finite() || drift > TRACE_ABORT || !force.is_finite() {
            return Err(Error::Unstable { time: t, trace_drift: drift });
        }
        traj.times.push(t);
        traj.force.push(force);
        traj.excitation.push(exc);
        traj.trace_err.push(drift);
        traj.hermiticity_err.push(herm);
        traj.min_eigenvalue.push(if spec.check_positivity { min_eig } else { f64::NAN });
        Ok(())
    };

    record(&mut traj, &rho, 0.0)?;
    let full_phases: Vec<Vec<C64>> = coefs.iter().map(|c| c.e_full.clone()).collect();
    let back_phases: Vec<Vec<C64>> = coefs.iter().map(|c| c.e_half.iter().map(|z| z.conj()).collect()).collect();
    if mode == Integrator::Splitting {
        let half: Vec<Vec<C64>> = coefs.iter().map(|c| c.e_half.clone()).collect();
        generator.coherent(&mut rho, &half);
    }
    for step in 1..=steps {
        if mode == Integrator::Splitting {
            // The stored state is ρ advanced by an extra coherent half step, so
            // consecutive half steps merge into one full step.
            let k1 = generator.source(&rho);
            let y: Vec<CMat> = (0..=n).map(|k| axpy(&rho[k], &k1[k], 0.5 * h)).collect();
            let k2 = generator.source(&y);
            let y: Vec<CMat> = (0..=n).map(|k| axpy(&rho[k], &k2[k], 0.5 * h)).collect();
            let k3 = generator.source(&y);
            let y: Vec<CMat> = (0..=n).map(|k| axpy(&rho[k], &k3[k], h)).collect();
            let k4 = generator.source(&y);
            for k in 0..=n {
                let mut x = axpy(&rho[k], &k1[k], h / 6.0);
                x = axpy(&x, &k2[k], h / 3.0);
                x = axpy(&x, &k3[k], h / 3.0);
                rho[k] = axpy(&x, &k4[k], h / 6.0);
            }
            generator.coherent(&mut rho, &full_phases);
            if step % stride == 0 || step == steps {
                let mut out = rho.clone();
                generator.coherent(&mut out, &back_phases);
                record(&mut traj, &out, step as f64 * h)?;
            }
            continue;
        }
        let nu = generator.source(&rho);
        let a: Vec<CMat> = (0..=n)
            .map(|k| {
                let mut x = hadamard(&coefs[k].e_half, &rho[k]);
                hadamard_axpy(&mut x, &coefs[k].phi_half, &nu[k], 1.0);
                x
            })
            .collect();
        let na = generator.source(&a);
        let b: Vec<CMat> = (0..=n)
            .map(|k| {
                let mut x = hadamard(&coefs[k].e_half, &rho[k]);
                hadamard_axpy(&mut x, &coefs[k].phi_half, &na[k], 1.0);
                x
            })
            .collect();
        let nb = generator.source(&b);
        let cst: Vec<CMat> = (0..=n)
            .map(|k| {
                let mut x = hadamard(&coefs[k].e_half, &a[k]);
                hadamard_axpy(&mut x, &coefs[k].phi_half, &nb[k], 2.0);
                hadamard_axpy(&mut x, &coefs[k].phi_half, &nu[k], -1.0);
                x
            })
            .collect();
        let nc = generator.source(&cst);
        for k in 0..=n {
            let mut x = hadamard(&coefs[k].e_full, &rho[k]);
            hadamard_axpy(&mut x, &coefs[k].f1, &nu[k], 1.0);
            hadamard_axpy(&mut x, &coefs[k].f2, &na[k], 2.0);
            hadamard_axpy(&mut x, &coefs[k].f2, &nb[k], 2.0);
            hadamard_axpy(&mut x, &coefs[k].f3, &nc[k], 1.0);
            rho[k] = x;
        }
        if step % stride == 0 || step == steps {
            record(&mut traj, &rho, step as f64 * h)?;
        }
    }
    if mode == Integrator::Splitting {
        generator.coherent(&mut rho, &back_phases);
    }
    traj.final_state = Some(BlockState {
        n,
        blocks: rho
            .iter()
            .zip(&generator.sectors)
            .map(|(r, s)| s.basis.to_product(r).to_complex())
            .collect(),
    });
    Ok(traj)
}

/// Force time series of a chain together with its incoherent reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceSeries {
    pub gamma0: f64,
    pub force_unit: f64,
    pub times: Vec<f64>,
    pub force: Vec<f64>,
    pub reference_force: Vec<f64>,
    pub boost: Vec<f64>,
    pub excitation: Vec<f64>,
    pub trace_err: Vec<f64>,
    pub hermiticity_err: Vec<f64>,
    pub min_eigenvalue: Vec<f64>,
    pub step: f64,
    pub integrator: Integrator,
    /// Largest `|ΔF|` (N) and the time (s) at which it occurs.
    pub peak_boost_n: f64,
    pub peak_time_s: f64,
}

pub const SERIES_COLUMNS: [&str; 7] = ["t_s", "t_gamma0", "F_total_natural", "F_total_N", "boost_N", "excitation", "trace_err"];

impl ForceSeries {
    pub fn write_csv<W: Write>(&self, mut w: W, preamble: &[String]) -> std::io::Result<()> {
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "{}", SERIES_COLUMNS.join(","))?;
        for i in 0..self.times.len() {
            let t = self.times[i];
            let cells = [
                sig9(t / self.gamma0),
                sig9(t),
                sig9(self.force[i]),
                sig9(self.force[i] * self.force_unit),
                sig9(self.boost[i] * self.force_unit),
                sig9(self.excitation[i]),
                sig9(self.trace_err[i]),
            ];
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Force on the chain with every inter-emitter coupling removed. Each
/// emitter then decays on its own, `p_i(t) = p_i(0) e^{−Γ_ii t}`, and the
/// force depends on the populations only.
pub fn incoherent_reference(initial: &QuantumState, c: &CouplingSet, times: &[f64]) -> Result<Vec<f64>> {
    let n = c.n();
    if initial.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} emitters, couplings have {n}",
            initial.n()
        )));
    }
    let p0: Vec<f64> = (0..n).map(|i| initial.population(i)).collect();
    Ok(times
        .iter()
        .map(|&t| {
            -(0..n)
                .map(|i| {
                    let p = p0[i] * (-(c.gamma_free[i][i] + c.gamma_sc[i][i]) * t).exp();
                    c.d_omega_plus[i] * p + c.d_omega_minus[i] * (1.0 - p)
                })
                .sum::<f64>()
        })
        .collect())
}

/// Evolve `initial` under the full couplings and report the difference to
/// the incoherent reference.
pub fn boost_series(initial: &QuantumState, c: &CouplingSet, spec: &EvolutionSpec) -> Result<ForceSeries> {
    let full = evolve(initial, c, spec)?;
    let reference = incoherent_reference(initial, c, &full.times)?;
    let boost: Vec<f64> = full.force.iter().zip(&reference).map(|(a, b)| a - b).collect();
    let unit = c.emitter.force_unit();
    let (peak_idx, _) = boost
        .iter()
        .enumerate()
        .fold((0, 0.0_f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    Ok(ForceSeries {
        gamma0: c.emitter.gamma0,
        force_unit: unit,
        peak_boost_n: boost[peak_idx].abs() * unit,
        peak_time_s: full.times[peak_idx] / c.emitter.gamma0,
        times: full.times,
        force: full.force,
        reference_force: reference,
        boost,
        excitation: full.excitation,
        trace_err: full.trace_err,
        hermiticity_err: full.hermiticity_err,
        min_eigenvalue: full.min_eigenvalue,
        step: full.step,
        integrator: full.integrator,
    })
}

/// Superradiant boost of a chain prepared as described by `spec.initial`.
pub fn superradiant_boost(
    geometry: &Geometry,
    medium: &Medium,
    emitter: &EmitterParams,
    quad: &QuadratureSpec,
    spec: &EvolutionSpec,
) -> Result<ForceSeries> {
    check_emitter_count(geometry.n)?;
    let c = couplings(geometry, medium, emitter, quad)?;
    let initial = spec.initial.build(geometry.n)?;
    boost_series(&initial, &c, spec)
}
