//! Master-equation coefficients for a chain of z-polarized emitters.
//!
//! Everything here is dimensionless: shifts and rates in units of `Γ0`,
//! lengths in `1/k0`, forces in `ħ Γ0 k0`. For a dipole along `e_z` the
//! prefactors collapse to
//!
//! ```text
//! Ω^(res) = −3π Re G_zz(ω0)      Γ = 6π Im G_zz(ω0)
//! Ω^(−)   = 3 ∫ ds s²/(1+s²) G_zz(i s ω0)
//! ```
//!
//! with `G` in units of `k0`. Height derivatives are taken with respect to
//! the common chain height `z0`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::{greens_free, zz_imaginary_weighted, zz_resonant};
use crate::media::{Frequency, Medium};
use crate::quadrature::{integrate, QuadratureSpec};
use crate::units::{EPSILON_0, HBAR, SPEED_OF_LIGHT};

/// Transition frequency and free-space linewidth of identical emitters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterParams {
    /// Transition angular frequency ω0 (rad/s).
    pub omega0: f64,
    /// Free-space decay rate Γ0 (1/s).
    pub gamma0: f64,
}

impl EmitterParams {
    pub fn new(omega0: f64, gamma0: f64) -> Result<Self> {
        let p = Self { omega0, gamma0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("emitter.omega0", self.omega0), ("emitter.gamma0", self.gamma0)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter {
                    field: field.into(),
                    reason: "must be finite and > 0".into(),
                });
            }
        }
        Ok(())
    }

    /// Vacuum wavenumber `k0 = ω0/c` (1/m).
    pub fn k0(&self) -> f64 {
        self.omega0 / SPEED_OF_LIGHT
    }

    /// Dipole moment magnitude (C·m) reproducing `Γ0 = ω0³d0²/(3πε0ħc³)`.
    pub fn dipole_moment(&self) -> f64 {
        (3.0 * PI * EPSILON_0 * HBAR * SPEED_OF_LIGHT.powi(3) * self.gamma0 / self.omega0.powi(3)).sqrt()
    }

    /// SI value (N) of the natural force unit `ħ Γ0 k0`.
    pub fn force_unit(&self) -> f64 {
        HBAR * self.gamma0 * self.k0()
    }
}

/// Linear chain of `n` emitters at height `z0` with spacing `x0` along x,
/// both in units of `1/k0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub n: usize,
    pub x0: f64,
    pub z0: f64,
}

impl Geometry {
    pub fn new(n: usize, x0: f64, z0: f64) -> Result<Self> {
        let g = Self { n, x0, z0 };
        g.validate()?;
        Ok(g)
    }

    /// Convert SI lengths (m) with the emitters' `k0`.
    pub fn from_si(n: usize, x0: f64, z0: f64, emitter: &EmitterParams) -> Result<Self> {
        Self::new(n, x0 * emitter.k0(), z0 * emitter.k0())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Geometry("the chain needs at least one emitter".into()));
        }
        if !(self.z0 > 0.0) || !self.z0.is_finite() {
            return Err(Error::Geometry(format!("height z0 = {} must be finite and > 0", self.z0)));
        }
        if !(self.x0 >= 0.0) || !self.x0.is_finite() {
            return Err(Error::Geometry(format!("spacing x0 = {} must be finite and >= 0", self.x0)));
        }
        Ok(())
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        (0..self.n).map(|i| [i as f64 * self.x0, 0.0, self.z0]).collect()
    }
}

/// Single-emitter surface terms and their `z0`-derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleEmitterTerms {
    pub omega_minus: f64,
    pub omega_res: f64,
    pub gamma_sc: f64,
    pub d_omega_minus: f64,
    pub d_omega_res: f64,
    pub d_gamma_sc: f64,
    pub quad_error: f64,
}

impl SingleEmitterTerms {
    pub fn omega_plus(&self) -> f64 {
        self.omega_res - self.omega_minus
    }

    pub fn d_omega_plus(&self) -> f64 {
        self.d_omega_res - self.d_omega_minus
    }
}

/// Surface-mediated pair terms at one lateral separation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTerms {
    pub separation: f64,
    pub omega_free: f64,
    pub gamma_free: f64,
    pub omega_sc: f64,
    pub gamma_sc: f64,
    pub d_omega_sc: f64,
    pub d_gamma_sc: f64,
    pub quad_error: f64,
}

/// All coherent and dissipative coefficients of the chain (units of `Γ0`,
/// derivatives in `Γ0 k0`). Matrices are indexed `[m][n]`; the diagonal of
/// the `omega_dd_*` matrices is unused and kept at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSet {
    pub geometry: Geometry,
    pub medium: Medium,
    pub emitter: EmitterParams,
    pub omega_plus: Vec<f64>,
    pub omega_minus: Vec<f64>,
    pub omega_res: Vec<f64>,
    pub d_omega_plus: Vec<f64>,
    pub d_omega_minus: Vec<f64>,
    pub d_omega_res: Vec<f64>,
    pub omega_dd_free: Vec<Vec<f64>>,
    pub omega_dd_sc: Vec<Vec<f64>>,
    pub d_omega_dd_sc: Vec<Vec<f64>>,
    pub gamma_free: Vec<Vec<f64>>,
    pub gamma_sc: Vec<Vec<f64>>,
    pub d_gamma_sc: Vec<Vec<f64>>,
    pub quadrature: QuadratureReport,
}

/// Summary of the quadrature behind a coupling set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureReport {
    pub spec: QuadratureSpec,
    /// Largest error estimate over all coefficients (units of `Γ0`).
    pub max_abs_error: f64,
    /// Largest error relative to the magnitude of its coefficient.
    pub max_rel_error: f64,
}

impl CouplingSet {
    pub fn n(&self) -> usize {
        self.geometry.n
    }

    /// Total dissipative matrix `Γ_free + Γ_sc`.
    pub fn gamma_total(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| self.gamma_free[i][j] + self.gamma_sc[i][j])
    }

    /// Total coherent exchange `Ω_mn = Ω_free + Ω_sc` (zero diagonal).
    pub fn omega_dd_total(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                self.omega_dd_free[i][j] + self.omega_dd_sc[i][j]
            }
        })
    }

    /// Eigenvalues of the total Γ matrix in ascending order.
    pub fn gamma_eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.gamma_total()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Reject a Γ matrix with eigenvalues below `−tol · max(1, λ_max)`.
    pub fn check_psd(&self, tol: f64) -> Result<()> {
        let ev = self.gamma_eigenvalues();
        let min = ev[0];
        let max = *ev.last().expect("at least one emitter");
        if min < -tol * max.max(1.0) {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
        }
        Ok(())
    }

    /// Copy with every inter-emitter coupling removed (the incoherent
    /// reference used for the superradiant boost).
    pub fn without_pair_couplings(&self) -> Self {
        let mut c = self.clone();
        let n = self.n();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    c.omega_dd_free[i][j] = 0.0;
                    c.omega_dd_sc[i][j] = 0.0;
                    c.d_omega_dd_sc[i][j] = 0.0;
                    c.gamma_free[i][j] = 0.0;
                    c.gamma_sc[i][j] = 0.0;
                    c.d_gamma_sc[i][j] = 0.0;
                }
            }
        }
        c
    }
}

fn check_inputs(geometry: &Geometry, medium: &Medium, emitter: &EmitterParams, quad: &QuadratureSpec) -> Result<()> {
    geometry.validate()?;
    medium.validate()?;
    emitter.validate()?;
    quad.validate()
}

/// Ground-state shift `Ω^(−)` of one emitter at height `z0` and its
/// `z0`-derivative. `medium` must be normalized to `ω0`.
///
/// The outer frequency integral uses `s = tan u`, so `ds/(1+s²) = du`; the
/// inner transverse integral runs ten times tighter.
pub fn omega_minus_natural(z0: f64, medium: &Medium, quad: &QuadratureSpec) -> Result<([f64; 2], f64)> {
    if matches!(medium, Medium::Vacuum) {
        return Ok(([0.0, 0.0], 0.0));
    }
    let inner = quad.tightened(10.0);
    let failure = std::cell::RefCell::new(None);
    let mut inner_err = 0.0_f64;
    let est = integrate::<2, _>(
        |u| {
            let s = u.tan();
            if !(s > 0.0) || !s.is_finite() {
                return [0.0, 0.0];
            }
            match zz_imaginary_weighted(s, z0, medium, &inner) {
                Ok((v, e)) => {
                    inner_err = inner_err.max(e);
                    v
                }
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    [0.0, 0.0]
                }
            }
        },
        0.0,
        0.5 * PI,
        quad,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    // d/dz0 = 2 d/dZ for a single emitter.
    let value = 3.0 * est.value[0];
    let deriv = 6.0 * est.value[1];
    let err = 3.0 * (est.error + 0.5 * PI * inner_err);
    Ok(([value, deriv], err))
}

/// Single-emitter coefficients at height `z0` (medium normalized to `ω0`).
pub fn single_emitter_natural(z0: f64, medium: &Medium, quad: &QuadratureSpec) -> Result<SingleEmitterTerms> {
    let ([om, dom], e_minus) = omega_minus_natural(z0, medium, quad)?;
    let res = zz_resonant(0.0, z0, medium, quad)?;
    Ok(SingleEmitterTerms {
        omega_minus: om,
        omega_res: -3.0 * PI * res.value.re,
        gamma_sc: 6.0 * PI * res.value.im,
        d_omega_minus: dom,
        d_omega_res: -3.0 * PI * 2.0 * res.d_dz_sum.re,
        d_gamma_sc: 6.0 * PI * 2.0 * res.d_dz_sum.im,
        quad_error: e_minus.max(6.0 * PI * res.error),
    })
}

/// Free-space exchange and decay between z-dipoles a distance `u` apart
/// along x: `(Ω_free, Γ_free)` in units of `Γ0`.
pub fn free_pair(u: f64) -> Result<(f64, f64)> {
    if !(u > 0.0) {
        return Err(Error::Singular(format!(
            "free-space dipole-dipole coupling diverges at zero separation (u = {u})"
        )));
    }
    let g = greens_free([u, 0.0, 1.0], [0.0, 0.0, 1.0], Frequency::Real(1.0))?.zz();
    Ok((-3.0 * PI * g.re, 6.0 * PI * g.im))
}

/// Pair terms for emitters at lateral distance `rho`, both at height `z0`.
/// The free part is left at zero (and flagged by `NaN`) when `rho = 0`.
pub fn pair_natural(rho: f64, z0: f64, medium: &Medium, quad: &QuadratureSpec) -> Result<PairTerms> {
    let (omega_free, gamma_free) = if rho > 0.0 { free_pair(rho)? } else { (f64::NAN, 1.0) };
    let res = zz_resonant(rho, z0, medium, quad)?;
    Ok(PairTerms {
        separation: rho,
        omega_free,
        gamma_free,
        omega_sc: -3.0 * PI * res.value.re,
        gamma_sc: 6.0 * PI * res.value.im,
        d_omega_sc: -3.0 * PI * 2.0 * res.d_dz_sum.re,
        d_gamma_sc: 6.0 * PI * 2.0 * res.d_dz_sum.im,
        quad_error: 6.0 * PI * res.error,
    })
}

fn rel(err: f64, value: f64) -> f64 {
    if value == 0.0 {
        if err == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        err / value.abs()
    }
}

/// Assemble the full coupling set of a chain.
///
/// Every emitter sits at the same height, so the single-emitter terms are
/// shared and pair terms depend only on `|m − n|`. Pairs need `x0 > 0`
/// because the free-space exchange diverges for coincident emitters.
pub fn couplings(
    geometry: &Geometry,
    medium: &Medium,
    emitter: &EmitterParams,
    quad: &QuadratureSpec,
) -> Result<CouplingSet> {
    check_inputs(geometry, medium, emitter, quad)?;
    let n = geometry.n;
    if n > 1 && geometry.x0 == 0.0 {
        return Err(Error::Geometry(
            "coincident emitters: the free-space exchange Ω_mn diverges at x0 = 0".into(),
        ));
    }
    let m = medium.normalized(emitter.omega0);
    let single = single_emitter_natural(geometry.z0, &m, quad)?;
    let pairs = (1..n)
        .map(|d| pair_natural(d as f64 * geometry.x0, geometry.z0, &m, quad))
        .collect::<Result<Vec<_>>>()?;

    let mut max_abs = single.quad_error;
    let mut max_rel = rel(single.quad_error, single.gamma_sc.abs().max(single.omega_res.abs()));
    for p in &pairs {
        max_abs = max_abs.max(p.quad_error);
        max_rel = max_rel.max(rel(p.quad_error, p.gamma_sc.abs().max(p.omega_sc.abs())));
    }

    let mat = |f: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| f(i, j)).collect()).collect()
    };
    let pair = |i: usize, j: usize| &pairs[i.abs_diff(j) - 1];
    let off = |i: usize, j: usize, g: &dyn Fn(&PairTerms) -> f64| if i == j { 0.0 } else { g(pair(i, j)) };

    Ok(CouplingSet {
        geometry: *geometry,
        medium: *medium,
        emitter: *emitter,
        omega_plus: vec![single.omega_plus(); n],
        omega_minus: vec![single.omega_minus; n],
        omega_res: vec![single.omega_res; n],
        d_omega_plus: vec![single.d_omega_plus(); n],
        d_omega_minus: vec![single.d_omega_minus; n],
        d_omega_res: vec![single.d_omega_res; n],
        omega_dd_free: mat(&|i, j| off(i, j, &|p| p.omega_free)),
        omega_dd_sc: mat(&|i, j| off(i, j, &|p| p.omega_sc)),
        d_omega_dd_sc: mat(&|i, j| off(i, j, &|p| p.d_omega_sc)),
        gamma_free: mat(&|i, j| if i == j { 1.0 } else { pair(i, j).gamma_free }),
        gamma_sc: mat(&|i, j| if i == j { single.gamma_sc } else { pair(i, j).gamma_sc }),
        d_gamma_sc: mat(&|i, j| if i == j { single.d_gamma_sc } else { pair(i, j).d_gamma_sc }),
        quadrature: QuadratureReport {
            spec: *quad,
            max_abs_error: max_abs,
            max_rel_error: max_rel,
        },
    })
}

/// Thread-safe memo of coupling sets keyed by their full input.
#[derive(Debug, Default)]
pub struct CouplingCache {
    entries: RwLock<HashMap<String, Arc<CouplingSet>>>,
}

impl CouplingCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(geometry: &Geometry, medium: &Medium, emitter: &EmitterParams, quad: &QuadratureSpec) -> String {
        // Serialized f64s round-trip exactly, so equal keys mean equal inputs.
        serde_json::to_string(&(geometry, medium, emitter, quad)).expect("plain data serializes")
    }

    pub fn get_or_compute(
        &self,
        geometry: &Geometry,
        medium: &Medium,
        emitter: &EmitterParams,
        quad: &QuadratureSpec,
    ) -> Result<Arc<CouplingSet>> {
        let key = Self::key(geometry, medium, emitter, quad);
        if let Some(hit) = self.entries.read().expect("cache lock poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let fresh = Arc::new(couplings(geometry, medium, emitter, quad)?);
        let mut map = self.entries.write().expect("cache lock poisoned");
        Ok(Arc::clone(map.entry(key).or_insert(fresh)))
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Near-field (`z0 ≪ 1`) closed forms for a pair of emitters.
///
/// `f_g`, `f_e`, `f_inf` are totals over both emitters (units of `ħΓ0k0`);
/// `f_g_single` and `f_e_single` are the per-emitter values. The rate
/// entries are surface contributions in units of `Γ0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonretardedForms {
    pub f_g: f64,
    pub f_e: f64,
    pub f_g_single: f64,
    pub f_e_single: f64,
    pub f_inf: f64,
    pub cooperativity: f64,
    pub g: f64,
    pub gamma_nn_sc: f64,
    pub gamma_mn_sc: f64,
    pub warnings: Vec<String>,
}

/// Height above which the near-field forms are flagged as unreliable.
pub const NONRETARDED_WARN_HEIGHT: f64 = 0.3;
/// Smallest allowed `|ωp² − 2ω0²| / ωp²`.
pub const PLASMON_GUARD: f64 = 1e-3;

/// `(8z⁴/3) ∫ κ (κ²+1) e^{−2κz} J0(x√(κ²+1)) dκ`.
pub fn cooperativity(x0: f64, z0: f64, quad: &QuadratureSpec) -> Result<f64> {
    let v = near_field_integral(x0, z0, quad, |k| k)?;
    Ok(8.0 * z0.powi(4) / 3.0 * v)
}

/// `∫ (κ²+1) e^{−2κz} J0(x√(κ²+1)) dκ`.
pub fn g_function(x0: f64, z0: f64, quad: &QuadratureSpec) -> Result<f64> {
    near_field_integral(x0, z0, quad, |_| 1.0)
}

fn near_field_integral(x0: f64, z0: f64, quad: &QuadratureSpec, weight: impl Fn(f64) -> f64) -> Result<f64> {
    if !(z0 > 0.0) || !(x0 >= 0.0) {
        return Err(Error::Geometry(format!("need z0 > 0 and x0 >= 0, got z0 = {z0}, x0 = {x0}")));
    }
    let scale = 2.0 * z0;
    let integrand = |u: f64| {
        let k = u / scale;
        let q = k * k + 1.0;
        let j = if x0 == 0.0 { 1.0 } else { libm::j0(x0 * q.sqrt()) };
        [weight(k) * q * j * (-u).exp() / scale]
    };
    let mut cutoff = quad.tail_cutoff;
    loop {
        let est = integrate::<1, _>(integrand, 0.0, cutoff, quad)?;
        let edge = integrand(cutoff)[0].abs() * 4.0;
        if edge <= quad.rel_tol * est.value[0].abs() || cutoff > 4.0 * quad.tail_cutoff {
            return Ok(est.value[0]);
        }
        cutoff += 20.0;
    }
}

/// Near-field closed forms for a pair at `(x0, z0)` (units of `1/k0`).
pub fn nonretarded_closed_forms(
    x0: f64,
    z0: f64,
    medium: &Medium,
    emitter: &EmitterParams,
    quad: &QuadratureSpec,
) -> Result<NonretardedForms> {
    medium.validate()?;
    emitter.validate()?;
    let mut warnings = Vec::new();
    if z0 > NONRETARDED_WARN_HEIGHT {
        warnings.push(format!(
            "k0 z0 = {z0} exceeds {NONRETARDED_WARN_HEIGHT}; near-field forms are not reliable here"
        ));
    }
    let m = medium.normalized(emitter.omega0);
    // a = ωp/ω0; `None` stands for the perfect-conductor limit a → ∞.
    let (a, image) = match m {
        Medium::Vacuum => (Some(0.0), num_complex::Complex64::new(0.0, 0.0)),
        Medium::PerfectConductor => (None, num_complex::Complex64::new(1.0, 0.0)),
        Medium::Drude { plasma_frequency, .. } => {
            let eps = m.permittivity(Frequency::Real(1.0))?;
            (Some(plasma_frequency), (eps - 1.0) / (eps + 1.0))
        }
    };
    let s2 = 2.0_f64.sqrt();
    let z4 = z0.powi(4);
    let (f_g_single, f_e_single, f_inf) = match a {
        None => {
            let v = -9.0 / (32.0 * z4);
            (v, v, 2.0 * v)
        }
        Some(a) if a == 0.0 => (0.0, 0.0, 0.0),
        Some(a) => {
            let gap = (a * a - 2.0) / (a * a);
            if gap.abs() < PLASMON_GUARD {
                return Err(Error::PlasmonResonance { relative_gap: gap.abs() });
            }
            (
                -9.0 * a / (32.0 * (a + s2) * z4),
                -9.0 * a / (32.0 * (a - s2) * z4),
                -9.0 * a * a / (16.0 * (a * a - 2.0) * z4),
            )
        }
    };
    let coop = cooperativity(x0, z0, quad)?;
    let g = g_function(x0, z0, quad)?;
    Ok(NonretardedForms {
        f_g: 2.0 * f_g_single,
        f_e: 2.0 * f_e_single,
        f_g_single,
        f_e_single,
        f_inf,
        cooperativity: coop,
        g,
        gamma_nn_sc: 3.0 / (8.0 * z0.powi(3)) * image.im,
        gamma_mn_sc: 1.5 * image.im * g,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::angular_frequency_from_wavelength;

    fn emitter() -> EmitterParams {
        EmitterParams::new(angular_frequency_from_wavelength(700e-9), 1.0 / 26e-9).unwrap()
    }

    fn quad() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn dipole_moment_reproduces_linewidth() {
        let e = emitter();
        let d = e.dipole_moment();
        let back = e.omega0.powi(3) * d * d / (3.0 * PI * EPSILON_0 * HBAR * SPEED_OF_LIGHT.powi(3));
        assert!((back / e.gamma0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_pair_matches_closed_forms() {
        for u in [0.05, 0.7, 2.0, 9.3] {
            let (om, ga) = free_pair(u).unwrap();
            let om_ref = -0.75 * (u.cos() / u - u.sin() / (u * u) - u.cos() / u.powi(3));
            let ga_ref = 1.5 * (u.sin() / u + u.cos() / (u * u) - u.sin() / u.powi(3));
            assert!((om - om_ref).abs() < 1e-12 * om_ref.abs().max(1.0), "{u}: {om} {om_ref}");
            assert!((ga - ga_ref).abs() < 1e-9 * ga_ref.abs().max(1.0), "{u}: {ga} {ga_ref}");
        }
        assert!(free_pair(0.0).is_err());
    }

    #[test]
    fn vacuum_has_no_surface_terms() {
        let g = Geometry::new(3, 0.2, 0.05).unwrap();
        let c = couplings(&g, &Medium::Vacuum, &emitter(), &quad()).unwrap();
        assert!(c.omega_minus.iter().chain(&c.omega_res).all(|v| *v == 0.0));
        assert!(c.gamma_sc.iter().flatten().all(|v| *v == 0.0));
        assert!(c.d_omega_dd_sc.iter().flatten().all(|v| *v == 0.0));
        assert_eq!(c.gamma_free[0][0], 1.0);
    }

    #[test]
    fn perfect_conductor_ground_shift() {
        // r_p = 1 makes the transverse integral elementary:
        // s² G_zz(is) = −e^{−sZ}(2/Z³ + 2s/Z²)/(4π), Z = 2 z0.
        let z = 0.01;
        let zs = 2.0 * z;
        let q = QuadratureSpec { rel_tol: 1e-12, ..quad() };
        let outer = |f: &dyn Fn(f64) -> f64| {
            crate::quadrature::integrate_scalar(|u| { let s = u.tan(); if s.is_finite() { f(s) } else { 0.0 } }, 0.0, 0.5 * PI, &q).unwrap().0
        };
        let want = -3.0 / (4.0 * PI) * outer(&|s| (-s * zs).exp() * (2.0 / zs.powi(3) + 2.0 * s / zs.powi(2)));
        let want_d = -3.0 / (4.0 * PI)
            * 2.0
            * outer(&|s| {
                (-s * zs).exp() * (-s * (2.0 / zs.powi(3) + 2.0 * s / zs.powi(2)) - 6.0 / zs.powi(4) - 4.0 * s / zs.powi(3))
            });
        let ([om, dom], _) = omega_minus_natural(z, &Medium::PerfectConductor, &quad()).unwrap();
        assert!((om / want - 1.0).abs() < 1e-8, "{om} vs {want}");
        assert!((dom / want_d - 1.0).abs() < 1e-8, "{dom} vs {want_d}");
        // Lennard-Jones image energy −d²/(32πε0 z³) = −3/(32 z³) sets the scale.
        assert!((om / (-3.0 / (32.0 * z.powi(3))) - 1.0).abs() < 0.05);
    }

    #[test]
    fn single_emitter_decay_matches_image_formula() {
        let z = 0.01;
        let e = emitter();
        let m = Medium::gold().normalized(e.omega0);
        let s = single_emitter_natural(z, &m, &quad()).unwrap();
        let cf = nonretarded_closed_forms(0.0, z, &Medium::gold(), &e, &quad()).unwrap();
        assert!((s.gamma_sc / cf.gamma_nn_sc - 1.0).abs() < 0.02);
        // Image law: the height derivative is −3/z0 times the value.
        assert!((s.d_gamma_sc / (-3.0 * s.gamma_sc / z) - 1.0).abs() < 0.03);
        assert!((s.d_omega_res / (-3.0 * s.omega_res / z) - 1.0).abs() < 0.03);
    }

    fn five_point(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let m = Medium::gold().normalized(emitter().omega0);
        let q = QuadratureSpec { rel_tol: 1e-12, ..quad() };
        let z = 0.05;
        let h = 1e-4_f64.min(1e-2 * z);
        let s = single_emitter_natural(z, &m, &q).unwrap();
        let fd = five_point(|z| omega_minus_natural(z, &m, &q).unwrap().0[0], z, h);
        assert!((s.d_omega_minus / fd - 1.0).abs() < 1e-5, "{} {fd}", s.d_omega_minus);
        let p = pair_natural(0.3, z, &m, &q).unwrap();
        let fd = five_point(|z| pair_natural(0.3, z, &m, &q).unwrap().omega_sc, z, h);
        assert!((p.d_omega_sc / fd - 1.0).abs() < 1e-5, "{} {fd}", p.d_omega_sc);
        let fd = five_point(|z| pair_natural(0.3, z, &m, &q).unwrap().gamma_sc, z, h);
        assert!((p.d_gamma_sc / fd - 1.0).abs() < 1e-5, "{} {fd}", p.d_gamma_sc);
    }

    #[test]
    fn scattered_exchange_limits() {
        let m = Medium::gold().normalized(emitter().omega0);
        let z = 0.01;
        let s = single_emitter_natural(z, &m, &quad()).unwrap();
        let near = pair_natural(1e-4, z, &m, &quad()).unwrap();
        assert!((near.omega_sc / s.omega_res - 1.0).abs() < 1e-3);
        let far = pair_natural(50.0, z, &m, &quad()).unwrap();
        assert!(far.omega_sc.abs() < 1e-3 * s.omega_res.abs());
    }

    #[test]
    fn free_parts_do_not_depend_on_height() {
        let e = emitter();
        let a = couplings(&Geometry::new(3, 0.4, 0.02).unwrap(), &Medium::gold(), &e, &quad()).unwrap();
        let b = couplings(&Geometry::new(3, 0.4, 0.2).unwrap(), &Medium::gold(), &e, &quad()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a.omega_dd_free[i][j], b.omega_dd_free[i][j]);
                assert_eq!(a.gamma_free[i][j], b.gamma_free[i][j]);
            }
        }
    }

    #[test]
    fn coupling_set_symmetry_and_psd() {
        let c = couplings(&Geometry::new(4, 0.05, 0.02).unwrap(), &Medium::gold(), &emitter(), &quad()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(c.gamma_sc[i][j], c.gamma_sc[j][i]);
                assert_eq!(c.omega_dd_sc[i][j], c.omega_dd_sc[j][i]);
            }
        }
        c.check_psd(1e-10).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        let back: CouplingSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn coincident_chain_rejected() {
        let g = Geometry::new(2, 0.0, 0.02).unwrap();
        assert!(couplings(&g, &Medium::gold(), &emitter(), &quad()).is_err());
        assert!(Geometry::new(2, 0.1, 0.0).is_err());
        assert!(Geometry::new(0, 0.1, 0.1).is_err());
    }

    #[test]
    fn cache_reuses_entries() {
        let cache = CouplingCache::new();
        let g = Geometry::new(2, 0.1, 0.03).unwrap();
        let a = cache.get_or_compute(&g, &Medium::gold(), &emitter(), &quad()).unwrap();
        let b = cache.get_or_compute(&g, &Medium::gold(), &emitter(), &quad()).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn closed_form_identities() {
        let e = emitter();
        let cf = nonretarded_closed_forms(0.0, 0.01, &Medium::gold(), &e, &quad()).unwrap();
        assert!(((cf.f_g + cf.f_e) / 2.0 / cf.f_inf - 1.0).abs() < 1e-14);
        assert!((cf.cooperativity - (1.0 + 2.0 / 3.0 * 1e-4)).abs() < 1e-12);
        assert!((cf.f_inf / -6.1e7 - 1.0).abs() < 0.01, "{}", cf.f_inf);
        // Coincident limit of the cross rate equals the single-emitter rate.
        assert!((cf.gamma_mn_sc / cf.gamma_nn_sc - 1.0).abs() < 1e-3);
        assert!(cf.warnings.is_empty());
        let far = nonretarded_closed_forms(50.0, 0.01, &Medium::gold(), &e, &quad()).unwrap();
        assert!(far.cooperativity.abs() < 1e-3);
        let high = nonretarded_closed_forms(0.0, 0.5, &Medium::gold(), &e, &quad()).unwrap();
        assert_eq!(high.warnings.len(), 1);
    }

    #[test]
    fn plasmon_pole_guard() {
        let e = emitter();
        let m = Medium::drude(2.0_f64.sqrt() * e.omega0, 1e13).unwrap();
        assert!(matches!(
            nonretarded_closed_forms(0.0, 0.01, &m, &e, &quad()),
            Err(Error::PlasmonResonance { .. })
        ));
    }
}
