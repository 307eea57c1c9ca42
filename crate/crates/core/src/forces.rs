//! Collective Casimir-Polder force on the emitter chain.
//!
//! For the interaction-picture Hamiltonian
//! `H = Σ Ω⁺σ⁺σ⁻ + Ω⁻σ⁻σ⁺ + Σ_{m>n} Ω_mn (σ_m⁻σ_n⁺ + h.c.)`
//! the force along +z is `F[ρ] = −∂_{z0} Tr[Hρ]`. Only the surface part of
//! `Ω_mn` depends on height. Attraction towards the surface is negative.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{
    pair_natural, single_emitter_natural, CouplingSet, EmitterParams, Geometry, PairTerms,
    SingleEmitterTerms,
};
use crate::dicke::{binomial, check_emitter_count, pair_correlator, subradiant_basis, QuantumState};
use crate::error::{Error, Result};
use crate::media::Medium;
use crate::quadrature::QuadratureSpec;

/// `F[ρ]` in units of `ħ Γ0 k0`.
pub fn force_of_state(state: &QuantumState, c: &CouplingSet) -> Result<f64> {
    let n = c.n();
    if state.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "state has {} emitters, couplings have {n}",
            state.n()
        )));
    }
    let mut f = 0.0;
    for i in 0..n {
        let p = state.population(i);
        f -= c.d_omega_plus[i] * p + c.d_omega_minus[i] * (1.0 - p);
    }
    for m in 0..n {
        for k in 0..m {
            f -= c.d_omega_dd_sc[m][k] * pair_correlator(state, m, k)?;
        }
    }
    Ok(f)
}

/// Forces and collective rates of the two-emitter reference states
/// (forces in `ħΓ0k0`, rates in `Γ0`, including the free-space parts).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecialForces {
    pub f_g: f64,
    pub f_e: f64,
    pub f_sup: f64,
    pub f_sub: f64,
    pub f_inf: f64,
    pub gamma_sup: f64,
    pub gamma_sub: f64,
    pub gamma_nn: f64,
}

fn special_from_terms(s: &SingleEmitterTerms, p: &PairTerms) -> SpecialForces {
    let f_g = -2.0 * s.d_omega_minus;
    let f_e = -2.0 * s.d_omega_plus();
    let f_sup = -(s.d_omega_res + p.d_omega_sc);
    let f_sub = -(s.d_omega_res - p.d_omega_sc);
    let gamma_nn = 1.0 + s.gamma_sc;
    let gamma_12 = p.gamma_free + p.gamma_sc;
    SpecialForces {
        f_g,
        f_e,
        f_sup,
        f_sub,
        f_inf: 0.5 * (f_g + f_e),
        gamma_sup: gamma_nn + gamma_12,
        gamma_sub: gamma_nn - gamma_12,
        gamma_nn,
    }
}

/// Reference-state forces for a pair with spacing `x0` at height `z0` (units
/// of `1/k0`), from the full quadrature coefficients.
pub fn special_state_forces(
    x0: f64,
    z0: f64,
    medium: &Medium,
    emitter: &EmitterParams,
    quad: &QuadratureSpec,
) -> Result<SpecialForces> {
    let g = Geometry::new(2, x0, z0)?;
    if !(g.x0 > 0.0) {
        return Err(Error::Geometry("the pair needs x0 > 0".into()));
    }
    let m = medium.normalized(emitter.omega0);
    let s = single_emitter_natural(z0, &m, quad)?;
    let p = pair_natural(x0, z0, &m, quad)?;
    Ok(special_from_terms(&s, &p))
}

/// Same as [`special_state_forces`] but read from an existing coupling set
/// (emitters 1 and 2).
pub fn special_forces_from_couplings(c: &CouplingSet) -> Result<SpecialForces> {
    if c.n() != 2 {
        return Err(Error::EmitterCount(format!("reference states need N = 2, got {}", c.n())));
    }
    let s = SingleEmitterTerms {
        omega_minus: c.omega_minus[0],
        omega_res: c.omega_res[0],
        gamma_sc: c.gamma_sc[0][0],
        d_omega_minus: c.d_omega_minus[0],
        d_omega_res: c.d_omega_res[0],
        d_gamma_sc: c.d_gamma_sc[0][0],
        quad_error: c.quadrature.max_abs_error,
    };
    let p = PairTerms {
        separation: c.geometry.x0,
        omega_free: c.omega_dd_free[0][1],
        gamma_free: c.gamma_free[0][1],
        omega_sc: c.omega_dd_sc[0][1],
        gamma_sc: c.gamma_sc[0][1],
        d_omega_sc: c.d_omega_dd_sc[0][1],
        d_gamma_sc: c.d_gamma_sc[0][1],
        quad_error: c.quadrature.max_abs_error,
    };
    Ok(special_from_terms(&s, &p))
}

/// Force on the half-filled symmetric Dicke state `|N/2, 0⟩` from the
/// binomial closed form
/// `−½ Σ ∂Ω_res − 2 C(N−2, N/2−1)/C(N, N/2) Σ_{m>n} ∂Ω_mn^sc`.
pub fn superradiant_force_n(c: &CouplingSet) -> Result<f64> {
    let n = c.n();
    if n % 2 != 0 || n == 0 {
        return Err(Error::EmitterCount(format!("the half-filled Dicke state needs even N, got {n}")));
    }
    let weight = 2.0 * binomial(n - 2, n / 2 - 1) / binomial(n, n / 2);
    let single: f64 = c.d_omega_res.iter().sum();
    let mut pairs = 0.0;
    for m in 0..n {
        for k in 0..m {
            pairs += c.d_omega_dd_sc[m][k];
        }
    }
    Ok(-0.5 * single - weight * pairs)
}

/// Forces on an orthonormal basis of the `J = 0` sector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubradiantForces {
    pub forces: Vec<f64>,
    pub min: f64,
    pub max: f64,
    /// Basis-independent sum of the forces.
    pub trace: f64,
}

pub fn subradiant_force_spread(c: &CouplingSet) -> Result<SubradiantForces> {
    let n = c.n();
    check_emitter_count(n)?;
    let forces = subradiant_basis(n)?
        .iter()
        .map(|s| force_of_state(s, c))
        .collect::<Result<Vec<_>>>()?;
    let min = forces.iter().copied().fold(f64::INFINITY, f64::min);
    let max = forces.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let trace = forces.iter().sum();
    Ok(SubradiantForces { forces, min, max, trace })
}

/// Grid of a force map in units of `1/k0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapGrid {
    pub x0: Vec<f64>,
    pub z0: Vec<f64>,
}

pub const MAP_Z_RANGE: (f64, f64) = (1e-3, 1.0);
pub const MAP_X_RANGE: (f64, f64) = (1e-4, 10.0);

impl MapGrid {
    /// `count` log-spaced points in `[lo, hi]`.
    pub fn log_axis(lo: f64, hi: f64, count: usize) -> Vec<f64> {
        match count {
            0 => vec![],
            1 => vec![lo],
            _ => (0..count)
                .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (count - 1) as f64).exp())
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x0.is_empty() || self.z0.is_empty() {
            return Err(Error::Parameter {
                field: "map".into(),
                reason: "grid is empty".into(),
            });
        }
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12);
        if let Some(z) = self.z0.iter().find(|z| !inside(**z, MAP_Z_RANGE)) {
            return Err(Error::Parameter {
                field: "map.z0".into(),
                reason: format!("{z} lies outside [{}, {}]", MAP_Z_RANGE.0, MAP_Z_RANGE.1),
            });
        }
        if let Some(x) = self.x0.iter().find(|x| !inside(**x, MAP_X_RANGE)) {
            return Err(Error::Parameter {
                field: "map.x0".into(),
                reason: format!("{x} lies outside [{}, {}]", MAP_X_RANGE.0, MAP_X_RANGE.1),
            });
        }
        Ok(())
    }
}

/// One grid point of a force map. Values are NaN when `failed` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub x0: f64,
    pub z0: f64,
    pub forces: SpecialForces,
    pub failed: bool,
}

/// A grid point whose quadrature failed, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFailure {
    pub x0: f64,
    pub z0: f64,
    pub reason: String,
}

/// Reference-state forces and rates over an `(x0, z0)` grid, ordered with
/// `z0` as the outer and `x0` as the inner index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceMap {
    pub medium: Medium,
    pub emitter: EmitterParams,
    pub points: Vec<MapPoint>,
    pub failures: Vec<MapFailure>,
}

pub const MAP_COLUMNS: [&str; 11] = [
    "x0_k0", "z0_k0", "F_g", "F_e", "F_sup", "F_sub", "F_inf", "Gam_sup", "Gam_sub", "Gam_nn", "quad_err_flag",
];

fn nan_forces() -> SpecialForces {
    let n = f64::NAN;
    SpecialForces {
        f_g: n,
        f_e: n,
        f_sup: n,
        f_sub: n,
        f_inf: n,
        gamma_sup: n,
        gamma_sub: n,
        gamma_nn: n,
    }
}

/// Evaluate the map in parallel. Failed points become NaN rows listed in
/// `failures`; they never abort the sweep.
pub fn force_map(grid: &MapGrid, medium: &Medium, emitter: &EmitterParams, quad: &QuadratureSpec) -> Result<ForceMap> {
    grid.validate()?;
    medium.validate()?;
    emitter.validate()?;
    quad.validate()?;
    let m = medium.normalized(emitter.omega0);
    // Single-emitter terms depend on height only.
    let singles: Vec<Result<SingleEmitterTerms>> =
        grid.z0.par_iter().map(|&z| single_emitter_natural(z, &m, quad)).collect();
    let jobs: Vec<(usize, usize)> = (0..grid.z0.len())
        .flat_map(|iz| (0..grid.x0.len()).map(move |ix| (iz, ix)))
        .collect();
    let results: Vec<(MapPoint, Option<MapFailure>)> = jobs
        .par_iter()
        .map(|&(iz, ix)| {
            let (x, z) = (grid.x0[ix], grid.z0[iz]);
            let outcome = singles[iz]
                .clone()
                .and_then(|s| pair_natural(x, z, &m, quad).map(|p| special_from_terms(&s, &p)));
            match outcome {
                Ok(forces) => (
                    MapPoint {
                        x0: x,
                        z0: z,
                        forces,
                        failed: false,
                    },
                    None,
                ),
                Err(e) => (
                    MapPoint {
                        x0: x,
                        z0: z,
                        forces: nan_forces(),
                        failed: true,
                    },
                    Some(MapFailure {
                        x0: x,
                        z0: z,
                        reason: e.to_string(),
                    }),
                ),
            }
        })
        .collect();
    let (points, failures): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(ForceMap {
        medium: *medium,
        emitter: *emitter,
        points,
        failures: failures.into_iter().flatten().collect(),
    })
}

/// Format with nine significant digits.
pub fn sig9(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.8e}")
    }
}

impl ForceMap {
    /// Write the CSV table; `preamble` lines are emitted first as `# ...`
    /// comments.
    pub fn write_csv<W: Write>(&self, mut w: W, preamble: &[String]) -> std::io::Result<()> {
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "{}", MAP_COLUMNS.join(","))?;
        for p in &self.points {
            let f = &p.forces;
            let cells = [
                sig9(p.x0),
                sig9(p.z0),
                sig9(f.f_g),
                sig9(f.f_e),
                sig9(f.f_sup),
                sig9(f.f_sub),
                sig9(f.f_inf),
                sig9(f.gamma_sup),
                sig9(f.gamma_sub),
                sig9(f.gamma_nn),
                (p.failed as u8).to_string(),
            ];
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Forces on the `J = 0` basis at one spacing, with the all-ground and
/// all-excited reference forces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubradiantRow {
    pub x0: f64,
    pub forces: Vec<f64>,
    pub f_ground: f64,
    pub f_excited: f64,
}

/// Subradiant forces of an `n`-emitter chain at height `z0` over spacings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubradiantSweep {
    pub n: usize,
    pub z0: f64,
    pub rows: Vec<SubradiantRow>,
}

pub fn subradiant_sweep(
    n: usize,
    z0: f64,
    x0: &[f64],
    medium: &Medium,
    emitter: &EmitterParams,
    quad: &QuadratureSpec,
) -> Result<SubradiantSweep> {
    check_emitter_count(n)?;
    let basis = subradiant_basis(n)?;
    if x0.is_empty() {
        return Err(Error::Parameter {
            field: "subradiant.x0_k0".into(),
            reason: "grid is empty".into(),
        });
    }
    let (ground, excited) = (QuantumState::ground(n)?, QuantumState::all_excited(n)?);
    let rows = x0
        .par_iter()
        .map(|&x| {
            let c = crate::coeffs::couplings(&Geometry::new(n, x, z0)?, medium, emitter, quad)?;
            Ok(SubradiantRow {
                x0: x,
                forces: basis.iter().map(|s| force_of_state(s, &c)).collect::<Result<_>>()?,
                f_ground: force_of_state(&ground, &c)?,
                f_excited: force_of_state(&excited, &c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubradiantSweep { n, z0, rows })
}

impl SubradiantSweep {
    pub fn columns(&self) -> Vec<String> {
        let d = self.rows.first().map_or(0, |r| r.forces.len());
        ["x0_k0".to_string(), "z0_k0".to_string()]
            .into_iter()
            .chain((1..=d).map(|i| format!("F_sub_{i}")))
            .chain(["F_g".to_string(), "F_e".to_string()])
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W, preamble: &[String]) -> std::io::Result<()> {
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "{}", self.columns().join(","))?;
        for r in &self.rows {
            let cells: Vec<String> = [r.x0, self.z0]
                .into_iter()
                .chain(r.forces.iter().copied())
                .chain([r.f_ground, r.f_excited])
                .map(sig9)
                .collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}
