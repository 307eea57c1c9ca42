//! Dyadic Green's tensors of a planar half-space.
//!
//! All quantities are dimensionless: positions in units of `1/k0`, frequencies
//! in units of `ω0`, tensors in units of `k0`, and the medium must already be
//! normalized with [`Medium::normalized`]. With `c = 1` the Sommerfeld-type
//! integral for the reflected part reads
//!
//! ```text
//! G_sc = 1/(8π) ∫ dk k/κ e^{-κZ} [ M_s r_s − (1/s²) M_p r_p ],   κ² = s² + k²
//! ```
//!
//! where `s` is the complex frequency argument (`s = ξ` at `ω = iξ`,
//! `s = −iω` on the real axis). Substituting `κ` for `k` turns `k/κ dk` into
//! `dκ`. On the real axis the integral splits into a propagating sector
//! (`κ = −i t`, `t ∈ [0, ω]`, radiating phase `e^{itZ}`) and an evanescent
//! sector (`κ ∈ [0, ∞)`).

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::media::{fresnel, Frequency, Medium, Transverse};
use crate::quadrature::{integrate, QuadratureSpec};

/// Which part of the total Green's tensor a value represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Free,
    Scattering,
    /// Height derivative `∂/∂Z` of the scattering part, `Z = z1 + z2`.
    ScatteringDz,
}

/// A 3×3 complex tensor together with the arguments it was evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicTensor {
    pub entries: Matrix3<C64>,
    pub field_point: [f64; 3],
    pub source_point: [f64; 3],
    pub frequency: Frequency,
    pub part: Part,
    /// Quadrature error estimate (max-norm over entries); 0 for closed forms.
    pub error: f64,
}

impl DyadicTensor {
    /// `a · G · b` for real dipole vectors.
    pub fn project(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                acc += self.entries[(i, j)] * (a[i] * b[j]);
            }
        }
        acc
    }

    pub fn zz(&self) -> C64 {
        self.entries[(2, 2)]
    }
}

fn validate_frequency(freq: Frequency) -> Result<()> {
    match freq {
        Frequency::Real(w) if w > 0.0 && w.is_finite() => Ok(()),
        Frequency::Imaginary(xi) if xi > 0.0 && xi.is_finite() => Ok(()),
        other => Err(Error::InvalidFrequency(format!(
            "Green's tensors need a strictly positive frequency, got {other:?}"
        ))),
    }
}

fn check_above_surface(p: &[f64; 3]) -> Result<()> {
    if !(p[2] > 0.0) || p.iter().any(|c| !c.is_finite()) {
        return Err(Error::Geometry(format!(
            "point ({}, {}, {}) is not strictly above the surface",
            p[0], p[1], p[2]
        )));
    }
    Ok(())
}

/// Complex frequency argument `s` with `κ² = s² + k²`.
fn s_of(freq: Frequency) -> C64 {
    match freq {
        Frequency::Imaginary(xi) => C64::new(xi, 0.0),
        Frequency::Real(w) => C64::new(0.0, -w),
    }
}

/// Free-space Green's tensor between two distinct points.
pub fn greens_free(r1: [f64; 3], r2: [f64; 3], freq: Frequency) -> Result<DyadicTensor> {
    validate_frequency(freq)?;
    let d = Vector3::new(r1[0] - r2[0], r1[1] - r2[1], r1[2] - r2[2]);
    let r = d.norm();
    if r == 0.0 {
        return Err(Error::Singular(
            "the real part of the free Green's tensor diverges at coincident points; \
             use greens_free_coincident_imag"
                .into(),
        ));
    }
    let s = s_of(freq);
    let chi = s * r;
    let g = 1.0 + chi + chi * chi;
    let h = 3.0 + 3.0 * chi + chi * chi;
    let pre = (-chi).exp() / (4.0 * PI * s * s * r * r * r);
    let unit = d / r;
    let mut entries = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let delta = if i == j { g } else { C64::new(0.0, 0.0) };
            entries[(i, j)] = pre * (delta - h * (unit[i] * unit[j]));
        }
    }
    Ok(DyadicTensor {
        entries,
        field_point: r1,
        source_point: r2,
        frequency: freq,
        part: Part::Free,
        error: 0.0,
    })
}

/// Finite imaginary part of the free tensor at coincident points on the real
/// axis, `Im G_free(r, r, ω) = ω/(6π) I`. The real part is not defined there.
pub fn greens_free_coincident_imag(omega: f64) -> Result<DyadicTensor> {
    validate_frequency(Frequency::Real(omega))?;
    let v = C64::new(0.0, omega / (6.0 * PI));
    let entries = Matrix3::from_diagonal_element(v);
    Ok(DyadicTensor {
        entries,
        field_point: [0.0; 3],
        source_point: [0.0; 3],
        frequency: Frequency::Real(omega),
        part: Part::Free,
        error: 0.0,
    })
}

/// Integrate a complex vector-valued integrand; `K` must equal `2 * M`.
fn integrate_complex<const M: usize, const K: usize, F>(
    mut f: F,
    lower: f64,
    upper: f64,
    spec: &QuadratureSpec,
) -> Result<([C64; M], f64)>
where
    F: FnMut(f64) -> [C64; M],
{
    assert_eq!(K, 2 * M);
    let est = integrate::<K, _>(
        |x| {
            let v = f(x);
            let mut out = [0.0; K];
            for (i, c) in v.iter().enumerate() {
                out[2 * i] = c.re;
                out[2 * i + 1] = c.im;
            }
            out
        },
        lower,
        upper,
        spec,
    )?;
    let mut value = [C64::new(0.0, 0.0); M];
    for (i, v) in value.iter_mut().enumerate() {
        *v = C64::new(est.value[2 * i], est.value[2 * i + 1]);
    }
    Ok((value, est.error))
}

/// `∫_{κ0}^{∞} dκ e^{-(κ-κ0) Z} f(κ0, q)` with `q = κ − κ0 = u/Z`, truncated
/// once the envelope makes the remaining tail negligible. `f` receives the
/// offset `q` separately so `κ² − κ0²` can be formed without cancellation, and
/// must already include the factor `e^{-κ0 Z}` if the caller wants it.
fn integrate_decaying<const M: usize, const K: usize, F>(
    f: F,
    kappa0: f64,
    z_sum: f64,
    spec: &QuadratureSpec,
) -> Result<([C64; M], f64)>
where
    F: Fn(f64, f64) -> [C64; M],
{
    let scaled = |u: f64| {
        let v = f(kappa0 + u / z_sum, u / z_sum);
        let w = (-u).exp() / z_sum;
        v.map(|c| c * w)
    };
    let mut cutoff = spec.tail_cutoff;
    loop {
        let (value, err) = integrate_complex::<M, K, _>(scaled, 0.0, cutoff, spec)?;
        // e^{-u} poly(u) with degree <= 4: the tail is bounded by a few times the
        // integrand at the cutoff.
        let edge = scaled(cutoff).iter().fold(0.0_f64, |m, c| m.max(c.norm()));
        let tail = edge * (1.0 + 8.0 / cutoff) * 2.0;
        let scale = value.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
        if tail <= spec.abs_tol.max(spec.rel_tol * scale) || cutoff > 4.0 * spec.tail_cutoff {
            return Ok((value, err + tail));
        }
        cutoff += 20.0;
    }
}

/// Integrand building blocks at one transverse point.
struct Kernel {
    kappa: C64,
    k: f64,
    r_s: C64,
    r_p: C64,
    j0: f64,
    j1: f64,
    j2: f64,
}

impl Kernel {
    fn new(medium: &Medium, freq: Frequency, transverse: Transverse, k: f64, rho: f64) -> Result<Self> {
        let fr = fresnel(medium, transverse, freq)?;
        let x = k * rho;
        let (j0, j1, j2) = if x == 0.0 {
            (1.0, 0.0, 0.0)
        } else {
            (libm::j0(x), libm::j1(x), libm::jn(2, x))
        };
        Ok(Self {
            kappa: fr.kappa,
            k,
            r_s: fr.r_s,
            r_p: fr.r_p,
            j0,
            j1,
            j2,
        })
    }

    /// `[xx, yy, zz, xz]` of the bracket `M_s r_s − M_p r_p / s²` (lateral
    /// separation along +x).
    fn entries(&self, inv_s2: C64) -> [C64; 4] {
        let kap = self.kappa;
        let k = self.k;
        let p = -inv_s2 * self.r_p;
        [
            (self.j0 + self.j2) * self.r_s + p * kap * kap * (self.j0 - self.j2),
            (self.j0 - self.j2) * self.r_s + p * kap * kap * (self.j0 + self.j2),
            p * (2.0 * k * k * self.j0),
            p * (2.0 * k * self.j1) * kap,
        ]
    }
}

/// Sommerfeld integrals for `[xx, yy, zz, xz]` and their `∂/∂Z` for a pair
/// at lateral distance `rho` and height sum `z_sum`.
fn scatter_entries(
    rho: f64,
    z_sum: f64,
    freq: Frequency,
    medium: &Medium,
    quad: &QuadratureSpec,
) -> Result<([C64; 8], f64)> {
    let s = s_of(freq);
    let inv_s2 = 1.0 / (s * s);
    let pre = 1.0 / (8.0 * PI);
    let mut total = [C64::new(0.0, 0.0); 8];
    let mut error = 0.0;

    // Fresnel failures inside a closure are carried out through this cell.
    let failure = std::cell::RefCell::new(None);
    let eval = |transverse: Transverse, k: f64| -> [C64; 8] {
        match Kernel::new(medium, freq, transverse, k, rho) {
            Ok(kern) => {
                let e = kern.entries(inv_s2);
                let d = -kern.kappa;
                [e[0], e[1], e[2], e[3], e[0] * d, e[1] * d, e[2] * d, e[3] * d]
            }
            Err(err) => {
                failure.borrow_mut().get_or_insert(err);
                [C64::new(0.0, 0.0); 8]
            }
        }
    };

    match freq {
        Frequency::Imaginary(xi) => {
            let (v, err) = integrate_decaying::<8, 16, _>(
                |kappa, q| {
                    let k = (q * (2.0 * xi + q)).sqrt();
                    let w = (-xi * z_sum).exp();
                    eval(Transverse::Evanescent(kappa), k).map(|c| c * w)
                },
                xi,
                z_sum,
                quad,
            )?;
            total = v;
            error += err;
        }
        Frequency::Real(w) => {
            let (prop, err_p) = integrate_complex::<8, 16, _>(
                |t| {
                    let k = (w * w - t * t).max(0.0).sqrt();
                    let phase = C64::new(0.0, t * z_sum).exp() * C64::new(0.0, 1.0);
                    eval(Transverse::Propagating(t), k).map(|c| c * phase)
                },
                0.0,
                w,
                quad,
            )?;
            let (evan, err_e) = integrate_decaying::<8, 16, _>(
                |kappa, _| {
                    let k = (kappa * kappa + w * w).sqrt();
                    eval(Transverse::Evanescent(kappa), k)
                },
                0.0,
                z_sum,
                quad,
            )?;
            for i in 0..8 {
                total[i] = prop[i] + evan[i];
            }
            error += err_p + err_e;
        }
    }
    if let Some(err) = failure.into_inner() {
        return Err(err);
    }
    Ok((total.map(|c| c * pre), error * pre))
}

/// Rotate the in-frame entries `[xx, yy, zz, xz]` (separation along +x) to
/// the lab frame where the lateral separation points at angle `phi`.
fn assemble(e: &[C64], cos_phi: f64, sin_phi: f64) -> Matrix3<C64> {
    let zero = C64::new(0.0, 0.0);
    let frame = Matrix3::new(e[0], zero, e[3], zero, e[1], zero, -e[3], zero, e[2]);
    let rot = Matrix3::new(cos_phi, -sin_phi, 0.0, sin_phi, cos_phi, 0.0, 0.0, 0.0, 1.0).map(|x| C64::new(x, 0.0));
    rot * frame * rot.transpose()
}

fn scatter_tensor(
    r1: [f64; 3],
    r2: [f64; 3],
    freq: Frequency,
    medium: &Medium,
    quad: &QuadratureSpec,
    derivative: bool,
) -> Result<DyadicTensor> {
    validate_frequency(freq)?;
    check_above_surface(&r1)?;
    check_above_surface(&r2)?;
    let dx = r1[0] - r2[0];
    let dy = r1[1] - r2[1];
    let rho = dx.hypot(dy);
    let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (dx / rho, dy / rho) };
    let (vals, error) = scatter_entries(rho, r1[2] + r2[2], freq, medium, quad)?;
    let slice = if derivative { &vals[4..8] } else { &vals[0..4] };
    Ok(DyadicTensor {
        entries: assemble(slice, c, s),
        field_point: r1,
        source_point: r2,
        frequency: freq,
        part: if derivative { Part::ScatteringDz } else { Part::Scattering },
        error,
    })
}

/// Scattering Green's tensor at imaginary frequency `ξ` (real-valued for
/// lossy media).
pub fn greens_scatter_imag(
    r1: [f64; 3],
    r2: [f64; 3],
    xi: f64,
    medium: &Medium,
    quad: &QuadratureSpec,
) -> Result<DyadicTensor> {
    scatter_tensor(r1, r2, Frequency::Imaginary(xi), medium, quad, false)
}

/// Scattering Green's tensor at real frequency `ω`.
pub fn greens_scatter_real(
    r1: [f64; 3],
    r2: [f64; 3],
    omega: f64,
    medium: &Medium,
    quad: &QuadratureSpec,
) -> Result<DyadicTensor> {
    scatter_tensor(r1, r2, Frequency::Real(omega), medium, quad, false)
}

/// `∂G_sc/∂Z` at fixed lateral separation, differentiated under the integral.
pub fn greens_scatter_dz(
    r1: [f64; 3],
    r2: [f64; 3],
    freq: Frequency,
    medium: &Medium,
    quad: &QuadratureSpec,
) -> Result<DyadicTensor> {
    scatter_tensor(r1, r2, freq, medium, quad, true)
}

/// `zz` entry of `G_sc` at the real frequency `ω = 1` and its `Z`-derivative,
/// for a pair at lateral distance `rho` and common height `z` (so `Z = 2z`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZzResonant {
    pub value: C64,
    pub d_dz_sum: C64,
    pub error: f64,
}

pub fn zz_resonant(rho: f64, height: f64, medium: &Medium, quad: &QuadratureSpec) -> Result<ZzResonant> {
    check_above_surface(&[0.0, 0.0, height])?;
    let z_sum = 2.0 * height;
    let pre = 1.0 / (4.0 * PI);
    let failure = std::cell::RefCell::new(None);
    let rp = |t: Transverse| match fresnel(medium, t, Frequency::Real(1.0)) {
        Ok(f) => f.r_p,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            C64::new(0.0, 0.0)
        }
    };
    let bessel = |k: f64| if rho == 0.0 { 1.0 } else { libm::j0(k * rho) };
    // (k/κ) dk 2k² J0 / 8π with k² = 1 − t² or 1 + κ².
    let (prop, ep) = integrate_complex::<2, 4, _>(
        |t| {
            let k2 = 1.0 - t * t;
            let v = C64::new(0.0, 1.0) * C64::new(0.0, t * z_sum).exp() * rp(Transverse::Propagating(t))
                * (k2 * bessel(k2.max(0.0).sqrt()));
            [v, v * C64::new(0.0, t)]
        },
        0.0,
        1.0,
        quad,
    )?;
    let (evan, ee) = integrate_decaying::<2, 4, _>(
        |kappa, _| {
            let k2 = 1.0 + kappa * kappa;
            let v = rp(Transverse::Evanescent(kappa)) * (k2 * bessel(k2.sqrt()));
            [v, v * (-kappa)]
        },
        0.0,
        z_sum,
        quad,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(ZzResonant {
        value: (prop[0] + evan[0]) * pre,
        d_dz_sum: (prop[1] + evan[1]) * pre,
        error: (ep + ee) * pre,
    })
}

/// `s² G_sc,zz(r, r, is)` at a single point of height `z` and its
/// `Z`-derivative; the `s²` weight removes the `1/s²` of the `p` term.
pub(crate) fn zz_imaginary_weighted(
    s: f64,
    height: f64,
    medium: &Medium,
    quad: &QuadratureSpec,
) -> Result<([f64; 2], f64)> {
    let z_sum = 2.0 * height;
    let failure = std::cell::RefCell::new(None);
    let envelope = (-s * z_sum).exp();
    let (v, err) = integrate_decaying::<2, 4, _>(
        |kappa, q| {
            let r = match fresnel(medium, Transverse::Evanescent(kappa), Frequency::Imaginary(s)) {
                Ok(f) => f.r_p.re,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            };
            let v = -(q * (2.0 * s + q)) * r * envelope;
            [C64::new(v, 0.0), C64::new(-kappa * v, 0.0)]
        },
        s,
        z_sum,
        quad,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let pre = 1.0 / (4.0 * PI);
    Ok(([v[0].re * pre, v[1].re * pre], err * pre))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::angular_frequency_from_wavelength;

    fn gold() -> Medium {
        Medium::gold().normalized(angular_frequency_from_wavelength(700e-9))
    }

    fn quad() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn free_tensor_reciprocity_and_decay() {
        let a = [0.3, -0.2, 0.7];
        let b = [1.1, 0.4, 0.2];
        for f in [Frequency::Real(1.0), Frequency::Imaginary(0.8)] {
            let g12 = greens_free(a, b, f).unwrap().entries;
            let g21 = greens_free(b, a, f).unwrap().entries;
            assert!((g12 - g21.transpose()).norm() < 1e-14 * g12.norm());
        }
        // Fixed r, xi r = 10 vs xi r -> 0: prefactor e^{-xi r}.
        let near = greens_free([0.0; 3], [1.0, 0.0, 0.0], Frequency::Imaginary(1e-3)).unwrap();
        let far = greens_free([0.0; 3], [1.0, 0.0, 0.0], Frequency::Imaginary(10.0)).unwrap();
        let ratio_near = near.entries[(1, 1)].re * 1e-6 / (1.0 + 1e-3 + 1e-6);
        let ratio_far = far.entries[(1, 1)].re * 100.0 / (1.0 + 10.0 + 100.0);
        assert!((ratio_far / ratio_near - (-10.0f64 + 1e-3).exp()).abs() < 1e-12);
    }

    #[test]
    fn free_tensor_decay_rate_kernel() {
        // 6π Im G_zz for z-dipoles separated along x.
        for u in [1e-3, 0.1, 1.0, 3.7, 12.0] {
            let g = greens_free([u, 0.0, 1.0], [0.0, 0.0, 1.0], Frequency::Real(1.0)).unwrap();
            let got = 6.0 * PI * g.zz().im;
            let want = 1.5 * (u.sin() / u + u.cos() / (u * u) - u.sin() / (u * u * u));
            assert!((got - want).abs() < 1e-7 * want.abs().max(1e-3), "u={u}: {got} vs {want}");
        }
        let g = greens_free_coincident_imag(1.0).unwrap();
        assert!((6.0 * PI * g.zz().im - 1.0).abs() < 1e-15);
        assert!(greens_free([0.0, 0.0, 1.0], [0.0, 0.0, 1.0], Frequency::Real(1.0)).is_err());
    }

    #[test]
    fn vacuum_half_space_gives_zero() {
        let a = [0.0, 0.0, 0.02];
        let b = [0.5, 0.1, 0.03];
        for f in [Frequency::Real(1.0), Frequency::Imaginary(1.0)] {
            let g = scatter_tensor(a, b, f, &Medium::Vacuum, &quad(), false).unwrap();
            assert_eq!(g.entries.norm(), 0.0);
            let d = greens_scatter_dz(a, b, f, &Medium::Vacuum, &quad()).unwrap();
            assert_eq!(d.entries.norm(), 0.0);
        }
    }

    #[test]
    fn perfect_conductor_image_dipole_static_limit() {
        // s² G_zz(r,r,is) -> -(1/4π) ∫ κ² e^{-2κz} dκ = -1/(16π z³) as s -> 0.
        let z = 0.05;
        let ([v, _], _) = zz_imaginary_weighted(1e-6, z, &Medium::PerfectConductor, &quad()).unwrap();
        let want = -1.0 / (16.0 * PI * z.powi(3));
        assert!(((v - want) / want).abs() < 1e-8, "{v} vs {want}");

        let g = greens_scatter_imag([0.0, 0.0, z], [0.0, 0.0, z], 1e-3, &Medium::PerfectConductor, &quad()).unwrap();
        let scaled = g.zz().re * 1e-6;
        assert!(((scaled - want) / want).abs() < 1e-4, "{scaled} vs {want}");
    }

    #[test]
    fn xz_vanishes_without_lateral_offset() {
        let a = [0.0, 0.0, 0.02];
        let b = [0.0, 0.0, 0.05];
        let g = greens_scatter_real(a, b, 1.0, &gold(), &quad()).unwrap();
        assert_eq!(g.entries[(0, 2)].norm(), 0.0);
        assert_eq!(g.entries[(2, 0)].norm(), 0.0);
    }

    #[test]
    fn scattering_reciprocity() {
        let a = [0.1, 0.05, 0.02];
        let b = [0.4, -0.2, 0.05];
        for f in [Frequency::Real(1.0), Frequency::Imaginary(0.7)] {
            for deriv in [false, true] {
                let g12 = scatter_tensor(a, b, f, &gold(), &quad(), deriv).unwrap().entries;
                let g21 = scatter_tensor(b, a, f, &gold(), &quad(), deriv).unwrap().entries;
                let rel = (g12 - g21.transpose()).norm() / g12.norm();
                assert!(rel < 1e-12, "{f:?} deriv={deriv}: {rel}");
            }
        }
    }

    #[test]
    fn real_frequency_image_oracle_for_decay() {
        // 6π Im G_zz(r,r,ω0) ≈ (3/8z³) Im[(ε−1)/(ε+1)] in the near field.
        let z = 0.01;
        let m = gold();
        let res = zz_resonant(0.0, z, &m, &quad()).unwrap();
        let eps = m.permittivity(Frequency::Real(1.0)).unwrap();
        let oracle = 3.0 / (8.0 * z.powi(3)) * ((eps - 1.0) / (eps + 1.0)).im;
        let got = 6.0 * PI * res.value.im;
        assert!((got / oracle - 1.0).abs() < 0.02, "{got} vs {oracle}");
        assert!(got > 1.1e3 && got < 1.4e3);

        // The general tensor path agrees with the dedicated zz path.
        let t = greens_scatter_real([0.0, 0.0, z], [0.0, 0.0, z], 1.0, &m, &quad()).unwrap();
        assert!(((t.zz() - res.value) / res.value).norm() < 1e-8);
    }

    #[test]
    fn perfect_conductor_far_zone_period() {
        // The image of a z-dipole radiates along its axis only through the
        // 1/Z² term, so z² G_zz repeats with period π in z.
        let f = |z: f64| {
            let v = zz_resonant(0.0, z, &Medium::PerfectConductor, &quad()).unwrap().value;
            v * z * z
        };
        let a = f(20.0);
        let b = f(20.0 + PI);
        assert!(((a - b) / a).norm() < 0.05, "{a} {b}");
        let c = f(20.0 + PI / 2.0);
        assert!(((a + c) / a).norm() < 0.05, "{a} {c}");
    }

    fn five_point(f: impl Fn(f64) -> C64, x: f64, h: f64) -> C64 {
        (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
    }

    #[test]
    fn height_derivative_matches_finite_difference() {
        let m = gold();
        let q = QuadratureSpec { rel_tol: 1e-12, ..quad() };
        let (rho, z1, z2) = (0.03, 0.02, 0.025);
        for freq in [Frequency::Real(1.0), Frequency::Imaginary(0.9)] {
            let d = greens_scatter_dz([rho, 0.0, z1], [0.0, 0.0, z2], freq, &m, &q).unwrap();
            for (i, j) in [(0, 0), (1, 1), (2, 2), (0, 2)] {
                // Move the field point: dZ = dz1.
                let fd = five_point(
                    |h| scatter_tensor([rho, 0.0, z1 + h], [0.0, 0.0, z2], freq, &m, &q, false).unwrap().entries[(i, j)],
                    0.0,
                    1e-4,
                );
                let an = d.entries[(i, j)];
                assert!(((an - fd) / an).norm() < 1e-5, "{freq:?} ({i},{j}): {an} vs {fd}");
            }
        }
    }

    #[test]
    fn below_surface_and_bad_frequency_rejected() {
        let m = gold();
        assert!(greens_scatter_real([0.0, 0.0, -0.1], [0.0, 0.0, 0.1], 1.0, &m, &quad()).is_err());
        assert!(greens_scatter_imag([0.0, 0.0, 0.1], [0.0, 0.0, 0.1], 0.0, &m, &quad()).is_err());
    }
}
