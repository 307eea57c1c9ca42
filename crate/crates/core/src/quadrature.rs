//! Globally adaptive Gauss-Kronrod (G10/K21) quadrature for vector-valued
//! integrands.
//!
//! Every integrand in this crate returns a fixed-size array of real numbers
//! (complex entries are split into real and imaginary parts), so that a single
//! sweep over the transverse wavenumber yields all tensor entries and their
//! height derivatives together with a shared error estimate.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_690_732_516,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights belong to the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_146,
];

/// Tolerances and limits shared by every integral in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Relative tolerance on the max-norm of the integral.
    pub rel_tol: f64,
    /// Absolute floor below which errors are always accepted.
    pub abs_tol: f64,
    /// Maximum number of panels in one adaptive integration.
    pub max_subdivisions: usize,
    /// Number of decay lengths of the `exp(-kappa Z)` envelope kept before
    /// truncating a semi-infinite integral.
    pub tail_cutoff: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-300,
            max_subdivisions: 100_000,
            tail_cutoff: 60.0,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Error::Parameter {
            field: format!("quadrature.{field}"),
            reason: reason.to_string(),
        };
        if !(self.rel_tol > 0.0) {
            return Err(bad("rel_tol", "must be > 0"));
        }
        if !(self.abs_tol > 0.0) {
            return Err(bad("abs_tol", "must be > 0"));
        }
        if self.max_subdivisions == 0 {
            return Err(bad("max_subdivisions", "must be >= 1"));
        }
        if !(self.tail_cutoff >= 10.0) {
            return Err(bad("tail_cutoff", "must be >= 10 decay lengths"));
        }
        Ok(())
    }

    /// Same limits with the relative tolerance divided by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            rel_tol: self.rel_tol / factor,
            ..*self
        }
    }
}

/// Result of one adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<const K: usize> {
    pub value: [f64; K],
    /// Max-norm error estimate summed over panels.
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel<const K: usize> {
    lower: f64,
    upper: f64,
    value: [f64; K],
    error: f64,
    floor: f64,
}

impl<const K: usize> PartialEq for Panel<K> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl<const K: usize> Eq for Panel<K> {}

impl<const K: usize> PartialOrd for Panel<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<const K: usize> Ord for Panel<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

/// Single 21-point Kronrod panel with its embedded 10-point Gauss estimate.
fn kronrod_panel<const K: usize, F>(f: &mut F, lower: f64, upper: f64) -> Panel<K>
where
    F: FnMut(f64) -> [f64; K],
{
    let center = 0.5 * (lower + upper);
    let half = 0.5 * (upper - lower);

    let mut kronrod = [0.0; K];
    let mut gauss = [0.0; K];
    let mut res_abs = [0.0; K];
    let mut samples = [[0.0; K]; 21];

    let fc = f(center);
    samples[20] = fc;
    for c in 0..K {
        kronrod[c] = WGK[10] * fc[c];
        res_abs[c] = WGK[10] * fc[c].abs();
    }
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        samples[2 * j] = f1;
        samples[2 * j + 1] = f2;
        for c in 0..K {
            let sum = f1[c] + f2[c];
            kronrod[c] += WGK[j] * sum;
            res_abs[c] += WGK[j] * (f1[c].abs() + f2[c].abs());
            if j % 2 == 1 {
                gauss[c] += WG[j / 2] * sum;
            }
        }
    }

    let mut error = 0.0_f64;
    let mut floor = 0.0_f64;
    let mut value = [0.0; K];
    for c in 0..K {
        let mean = 0.5 * kronrod[c];
        let mut res_asc = WGK[10] * (samples[20][c] - mean).abs();
        for j in 0..10 {
            res_asc += WGK[j]
                * ((samples[2 * j][c] - mean).abs() + (samples[2 * j + 1][c] - mean).abs());
        }
        let err = (kronrod[c] - gauss[c]) * half;
        let e = rescale_error(err, res_abs[c] * half.abs(), res_asc * half.abs());
        error = error.max(e);
        floor = floor.max(50.0 * f64::EPSILON * res_abs[c] * half.abs());
        value[c] = kronrod[c] * half;
    }

    Panel {
        lower,
        upper,
        value,
        error,
        floor,
    }
}

fn max_norm<const K: usize>(v: &[f64; K]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Integrate `f` over `[lower, upper]` to the tolerance in `spec`.
///
/// Panels are bisected in order of decreasing error until the summed error
/// estimate drops below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<const K: usize, F>(
    mut f: F,
    lower: f64,
    upper: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate<K>>
where
    F: FnMut(f64) -> [f64; K],
{
    if lower == upper {
        return Ok(Estimate {
            value: [0.0; K],
            error: 0.0,
            evaluations: 0,
        });
    }

    let first = kronrod_panel(&mut f, lower, upper);
    let mut evaluations = 21;
    let mut total = first.value;
    let mut total_error = first.error;
    let mut total_floor = first.floor;
    let mut heap = BinaryHeap::new();
    heap.push(first);

    loop {
        // Cancelling integrands cannot beat the rounding floor of |f|.
        let target = spec
            .abs_tol
            .max(spec.rel_tol * max_norm(&total))
            .max(2.0 * total_floor);
        if total_error <= target {
            break;
        }
        if heap.len() >= spec.max_subdivisions {
            return Err(Error::QuadratureNonConvergence {
                lower,
                upper,
                achieved: total_error,
                target,
                subdivisions: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap holds at least one panel");
        let mid = 0.5 * (worst.lower + worst.upper);
        if mid <= worst.lower.min(worst.upper) || mid >= worst.lower.max(worst.upper) {
            // Panel width at machine resolution: nothing left to refine.
            return Err(Error::QuadratureNonConvergence {
                lower,
                upper,
                achieved: total_error,
                target,
                subdivisions: heap.len() + 1,
            });
        }
        let left = kronrod_panel(&mut f, worst.lower, mid);
        let right = kronrod_panel(&mut f, mid, worst.upper);
        evaluations += 42;
        for c in 0..K {
            total[c] += left.value[c] + right.value[c] - worst.value[c];
        }
        total_error += left.error + right.error - worst.error;
        total_floor += left.floor + right.floor - worst.floor;
        heap.push(left);
        heap.push(right);

        // Running sums drift; refresh them from the panels now and then.
        if heap.len() % 64 == 0 {
            total = [0.0; K];
            total_error = 0.0;
            total_floor = 0.0;
            for p in heap.iter() {
                total_floor += p.floor;
                for c in 0..K {
                    total[c] += p.value[c];
                }
                total_error += p.error;
            }
        }
    }

    let mut value = [0.0; K];
    let mut error = 0.0;
    for p in heap.iter() {
        for c in 0..K {
            value[c] += p.value[c];
        }
        error += p.error;
    }
    Ok(Estimate {
        value,
        error,
        evaluations,
    })
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F>(mut f: F, lower: f64, upper: f64, spec: &QuadratureSpec) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let est = integrate(|x| [f(x)], lower, upper, spec)?;
    Ok((est.value[0], est.error))
}
