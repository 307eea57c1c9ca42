//! Material response of the half-space and planar Fresnel coefficients.
//!
//! Drude parameters are angular frequencies in rad/s. The Green's-tensor code
//! works with a copy rescaled by the transition frequency (see
//! [`Medium::normalized`]), so the same formulas serve both unit systems.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point on the real or imaginary frequency axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frequency {
    /// Real angular frequency `ω`.
    Real(f64),
    /// Imaginary angular frequency, `ω = iξ`.
    Imaginary(f64),
}

impl Frequency {
    /// The frequency as a complex number (`ω` or `iξ`).
    pub fn complex(self) -> C64 {
        match self {
            Frequency::Real(w) => C64::new(w, 0.0),
            Frequency::Imaginary(xi) => C64::new(0.0, xi),
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            Frequency::Real(w) if w == 0.0 => Err(Error::InvalidFrequency(
                "the Drude response has a pole at real frequency 0".into(),
            )),
            Frequency::Real(w) if !w.is_finite() => {
                Err(Error::InvalidFrequency(format!("non-finite frequency {w}")))
            }
            Frequency::Imaginary(xi) if !(xi >= 0.0) || !xi.is_finite() => Err(
                Error::InvalidFrequency(format!("imaginary frequency must be finite and >= 0, got {xi}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Dielectric model of the half-space `z < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum Medium {
    /// `ε(ω) = 1 − ωp² / (ω² + iγω)` with a constant permeability.
    Drude {
        plasma_frequency: f64,
        loss_rate: f64,
        #[serde(default = "unit_permeability")]
        permeability: f64,
    },
    /// `r_p = 1`, `r_s = −1` at every frequency and wavevector.
    PerfectConductor,
    /// No interface; all reflection coefficients vanish.
    Vacuum,
}

fn unit_permeability() -> f64 {
    1.0
}

/// Gold parameters used throughout the figures (rad/s).
pub const GOLD_PLASMA_FREQUENCY: f64 = 1.36e16;
pub const GOLD_LOSS_RATE: f64 = 1.04e14;

impl Medium {
    pub fn drude(plasma_frequency: f64, loss_rate: f64) -> Result<Self> {
        let m = Medium::Drude {
            plasma_frequency,
            loss_rate,
            permeability: 1.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn gold() -> Self {
        Medium::Drude {
            plasma_frequency: GOLD_PLASMA_FREQUENCY,
            loss_rate: GOLD_LOSS_RATE,
            permeability: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Medium::Drude {
            plasma_frequency,
            loss_rate,
            permeability,
        } = *self
        {
            if !(plasma_frequency > 0.0) || !plasma_frequency.is_finite() {
                return Err(Error::Parameter {
                    field: "medium.plasma_frequency".into(),
                    reason: "must be finite and > 0".into(),
                });
            }
            if !(loss_rate >= 0.0) || !loss_rate.is_finite() {
                return Err(Error::Parameter {
                    field: "medium.loss_rate".into(),
                    reason: "must be finite and >= 0".into(),
                });
            }
            if !(permeability > 0.0) || !permeability.is_finite() {
                return Err(Error::Parameter {
                    field: "medium.permeability".into(),
                    reason: "must be finite and > 0".into(),
                });
            }
        }
        Ok(())
    }

    /// Express all frequency parameters in units of `omega0`.
    pub fn normalized(&self, omega0: f64) -> Self {
        match *self {
            Medium::Drude {
                plasma_frequency,
                loss_rate,
                permeability,
            } => Medium::Drude {
                plasma_frequency: plasma_frequency / omega0,
                loss_rate: loss_rate / omega0,
                permeability,
            },
            other => other,
        }
    }

    /// Relative permittivity at `freq`. Infinite for a perfect conductor.
    pub fn permittivity(&self, freq: Frequency) -> Result<C64> {
        freq.validate()?;
        Ok(match *self {
            Medium::Drude {
                plasma_frequency,
                loss_rate,
                ..
            } => match freq {
                Frequency::Imaginary(xi) => {
                    if xi == 0.0 {
                        C64::new(f64::INFINITY, 0.0)
                    } else {
                        C64::new(1.0 + plasma_frequency * plasma_frequency / (xi * xi + xi * loss_rate), 0.0)
                    }
                }
                Frequency::Real(w) => {
                    let denom = C64::new(w * w, w * loss_rate);
                    C64::new(1.0, 0.0) - plasma_frequency * plasma_frequency / denom
                }
            },
            Medium::PerfectConductor => C64::new(f64::INFINITY, 0.0),
            Medium::Vacuum => C64::new(1.0, 0.0),
        })
    }

    /// `ε − 1`, evaluated without forming `ε` first so it keeps full
    /// relative precision when `ε → 1`.
    pub fn susceptibility(&self, freq: Frequency) -> Result<C64> {
        match *self {
            Medium::Drude {
                plasma_frequency,
                loss_rate,
                ..
            } => {
                freq.validate()?;
                let a2 = plasma_frequency * plasma_frequency;
                Ok(match freq {
                    Frequency::Imaginary(xi) if xi == 0.0 => C64::new(f64::INFINITY, 0.0),
                    Frequency::Imaginary(xi) => C64::new(a2 / (xi * xi + xi * loss_rate), 0.0),
                    Frequency::Real(w) => -a2 / C64::new(w * w, w * loss_rate),
                })
            }
            _ => Ok(self.permittivity(freq)? - 1.0),
        }
    }

    pub fn permeability(&self) -> f64 {
        match *self {
            Medium::Drude { permeability, .. } => permeability,
            _ => 1.0,
        }
    }
}

/// Normal component of the vacuum-side wavevector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transverse {
    /// Decaying wave, `κ⊥ ≥ 0`.
    Evanescent(f64),
    /// Propagating wave with real normal wavenumber `k⊥ ≥ 0`; enters the
    /// coefficients as `κ⊥ = −i k⊥`.
    Propagating(f64),
}

impl Transverse {
    pub fn kappa(self) -> C64 {
        match self {
            Transverse::Evanescent(k) => C64::new(k, 0.0),
            Transverse::Propagating(k) => C64::new(0.0, -k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FresnelPair {
    pub r_s: C64,
    pub r_p: C64,
    pub kappa: C64,
    pub frequency: Frequency,
}

/// Medium-side normal decay constant `sqrt(κ⊥² − (εμ − 1) ω²/c²)` with the
/// branch that makes the transmitted wave decay (or radiate away from the
/// interface on the real axis).
fn medium_root(arg: C64, freq: Frequency) -> Result<C64> {
    if arg.im == 0.0 && arg.re < 0.0 {
        return match freq {
            // Outgoing transmitted wave: κ_medium = −i k_medium with k_medium > 0.
            Frequency::Real(_) => Ok(C64::new(0.0, -(-arg.re).sqrt())),
            Frequency::Imaginary(_) => Err(Error::BranchAmbiguity {
                re: arg.re,
                im: arg.im,
            }),
        };
    }
    // Principal root already has Re >= 0.
    Ok(arg.sqrt())
}

/// Fresnel reflection coefficients of the vacuum/medium interface.
///
/// Units are whatever the medium uses with `c = 1`: pass a medium normalized
/// to `ω0` together with wavenumbers in units of `k0`.
pub fn fresnel(medium: &Medium, transverse: Transverse, freq: Frequency) -> Result<FresnelPair> {
    let kappa = transverse.kappa();
    match transverse {
        Transverse::Evanescent(k) | Transverse::Propagating(k) if !(k >= 0.0) => {
            return Err(Error::Parameter {
                field: "transverse".into(),
                reason: format!("normal wavenumber must be >= 0, got {k}"),
            })
        }
        _ => {}
    }
    let zero = C64::new(0.0, 0.0);
    let (r_s, r_p) = match medium {
        Medium::Vacuum => {
            freq.validate()?;
            (zero, zero)
        }
        Medium::PerfectConductor => {
            freq.validate()?;
            (C64::new(-1.0, 0.0), C64::new(1.0, 0.0))
        }
        Medium::Drude { .. } => {
            let eps = medium.permittivity(freq)?;
            if eps.re.is_infinite() {
                (C64::new(-1.0, 0.0), C64::new(1.0, 0.0))
            } else {
                let mu = medium.permeability();
                let w = freq.complex();
                let chi = medium.susceptibility(freq)?;
                let index_gap = (mu - 1.0) + mu * chi;
                let arg = kappa * kappa - index_gap * w * w;
                let root = medium_root(arg, freq)?;
                // Rationalized numerators stay accurate when ε → 1 and the
                // plain differences εκ − root, μκ − root cancel.
                let source = index_gap * w * w;
                let dp = eps * kappa + root;
                let ds = mu * kappa + root;
                let rp = (chi * (2.0 + chi) * kappa * kappa + source) / (dp * dp);
                let rs = ((mu * mu - 1.0) * kappa * kappa + source) / (ds * ds);
                (rs, rp)
            }
        }
    };
    Ok(FresnelPair {
        r_s,
        r_p,
        kappa,
        frequency: freq,
    })
}
