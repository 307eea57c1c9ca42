//! Run configuration read from TOML. SI inputs are converted to natural
//! units here and nowhere else.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coeffs::{EmitterParams, Geometry};
use crate::dicke::{check_emitter_count, subradiant_degeneracy};
use crate::dynamics::EvolutionSpec;
use crate::error::{Error, Result};
use crate::forces::{MapGrid, MAP_X_RANGE, MAP_Z_RANGE};
use crate::media::Medium;
use crate::quadrature::QuadratureSpec;
use crate::units::{angular_frequency_from_wavelength, SPEED_OF_LIGHT};

/// Shipped presets as `(name, TOML text)`.
pub const PRESETS: [(&str, &str); 3] = [
    ("fig2-gold", include_str!("../presets/fig2-gold.toml")),
    ("fig3-siv", include_str!("../presets/fig3-siv.toml")),
    ("figs1-gold", include_str!("../presets/figs1-gold.toml")),
];

/// Emitter transition. Give exactly one of `wavelength`/`angular_frequency`
/// and exactly one of `gamma0`/`lifetime`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterConfig {
    /// Vacuum wavelength λ0 (m).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength: Option<f64>,
    /// Transition angular frequency ω0 (rad/s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angular_frequency: Option<f64>,
    /// Free-space decay rate Γ0 (1/s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    /// Free-space lifetime 1/Γ0 (s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifetime: Option<f64>,
}

/// Chain geometry. Each length is given either in metres (`x0`, `z0`) or
/// in units of `1/k0` (`x0_k0`, `z0_k0`), never both.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_k0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0_k0: Option<f64>,
}

/// A grid axis in units of `1/k0`: explicit values or a log-spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Log { min: f64, max: f64, count: usize },
}

impl Axis {
    pub fn points(&self) -> Vec<f64> {
        match self {
            Axis::Values(v) => v.clone(),
            Axis::Log { min, max, count } => MapGrid::log_axis(*min, *max, *count),
        }
    }
}

/// Grid of the `map` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub x0_k0: Axis,
    pub z0_k0: Axis,
}

/// Spacings of the `subradiant` command; `n` and the height come from
/// `geometry`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubradiantConfig {
    pub x0_k0: Axis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Where output files go. Not part of the config hash.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub medium: Medium,
    pub emitter: EmitterConfig,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub evolution: EvolutionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subradiant: Option<SubradiantConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn field_error(field: &str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        field: field.into(),
        reason: reason.into(),
    }
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(field_error(field, format!("must be finite and > 0, got {v}")))
    }
}

/// The single value of an either/or pair, named after the first field.
fn exactly_one(a: (&str, Option<f64>), b: (&str, Option<f64>), section: &str) -> Result<(usize, f64)> {
    match (a.1, b.1) {
        (Some(v), None) => Ok((0, positive(&format!("{section}.{}", a.0), v)?)),
        (None, Some(v)) => Ok((1, positive(&format!("{section}.{}", b.0), v)?)),
        (None, None) => Err(field_error(
            &format!("{section}.{}", a.0),
            format!("missing: give `{}` or `{}`", a.0, b.0),
        )),
        (Some(_), Some(_)) => Err(field_error(
            &format!("{section}.{}", a.0),
            format!("give only one of `{}` and `{}`", a.0, b.0),
        )),
    }
}

impl EmitterConfig {
    pub fn resolve(&self) -> Result<EmitterParams> {
        let omega0 = match exactly_one(
            ("wavelength", self.wavelength),
            ("angular_frequency", self.angular_frequency),
            "emitter",
        )? {
            (0, lambda) => angular_frequency_from_wavelength(lambda),
            (_, omega) => omega,
        };
        let gamma0 = match exactly_one(("gamma0", self.gamma0), ("lifetime", self.lifetime), "emitter")? {
            (0, g) => g,
            (_, tau) => 1.0 / tau,
        };
        EmitterParams::new(omega0, gamma0)
    }
}

impl GeometryConfig {
    pub fn resolve(&self, emitter: &EmitterParams) -> Result<Geometry> {
        let k0 = emitter.omega0 / SPEED_OF_LIGHT;
        let natural = |si: (usize, f64)| if si.0 == 0 { si.1 * k0 } else { si.1 };
        let z0 = natural(exactly_one(("z0", self.z0), ("z0_k0", self.z0_k0), "geometry")?);
        // A lone emitter needs no spacing.
        let x0 = if self.n == 1 && self.x0.is_none() && self.x0_k0.is_none() {
            0.0
        } else {
            natural(exactly_one(("x0", self.x0), ("x0_k0", self.x0_k0), "geometry")?)
        };
        if self.n == 0 {
            return Err(field_error("geometry.n", "must be >= 1"));
        }
        Geometry::new(self.n, x0, z0)
    }
}

/// Physical parameters in the units the core expects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    pub medium: Medium,
    pub emitter: EmitterParams,
    pub geometry: Geometry,
    pub quadrature: QuadratureSpec,
}

/// Replace the value at a dotted `key` path. An empty value removes the key.
/// Values are parsed as TOML and fall back to plain strings.
pub fn set_dotted(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| field_error(assignment, "override must look like key=value"))?;
    let (key, raw) = (key.trim(), raw.trim());
    let path: Vec<&str> = key.split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(field_error(key, "empty path segment"));
    }
    let (last, parents) = path.split_last().expect("split yields one segment");
    let mut node = table;
    for (i, seg) in parents.iter().enumerate() {
        let entry = node
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| field_error(&path[..=i].join("."), "is a value, not a section"))?;
    }
    if raw.is_empty() {
        node.remove(*last);
        return Ok(());
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    node.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        Self::from_toml(preset_text(name)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| field_error("config", e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Load a preset or file, apply `key=value` overrides, then parse.
    pub fn load(path: Option<&Path>, preset: Option<&str>, overrides: &[String]) -> Result<Self> {
        let text = match (path, preset) {
            (Some(p), None) => std::fs::read_to_string(p)
                .map_err(|e| field_error("config", format!("cannot read {}: {e}", p.display())))?,
            (None, Some(name)) => preset_text(name)?.to_string(),
            (None, None) => return Err(field_error("config", "give a config file or a preset")),
            (Some(_), Some(_)) => return Err(field_error("config", "give a config file or a preset, not both")),
        };
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| field_error("config", e.message().to_string()))?;
        for o in overrides {
            set_dotted(&mut table, o)?;
        }
        Self::from_toml(&toml::to_string(&table).expect("table serializes"))
    }

    /// SHA-256 of the canonical TOML form, excluding the output directory.
    pub fn sha256(&self) -> String {
        let canonical = RunConfig {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        Sha256::digest(canonical.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Parameters shared by every command.
    pub fn resolve(&self) -> Result<Resolved> {
        self.medium.validate()?;
        self.quadrature.validate()?;
        let emitter = self.emitter.resolve()?;
        let geometry = self.geometry.resolve(&emitter)?;
        Ok(Resolved {
            medium: self.medium,
            emitter,
            geometry,
            quadrature: self.quadrature,
        })
    }

    pub fn check_dynamics(&self) -> Result<Resolved> {
        let r = self.resolve()?;
        check_emitter_count(r.geometry.n).map_err(|e| field_error("geometry.n", e.to_string()))?;
        self.evolution.validate()?;
        self.evolution
            .initial
            .build(r.geometry.n)
            .map_err(|e| field_error("evolution.initial", e.to_string()))?;
        Ok(r)
    }

    pub fn map_grid(&self) -> Result<MapGrid> {
        let m = self
            .map
            .as_ref()
            .ok_or_else(|| field_error("map", "missing section"))?;
        let grid = MapGrid {
            x0: m.x0_k0.points(),
            z0: m.z0_k0.points(),
        };
        for (field, axis, (lo, hi)) in [("map.x0_k0", &grid.x0, MAP_X_RANGE), ("map.z0_k0", &grid.z0, MAP_Z_RANGE)] {
            if axis.is_empty() {
                return Err(field_error(field, "grid is empty"));
            }
            if axis.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(field_error(field, format!("values must lie in [{lo}, {hi}]")));
            }
        }
        grid.validate()?;
        Ok(grid)
    }

    pub fn subradiant_grid(&self) -> Result<Vec<f64>> {
        let s = self
            .subradiant
            .as_ref()
            .ok_or_else(|| field_error("subradiant", "missing section"))?;
        let x = s.x0_k0.points();
        if x.is_empty() {
            return Err(field_error("subradiant.x0_k0", "grid is empty"));
        }
        if let Some(v) = x.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(field_error("subradiant.x0_k0", format!("spacing {v} must be finite and > 0")));
        }
        check_emitter_count(self.geometry.n).map_err(|e| field_error("geometry.n", e.to_string()))?;
        subradiant_degeneracy(self.geometry.n).map_err(|e| field_error("geometry.n", e.to_string()))?;
        Ok(x)
    }
}

fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            field_error("preset", format!("unknown preset `{name}`; known: {}", names.join(", ")))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::InitialState;

    fn field_of(e: Error) -> String {
        match e {
            Error::Parameter { field, .. } => field,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn presets_parse_and_round_trip() {
        for (name, _) in PRESETS {
            let c = RunConfig::preset(name).unwrap();
            c.resolve().unwrap();
            let back = RunConfig::from_toml(&c.to_toml()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.sha256(), c.sha256());
        }
    }

    #[test]
    fn fig3_preset_resolves_to_the_siv_chain() {
        let c = RunConfig::preset("fig3-siv").unwrap();
        let r = c.check_dynamics().unwrap();
        assert_eq!(r.geometry.n, 10);
        let k0 = 2.0 * std::f64::consts::PI / 737e-9;
        assert!((r.geometry.z0 - 10e-9 * k0).abs() < 1e-12);
        assert!((r.geometry.x0 - 1e-9 * k0).abs() < 1e-12);
        assert!((r.emitter.gamma0 - 1.0 / 1.7e-9).abs() < 1e-3);
        assert_eq!(c.evolution.initial, InitialState::AllExcited);
    }

    #[test]
    fn missing_and_doubled_fields_are_named() {
        let err = RunConfig::load(None, Some("fig2-gold"), &["geometry.z0_k0=".into()])
            .unwrap()
            .resolve()
            .unwrap_err();
        assert_eq!(field_of(err), "geometry.z0");
        let err = RunConfig::load(None, Some("fig2-gold"), &["emitter.angular_frequency=3e15".into()])
            .unwrap()
            .resolve()
            .unwrap_err();
        assert_eq!(field_of(err), "emitter.wavelength");
        let err = RunConfig::load(None, Some("fig3-siv"), &["geometry.n=13".into()])
            .unwrap()
            .check_dynamics()
            .unwrap_err();
        assert_eq!(field_of(err), "geometry.n");
        let err = RunConfig::load(None, Some("fig3-siv"), &["geometry.z0=-1".into()])
            .unwrap()
            .resolve()
            .unwrap_err();
        assert_eq!(field_of(err), "geometry.z0");
        assert!(RunConfig::load(None, Some("fig3-siv"), &["geometry.bogus=1".into()]).is_err());
        assert!(RunConfig::load(None, Some("nope"), &[]).is_err());
    }

    #[test]
    fn overrides_change_the_hash() {
        let base = RunConfig::preset("fig2-gold").unwrap();
        let moved = RunConfig::load(None, Some("fig2-gold"), &["output_dir=elsewhere".into()]).unwrap();
        assert_eq!(moved.output_dir, PathBuf::from("elsewhere"));
        assert_eq!(moved.sha256(), base.sha256());
        let changed = RunConfig::load(None, Some("fig2-gold"), &["map.z0_k0=[0.02]".into()]).unwrap();
        assert_eq!(changed.map_grid().unwrap().z0, vec![0.02]);
        assert_ne!(changed.sha256(), base.sha256());
        assert_eq!(base.sha256().len(), 64);
        let log = RunConfig::load(None, Some("fig2-gold"), &["map.z0_k0={min=1e-3, max=1.0, count=5}".into()]).unwrap();
        assert_eq!(log.map_grid().unwrap().z0.len(), 5);
    }

    #[test]
    fn grids_are_validated() {
        for (set, field) in [
            ("map.x0_k0=[]", "map.x0_k0"),
            ("map.z0_k0=[5.0]", "map.z0"),
            ("subradiant.x0_k0=[]", "subradiant.x0_k0"),
        ] {
            let c = RunConfig::load(None, Some("fig2-gold"), &[set.into()]).unwrap();
            let err = if set.starts_with("map") {
                c.map_grid().unwrap_err()
            } else {
                c.subradiant_grid().unwrap_err()
            };
            assert_eq!(field_of(err), field, "{set}");
        }
        let odd = RunConfig::load(None, Some("fig2-gold"), &["geometry.n=3".into()]).unwrap();
        assert_eq!(field_of(odd.subradiant_grid().unwrap_err()), "geometry.n");
    }

    proptest::proptest! {
        #[test]
        fn floats_round_trip_losslessly(z in 1e-4f64..1.0, x in 1e-5f64..20.0, lambda in 1e-7f64..1e-5) {
            let mut c = RunConfig::preset("fig2-gold").unwrap();
            c.geometry.z0_k0 = Some(z);
            c.geometry.x0_k0 = Some(x);
            c.emitter.wavelength = Some(lambda);
            let back = RunConfig::from_toml(&c.to_toml()).unwrap();
            proptest::prop_assert_eq!(back, c);
        }
    }
}
