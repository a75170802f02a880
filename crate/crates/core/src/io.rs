//! System-definition files (JSON or TOML) and the `K_M` baseline file.
//!
//! Complex numbers are `[re, im]` pairs; a bare number is accepted as a real
//! value on input. A file without `kind` is a dense system.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::burgers::{build_discretization, geometric_real_field, series_amplitude, viscosity_threshold, KmEstimate, SpectralDiscretization};
use crate::carleman::NonlinearSystem;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};

/// Largest number of entries accepted for a single `W_j`.
pub const MAX_ENTRIES: usize = 1 << 22;
/// Largest polynomial degree accepted from a file.
pub const MAX_DEGREE: usize = 8;
/// Largest Burgers mode cutoff accepted from a file.
pub const MAX_MODES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cx {
    Pair([f64; 2]),
    Real(f64),
}

impl Cx {
    pub fn value(self) -> C64 {
        match self {
            Cx::Pair([re, im]) => C64::new(re, im),
            Cx::Real(re) => C64::new(re, 0.0),
        }
    }
}

impl From<C64> for Cx {
    fn from(z: C64) -> Self {
        Cx::Pair([z.re, z.im])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    pub d: usize,
    pub p: usize,
    /// `W_1..W_p`, each row-major with `d` rows of `d^j` entries.
    pub w: Vec<Vec<Vec<Cx>>>,
    pub phi0: Vec<Cx>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default)]
    pub symmetrize: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Viscosity {
    Value(f64),
    /// `"auto"`: 1.1 × the threshold `√K̂_M`.
    Keyword(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurgersSpec {
    pub kind: String,
    pub modes: usize,
    pub order: u32,
    pub viscosity: Viscosity,
    /// Mode amplitudes `a_{−2n}..a_{2n}`; geometric real-field data otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<Cx>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SystemSpec {
    Dense(DenseSpec),
    Burgers(BurgersSpec),
}

#[derive(Clone, Debug)]
pub struct LoadedSystem {
    pub system: NonlinearSystem,
    pub scale: Option<f64>,
    pub burgers: Option<SpectralDiscretization>,
}

fn parse_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string())
}

fn kind_of(kind: Option<&str>) -> Result<&'static str> {
    match kind {
        None | Some("dense") => Ok("dense"),
        Some("burgers") => Ok("burgers"),
        Some(other) => Err(Error::Parse(format!("unknown system kind {other:?}"))),
    }
}

pub fn parse_system_json(text: &str) -> Result<SystemSpec> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(parse_err)?;
    let kind = kind_of(value.get("kind").map(|k| k.as_str().ok_or_else(|| Error::Parse("kind must be a string".into()))).transpose()?)?;
    Ok(match kind {
        "dense" => SystemSpec::Dense(serde_json::from_value(value).map_err(parse_err)?),
        _ => SystemSpec::Burgers(serde_json::from_value(value).map_err(parse_err)?),
    })
}

pub fn parse_system_toml(text: &str) -> Result<SystemSpec> {
    let table: toml::Table = toml::from_str(text).map_err(parse_err)?;
    let kind = kind_of(table.get("kind").map(|k| k.as_str().ok_or_else(|| Error::Parse("kind must be a string".into()))).transpose()?)?;
    Ok(match kind {
        "dense" => SystemSpec::Dense(table.try_into().map_err(parse_err)?),
        _ => SystemSpec::Burgers(table.try_into().map_err(parse_err)?),
    })
}

/// Parse by extension (`.toml`, otherwise JSON).
pub fn parse_system(text: &str, path: &Path) -> Result<SystemSpec> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => parse_system_toml(text),
        _ => parse_system_json(text),
    }
}

pub fn load_system(path: &Path) -> Result<(LoadedSystem, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(parse_err)?;
    let loaded = parse_system(text, path)?.build()?;
    Ok((loaded, bytes))
}

fn finite(z: C64, what: &'static str) -> Result<C64> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(z)
    } else {
        Err(Error::NonFinite(what))
    }
}

fn vector(values: &[Cx], what: &'static str) -> Result<CVector> {
    let data = values.iter().map(|z| finite(z.value(), what)).collect::<Result<Vec<_>>>()?;
    Ok(CVector::from_vec(data))
}

impl DenseSpec {
    pub fn build(&self) -> Result<LoadedSystem> {
        if self.d == 0 || self.p == 0 {
            return Err(Error::InvalidArgument("d and p must be positive".into()));
        }
        if self.p > MAX_DEGREE {
            return Err(Error::InvalidArgument(format!("degree {} exceeds {MAX_DEGREE}", self.p)));
        }
        if self.w.len() != self.p {
            return Err(Error::DimensionMismatch { context: "number of W_j", expected: self.p, found: self.w.len() });
        }
        let mut ws = Vec::with_capacity(self.p);
        let mut cols = 1usize;
        for (j, rows) in self.w.iter().enumerate() {
            cols = cols.checked_mul(self.d).filter(|&c| c.saturating_mul(self.d) <= MAX_ENTRIES).ok_or(Error::DimensionOverflow {
                base_dim: self.d,
                level: j + 1,
            })?;
            if rows.len() != self.d {
                return Err(Error::DimensionMismatch { context: "rows of W_j", expected: self.d, found: rows.len() });
            }
            let mut m = CMatrix::zeros(self.d, cols);
            for (r, row) in rows.iter().enumerate() {
                if row.len() != cols {
                    return Err(Error::DimensionMismatch { context: "columns of W_j", expected: cols, found: row.len() });
                }
                for (col, z) in row.iter().enumerate() {
                    m[(r, col)] = finite(z.value(), "W_j entry")?;
                }
            }
            ws.push(m);
        }
        if self.phi0.len() != self.d {
            return Err(Error::DimensionMismatch { context: "phi0", expected: self.d, found: self.phi0.len() });
        }
        if let Some(s) = self.scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidArgument(format!("scale must be positive, got {s}")));
            }
        }
        let mut system = NonlinearSystem::new(ws, vector(&self.phi0, "phi0")?)?;
        if self.symmetrize {
            system = system.symmetrized()?;
        }
        Ok(LoadedSystem { system, scale: self.scale, burgers: None })
    }
}

impl BurgersSpec {
    pub fn build(&self) -> Result<LoadedSystem> {
        if self.modes > MAX_MODES {
            return Err(Error::InvalidArgument(format!("mode cutoff {} exceeds {MAX_MODES}", self.modes)));
        }
        if self.order & 1 == 0 {
            return Err(Error::EvenOrder(self.order));
        }
        let nu = match &self.viscosity {
            Viscosity::Value(v) => *v,
            Viscosity::Keyword(k) if k == "auto" => 1.1 * viscosity_threshold(self.order)?,
            Viscosity::Keyword(k) => return Err(Error::Parse(format!("viscosity must be a number or \"auto\", got {k:?}"))),
        };
        let disc = build_discretization(self.modes, self.order, nu)?;
        let phi0 = match &self.amplitudes {
            Some(a) => {
                if self.rho.is_some() || self.norm.is_some() {
                    return Err(Error::InvalidArgument("give either amplitudes or rho/norm".into()));
                }
                if a.len() != disc.dim() {
                    return Err(Error::DimensionMismatch { context: "amplitudes", expected: disc.dim(), found: a.len() });
                }
                vector(a, "amplitude")?
            }
            None => {
                let rho = self.rho.unwrap_or(0.5);
                let norm = self.norm.unwrap_or(0.5);
                if !(rho > 0.0 && rho < 1.0) || !(norm.is_finite() && norm >= 0.0) {
                    return Err(Error::InvalidArgument("need 0 < rho < 1 and norm ≥ 0".into()));
                }
                geometric_real_field(self.modes, rho, series_amplitude(rho, norm))
            }
        };
        Ok(LoadedSystem { system: disc.to_system(phi0)?, scale: None, burgers: Some(disc) })
    }
}

impl SystemSpec {
    pub fn build(&self) -> Result<LoadedSystem> {
        match self {
            SystemSpec::Dense(d) => d.build(),
            SystemSpec::Burgers(b) => b.build(),
        }
    }
}

impl From<&NonlinearSystem> for DenseSpec {
    fn from(sys: &NonlinearSystem) -> Self {
        let w = sys
            .coefficients()
            .iter()
            .map(|op| {
                let m = op.matrix();
                (0..m.nrows()).map(|r| (0..m.ncols()).map(|col| Cx::from(m[(r, col)])).collect()).collect()
            })
            .collect();
        DenseSpec {
            kind: None,
            d: sys.base_dim(),
            p: sys.degree(),
            w,
            phi0: sys.phi0().iter().map(|&z| Cx::from(z)).collect(),
            scale: None,
            symmetrize: false,
        }
    }
}

/// Parse and validate a `K_M` baseline `{M, cutoff_P, cutoff_m, value, tail}`.
pub fn parse_km_baseline(text: &str) -> Result<KmEstimate> {
    let km: KmEstimate = serde_json::from_str(text).map_err(parse_err)?;
    if km.order <= 2 || km.order & 1 == 0 {
        return Err(Error::Parse(format!("baseline M = {} is not odd and > 2", km.order)));
    }
    if km.cutoff_p == 0 || km.cutoff_m < km.cutoff_p {
        return Err(Error::Parse("baseline needs 0 < cutoff_P ≤ cutoff_m".into()));
    }
    if !(km.value.is_finite() && km.value > 0.0 && km.tail.is_finite() && km.tail >= 0.0) {
        return Err(Error::Parse("baseline value must be positive and tail non-negative".into()));
    }
    Ok(km)
}

pub fn km_baseline_json(km: &KmEstimate) -> String {
    serde_json::to_string_pretty(km).expect("estimate serializes")
}
