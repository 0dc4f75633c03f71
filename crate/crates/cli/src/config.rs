//! Run configuration files (TOML) with command-line overrides.

use serde::{Deserialize, Serialize};
use sieve_core::capacity::Shape;
use sieve_core::experiments::{Family, MeshBudget, Source, TestFunction};
use sieve_core::geometry::{
    default_guard_radius, make_periodic_config, make_regular_config, Domain2D, GammaCell, GammaProfile, Hole, SieveConfig,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub domain: DomainSection,
    pub sieve: SieveSection,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub capacity: CapacitySection,
    #[serde(default)]
    pub assumption: AssumptionSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    #[serde(rename = "L")]
    pub width: f64,
    #[serde(rename = "H")]
    pub half_height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Periodic,
    Regular,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DRule {
    Calibrated,
    SmallHoles,
    Fixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoleEntry {
    pub x: f64,
    pub d: f64,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SieveSection {
    pub mode: Mode,
    pub eps: Option<f64>,
    pub d_rule: Option<DRule>,
    /// Target strength; also the limit strength of explicit layouts.
    #[serde(default = "one")]
    pub gamma: f64,
    /// Exponent of the small-holes rule `d = exp(-eps^(-power))`.
    pub power: Option<f64>,
    /// Half-width of the fixed rule.
    pub d: Option<f64>,
    pub holes: Option<Vec<HoleEntry>>,
    /// Regular mode: flat-disk capacity constant.
    pub alpha: Option<f64>,
    pub guard_fraction: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    pub cells_per_eps: usize,
    pub h_max: f64,
    pub max_refinements: usize,
    /// Strip spacing for explicit layouts.
    pub h: Option<f64>,
}

impl Default for MeshSection {
    fn default() -> Self {
        Self { cells_per_eps: 8, h_max: 0.0625, max_refinements: 1, h: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub eps: Vec<f64>,
    /// `odd`, `even` or a number for a constant source.
    pub source: String,
    pub m: usize,
}

impl Default for StudySection {
    fn default() -> Self {
        Self { eps: vec![0.25, 0.125, 0.0625, 0.03125], source: "odd".into(), m: 6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacitySection {
    /// `slit2d`, `annulus` or `flat-disk`.
    pub shape: String,
    pub d: f64,
    pub rho: f64,
    pub h: Vec<f64>,
}

impl Default for CapacitySection {
    fn default() -> Self {
        Self { shape: "slit2d".into(), d: 1e-3, rho: 0.1, h: vec![0.0125, 0.00625, 0.003125] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssumptionSection {
    /// Test functions: `const:c`, `cos:k`, `sin:k` or `poly:a0,a1,...`.
    pub g: String,
    pub h: String,
}

impl Default for AssumptionSection {
    fn default() -> Self {
        Self { g: "cos:1".into(), h: "poly:1,0.5".into() }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Parses `1/32`-style fractions, otherwise a TOML value, otherwise a string.
fn parse_override_value(raw: &str) -> toml::Value {
    if let Some((a, b)) = raw.split_once('/') {
        if let (Ok(a), Ok(b)) = (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            return toml::Value::Float(a / b);
        }
    }
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `section.key=value` overrides to the raw table.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<(), ConfigError> {
    for o in overrides {
        let (key, value) = o.split_once('=').ok_or_else(|| err(format!("override {o:?} is not key=value")))?;
        let path: Vec<&str> = key.trim().split('.').collect();
        if path.len() != 2 || path.iter().any(|p| p.is_empty()) {
            return Err(err(format!("override key {key:?} must look like section.key")));
        }
        let section = table
            .entry(path[0].to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| err(format!("{} is not a section", path[0])))?;
        let mut v = parse_override_value(value.trim());
        // comma separated numbers become a list
        if let toml::Value::String(s) = &v {
            let parts: Vec<toml::Value> = s.split(',').map(|p| parse_override_value(p.trim())).collect();
            if parts.len() > 1 && parts.iter().all(|p| matches!(p, toml::Value::Float(_) | toml::Value::Integer(_))) {
                v = toml::Value::Array(parts);
            }
        }
        let list_key = matches!(section.get(path[1]), Some(toml::Value::Array(_))) || (path[0] == "study" && path[1] == "eps");
        if list_key && matches!(v, toml::Value::Float(_) | toml::Value::Integer(_)) {
            v = toml::Value::Array(vec![v]);
        }
        section.insert(path[1].to_string(), v);
    }
    Ok(())
}

/// Parsed configuration together with the effective TOML text.
pub struct Loaded {
    pub file: FileConfig,
    pub effective: String,
}

pub fn parse_config(text: &str, overrides: &[String]) -> Result<Loaded, ConfigError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| err(format!("config: {}", e.message())))?;
    apply_overrides(&mut table, overrides)?;
    let file: FileConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| err(format!("config: {}", e.message())))?;
    let effective = toml::to_string(&file).map_err(|e| err(format!("config echo: {e}")))?;
    let loaded = Loaded { file, effective };
    loaded.file.validate()?;
    Ok(loaded)
}

impl FileConfig {
    pub fn domain(&self) -> Result<Domain2D, ConfigError> {
        Domain2D::new(self.domain.width, self.domain.half_height).map_err(|e| err(format!("domain: {e}")))
    }

    /// Re-checks every geometric invariant the selected mode implies.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.domain()?;
        match self.sieve.mode {
            Mode::Periodic => {
                if self.sieve.d_rule != Some(DRule::Fixed) {
                    self.family()?;
                }
                if let Some(e) = self.sieve.eps {
                    self.sieve_config(e)?;
                }
                for &e in &self.study.eps {
                    if !(e > 0.0) {
                        return Err(err(format!("study.eps: {e} is not positive")));
                    }
                }
            }
            Mode::Regular | Mode::Explicit => {
                self.build_sieve()?;
            }
        }
        self.source()?;
        parse_test_function(&self.assumption.g)?;
        parse_test_function(&self.assumption.h)?;
        self.shape()?;
        Ok(())
    }

    pub fn family(&self) -> Result<Family, ConfigError> {
        match self.sieve.d_rule.unwrap_or(DRule::Calibrated) {
            DRule::Calibrated => Ok(Family::Calibrated { gamma: self.sieve.gamma }),
            DRule::SmallHoles => Ok(Family::SmallHoles { power: self.sieve.power.unwrap_or(1.5) }),
            DRule::Fixed => Err(err("sieve.d_rule = fixed has no calibrated family; use solve")),
        }
    }

    pub fn budget(&self) -> MeshBudget {
        MeshBudget { cells_per_eps: self.mesh.cells_per_eps, h_max: self.mesh.h_max, max_refinements: self.mesh.max_refinements }
    }

    pub fn source(&self) -> Result<Source, ConfigError> {
        match self.study.source.as_str() {
            "odd" => Ok(Source::Odd),
            "even" => Ok(Source::Even),
            s => s.parse().map(Source::Constant).map_err(|_| err(format!("study.source: unknown source {s:?}"))),
        }
    }

    pub fn shape(&self) -> Result<(usize, Shape), ConfigError> {
        match self.capacity.shape.as_str() {
            "slit2d" => Ok((2, Shape::Slit2d)),
            "annulus" => Ok((2, Shape::AnnulusOracle)),
            "flat-disk" => Ok((3, Shape::FlatDisk3d)),
            s => Err(err(format!("capacity.shape: unknown shape {s:?}"))),
        }
    }

    /// Periodic configuration with a fixed half-width rule.
    pub fn sieve_config(&self, eps: f64) -> Result<SieveConfig, ConfigError> {
        let dom = self.domain()?;
        let d = match self.sieve.d_rule.unwrap_or(DRule::Calibrated) {
            DRule::Fixed => self.sieve.d.ok_or_else(|| err("sieve.d is required with d_rule = fixed"))?,
            // placeholder width; calibrated widths are set per mesh
            DRule::Calibrated | DRule::SmallHoles => eps / 32.0,
        };
        make_periodic_config(dom, eps, &|_| d, GammaProfile::Constant(self.sieve.gamma)).map_err(|e| err(format!("sieve: {e}")))
    }

    /// Explicit or regular configuration.
    pub fn build_sieve(&self) -> Result<SieveConfig, ConfigError> {
        let dom = self.domain()?;
        let gamma = GammaProfile::Constant(self.sieve.gamma);
        match self.sieve.mode {
            Mode::Explicit => {
                let holes = self.sieve.holes.as_ref().ok_or_else(|| err("sieve.holes is required with mode = explicit"))?;
                let centers: Vec<f64> = holes.iter().map(|h| h.x).collect();
                let default_rho = default_guard_radius(&centers, &dom);
                let holes = holes.iter().map(|h| Hole::planar(h.x, h.d, h.rho.unwrap_or(default_rho))).collect();
                let eps = self.sieve.eps.unwrap_or(default_rho * 2.0);
                SieveConfig::explicit(dom, eps, holes, gamma).map_err(|e| err(format!("sieve: {e}")))
            }
            Mode::Regular => {
                let eps = self.sieve.eps.ok_or_else(|| err("sieve.eps is required with mode = regular"))?;
                let n = (dom.width / eps).round() as usize;
                let cells: Vec<GammaCell> = (0..n * n)
                    .map(|k| {
                        let (i, j) = ((k % n) as f64, (k / n) as f64);
                        GammaCell { lo: [i * eps, j * eps], hi: [(i + 1.0) * eps, (j + 1.0) * eps] }
                    })
                    .collect();
                let alpha = self.sieve.alpha.unwrap_or(8.0);
                make_regular_config(dom, &cells, gamma, 3, alpha, self.sieve.guard_fraction.unwrap_or(0.5))
                    .map_err(|e| err(format!("sieve: {e}")))
            }
            Mode::Periodic => self.sieve_config(self.sieve.eps.ok_or_else(|| err("sieve.eps is required"))?),
        }
    }
}

pub fn parse_test_function(s: &str) -> Result<TestFunction, ConfigError> {
    let bad = || err(format!("assumption: bad test function {s:?}"));
    let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "const" => arg.trim().parse().map(TestFunction::Constant).map_err(|_| bad()),
        "cos" => arg.trim().parse().map(TestFunction::Cosine).map_err(|_| bad()),
        "sin" => arg.trim().parse().map(TestFunction::Sine).map_err(|_| bad()),
        "poly" => arg.split(',').map(|c| c.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>().map(TestFunction::Polynomial).map_err(|_| bad()),
        _ => Err(bad()),
    }
}
