//! Scenario configuration: a TOML document whose numbers are decimal strings.

use crate::error::CliError;
use gietlab::{Acceleration, Combinatorics, DiffeoSpec, Giet, GietDocument, InductionConfig, StandardIet};
use rug::Float;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    RotationSanity,
    SbsDecay,
    BrokenDecay,
    Holder,
    Tpg,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::RotationSanity => "rotation-sanity",
            Scenario::SbsDecay => "sbs-decay",
            Scenario::BrokenDecay => "broken-decay",
            Scenario::Holder => "holder",
            Scenario::Tpg => "tpg",
        }
    }
}

/// Where the map comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GietSource {
    /// Rotation by the inverse golden mean.
    Golden,
    Rotation { alpha: String },
    /// Standard IET; lengths are rescaled to sum to 1.
    Standard { top: Vec<usize>, bottom: Vec<usize>, lengths: Vec<String> },
    /// h ∘ T₀ ∘ h⁻¹ for a standard `base`.
    Conjugated { base: Box<GietSource>, diffeo: DiffeoSpec },
    /// A JSON GIET document, relative to the config file.
    Document { path: PathBuf },
}

impl Default for GietSource {
    fn default() -> Self {
        GietSource::Golden
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    /// Acceleration steps (levels) to build.
    pub depth: usize,
    pub acceleration: Acceleration,
    pub floor_cap: u64,
    pub orbit_cap: u64,
    pub run_cap: u64,
    pub positivity_cap: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            depth: 10,
            acceleration: Acceleration::Positive,
            floor_cap: gietlab::towers::DEFAULT_FLOOR_CAP,
            orbit_cap: 5_000_000,
            run_cap: 1_000_000,
            positivity_cap: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Samples {
    /// Random rotations checked on top of the configured map.
    pub rotations: usize,
    /// Partial quotients compared per rotation.
    pub quotients: usize,
    /// Sample pairs for the Hölder fit.
    pub pairs: usize,
    /// Interior points per tower for sup-norm estimates.
    pub sup_points: usize,
    /// Break heights per tower for broken sums.
    pub max_breaks: u64,
    /// First level of the fitted range; the last is `budget.depth`.
    pub fit_from: usize,
    /// Levels kept clear of the deepest one in the Hölder fit.
    pub margin: usize,
}

impl Default for Samples {
    fn default() -> Self {
        Samples { rotations: 0, quotients: 15, pairs: 100, sup_points: 16, max_breaks: 64, fit_from: 2, margin: 2 }
    }
}

fn default_seed() -> u64 {
    1
}

fn default_precision() -> u32 {
    gietlab::DEFAULT_PRECISION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_precision")]
    pub precision_bits: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub giet: GietSource,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub samples: Samples,
    /// Directory that relative paths are resolved against. Not part of the
    /// document.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario) -> Self {
        ScenarioConfig {
            scenario,
            seed: default_seed(),
            precision_bits: default_precision(),
            out: None,
            giet: GietSource::default(),
            budget: Budget::default(),
            samples: Samples::default(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.precision_bits < 64 {
            return bad("precision_bits must be at least 64");
        }
        let b = &self.budget;
        if b.depth == 0 || b.floor_cap == 0 || b.orbit_cap == 0 || b.run_cap == 0 || b.positivity_cap == 0 {
            return bad("all budgets must be positive");
        }
        let s = &self.samples;
        if s.quotients == 0 || s.pairs == 0 || s.sup_points == 0 || s.max_breaks == 0 {
            return bad("sample counts must be positive");
        }
        if s.fit_from >= b.depth {
            return bad("samples.fit_from must be below budget.depth");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn induction(&self) -> InductionConfig {
        InductionConfig { run_cap: self.budget.run_cap, positivity_cap: self.budget.positivity_cap }
    }

    pub fn build_giet(&self) -> Result<Giet, CliError> {
        build(&self.giet, self.precision_bits, &self.base_dir)
    }

    /// The configured map when it is a standard IET.
    pub fn build_standard(&self) -> Result<StandardIet, CliError> {
        standard(&self.giet, self.precision_bits)
    }
}

fn decimal(prec: u32, s: &str) -> Result<Float, CliError> {
    gietlab::real::parse_decimal(prec, s).ok_or_else(|| CliError::Config(format!("not a decimal: {s:?}")))
}

fn standard(src: &GietSource, prec: u32) -> Result<StandardIet, CliError> {
    match src {
        GietSource::Golden => Ok(StandardIet::golden(prec)),
        GietSource::Rotation { alpha } => {
            let a = decimal(prec, alpha)?;
            if a <= 0 {
                return Err(CliError::Config("rotation alpha must be positive".into()));
            }
            Ok(StandardIet::rotation(&a))
        }
        GietSource::Standard { top, bottom, lengths } => {
            let comb = Combinatorics::new(top, bottom).map_err(|e| CliError::Config(e.to_string()))?;
            let raw = lengths.iter().map(|s| decimal(prec, s)).collect::<Result<Vec<_>, _>>()?;
            let sum = Float::with_val(prec, Float::sum(raw.iter()));
            if sum <= 0 {
                return Err(CliError::Config("lengths must be positive".into()));
            }
            StandardIet::new(comb, raw.into_iter().map(|x| x / &sum).collect(), prec).map_err(|e| CliError::Config(e.to_string()))
        }
        _ => Err(CliError::Config("a standard IET (golden, rotation or standard) is required here".into())),
    }
}

fn build(src: &GietSource, prec: u32, base_dir: &Path) -> Result<Giet, CliError> {
    match src {
        GietSource::Conjugated { base, diffeo } => {
            let t0 = standard(base, prec)?;
            let h = diffeo.to_diffeo(prec).map_err(|e| CliError::Config(e.to_string()))?;
            Giet::conjugate_by_diffeo(&t0, &h).map_err(|e| CliError::Config(e.to_string()))
        }
        GietSource::Document { path } => {
            let p = base_dir.join(path);
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let mut doc: GietDocument = serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
            doc.precision_bits = prec;
            Giet::from_document(&doc).map_err(|e| CliError::Config(e.to_string()))
        }
        other => standard(other, prec).map(StandardIet::into_giet),
    }
}
