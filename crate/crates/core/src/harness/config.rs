use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learned::TrainConfig;
use crate::pricing::{CoeffMode, OptionSpec, PdeGrid, SabrSpec};
use crate::signature::SigMode;
use crate::vol_models::{Grid, ModelParams};

pub const DESK_PATHS: usize = 1_000;
pub const DESK_PDE_PATHS: usize = 50;
pub const PAPER_PATHS: usize = 10_000;
pub const PAPER_PDE_PATHS: usize = 200;

/// Where `(ṽ, Ĩ)` comes from in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReprKind {
    #[default]
    Analytic,
    Linear,
    Nonlinear,
    Exact,
    Zero,
}

impl FromStr for ReprKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(ReprKind::Analytic),
            "linear" => Ok(ReprKind::Linear),
            "nonlinear" => Ok(ReprKind::Nonlinear),
            "exact" => Ok(ReprKind::Exact),
            "zero" => Ok(ReprKind::Zero),
            other => Err(Error::Config(format!(
                "unknown representation `{other}` (analytic, linear, nonlinear, exact, zero)"
            ))),
        }
    }
}

impl fmt::Display for ReprKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReprKind::Analytic => "analytic",
            ReprKind::Linear => "linear",
            ReprKind::Nonlinear => "nonlinear",
            ReprKind::Exact => "exact",
            ReprKind::Zero => "zero",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeSettings {
    /// Number of W-paths the conditional solves are averaged over.
    pub paths: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub dx: f64,
    pub coeff_mode: CoeffMode,
}

impl Default for PdeSettings {
    fn default() -> Self {
        PdeSettings { paths: DESK_PDE_PATHS, x_lo: 11.0, x_hi: 330.0, dx: 0.25, coeff_mode: CoeffMode::Scalar }
    }
}

impl PdeSettings {
    pub fn grid(&self) -> Result<PdeGrid> {
        PdeGrid::with_step(self.x_lo, self.x_hi, self.dx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnedSettings {
    pub train_paths: usize,
    pub test_paths: usize,
}

impl Default for LearnedSettings {
    fn default() -> Self {
        LearnedSettings { train_paths: 800, test_paths: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub id: String,
    pub seed: u64,
    pub levels: Vec<usize>,
    /// Monte Carlo path count `M`.
    pub paths: usize,
    pub spots: Vec<f64>,
    pub representation: ReprKind,
    pub model_file: Option<PathBuf>,
    pub sig_mode: SigMode,
    pub out_dir: PathBuf,
    pub model: ModelParams,
    pub grid: Grid,
    pub sabr: SabrSpec,
    pub option: OptionSpec,
    pub pde: PdeSettings,
    pub learned: LearnedSettings,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            id: "experiment".into(),
            seed: 1,
            levels: vec![1, 2, 3, 4, 5],
            paths: DESK_PATHS,
            spots: vec![95.0, 110.0, 115.0],
            representation: ReprKind::Analytic,
            model_file: None,
            sig_mode: SigMode::ItoLeft,
            out_dir: PathBuf::from("results"),
            model: ModelParams::example1_ou(),
            grid: Grid::default(),
            sabr: SabrSpec::example1(),
            option: OptionSpec::default(),
            pde: PdeSettings::default(),
            learned: LearnedSettings::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Named volatility model with its reference parameters.
pub fn model_preset(name: &str) -> Result<ModelParams> {
    match name {
        "ou" => Ok(ModelParams::example1_ou()),
        "mgbm" => Ok(ModelParams::example1_mgbm()),
        "rheston" => Ok(ModelParams::example2_rheston()),
        "rbergomi" => Ok(ModelParams::example2_rbergomi()),
        other => Err(Error::Config(format!(
            "unknown model `{other}` (ou, mgbm, rheston, rbergomi){}",
            suggest(other, &["ou", "mgbm", "rheston", "rbergomi"])
        ))),
    }
}

impl ExperimentConfig {
    /// Defaults for `model` with the matching SABR block.
    pub fn for_model(model: ModelParams) -> ExperimentConfig {
        let sabr = match model {
            ModelParams::Ou { .. } | ModelParams::Mgbm { .. } => SabrSpec::example1(),
            _ => SabrSpec::example2(),
        };
        ExperimentConfig { id: model.name().into(), model, sabr, ..Default::default() }
    }

    pub fn table2(model: ModelParams) -> ExperimentConfig {
        ExperimentConfig { id: format!("table2-{}", model.name()), ..Self::for_model(model) }
    }

    pub fn table3(model: ModelParams) -> ExperimentConfig {
        ExperimentConfig { id: format!("table3-{}", model.name()), ..Self::for_model(model) }
    }

    pub fn learned_sweep(model: ModelParams) -> ExperimentConfig {
        ExperimentConfig {
            id: format!("learned-{}", model.name()),
            representation: ReprKind::Nonlinear,
            ..Self::for_model(model)
        }
    }

    /// `M = 10⁴` and `M_w = 200`.
    pub fn paper_scale(mut self) -> ExperimentConfig {
        self.paths = PAPER_PATHS;
        self.pde.paths = PAPER_PDE_PATHS;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.levels.is_empty() {
            return bad("levels must not be empty".into());
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("levels must be strictly ascending, got {:?}", self.levels));
        }
        if self.levels[0] == 0 {
            return bad("levels must be >= 1".into());
        }
        if self.paths == 0 {
            return bad("paths must be positive".into());
        }
        if self.pde.paths == 0 || self.pde.paths > self.paths {
            return bad(format!("pde.paths must lie in 1..={}, got {}", self.paths, self.pde.paths));
        }
        if self.learned.train_paths < 2 || self.learned.test_paths == 0 {
            return bad("learned.train_paths must be >= 2 and learned.test_paths >= 1".into());
        }
        if self.spots.is_empty() || self.spots.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad(format!("spots must be a nonempty list of positive numbers, got {:?}", self.spots));
        }
        if (self.option.maturity - self.grid.maturity).abs() > 1e-12 {
            return bad(format!(
                "option maturity {} differs from grid maturity {}",
                self.option.maturity, self.grid.maturity
            ));
        }
        let as_config = |e: Error| match e {
            Error::InvalidParameter(msg) => Error::Config(msg),
            other => other,
        };
        self.model.validate().map_err(as_config)?;
        self.grid.validate().map_err(as_config)?;
        self.sabr.validate().map_err(as_config)?;
        self.option.validate().map_err(as_config)?;
        self.train.validate().map_err(as_config)?;
        let grid = self.pde.grid().map_err(as_config)?;
        if let Some(s) = self.spots.iter().find(|&&s| !grid.contains(s)) {
            return bad(format!("spot {s} outside the PDE domain ({}, {})", grid.x_lo, grid.x_hi));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(describe_toml_error(&e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

fn describe_toml_error(e: &toml::de::Error) -> String {
    let msg = e.to_string();
    let Some(rest) = msg.split("unknown field `").nth(1) else {
        return msg.trim_end().to_string();
    };
    let field = rest.split('`').next().unwrap_or_default();
    let expected: Vec<&str> = rest
        .split("expected")
        .nth(1)
        .map(|tail| tail.split('`').skip(1).step_by(2).collect())
        .unwrap_or_default();
    format!("{}{}", msg.trim_end(), suggest(field, &expected))
}

/// `"; did you mean `x`?"` for the closest candidate, if any is close.
pub fn suggest(input: &str, candidates: &[&str]) -> String {
    candidates
        .iter()
        .map(|c| (strsim::jaro_winkler(input, c), c))
        .filter(|(score, _)| *score > 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| format!("; did you mean `{c}`?"))
        .unwrap_or_default()
}
