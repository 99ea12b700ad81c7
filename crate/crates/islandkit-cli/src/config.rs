//! Run configuration: one place for every default, flag resolution, and the
//! `key=value` config-file override.

use std::path::Path;

use islandkit::error::Error;
use islandkit::layers::{ClampPolicy, LayerKind, LayerMode};
use islandkit::pipeline::LayerBuildOptions;
use islandkit::signal::WindowFn;
use islandkit::Result;

use crate::TuningArgs;

/// Environment variable consulted when no seed is given explicitly.
pub const SEED_ENV_VAR: &str = "ISLANDKIT_SEED";

/// Resolved configuration. Defaults for every field:
///
/// | field            | default      |
/// |------------------|--------------|
/// | band             | 0.1:1.0 Hz   |
/// | clamp            | zero         |
/// | window           | none         |
/// | layer_mode       | measured     |
/// | normalize_layers | off          |
/// | alpha            | 0.5          |
/// | seed             | 0 (after $ISLANDKIT_SEED) |
/// | restarts         | 20           |
/// | case             | none         |
/// | layers           | freq,p,q     |
/// | k                | auto         |
/// | stage1-layer     | per case, else frequency |
///
/// Precedence per field: config-file value, then flag, then environment
/// (seed only), then the default above.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub band_hz: (f64, f64),
    pub clamp: ClampPolicy,
    pub window: WindowFn,
    pub layer_mode: LayerMode,
    pub normalize_layers: bool,
    pub alpha: f64,
    pub seed: u64,
    pub restarts: usize,
    /// Subcommand-level overrides carried through the config file.
    pub case: Option<u8>,
    pub layers: Option<String>,
    pub k: Option<String>,
    pub stage1: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            band_hz: (0.1, 1.0),
            clamp: ClampPolicy::Zero,
            window: WindowFn::Rectangular,
            layer_mode: LayerMode::Measured,
            normalize_layers: false,
            alpha: 0.5,
            seed: 0,
            restarts: 20,
            case: None,
            layers: None,
            k: None,
            stage1: None,
        }
    }
}

impl RunConfig {
    /// Applies flags over the defaults, then config-file values over the
    /// flags, with $ISLANDKIT_SEED as the seed fallback.
    pub fn resolve(tuning: &TuningArgs) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();

        if let Some(band) = &tuning.band {
            cfg.band_hz = parse_band(band)?;
        }
        if let Some(clamp) = &tuning.clamp {
            cfg.clamp = parse_clamp(clamp)?;
        }
        if let Some(window) = &tuning.window {
            cfg.window = parse_window(window)?;
        }
        if let Some(mode) = &tuning.layer_mode {
            cfg.layer_mode = parse_layer_mode(mode)?;
        }
        cfg.normalize_layers = tuning.normalize_layers;
        if let Some(alpha) = tuning.alpha {
            cfg.alpha = alpha;
        }
        cfg.seed = match tuning.seed {
            Some(s) => s,
            None => seed_from_env().unwrap_or(0),
        };
        if let Some(restarts) = tuning.restarts {
            cfg.restarts = restarts;
        }

        if let Some(path) = &tuning.config {
            apply_config_file(&mut cfg, path)?;
        }
        if cfg.alpha < 0.0 || !cfg.alpha.is_finite() {
            return Err(Error::Config(format!(
                "alpha must be a finite value >= 0, got {}",
                cfg.alpha
            )));
        }
        Ok(cfg)
    }

    pub fn build_options(&self) -> LayerBuildOptions {
        LayerBuildOptions {
            mode: self.layer_mode,
            band_hz: self.band_hz,
            clamp: self.clamp,
            window: self.window,
            normalize: self.normalize_layers,
        }
    }
}

pub fn seed_from_env() -> Option<u64> {
    std::env::var(SEED_ENV_VAR).ok()?.trim().parse().ok()
}

/// `key=value` lines; `#` starts a comment. Values here override flags.
fn apply_config_file(cfg: &mut RunConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            detail: format!("line {}: expected key=value, got '{raw}'", lineno + 1),
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad_value = |what: &str| Error::Parse {
            path: path.display().to_string(),
            detail: format!("line {}: invalid {what} '{value}'", lineno + 1),
        };
        match key {
            "band" => cfg.band_hz = parse_band(value)?,
            "clamp" => cfg.clamp = parse_clamp(value)?,
            "window" => cfg.window = parse_window(value)?,
            "layer-mode" => cfg.layer_mode = parse_layer_mode(value)?,
            "normalize-layers" => {
                cfg.normalize_layers = value.parse().map_err(|_| bad_value("bool"))?
            }
            "alpha" => cfg.alpha = value.parse().map_err(|_| bad_value("number"))?,
            "seed" => cfg.seed = value.parse().map_err(|_| bad_value("seed"))?,
            "restarts" => cfg.restarts = value.parse().map_err(|_| bad_value("count"))?,
            "case" => cfg.case = Some(value.parse().map_err(|_| bad_value("case"))?),
            "layers" => cfg.layers = Some(value.to_string()),
            "k" => cfg.k = Some(value.to_string()),
            "stage1-layer" => cfg.stage1 = Some(value.to_string()),
            other => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    detail: format!("line {}: unknown key '{other}'", lineno + 1),
                })
            }
        }
    }
    Ok(())
}

pub fn parse_band(spec: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("band '{spec}' is not 'lo:hi' in Hz"));
    let (lo, hi) = spec.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo >= 0.0 && hi > lo) {
        return Err(Error::Config(format!(
            "band '{spec}' must satisfy 0 <= lo < hi"
        )));
    }
    Ok((lo, hi))
}

pub fn parse_clamp(s: &str) -> Result<ClampPolicy> {
    match s.to_ascii_lowercase().as_str() {
        "zero" => Ok(ClampPolicy::Zero),
        "shift" => Ok(ClampPolicy::Shift),
        other => Err(Error::Config(format!(
            "unknown clamp policy '{other}' (expected zero or shift)"
        ))),
    }
}

pub fn parse_window(s: &str) -> Result<WindowFn> {
    match s.to_ascii_lowercase().as_str() {
        "none" | "rect" | "rectangular" => Ok(WindowFn::Rectangular),
        "hann" => Ok(WindowFn::Hann),
        other => Err(Error::Config(format!(
            "unknown window '{other}' (expected none or hann)"
        ))),
    }
}

pub fn parse_layer_mode(s: &str) -> Result<LayerMode> {
    match s.to_ascii_lowercase().as_str() {
        "measured" => Ok(LayerMode::Measured),
        "formula" => Ok(LayerMode::Formula),
        other => Err(Error::Config(format!(
            "unknown layer mode '{other}' (expected measured or formula)"
        ))),
    }
}

pub fn parse_layer_kind(s: &str) -> Result<LayerKind> {
    match s.to_ascii_lowercase().as_str() {
        "freq" | "frequency" => Ok(LayerKind::Frequency),
        "p" | "active" => Ok(LayerKind::Active),
        "q" | "reactive" => Ok(LayerKind::Reactive),
        other => Err(Error::Config(format!(
            "unknown layer '{other}' (expected freq, p, or q)"
        ))),
    }
}

pub fn parse_layer_list(spec: &str) -> Result<Vec<LayerKind>> {
    let kinds: Vec<LayerKind> = spec
        .split(',')
        .map(|s| parse_layer_kind(s.trim()))
        .collect::<Result<_>>()?;
    if kinds.is_empty() {
        return Err(Error::Config("layer list is empty".into()));
    }
    let mut seen = Vec::new();
    for k in &kinds {
        if seen.contains(k) {
            return Err(Error::Config(format!("layer '{k}' listed twice")));
        }
        seen.push(*k);
    }
    Ok(kinds)
}

/// "auto" or an explicit count.
pub fn parse_k(s: &str) -> Result<Option<usize>> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    s.trim()
        .parse()
        .map(Some)
        .map_err(|_| Error::Config(format!("k must be 'auto' or a positive integer, got '{s}'")))
}

pub fn parse_f64_list(spec: &str, what: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{what}: '{s}' is not a number")))
        })
        .collect()
}
