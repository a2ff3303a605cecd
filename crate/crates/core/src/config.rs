//! Pipeline configuration in `key = value` form.
//!
//! Every key is optional; missing keys take their defaults. Serializing
//! writes every key in a fixed order, so a parsed canonical file
//! re-serializes to the same text.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::{DEFAULT_GLU_CHANNELS, DEFAULT_GROUPS, PYRAMID_CHANNELS};
use crate::fusion::{FilterMode, FilterParams};

/// Cosine volumes lie in `[-1, 1]`; without a gain the softmax at the
/// default temperatures is close to uniform over each window.
pub const DEFAULT_VOLUME_GAIN: f32 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureSource {
    Handcrafted,
    VitFiles,
}

impl FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "handcrafted" => Ok(FeatureSource::Handcrafted),
            "vit-files" => Ok(FeatureSource::VitFiles),
            other => Err(Error::Config(format!("unknown feature source {other:?}"))),
        }
    }
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSource::Handcrafted => "handcrafted",
            FeatureSource::VitFiles => "vit-files",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub hypotheses: [usize; 4],
    /// Positive; `inf` selects the argmax read-out for that stage.
    pub temperatures: [f32; 4],
    pub groups: usize,
    pub channels: usize,
    /// Reference view plus sources.
    pub views: usize,
    pub filter: FilterParams,
    pub features: FeatureSource,
    /// Multiplier applied to regularized volumes before the softmax.
    pub volume_gain: f32,
    pub glu_seed: u64,
    pub glu_channels: usize,
    /// Directory of ViT files, relative to the scene directory.
    pub vit_dir: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            hypotheses: [32, 16, 8, 4],
            temperatures: [5.0, 2.5, 1.5, 1.0],
            groups: DEFAULT_GROUPS,
            channels: PYRAMID_CHANNELS,
            views: 5,
            filter: FilterParams::default(),
            features: FeatureSource::Handcrafted,
            volume_gain: DEFAULT_VOLUME_GAIN,
            glu_seed: 0,
            glu_channels: DEFAULT_GLU_CHANNELS,
            vit_dir: "vit".into(),
        }
    }
}

fn list<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(value: &str) -> Option<[T; 4]> {
    let items: Vec<T> = value
        .split(',')
        .map(|s| s.trim().parse().ok())
        .collect::<Option<_>>()?;
    items.try_into().ok()
}

/// Parses `t1,t2,t3,t4`; each entry is a positive number or `inf`.
pub fn parse_temperatures(value: &str) -> Result<[f32; 4]> {
    let temps: [f32; 4] = parse_list(value)
        .ok_or_else(|| Error::Config(format!("expected four temperatures, got {value:?}")))?;
    if let Some(&t) = temps.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::InvalidTemperature(t));
    }
    Ok(temps)
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for w in self.hypotheses.windows(2) {
            if w[1] * 2 != w[0] {
                return Err(Error::Config(format!(
                    "hypotheses must halve per stage, got {:?}",
                    self.hypotheses
                )));
            }
        }
        if self.hypotheses[3] < 2 {
            return Err(Error::Config("every stage needs at least 2 hypotheses".into()));
        }
        if let Some(&t) = self.temperatures.iter().find(|t| !(**t > 0.0)) {
            return Err(Error::InvalidTemperature(t));
        }
        if self.channels != PYRAMID_CHANNELS {
            return Err(Error::Config(format!(
                "the feature pyramid has {PYRAMID_CHANNELS} channels, config asks for {}",
                self.channels
            )));
        }
        if self.groups == 0 || self.channels % self.groups != 0 {
            return Err(Error::GroupMismatch {
                channels: self.channels,
                groups: self.groups,
            });
        }
        if self.views < 2 {
            return Err(Error::Config("need at least one source view".into()));
        }
        if !(self.volume_gain > 0.0 && self.volume_gain.is_finite()) {
            return Err(Error::Config(format!("volume_gain must be positive, got {}", self.volume_gain)));
        }
        if self.glu_channels == 0 {
            return Err(Error::Config("glu_channels must be positive".into()));
        }
        self.filter.validate()
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse {v:?}"))
        }
        match key {
            "hypotheses" => {
                self.hypotheses = parse_list(value).ok_or("expected four counts")?;
            }
            "temperatures" => self.temperatures = parse_temperatures(value).map_err(|e| e.to_string())?,
            "groups" => self.groups = num(value)?,
            "channels" => self.channels = num(value)?,
            "views" => self.views = num(value)?,
            "disparity_threshold" => self.filter.disparity_threshold = num(value)?,
            "num_consistent" => self.filter.num_consistent = num(value)?,
            "prob_threshold" => self.filter.prob_threshold = num(value)?,
            "reproj_threshold_px" => self.filter.reproj_threshold_px = num(value)?,
            "filter_mode" => self.filter.mode = value.parse::<FilterMode>().map_err(|e| e.to_string())?,
            "features" => self.features = value.parse::<FeatureSource>().map_err(|e| e.to_string())?,
            "volume_gain" => self.volume_gain = num(value)?,
            "glu_seed" => self.glu_seed = num(value)?,
            "glu_channels" => self.glu_channels = num(value)?,
            "vit_dir" => self.vit_dir = value.to_string(),
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        text.parse()
    }
}

impl FromStr for PipelineConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: n + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected key = value".into()))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "hypotheses = {}", list(&self.hypotheses))?;
        writeln!(f, "temperatures = {}", list(&self.temperatures))?;
        writeln!(f, "groups = {}", self.groups)?;
        writeln!(f, "channels = {}", self.channels)?;
        writeln!(f, "views = {}", self.views)?;
        writeln!(f, "disparity_threshold = {}", self.filter.disparity_threshold)?;
        writeln!(f, "num_consistent = {}", self.filter.num_consistent)?;
        writeln!(f, "prob_threshold = {}", self.filter.prob_threshold)?;
        writeln!(f, "reproj_threshold_px = {}", self.filter.reproj_threshold_px)?;
        writeln!(f, "filter_mode = {}", self.filter.mode)?;
        writeln!(f, "features = {}", self.features)?;
        writeln!(f, "volume_gain = {}", self.volume_gain)?;
        writeln!(f, "glu_seed = {}", self.glu_seed)?;
        writeln!(f, "glu_channels = {}", self.glu_channels)?;
        writeln!(f, "vit_dir = {}", self.vit_dir)
    }
}
