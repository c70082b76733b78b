use crate::sources::SOURCE_NAMES;
use crate::toy::ToyParams;
use insitu_core::field::GlobalVolume;
use insitu_core::protocol::ImageEncoding;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
}

/// `AxBxC` or a single number for all three axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Triple(pub [usize; 3]);

impl FromStr for Triple {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<usize> = s
            .split(['x', 'X', ','])
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [n] => Ok(Triple([n; 3])),
            [a, b, c] => Ok(Triple([a, b, c])),
            _ => Err(format!("expected N or AxBxC, got '{s}'")),
        }
    }
}

/// `WxH`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pair(pub [usize; 2]);

impl FromStr for Pair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<usize> = s
            .split(['x', 'X', ','])
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [w, h] => Ok(Pair([w, h])),
            _ => Err(format!("expected WxH, got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    /// Radians around the vertical axis.
    pub azimuth: f64,
    /// Radians above the horizontal plane.
    pub elevation: f64,
    /// Distance from the volume center in multiples of the volume diagonal.
    pub distance: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            azimuth: 0.6,
            elevation: 0.35,
            distance: 1.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    /// Session name announced to the gateway.
    pub name: String,
    /// Global grid size in cells.
    pub size: Triple,
    /// Ranks per axis; must divide `size`.
    pub ranks: Triple,
    pub steps: u64,
    /// Render every `period`-th step.
    pub period: u64,
    /// Image width and height in pixels.
    pub image: Pair,
    /// `host:port` of the gateway's simulation port. Without it frames go to `output`.
    pub gateway: Option<String>,
    pub token: Option<String>,
    /// Directory for `frame_<step>.png` files in headless mode.
    pub output: Option<PathBuf>,
    /// Sources rendered initially, by name.
    pub active: Vec<String>,
    pub encoding: ImageEncoding,
    pub quality: u8,
    /// Artificial delay before encoding each frame, in milliseconds.
    pub encode_delay_ms: u64,
    /// Steering lines to replay, one `<tick> <json>` per line.
    pub transcript: Option<PathBuf>,
    /// Where to write the steering lines actually received, in the same format.
    pub record_transcript: Option<PathBuf>,
    /// Sleep per control tick while paused.
    pub pause_tick_ms: u64,
    /// While paused, re-render the frozen state every this many ticks.
    pub pause_frame_ticks: u64,
    pub step_length: f64,
    /// 1.0 disables early ray termination, which keeps frames independent of the decomposition.
    pub early_termination: f64,
    /// Serialize local renders across ranks; defaults to on when ranks outnumber cores.
    pub exclusive_render: Option<bool>,
    pub camera: CameraConfig,
    pub toy: ToyParams,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            name: "toy-shear".into(),
            size: Triple([64; 3]),
            ranks: Triple([2; 3]),
            steps: 20,
            period: 5,
            image: Pair([480, 270]),
            gateway: None,
            token: None,
            output: None,
            active: vec!["density".into()],
            encoding: ImageEncoding::Png,
            quality: 100,
            encode_delay_ms: 0,
            transcript: None,
            record_transcript: None,
            pause_tick_ms: 10,
            pause_frame_ticks: 20,
            step_length: 0.5,
            early_termination: 1.0,
            exclusive_render: None,
            camera: CameraConfig::default(),
            toy: ToyParams::default(),
        }
    }
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    pub fn volume(&self) -> Result<GlobalVolume, ConfigError> {
        GlobalVolume::new(self.size.0, self.ranks.0).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Source ids of `active`, in registration order.
    pub fn active_ids(&self) -> Result<Vec<usize>, ConfigError> {
        let mut ids = Vec::new();
        for name in &self.active {
            let id = SOURCE_NAMES
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| ConfigError::Invalid(format!("unknown source '{name}', expected one of {SOURCE_NAMES:?}")))?;
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        ids.sort_unstable();
        Ok(ids)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.volume()?;
        self.active_ids()?;
        let invalid = |msg: &str| Err(ConfigError::Invalid(msg.into()));
        if self.period == 0 {
            return invalid("period must be at least 1");
        }
        if self.image.0.contains(&0) {
            return invalid("image size must be positive");
        }
        if !(1..=100).contains(&self.quality) {
            return invalid("quality must be within 1..=100");
        }
        if self.pause_frame_ticks == 0 {
            return invalid("pause_frame_ticks must be at least 1");
        }
        if self.toy.shear_width <= 0.0 || self.toy.dt < 0.0 {
            return invalid("toy.shear_width must be positive and toy.dt non-negative");
        }
        Ok(())
    }
}

/// Parses a transcript: one `<tick> <json line>` per line; blank lines and `#` comments are skipped.
pub fn parse_transcript(text: &str) -> Result<Vec<(u64, String)>, ConfigError> {
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (tick, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| ConfigError::Invalid(format!("transcript line {}: expected '<tick> <json>'", n + 1)))?;
        let tick = tick
            .parse()
            .map_err(|e| ConfigError::Invalid(format!("transcript line {}: tick: {e}", n + 1)))?;
        entries.push((tick, rest.trim_start().to_string()));
    }
    Ok(entries)
}

pub fn format_transcript(entries: &[(u64, String)]) -> String {
    entries.iter().map(|(tick, line)| format!("{tick} {line}\n")).collect()
}
