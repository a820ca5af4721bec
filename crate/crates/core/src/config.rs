//! Flat `key = value` configuration covering every pipeline tunable.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys are rejected, and the merged settings are validated as a whole.

use crate::learned::{LrSchedule, TrainConfig};
use crate::sim::{SceneKind, SimConfig};
use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("config key {0:?} given twice")]
    Duplicate(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read config: {0}")]
    Io(String),
}

/// All keys accepted by [`Settings::set`].
pub const KEYS: &[&str] = &[
    "sigma",
    "canny_low",
    "canny_high",
    "perimeter_min",
    "color_low",
    "color_high",
    "scale_x",
    "scale_y",
    "shift_x",
    "shift_y",
    "grasp_z",
    "denoise_window",
    "denoise_threshold",
    "kp",
    "kd",
    "damping",
    "qdot_max",
    "t_f",
    "settle",
    "control_rate",
    "frames",
    "frame_rate",
    "noise_sigma",
    "pos_tol",
    "ang_tol_deg",
    "good_grasp_px",
    "scene_kind",
    "lr",
    "batch_size",
    "epochs",
    "lr_schedule",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Settings {
    pub sim: SimConfig,
    pub train: TrainConfig,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_color(key: &str, value: &str) -> Result<[u8; 3], ConfigError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(ConfigError::Value {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected r,g,b".to_string(),
        });
    }
    let mut out = [0u8; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse(key, p)?;
    }
    Ok(out)
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let s = &mut self.sim;
        let v = value.trim();
        match key {
            "sigma" => s.classical.sigma = parse(key, v)?,
            "canny_low" => s.classical.canny_low = parse(key, v)?,
            "canny_high" => s.classical.canny_high = parse(key, v)?,
            "perimeter_min" => s.classical.perimeter_min = parse(key, v)?,
            "color_low" => s.classical.color_low = parse_color(key, v)?,
            "color_high" => s.classical.color_high = parse_color(key, v)?,
            "scale_x" => s.classical.calibration.scale[0] = parse(key, v)?,
            "scale_y" => s.classical.calibration.scale[1] = parse(key, v)?,
            "shift_x" => s.classical.calibration.shift[0] = parse(key, v)?,
            "shift_y" => s.classical.calibration.shift[1] = parse(key, v)?,
            "grasp_z" => s.grasp_z = parse(key, v)?,
            "denoise_window" => s.denoise_window = parse(key, v)?,
            "denoise_threshold" => s.denoise_threshold = parse(key, v)?,
            "kp" => s.control.gains.kp = parse(key, v)?,
            "kd" => s.control.gains.kd = parse(key, v)?,
            "damping" => s.control.damping = parse(key, v)?,
            "qdot_max" => s.control.qdot_max = parse(key, v)?,
            "t_f" => s.t_f = parse(key, v)?,
            "settle" => s.settle = parse(key, v)?,
            "control_rate" => s.control_rate = parse(key, v)?,
            "frames" => s.frames = parse(key, v)?,
            "frame_rate" => s.frame_rate = parse(key, v)?,
            "noise_sigma" => s.noise_sigma = parse(key, v)?,
            "pos_tol" => s.pos_tol = parse(key, v)?,
            "ang_tol_deg" => s.ang_tol = parse::<f64>(key, v)?.to_radians(),
            "good_grasp_px" => s.good_grasp_px = parse(key, v)?,
            "scene_kind" => {
                s.scene.kind = match v {
                    "flat" => SceneKind::Flat,
                    "crumpled" => SceneKind::Crumpled,
                    _ => {
                        return Err(ConfigError::Value {
                            key: key.into(),
                            value: v.into(),
                            reason: "expected flat or crumpled".into(),
                        })
                    }
                }
            }
            "lr" => self.train.lr = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "lr_schedule" => {
                self.train.schedule = match v {
                    "constant" => LrSchedule::Constant,
                    "cosine" => LrSchedule::Cosine,
                    _ => {
                        return Err(ConfigError::Value {
                            key: key.into(),
                            value: v.into(),
                            reason: "expected constant or cosine".into(),
                        })
                    }
                }
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies every `key=value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate(key.to_string()));
            }
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut s = Self::default();
        s.apply_text(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let t = &self.train;
        if !(t.lr > 0.0 && t.lr.is_finite()) || t.batch_size == 0 {
            return Err(ConfigError::Invalid(
                "lr must be positive and batch_size at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(Settings::parse("# nothing\n\n").unwrap(), Settings::default());
    }

    #[test]
    fn every_key_is_accepted() {
        let mut s = Settings::default();
        for key in KEYS {
            let value = match *key {
                "color_low" | "color_high" => "10,20,30",
                "scene_kind" => "flat",
                "lr_schedule" => "cosine",
                "frames" | "batch_size" | "epochs" => "3",
                _ => "0.5",
            };
            s.set(key, value).unwrap();
        }
    }

    #[test]
    fn values_land_in_fields() {
        let s = Settings::parse("sigma = 2.0\ncolor_low=1, 2, 3\nkp=1.2\nang_tol_deg=90\nepochs=7").unwrap();
        assert_eq!(s.sim.classical.sigma, 2.0);
        assert_eq!(s.sim.classical.color_low, [1, 2, 3]);
        assert_eq!(s.sim.control.gains.kp, 1.2);
        assert!((s.sim.ang_tol - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(s.train.epochs, 7);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            Settings::parse("bogus=1"),
            Err(ConfigError::UnknownKey("bogus".into()))
        );
        assert_eq!(Settings::parse("sigma"), Err(ConfigError::Syntax { line: 1 }));
        assert_eq!(
            Settings::parse("sigma=1\nsigma=2"),
            Err(ConfigError::Duplicate("sigma".into()))
        );
        assert!(matches!(Settings::parse("sigma=abc"), Err(ConfigError::Value { .. })));
        assert!(matches!(Settings::parse("color_low=1,2"), Err(ConfigError::Value { .. })));
        assert!(matches!(Settings::parse("sigma=-1"), Err(ConfigError::Invalid(_))));
        assert!(matches!(
            Settings::parse("canny_low=0.5\ncanny_high=0.2"),
            Err(ConfigError::Invalid(_))
        ));
    }
}
