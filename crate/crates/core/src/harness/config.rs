use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralnet::{ChunkSpec, TrainConfig};
use crate::spectral::StftParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    OracleBinary,
    OracleSoft,
    Dnn,
    Fastica,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::OracleBinary => "oracle-binary",
            Method::OracleSoft => "oracle-soft",
            Method::Dnn => "dnn",
            Method::Fastica => "fastica",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle-binary" => Ok(Method::OracleBinary),
            "oracle-soft" => Ok(Method::OracleSoft),
            "dnn" => Ok(Method::Dnn),
            "fastica" => Ok(Method::Fastica),
            other => Err(Error::config(
                "method",
                format!("unknown method `{other}` (oracle-binary, oracle-soft, dnn, fastica)"),
            )),
        }
    }
}

/// Which part of the signal `separate` runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSegment {
    Validation,
    Full,
}

/// Clicks standing in for the repeating machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulseSpec {
    pub pulse_rate_hz: f64,
    pub decay_per_sample: f64,
}

/// Band-limited noise standing in for the steady machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub low_hz: f64,
    pub high_hz: f64,
}

/// Source `a` is the mask target; source `b` is the interferer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceConfig {
    Synth {
        noise: NoiseSpec,
        impulse: ImpulseSpec,
    },
    Files {
        a: PathBuf,
        b: PathBuf,
        #[serde(default)]
        channel: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcaSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Row-major 2×2 matrix turning the two sources into two observation channels.
    pub mixing: [[f64; 2]; 2],
}

impl Default for IcaSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
            mixing: [[1.0, 1.0], [0.6, 1.4]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sources: SourceConfig,
    pub sample_rate_hz: u32,
    pub duration_s: f64,
    pub train_fraction: f64,
    pub mix_weights: [f64; 2],
    pub stft: StftParams,
    pub chunk: ChunkSpec,
    pub train: TrainConfig,
    pub method: Method,
    /// Model weights init from `seed + 1`, shuffling from `seed + 2`,
    /// synthesis from `seed + 3`, FastICA start from `seed + 4`.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/model.tfm`.
    pub model_path: Option<PathBuf>,
    pub eval_segment: EvalSegment,
    pub ica: IcaSettings,
    /// Also write mixture magnitude and mask CSV dumps.
    pub dump_csv: bool,
}

impl RunConfig {
    /// 60 s at 44.1 kHz, 128/127/128 STFT, 65×20 chunks with overlap 10,
    /// 3 epochs of batch 64.
    pub fn paper() -> Self {
        Self {
            sources: SourceConfig::Synth {
                noise: NoiseSpec {
                    low_hz: 1000.0,
                    high_hz: 2000.0,
                },
                impulse: ImpulseSpec {
                    pulse_rate_hz: 10.0,
                    decay_per_sample: 0.01,
                },
            },
            sample_rate_hz: 44_100,
            duration_s: 60.0,
            train_fraction: 0.9,
            mix_weights: [1.0, 1.0],
            stft: StftParams::default(),
            chunk: ChunkSpec::default(),
            train: TrainConfig::default(),
            method: Method::OracleSoft,
            seed: 0,
            out_dir: PathBuf::from("out"),
            model_path: None,
            eval_segment: EvalSegment::Validation,
            ica: IcaSettings::default(),
            dump_csv: false,
        }
    }

    /// Full-scale settings scaled down: 10 s at 16 kHz with hop 64.
    pub fn desk() -> Self {
        Self {
            sample_rate_hz: 16_000,
            duration_s: 10.0,
            stft: StftParams {
                hop: 64,
                ..StftParams::default()
            },
            ..Self::paper()
        }
    }

    /// Overlays a JSON document onto `base`. Unknown keys are rejected.
    pub fn from_json_over(base: &RunConfig, json: &str) -> Result<Self> {
        let overlay: serde_json::Value = serde_json::from_str(json)
            .map_err(|e| Error::config("<file>", format!("invalid JSON: {e}")))?;
        if !overlay.is_object() {
            return Err(Error::config("<file>", "config must be a JSON object"));
        }
        let mut merged = serde_json::to_value(base).expect("config serializes");
        merge(&mut merged, overlay);
        serde_json::from_value(merged).map_err(|e| Error::config("<file>", e.to_string()))
    }

    pub fn load(base: &RunConfig, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json_over(base, &text)
    }

    pub fn model_path(&self) -> PathBuf {
        self.model_path
            .clone()
            .unwrap_or_else(|| self.out_dir.join("model.tfm"))
    }

    pub fn synth_seed(&self) -> u64 {
        self.seed.wrapping_add(3)
    }

    pub fn ica_seed(&self) -> u64 {
        self.seed.wrapping_add(4)
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        if self.sample_rate_hz == 0 {
            return Err(Error::config("sample_rate_hz", "must be positive"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::config("duration_s", "must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction", "must lie in (0, 1)"));
        }
        if self.mix_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::config("mix_weights", "must be finite"));
        }
        self.stft
            .validate()
            .map_err(|e| Error::config("stft", e.to_string()))?;
        self.chunk
            .validate()
            .map_err(|e| Error::config("chunk", e.to_string()))?;
        if self.chunk.bins != self.stft.bins() {
            return Err(Error::config(
                "chunk.bins",
                format!(
                    "{} does not match the {} STFT bins",
                    self.chunk.bins,
                    self.stft.bins()
                ),
            ));
        }
        self.train
            .validate()
            .map_err(|e| Error::config("train", e.to_string()))?;
        if !(self.ica.tol > 0.0) || self.ica.max_iter == 0 {
            return Err(Error::config("ica", "tol and max_iter must be positive"));
        }
        if self.ica.mixing.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("ica.mixing", "must be finite"));
        }
        if let SourceConfig::Synth { noise, impulse } = &self.sources {
            if !(noise.low_hz >= 0.0 && noise.low_hz < noise.high_hz && noise.high_hz <= nyquist) {
                return Err(Error::config(
                    "sources.synth.noise",
                    format!("need 0 <= low_hz < high_hz <= {nyquist}"),
                ));
            }
            if !(impulse.pulse_rate_hz > 0.0 && impulse.pulse_rate_hz < nyquist) {
                return Err(Error::config(
                    "sources.synth.impulse.pulse_rate_hz",
                    format!("must lie in (0, {nyquist})"),
                ));
            }
            if !(impulse.decay_per_sample > 0.0 && impulse.decay_per_sample < 1.0) {
                return Err(Error::config(
                    "sources.synth.impulse.decay_per_sample",
                    "must lie in (0, 1)",
                ));
            }
        }
        Ok(())
    }
}

fn merge(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (key, value) in o {
                match b.get_mut(&key) {
                    // an enum variant switch replaces the whole object
                    Some(slot) if key != "sources" => merge(slot, value),
                    _ => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_preset_settings() {
        let c = RunConfig::paper();
        assert_eq!(c.sample_rate_hz, 44_100);
        assert_eq!(c.duration_s, 60.0);
        assert_eq!(c.train_fraction, 0.9);
        assert_eq!(c.stft, StftParams::new(128, 1, 128).unwrap());
        assert_eq!(c.stft.window_len - c.stft.hop, 127);
        assert_eq!(
            (c.chunk.bins, c.chunk.width_frames, c.chunk.overlap_frames),
            (65, 20, 10)
        );
        assert_eq!(
            (c.train.epochs, c.train.batch_size, c.train.shuffle),
            (3, 64, true)
        );
        assert_eq!(c.train.hidden_layers, vec![1300, 1300]);
        assert_eq!(c.mix_weights, [1.0, 1.0]);
        c.validate().unwrap();
        RunConfig::desk().validate().unwrap();
    }

    #[test]
    fn overlay_keeps_unlisted_fields() {
        let c = RunConfig::from_json_over(
            &RunConfig::desk(),
            r#"{"seed": 9, "stft": {"hop": 32}, "train": {"epochs": 5}}"#,
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.stft, StftParams::new(128, 32, 128).unwrap());
        assert_eq!(c.train.epochs, 5);
        assert_eq!(c.train.batch_size, 64);
        assert_eq!(c.sample_rate_hz, 16_000);
    }

    #[test]
    fn overlay_can_switch_source_kind() {
        let c = RunConfig::from_json_over(
            &RunConfig::desk(),
            r#"{"sources": {"files": {"a": "x.wav", "b": "y.wav"}}}"#,
        )
        .unwrap();
        assert_eq!(
            c.sources,
            SourceConfig::Files {
                a: "x.wav".into(),
                b: "y.wav".into(),
                channel: None
            }
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        for doc in [r#"{"sead": 1}"#, r#"{"stft": {"hopp": 2}}"#, "[1]", "{"] {
            assert!(matches!(
                RunConfig::from_json_over(&RunConfig::desk(), doc),
                Err(Error::Config { .. })
            ));
        }
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = RunConfig::desk();
        c.duration_s = 0.0;
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "duration_s"),
            other => panic!("{other:?}"),
        }
        let mut c = RunConfig::desk();
        c.sources = SourceConfig::Synth {
            noise: NoiseSpec {
                low_hz: 3000.0,
                high_hz: 2000.0,
            },
            impulse: ImpulseSpec {
                pulse_rate_hz: 10.0,
                decay_per_sample: 0.01,
            },
        };
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "sources.synth.noise"),
            other => panic!("{other:?}"),
        }
        let mut c = RunConfig::desk();
        c.chunk.bins = 64;
        assert!(c.validate().is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::OracleBinary,
            Method::OracleSoft,
            Method::Dnn,
            Method::Fastica,
        ] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("wiener".parse::<Method>().is_err());
    }
}
