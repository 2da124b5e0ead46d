use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;

use super::config::{EvalSegment, Method, RunConfig, SourceConfig};
use crate::audio::{
    mix, normalize_power, read_wav, split_train_validation, synth_filtered_noise,
    synth_impulse_train, write_wav, AudioSignal, WavEncoding,
};
use crate::bsseval::{evaluate, report_rows, write_csv, MetricRow};
use crate::error::{Error, Result};
use crate::fastica::{
    center_whiten, fastica_fit, ica_separate, Contrast, IcaOptions, ObservationMatrix,
};
use crate::masking::{binary_mask, complement, reconstruct, soft_mask, Mask};
use crate::neuralnet::{
    chunk, estimate_mask, load_model, save_model, train, ChunkPairs, TrainHistory,
};
use crate::spectral::{log_features, stft, write_matrix_csv, Spectrogram};

pub const SOURCE_NAMES: [&str; 2] = ["source_a", "source_b"];

fn source_names() -> Vec<String> {
    SOURCE_NAMES.iter().map(|s| s.to_string()).collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// The two synthetic sources, each at unit RMS.
pub fn synth_sources(config: &RunConfig) -> Result<(AudioSignal, AudioSignal)> {
    let SourceConfig::Synth { noise, impulse } = &config.sources else {
        return Err(Error::config(
            "sources",
            "synthesis needs a `synth` source spec",
        ));
    };
    let seed = config.synth_seed();
    let a = synth_filtered_noise(
        noise.low_hz,
        noise.high_hz,
        config.duration_s,
        config.sample_rate_hz,
        seed,
    )?;
    let b = synth_impulse_train(
        impulse.pulse_rate_hz,
        impulse.decay_per_sample,
        config.duration_s,
        config.sample_rate_hz,
        seed,
    )?;
    Ok((normalize_power(&a)?, normalize_power(&b)?))
}

/// Sources from the config at unit RMS, cut to a common length.
pub fn load_sources(config: &RunConfig) -> Result<(AudioSignal, AudioSignal)> {
    match &config.sources {
        SourceConfig::Synth { .. } => synth_sources(config),
        SourceConfig::Files { a, b, channel } => {
            let a = read_wav(a, *channel)?;
            let b = read_wav(b, *channel)?;
            if a.sample_rate_hz() != b.sample_rate_hz() {
                return Err(Error::Rate(a.sample_rate_hz(), b.sample_rate_hz()));
            }
            let n = a.len().min(b.len());
            Ok((
                normalize_power(&a.slice(0, n)?)?,
                normalize_power(&b.slice(0, n)?)?,
            ))
        }
    }
}

/// Sources and their mixture over one stretch of time.
#[derive(Debug, Clone)]
pub struct Segment {
    pub a: AudioSignal,
    pub b: AudioSignal,
    pub mixture: AudioSignal,
}

impl Segment {
    fn new(a: AudioSignal, b: AudioSignal, weights: [f64; 2]) -> Result<Self> {
        let mixture = mix(&a, &b, weights[0], weights[1], false)?;
        Ok(Self { a, b, mixture })
    }
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub full: Segment,
    pub training: Segment,
    pub validation: Segment,
}

pub fn prepare(config: &RunConfig) -> Result<PreparedData> {
    let (a, b) = load_sources(config)?;
    let (a_train, a_val) = split_train_validation(&a, config.train_fraction)?;
    let (b_train, b_val) = split_train_validation(&b, config.train_fraction)?;
    Ok(PreparedData {
        full: Segment::new(a, b, config.mix_weights)?,
        training: Segment::new(a_train, b_train, config.mix_weights)?,
        validation: Segment::new(a_val, b_val, config.mix_weights)?,
    })
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub paths: [PathBuf; 2],
}

pub fn cmd_synth(config: &RunConfig) -> Result<SynthOutput> {
    config.validate()?;
    if !matches!(config.sources, SourceConfig::Synth { .. }) {
        return Err(Error::config(
            "sources",
            "synth needs a `synth` source spec",
        ));
    }
    let (a, b) = synth_sources(config)?;
    create_dir(&config.out_dir)?;
    let paths = SOURCE_NAMES.map(|name| config.out_dir.join(format!("{name}.wav")));
    write_wav(&paths[0], &a, WavEncoding::Float32)?;
    write_wav(&paths[1], &b, WavEncoding::Float32)?;
    Ok(SynthOutput { paths })
}

/// Standardized log-magnitude predictors and soft-mask targets for one segment.
struct Features {
    predictors: Array2<f64>,
    targets: Array2<f64>,
}

fn require_chunk_span(spec: &Spectrogram, config: &RunConfig, what: &str) -> Result<()> {
    if spec.frames() < config.chunk.width_frames {
        return Err(Error::Data(format!(
            "{what} audio gives {} STFT frames, fewer than one {}-frame chunk",
            spec.frames(),
            config.chunk.width_frames
        )));
    }
    Ok(())
}

fn require_window(segment: &Segment, config: &RunConfig, what: &str) -> Result<()> {
    if segment.mixture.len() < config.stft.window_len {
        return Err(Error::Data(format!(
            "{what} audio has {} samples, shorter than the STFT window",
            segment.mixture.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model_path: PathBuf,
    pub history_path: PathBuf,
    pub history: TrainHistory,
}

pub fn history_csv(history: &TrainHistory) -> String {
    let mut out = String::from("epoch,train_mse,val_mse\n");
    for r in &history.epochs {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.train_mse, r.val_mse));
    }
    out
}

pub fn cmd_train(config: &RunConfig) -> Result<TrainOutput> {
    config.validate()?;
    let data = prepare(config)?;
    require_window(&data.training, config, "training")?;
    require_window(&data.validation, config, "validation")?;

    let specs = |seg: &Segment| -> Result<[Spectrogram; 3]> {
        Ok([
            stft(&seg.mixture, config.stft)?,
            stft(&seg.a, config.stft)?,
            stft(&seg.b, config.stft)?,
        ])
    };
    let [train_mix, train_a, train_b] = specs(&data.training)?;
    let [val_mix, val_a, val_b] = specs(&data.validation)?;
    require_chunk_span(&train_mix, config, "training")?;
    require_chunk_span(&val_mix, config, "validation")?;

    let (train_pred, stats) = log_features(&train_mix.magnitude(), None)?;
    let (val_pred, _) = log_features(&val_mix.magnitude(), Some(&stats))?;
    let train_feat = Features {
        predictors: train_pred,
        targets: soft_mask(&train_a.magnitude(), &train_b.magnitude())?
            .data()
            .clone(),
    };
    let val_feat = Features {
        predictors: val_pred,
        targets: soft_mask(&val_a.magnitude(), &val_b.magnitude())?
            .data()
            .clone(),
    };
    let pairs = |f: &Features| -> Result<ChunkPairs> {
        ChunkPairs::new(
            chunk(f.predictors.view(), &config.chunk)?,
            chunk(f.targets.view(), &config.chunk)?,
        )
    };
    let training = pairs(&train_feat)?;
    let validation = pairs(&val_feat)?;
    log::info!(
        "training on {} chunks, validating on {}",
        training.len(),
        validation.len()
    );

    let (model, history) = train(&training, &validation, &config.train_config(), stats)?;

    create_dir(&config.out_dir)?;
    let model_path = config.model_path();
    if let Some(parent) = model_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_model(&model, &model_path)?;
    let history_path = config.out_dir.join("history.csv");
    write_text(&history_path, &history_csv(&history))?;
    Ok(TrainOutput {
        model_path,
        history_path,
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcaRunInfo {
    pub contrast: String,
    pub converged: bool,
    pub iterations: usize,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub method: String,
    pub segment: Option<EvalSegment>,
    pub rows: Vec<MetricRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ica: Vec<IcaRunInfo>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        create_dir(dir)?;
        let csv = dir.join("metrics.csv");
        let json = dir.join("metrics.json");
        write_csv(&csv, &self.rows)?;
        write_text(&json, &self.to_json())?;
        Ok((csv, json))
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<20} {:<10} {:>10} {:>10} {:>10} {:>5}\n",
            "method", "source", "SDR dB", "SIR dB", "SAR dB", "est"
        );
        let cell = |d: crate::bsseval::Db| {
            if d.0.is_finite() {
                format!("{:.2}", d.0)
            } else {
                d.to_field()
            }
        };
        for r in &self.rows {
            out.push_str(&format!(
                "{:<20} {:<10} {:>10} {:>10} {:>10} {:>5}\n",
                r.method,
                r.source,
                cell(r.sdr_db),
                cell(r.sir_db),
                cell(r.sar_db),
                r.permutation
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SeparateOutput {
    pub report: MetricReport,
    pub estimate_paths: Vec<PathBuf>,
}

fn mask_for(config: &RunConfig, segment: &Segment, mixture: &Spectrogram) -> Result<Mask> {
    let mag_a = || stft(&segment.a, config.stft).map(|s| s.magnitude());
    let mag_b = || stft(&segment.b, config.stft).map(|s| s.magnitude());
    match config.method {
        Method::OracleSoft => soft_mask(&mag_a()?, &mag_b()?),
        Method::OracleBinary => binary_mask(&mag_a()?, &mag_b()?),
        Method::Dnn => {
            let path = config.model_path();
            if !path.exists() {
                return Err(Error::Usage(format!(
                    "method dnn needs a trained model; {} not found (run `train` first)",
                    path.display()
                )));
            }
            let model = load_model(&path)?;
            require_chunk_span(mixture, config, "evaluation")?;
            let (features, _) = log_features(&mixture.magnitude(), Some(model.feature_stats()))?;
            estimate_mask(&model, features.view(), &config.chunk)
        }
        Method::Fastica => unreachable!("FastICA does not use a mask"),
    }
}

pub fn cmd_separate(config: &RunConfig) -> Result<SeparateOutput> {
    config.validate()?;
    if config.method == Method::Dnn && !config.model_path().exists() {
        return Err(Error::Usage(format!(
            "method dnn needs a trained model; {} not found (run `train` first)",
            config.model_path().display()
        )));
    }
    let data = prepare(config)?;
    let segment = match config.eval_segment {
        EvalSegment::Validation => &data.validation,
        EvalSegment::Full => &data.full,
    };
    require_window(segment, config, "evaluation")?;
    let references = [segment.a.clone(), segment.b.clone()];

    let mut runs: Vec<(String, [AudioSignal; 2])> = Vec::new();
    let mut ica = Vec::new();
    let mut dumps: Vec<(&str, Array2<f64>)> = Vec::new();

    if config.method == Method::Fastica {
        let [[m00, m01], [m10, m11]] = config.ica.mixing;
        let rows: Vec<Vec<f64>> = [(m00, m01), (m10, m11)]
            .iter()
            .map(|&(wa, wb)| mix(&segment.a, &segment.b, wa, wb, false).map(|s| s.into_samples()))
            .collect::<Result<_>>()?;
        let observations = ObservationMatrix::from_rows(&[&rows[0], &rows[1]])?;
        let whitened = center_whiten(&observations)?;
        let options = IcaOptions {
            tol: config.ica.tol,
            max_iter: config.ica.max_iter,
            seed: config.ica_seed(),
        };
        for contrast in [Contrast::Kurtosis, Contrast::Negentropy] {
            let model = fastica_fit(&whitened, contrast, &options)?;
            let sources = ica_separate(&observations, &model)?;
            let rate = segment.mixture.sample_rate_hz();
            let est0 = AudioSignal::new(sources.row(0).to_vec(), rate)?;
            let est1 = AudioSignal::new(sources.row(1).to_vec(), rate)?;
            ica.push(IcaRunInfo {
                contrast: contrast.name().to_string(),
                converged: model.converged,
                iterations: model.iterations_used,
            });
            runs.push((format!("fastica-{}", contrast.name()), [est0, est1]));
        }
    } else {
        let mixture = stft(&segment.mixture, config.stft)?;
        let mask = mask_for(config, segment, &mixture)?;
        let est_a = reconstruct(&mask, &mixture)?;
        let est_b = reconstruct(&complement(&mask), &mixture)?;
        if config.dump_csv {
            dumps.push(("mixture_magnitude", mixture.magnitude()));
            dumps.push(("mask", mask.data().clone()));
        }
        runs.push((config.method.name().to_string(), [est_a, est_b]));
    }

    let mut rows = Vec::new();
    for (name, estimates) in &runs {
        let result = evaluate(estimates, &references)?;
        rows.extend(report_rows(name, &source_names(), &result));
    }

    create_dir(&config.out_dir)?;
    let mut estimate_paths = Vec::new();
    for (name, estimates) in &runs {
        for (i, est) in estimates.iter().enumerate() {
            let path = config.out_dir.join(format!("{name}_estimate_{i}.wav"));
            write_wav(&path, est, WavEncoding::Float32)?;
            estimate_paths.push(path);
        }
    }
    for (name, matrix) in &dumps {
        write_matrix_csv(config.out_dir.join(format!("{name}.csv")), matrix)?;
    }
    let report = MetricReport {
        method: config.method.name().to_string(),
        segment: Some(config.eval_segment),
        rows,
        ica,
    };
    report.write(&config.out_dir)?;
    Ok(SeparateOutput {
        report,
        estimate_paths,
    })
}

/// Scores estimate WAVs against reference WAVs; writes the report if `out_dir` is given.
pub fn cmd_evaluate(
    estimates: &[PathBuf],
    references: &[PathBuf],
    out_dir: Option<&Path>,
) -> Result<MetricReport> {
    if estimates.len() != references.len() || estimates.is_empty() {
        return Err(Error::Usage(format!(
            "{} estimates for {} references",
            estimates.len(),
            references.len()
        )));
    }
    let load = |paths: &[PathBuf]| -> Result<Vec<AudioSignal>> {
        paths.iter().map(|p| read_wav(p, None)).collect()
    };
    let est = load(estimates)?;
    let refs = load(references)?;
    let result = evaluate(&est, &refs)?;
    let names: Vec<String> = references
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
        .collect();
    let report = MetricReport {
        method: "evaluate".into(),
        segment: None,
        rows: report_rows("evaluate", &names, &result),
        ica: Vec::new(),
    };
    if let Some(dir) = out_dir {
        report.write(dir)?;
    }
    Ok(report)
}
