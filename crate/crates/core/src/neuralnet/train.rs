use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamParams, AdamState};
use super::chunk::{chunk, dechunk, ChunkSpec};
use super::mlp::MlpModel;
use crate::error::{Error, Result};
use crate::masking::{Mask, MaskKind};
use crate::spectral::FeatureStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle: bool,
    /// Weight init draws from `seed + 1`, the shuffle order from `seed + 2`.
    pub seed: u64,
    pub hidden_layers: Vec<usize>,
    pub adam: AdamParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 64,
            shuffle: true,
            seed: 0,
            hidden_layers: vec![1300, 1300],
            adam: AdamParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be at least 1".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::Parameter("hidden layers must be non-empty".into()));
        }
        self.adam.validate()
    }

    pub fn init_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn shuffle_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }
}

/// Predictor rows paired with target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkPairs {
    pub predictors: Array2<f64>,
    pub targets: Array2<f64>,
}

impl ChunkPairs {
    pub fn new(predictors: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if predictors.nrows() != targets.nrows() {
            return Err(Error::Shape(format!(
                "{} predictor rows vs {} target rows",
                predictors.nrows(),
                targets.nrows()
            )));
        }
        Ok(Self {
            predictors,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.predictors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub initial_train_mse: f64,
    pub initial_val_mse: f64,
    pub epochs: Vec<EpochRecord>,
    pub steps: usize,
}

/// Mini-batch ADAM on the mean squared error, one shuffle per epoch.
pub fn train(
    training: &ChunkPairs,
    validation: &ChunkPairs,
    config: &TrainConfig,
    feature_stats: FeatureStats,
) -> Result<(MlpModel, TrainHistory)> {
    config.validate()?;
    if training.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if validation.is_empty() {
        return Err(Error::Data("validation set is empty".into()));
    }
    let inputs = training.predictors.ncols();
    let outputs = training.targets.ncols();
    if validation.predictors.ncols() != inputs || validation.targets.ncols() != outputs {
        return Err(Error::Shape(
            "validation chunks differ in width from training chunks".into(),
        ));
    }

    let mut sizes = vec![inputs];
    sizes.extend(&config.hidden_layers);
    sizes.push(outputs);
    let mut model = MlpModel::init(&sizes, feature_stats, config.init_seed())?;

    let tensor_lens: Vec<usize> = model.parameters_mut().iter().map(|p| p.len()).collect();
    let mut adam = AdamState::new(config.adam, &tensor_lens);
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed());
    let mut order: Vec<usize> = (0..training.len()).collect();

    let evaluate =
        |model: &MlpModel, set: &ChunkPairs| model.mse(set.predictors.view(), set.targets.view());
    let mut history = TrainHistory {
        initial_train_mse: evaluate(&model, training)?,
        initial_val_mse: evaluate(&model, validation)?,
        epochs: Vec::with_capacity(config.epochs),
        steps: 0,
    };

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(config.batch_size) {
            let x = training.predictors.select(Axis(0), batch);
            let t = training.targets.select(Axis(0), batch);
            let (grads, _) = model.backward(x.view(), t.view())?;
            adam_step(&mut model.parameters_mut(), &grads.as_slices(), &mut adam)?;
            history.steps += 1;
        }
        let record = EpochRecord {
            epoch,
            train_mse: evaluate(&model, training)?,
            val_mse: evaluate(&model, validation)?,
        };
        log::info!(
            "epoch {epoch}: train mse {:.6e}, validation mse {:.6e}",
            record.train_mse,
            record.val_mse
        );
        history.epochs.push(record);
    }
    Ok((model, history))
}

/// Chunks the features, runs the network, averages overlapping predictions
/// and clamps into [0, 1]. Frames past the last full chunk get 0.
pub fn estimate_mask(
    model: &MlpModel,
    features: ArrayView2<f64>,
    spec: &ChunkSpec,
) -> Result<Mask> {
    if spec.flat_len() != model.input_size() || spec.flat_len() != model.output_size() {
        return Err(Error::Shape(format!(
            "chunk length {} does not fit model {:?}",
            spec.flat_len(),
            model.layer_sizes()
        )));
    }
    let rows = chunk(features, spec)?;
    let predicted = model.predict(rows.view(), 256)?;
    let folded = dechunk(predicted.view(), spec, features.ncols())?;
    Mask::new(folded.matrix.mapv(|v| v.clamp(0.0, 1.0)), MaskKind::Soft)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn stats() -> FeatureStats {
        FeatureStats {
            mean: 0.0,
            std: 1.0,
            epsilon: 1e-10,
        }
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0))
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            hidden_layers: vec![16, 16],
            batch_size: 8,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn constant_target_loss_decreases() {
        let x = random(100, 12, 1);
        let pairs = ChunkPairs::new(x.clone(), Array2::from_elem((100, 12), 0.5)).unwrap();
        let val = ChunkPairs::new(random(20, 12, 2), Array2::from_elem((20, 12), 0.5)).unwrap();
        let (_, history) = train(&pairs, &val, &small_config(), stats()).unwrap();
        assert_eq!(history.epochs.len(), 3);
        assert_eq!(history.steps, 3 * 13);
        let mut previous = history.initial_train_mse;
        for record in &history.epochs {
            assert!(record.train_mse < previous, "{history:?}");
            previous = record.train_mse;
        }
    }

    #[test]
    fn training_is_deterministic() {
        let pairs = ChunkPairs::new(random(50, 6, 3), random(50, 6, 4)).unwrap();
        let val = ChunkPairs::new(random(10, 6, 5), random(10, 6, 6)).unwrap();
        let a = train(&pairs, &val, &small_config(), stats()).unwrap();
        let b = train(&pairs, &val, &small_config(), stats()).unwrap();
        assert_eq!(a, b);
        let other = TrainConfig {
            seed: 8,
            ..small_config()
        };
        assert_ne!(a.0, train(&pairs, &val, &other, stats()).unwrap().0);
    }

    #[test]
    fn empty_or_mismatched_sets() {
        let empty = ChunkPairs::new(Array2::zeros((0, 4)), Array2::zeros((0, 4))).unwrap();
        let val = ChunkPairs::new(random(5, 4, 1), random(5, 4, 2)).unwrap();
        assert!(matches!(
            train(&empty, &val, &small_config(), stats()),
            Err(Error::Data(_))
        ));
        assert!(ChunkPairs::new(random(5, 4, 1), random(4, 4, 2)).is_err());
        let bad = TrainConfig {
            epochs: 0,
            ..small_config()
        };
        assert!(matches!(
            train(&val, &val, &bad, stats()),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn estimated_mask_is_clamped() {
        let spec = ChunkSpec {
            bins: 3,
            width_frames: 4,
            overlap_frames: 2,
        };
        let mut model = MlpModel::init(&[12, 8, 12], stats(), 3).unwrap();
        model.layers_mut()[1].bias.fill(0.4);
        model.layers_mut()[1].weights.mapv_inplace(|w| w * 20.0);
        let features = random(3, 11, 9);
        let mask = estimate_mask(&model, features.view(), &spec).unwrap();
        assert_eq!(mask.shape(), (3, 11));
        assert!(mask.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(mask.data().iter().any(|&v| v == 0.0 || v == 1.0));

        let zero = MlpModel::zeros(&[12, 8, 12], stats()).unwrap();
        let mask = estimate_mask(&zero, features.view(), &spec).unwrap();
        assert!(mask.data().iter().all(|&v| v == 0.0));

        assert!(matches!(
            estimate_mask(&zero, random(3, 3, 1).view(), &spec),
            Err(Error::Length(_))
        ));
    }

    #[test]
    fn all_ones_target_is_learned() {
        let spec = ChunkSpec {
            bins: 4,
            width_frames: 4,
            overlap_frames: 2,
        };
        let features = random(4, 200, 11);
        let rows = chunk(features.view(), &spec).unwrap();
        let ones = Array2::ones(rows.dim());
        let pairs = ChunkPairs::new(rows.clone(), ones.clone()).unwrap();
        let config = TrainConfig {
            epochs: 60,
            ..small_config()
        };
        let (model, _) = train(&pairs, &pairs, &config, stats()).unwrap();
        let mask = estimate_mask(&model, features.view(), &spec).unwrap();
        assert!(mask.mean() > 0.9, "{}", mask.mean());
    }
}
