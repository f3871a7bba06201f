//! Loss, AdaGrad, the minibatch training loop, and hyperparameter grid search.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{PredictionInstance, Split};
use crate::error::{Error, Result};
use crate::models::{Architecture, GradeModel, Model, ModelKind, SparseGrad};

pub const ADAGRAD_EPSILON: f64 = 1e-8;

/// Everything needed to reproduce one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    /// Embedding size.
    pub d: usize,
    /// Attention hidden size.
    pub l: usize,
    /// L2 strength.
    pub alpha: f64,
    pub learning_rate: f64,
    /// KRM decay rate.
    pub lambda: f64,
    /// Sparsegen gamma.
    pub gamma: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Train on raw grades instead of row-centered ones.
    pub raw_grades: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::NakSparse,
            d: 32,
            l: 4,
            alpha: 1e-7,
            learning_rate: 7e-4,
            lambda: 0.0,
            gamma: 0.5,
            batch_size: 256,
            epochs: 50,
            seed: 0,
            raw_grades: false,
        }
    }
}

impl TrainConfig {
    pub fn architecture(&self) -> Architecture {
        Architecture {
            kind: self.model,
            d: self.d,
            l: self.l,
            lambda: self.lambda,
            gamma: self.gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture().validate()?;
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Parameter(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Parameter("batch_size and epochs must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainConfig::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config is plain data");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// `(1/2N) sum (g - g^)^2 + alpha * ||theta||^2` over all parameters.
pub fn loss<M: GradeModel + ?Sized>(instances: &[PredictionInstance], model: &M, alpha: f64) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::Empty("loss over zero instances"));
    }
    let sq: f64 = instances
        .iter()
        .map(|i| (i.target_relative_grade - model.predict(i)).powi(2))
        .sum();
    let norm: f64 = model.values().iter().map(|v| v * v).sum();
    Ok(sq / (2.0 * instances.len() as f64) + alpha * norm)
}

/// Mean squared error without regularization; `NaN` for an empty set.
pub fn mse<M: GradeModel + ?Sized>(instances: &[PredictionInstance], model: &M) -> f64 {
    let sq: f64 = instances
        .iter()
        .map(|i| (i.target_relative_grade - model.predict(i)).powi(2))
        .sum();
    sq / instances.len() as f64
}

/// Fills `grad` with the minibatch gradient: the mean of per-instance
/// gradients of `0.5 (g^ - g)^2`, plus `2 alpha theta` on every parameter the
/// batch touched. Returns the batch's summed squared error.
pub fn batch_gradient<'a, M, I>(model: &M, batch: I, alpha: f64, grad: &mut SparseGrad) -> f64
where
    M: GradeModel + ?Sized,
    I: IntoIterator<Item = &'a PredictionInstance>,
    I::IntoIter: ExactSizeIterator,
{
    grad.clear();
    let batch = batch.into_iter();
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut sq = 0.0;
    for inst in batch {
        let residual = model.predict(inst) - inst.target_relative_grade;
        sq += residual * residual;
        model.accumulate_gradient(inst, residual, scale, grad);
    }
    if alpha != 0.0 {
        let values = model.values();
        let touched = grad.touched().to_vec();
        for i in touched {
            grad.add(i, 2.0 * alpha * values[i]);
        }
    }
    sq
}

/// Per-parameter AdaGrad state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaGrad {
    accumulators: Vec<f64>,
    pub epsilon: f64,
}

impl AdaGrad {
    pub fn new(len: usize) -> Self {
        AdaGrad {
            accumulators: vec![0.0; len],
            epsilon: ADAGRAD_EPSILON,
        }
    }

    pub fn accumulators(&self) -> &[f64] {
        &self.accumulators
    }

    /// `acc += g^2; theta -= lr * g / (sqrt(acc) + eps)` on the touched entries.
    pub fn step(&mut self, params: &mut [f64], grad: &SparseGrad, learning_rate: f64) {
        for (i, g) in grad.iter() {
            let acc = &mut self.accumulators[i];
            *acc += g * g;
            params[i] -= learning_rate * g / (acc.sqrt() + self.epsilon);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MSE.
    pub model: Model,
    pub best_epoch: usize,
    /// Epoch 0 is the initialization.
    pub history: Vec<EpochStats>,
}

impl TrainOutcome {
    pub fn best(&self) -> &EpochStats {
        &self.history[self.best_epoch]
    }
}

/// History as `epoch,train_loss,val_mse` rows.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_mse\n");
    for h in history {
        let _ = writeln!(out, "{},{},{}", h.epoch, h.train_loss, h.val_mse);
    }
    out
}

/// Instances in the grade space the config trains in.
pub fn in_grade_space<'a>(instances: &'a [PredictionInstance], config: &TrainConfig) -> Cow<'a, [PredictionInstance]> {
    if config.raw_grades {
        Cow::Owned(instances.iter().map(PredictionInstance::to_raw_space).collect())
    } else {
        Cow::Borrowed(instances)
    }
}

/// Shuffled minibatch AdaGrad. Returns the snapshot with the lowest
/// validation MSE (the final one when there is no validation data).
pub fn train(config: &TrainConfig, split: &Split) -> Result<TrainOutcome> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let train_set = in_grade_space(&split.train, config);
    let val_set = in_grade_space(&split.validation, config);
    let mut model = Model::init(
        &config.architecture(),
        split.n_students(),
        split.n_courses(),
        &train_set,
        config.seed,
    )?;
    for inst in train_set.iter().chain(val_set.iter()) {
        model.check_instance(inst)?;
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut grad = SparseGrad::new(model.values().len());
    let mut adagrad = AdaGrad::new(model.values().len());

    let stats = |epoch: usize, model: &Model| -> Result<EpochStats> {
        let train_loss = loss(&train_set, model, config.alpha)?;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite { epoch, batch: 0 });
        }
        Ok(EpochStats {
            epoch,
            train_loss,
            val_mse: mse(&val_set, model),
        })
    };

    let mut history = vec![stats(0, &model)?];
    let mut best = (0, model.clone());
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            let sq = batch_gradient(&model, chunk.iter().map(|&i| &train_set[i]), config.alpha, &mut grad);
            if !sq.is_finite() || grad.iter().any(|(_, g)| !g.is_finite()) {
                return Err(Error::NonFinite {
                    epoch,
                    batch: batch_no + 1,
                });
            }
            adagrad.step(model.values_mut(), &grad, config.learning_rate);
        }
        let s = stats(epoch, &model)?;
        let improved = if val_set.is_empty() {
            true
        } else {
            s.val_mse < history[best.0].val_mse
        };
        history.push(s);
        if improved {
            best = (epoch, model.clone());
        }
    }
    Ok(TrainOutcome {
        model: best.1,
        best_epoch: best.0,
        history,
    })
}

/// Value lists to sweep. Empty lists fall back to the template's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub model: Vec<ModelKind>,
    pub d: Vec<usize>,
    pub l: Vec<usize>,
    pub alpha: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub lambda: Vec<f64>,
    pub gamma: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub epochs: Vec<usize>,
}

impl Grid {
    /// Embedding sizes {8, 16, 32}, alpha {1e-5, 1e-7, 1e-3}, five learning
    /// rates, attention sizes 1..=4 and decay rates {0, 0.3, 0.5, 0.7, 1}.
    pub fn standard() -> Grid {
        Grid {
            d: vec![8, 16, 32],
            alpha: vec![1e-5, 1e-7, 1e-3],
            learning_rate: vec![0.0007, 0.001, 0.003, 0.005, 0.007],
            l: vec![1, 2, 3, 4],
            lambda: vec![0.0, 0.3, 0.5, 0.7, 1.0],
            ..Grid::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Grid::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Cartesian product over the lists. Axes a model kind ignores (`l`,
    /// `gamma` outside NAK, `lambda` outside KRM) are pinned to the template.
    pub fn expand(&self, template: &TrainConfig) -> Vec<TrainConfig> {
        fn or<T: Clone>(values: &[T], fallback: T) -> Vec<T> {
            if values.is_empty() {
                vec![fallback]
            } else {
                values.to_vec()
            }
        }
        let mut out = Vec::new();
        for model in or(&self.model, template.model) {
            let is_krm = matches!(model, ModelKind::KrmSum | ModelKind::KrmAvg);
            let ls = if model.is_nak() { or(&self.l, template.l) } else { vec![template.l] };
            let gammas = if model == ModelKind::NakSparse {
                or(&self.gamma, template.gamma)
            } else {
                vec![template.gamma]
            };
            let lambdas = if is_krm { or(&self.lambda, template.lambda) } else { vec![template.lambda] };
            for &d in &or(&self.d, template.d) {
                for &alpha in &or(&self.alpha, template.alpha) {
                    for &learning_rate in &or(&self.learning_rate, template.learning_rate) {
                        for &l in &ls {
                            for &lambda in &lambdas {
                                for &gamma in &gammas {
                                    for &batch_size in &or(&self.batch_size, template.batch_size) {
                                        for &epochs in &or(&self.epochs, template.epochs) {
                                            out.push(TrainConfig {
                                                model,
                                                d,
                                                l,
                                                alpha,
                                                learning_rate,
                                                lambda,
                                                gamma,
                                                batch_size,
                                                epochs,
                                                ..template.clone()
                                            });
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridEntry {
    pub config: TrainConfig,
    /// Best validation MSE, or `None` when the run failed.
    pub val_mse: Option<f64>,
    pub best_epoch: usize,
    pub error: Option<String>,
}

/// Trains every grid point on up to `jobs` threads and ranks them by
/// validation MSE. Failed runs are kept, annotated, at the end.
pub fn grid_search(template: &TrainConfig, grid: &Grid, split: &Split, jobs: usize) -> Result<Vec<GridEntry>> {
    let configs = grid.expand(template);
    if configs.is_empty() {
        return Err(Error::Empty("grid expands to no configurations"));
    }
    let run = |config: &TrainConfig| -> GridEntry {
        match train(config, split) {
            Ok(out) if out.best().val_mse.is_finite() => GridEntry {
                config: config.clone(),
                val_mse: Some(out.best().val_mse),
                best_epoch: out.best_epoch,
                error: None,
            },
            Ok(_) => GridEntry {
                config: config.clone(),
                val_mse: None,
                best_epoch: 0,
                error: Some("no validation instances".into()),
            },
            Err(e) => GridEntry {
                config: config.clone(),
                val_mse: None,
                best_epoch: 0,
                error: Some(format!("{}: {e}", e.code())),
            },
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Parameter(e.to_string()))?;
    let mut entries: Vec<(usize, GridEntry)> =
        pool.install(|| configs.par_iter().enumerate().map(|(k, c)| (k, run(c))).collect());
    entries.sort_by(|(ka, a), (kb, b)| {
        let key = |e: &GridEntry| e.val_mse.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b)).then(ka.cmp(kb))
    });
    Ok(entries.into_iter().map(|(_, e)| e).collect())
}

pub fn grid_csv(entries: &[GridEntry]) -> String {
    let mut out =
        String::from("rank,model,d,l,alpha,learning_rate,lambda,gamma,batch_size,epochs,best_epoch,val_mse,error\n");
    for (rank, e) in entries.iter().enumerate() {
        let c = &e.config;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            rank + 1,
            c.model,
            c.d,
            c.l,
            c.alpha,
            c.learning_rate,
            c.lambda,
            c.gamma,
            c.batch_size,
            c.epochs,
            e.best_epoch,
            e.val_mse.map_or(String::new(), |v| v.to_string()),
            e.error.as_deref().unwrap_or("").replace(',', ";"),
        );
    }
    out
}
