//! Training loop: BCE objective, Adam, per-epoch validation with
//! best-epoch selection, and prediction helpers for whole corpora.

use alloc::format;
use alloc::vec::Vec;

use crate::corpus::{Corpus, LabelSet};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::math;
use crate::metrics::{evaluate_predictions, MetricsReport};
use crate::model::{dialogue_loss, forward, predict_labels, token_views, ModelConfig, PredictionMatrix};
use crate::params::{ParameterStore, StoreGradients};
use crate::rng::{SeededRng, Stream};
use crate::tape::BCE_EPS;

/// Mean binary cross-entropy of a prediction matrix against 0/1 reference
/// rows, with probabilities clamped into [eps, 1-eps], eps = 1e-12.
///
/// Accumulates in row-major order with a single sum so the value is
/// bit-identical to the loss the tape records during training.
pub fn bce_loss(probs: &PredictionMatrix, refs: &[Vec<f64>]) -> Result<f64> {
    if refs.len() != probs.utterances() {
        return Err(Error::shape(format!(
            "{} utterances vs {} reference rows",
            probs.utterances(),
            refs.len()
        )));
    }
    if probs.utterances() == 0 {
        return Err(Error::invalid("empty prediction matrix"));
    }
    let mut acc = 0.0;
    for (row, refs_row) in probs.rows().iter().zip(refs) {
        if refs_row.len() != row.len() {
            return Err(Error::shape(format!(
                "{} labels vs {} reference entries",
                row.len(),
                refs_row.len()
            )));
        }
        for (&p, &y) in row.iter().zip(refs_row) {
            if y != 0.0 && y != 1.0 {
                return Err(Error::invalid("references must be 0 or 1"));
            }
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            acc += y * math::ln(p) + (1.0 - y) * math::ln(1.0 - p);
        }
    }
    Ok(-acc / (probs.utterances() * probs.labels()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamSettings {
    fn default() -> AdamSettings {
        AdamSettings {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamSettings {
    pub fn with_learning_rate(lr: f64) -> AdamSettings {
        AdamSettings {
            learning_rate: lr,
            ..AdamSettings::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("Adam epsilon must be positive"));
        }
        Ok(())
    }
}

/// Adam optimizer state: bias-corrected first and second moments per
/// parameter, aligned with the store by index.
#[derive(Debug, Clone)]
pub struct AdamState {
    settings: AdamSettings,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    steps: u64,
    beta1_t: f64,
    beta2_t: f64,
}

impl AdamState {
    pub fn new(store: &ParameterStore, settings: AdamSettings) -> Result<AdamState> {
        settings.validate()?;
        let m = store.iter().map(|p| alloc::vec![0.0; p.tensor().len()]).collect();
        let v = store.iter().map(|p| alloc::vec![0.0; p.tensor().len()]).collect();
        Ok(AdamState {
            settings,
            m,
            v,
            steps: 0,
            beta1_t: 1.0,
            beta2_t: 1.0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One bias-corrected update over every parameter in the store.
    ///
    /// Frozen rows need no special handling here: their gradients arrive
    /// as exact zeros, so both moments stay zero and the update is zero.
    pub fn step(&mut self, store: &mut ParameterStore, grads: &StoreGradients) -> Result<()> {
        if grads.len() != store.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "{} gradients for {} parameters ({} moment slots)",
                grads.len(),
                store.len(),
                self.m.len()
            )));
        }
        if let Some((pi, flat)) = grads.first_non_finite() {
            return Err(Error::non_finite(format!(
                "gradient of {:?} at flat index {flat}",
                store.param(pi).name()
            )));
        }
        let AdamSettings {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.settings;
        self.steps += 1;
        self.beta1_t *= beta1;
        self.beta2_t *= beta2;
        let m_corr = 1.0 - self.beta1_t;
        let v_corr = 1.0 - self.beta2_t;
        for i in 0..self.m.len() {
            let g = grads.get(i);
            if g.shape() != store.param(i).tensor().shape() {
                return Err(Error::shape(format!(
                    "gradient shape {:?} for parameter {:?} of shape {:?}",
                    g.shape(),
                    store.param(i).name(),
                    store.param(i).tensor().shape()
                )));
            }
            let theta = store.tensor_mut(i).data_mut();
            for (k, &gk) in g.data().iter().enumerate() {
                self.m[i][k] = beta1 * self.m[i][k] + (1.0 - beta1) * gk;
                self.v[i][k] = beta2 * self.v[i][k] + (1.0 - beta2) * gk * gk;
                let m_hat = self.m[i][k] / m_corr;
                let v_hat = self.v[i][k] / v_corr;
                theta[k] -= learning_rate * m_hat / (math::sqrt(v_hat) + epsilon);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    /// Decision threshold used for validation prediction.
    pub threshold: f64,
    pub adam: AdamSettings,
}

impl Default for TrainSettings {
    fn default() -> TrainSettings {
        TrainSettings {
            epochs: 50,
            patience: None,
            threshold: 0.5,
            adam: AdamSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_hamming: f64,
    pub val_micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// One entry per completed epoch, in order.
    pub epochs: Vec<EpochStats>,
    /// Index into `epochs` of the kept parameters: highest validation
    /// micro-F1, earliest on ties.
    pub best_epoch: usize,
    /// Wall-clock duration; absent without a clock (no_std builds).
    pub wall_seconds: Option<f64>,
}

/// Trains `store` on the training split, one optimizer step per dialogue,
/// and returns the parameters of the best validation epoch.
///
/// Dialogue order is reshuffled every epoch and dropout draws come from
/// the same seeded stream, so a fixed `config.seed` makes the whole run
/// bit-reproducible. A non-finite training loss aborts with a diagnostic
/// naming the dialogue.
pub fn train(
    config: &ModelConfig,
    store: ParameterStore,
    train_corpus: &Corpus,
    val_corpus: &Corpus,
    settings: &TrainSettings,
) -> Result<(ParameterStore, TrainReport)> {
    config.validate()?;
    if settings.epochs == 0 {
        return Err(Error::invalid("training needs at least one epoch"));
    }
    if train_corpus.dialogues.is_empty() || val_corpus.dialogues.is_empty() {
        return Err(Error::data("training and validation splits must be nonempty"));
    }
    for (name, corpus) in [("training", train_corpus), ("validation", val_corpus)] {
        if !corpus.fully_labeled() {
            return Err(Error::data(format!("{name} split has unlabeled utterances")));
        }
    }

    #[cfg(feature = "std")]
    let started = std::time::Instant::now();

    let mut store = store;
    let mut rng = SeededRng::stream(config.seed, Stream::Train);
    let mut adam = AdamState::new(&store, settings.adam)?;

    let mut stats: Vec<EpochStats> = Vec::new();
    let mut best_epoch = 0usize;
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_store = store.clone();

    let mut order: Vec<usize> = (0..train_corpus.dialogues.len()).collect();
    for epoch in 0..settings.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for &di in &order {
            let dialogue = &train_corpus.dialogues[di];
            let evaluated =
                dialogue_loss(config, &store, dialogue, &mut Mode::Train(&mut rng))?;
            let loss = evaluated.value();
            if !loss.is_finite() {
                return Err(Error::non_finite(format!(
                    "training loss on dialogue {:?} in epoch {epoch}",
                    dialogue.id
                )));
            }
            loss_sum += loss;
            let grads = evaluated.gradients(&store)?;
            adam.step(&mut store, &grads)?;
        }
        let train_loss = loss_sum / train_corpus.dialogues.len() as f64;

        let report = evaluate_model(config, &store, val_corpus, settings.threshold)?;
        stats.push(EpochStats {
            train_loss,
            val_hamming: report.accuracy,
            val_micro_f1: report.micro.f1,
        });
        if report.micro.f1 > best_f1 {
            best_f1 = report.micro.f1;
            best_epoch = epoch;
            best_store = store.clone();
        }
        if let Some(patience) = settings.patience {
            if epoch - best_epoch >= patience {
                break;
            }
        }
    }

    #[cfg(feature = "std")]
    let wall_seconds = Some(started.elapsed().as_secs_f64());
    #[cfg(not(feature = "std"))]
    let wall_seconds = None;

    Ok((
        best_store,
        TrainReport {
            epochs: stats,
            best_epoch,
            wall_seconds,
        },
    ))
}

/// Eval-mode label predictions for every utterance, grouped by dialogue.
pub fn predict_corpus(
    config: &ModelConfig,
    store: &ParameterStore,
    corpus: &Corpus,
    threshold: f64,
) -> Result<Vec<Vec<LabelSet>>> {
    corpus
        .dialogues
        .iter()
        .map(|d| {
            let views = token_views(d);
            let fwd = forward(config, store, &views, &mut Mode::Eval)?;
            predict_labels(&fwd.probabilities(), threshold)
        })
        .collect()
}

/// Predicts and scores a labeled corpus in one call.
pub fn evaluate_model(
    config: &ModelConfig,
    store: &ParameterStore,
    corpus: &Corpus,
    threshold: f64,
) -> Result<MetricsReport> {
    let preds = predict_corpus(config, store, corpus, threshold)?;
    evaluate_predictions(corpus, &preds)
}
