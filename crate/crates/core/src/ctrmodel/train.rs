use serde::{Deserialize, Serialize};

use crate::corpus::{expand_samples, Ad};
use crate::textproc::{featurize, FeatureScheme, SparseVec, Vocab};
use crate::{Error, Real, Result};

use super::{publisher_column, LrModel, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub nb_alpha: f64,
    /// Recorded for reproducibility; full-batch descent from zero weights
    /// consumes no randomness.
    pub seed: u64,
    pub feature_scheme: FeatureScheme,
    pub max_publishers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 10.0,
            epochs: 2000,
            l2_penalty: 1e-6,
            nb_alpha: 1.0,
            seed: 0,
            feature_scheme: FeatureScheme::Counts,
            max_publishers: crate::corpus::DEFAULT_TOP_PUBLISHERS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be > 0".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if !(self.nb_alpha > 0.0) {
            return Err(Error::InvalidArgument("nb_alpha must be > 0".into()));
        }
        if !(self.l2_penalty >= 0.0) {
            return Err(Error::InvalidArgument("l2_penalty must be >= 0".into()));
        }
        Ok(())
    }
}

/// One weighted sample with its model inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRow<T> {
    pub text: SparseVec<T>,
    pub publisher: usize,
    pub label: u8,
    pub weight: T,
}

/// Samples over a parameter layout of `[text_dim | publisher_dim | bias]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet<T> {
    pub rows: Vec<TrainingRow<T>>,
    pub text_dim: usize,
    pub publisher_dim: usize,
}

impl<T: Real> TrainingSet<T> {
    pub fn param_len(&self) -> usize {
        self.text_dim + self.publisher_dim + 1
    }

    /// Two-sample expansion of every ad with at least one impression.
    pub fn from_ads<'a>(
        ads: impl IntoIterator<Item = &'a Ad>,
        vocab: &Vocab,
        scheme: FeatureScheme,
        publishers: &[String],
    ) -> Self {
        let mut rows = Vec::new();
        for ad in ads {
            let samples = expand_samples(ad);
            if samples.is_empty() {
                continue;
            }
            let text: SparseVec<T> = featurize(ad.text().as_str(), vocab, scheme).cast();
            let publisher = publisher_column(publishers, &ad.publisher);
            for s in samples {
                rows.push(TrainingRow {
                    text: text.clone(),
                    publisher,
                    label: s.label,
                    weight: T::from_f64_lossy(s.weight as f64),
                });
            }
        }
        TrainingSet {
            rows,
            text_dim: vocab.len(),
            publisher_dim: publishers.len() + 1,
        }
    }

    fn logit(&self, params: &[T], row: &TrainingRow<T>) -> T {
        row.text.dot_dense(&params[..self.text_dim])
            + params[self.text_dim + row.publisher]
            + params[self.param_len() - 1]
    }

    fn total_weight(&self) -> T {
        self.rows.iter().map(|r| r.weight).sum()
    }
}

fn softplus<T: Real>(x: T) -> T {
    // ln(1 + e^x) without overflow.
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Weighted binary cross entropy normalized by total weight, plus
/// `l2 * ||params||^2 / 2`.
pub fn weighted_bce<T: Real>(params: &[T], set: &TrainingSet<T>, l2: T) -> T {
    let total = set.total_weight();
    let mut acc = T::zero();
    for row in &set.rows {
        let z = set.logit(params, row);
        // -ln σ(z) = softplus(-z), -ln(1 - σ(z)) = softplus(z)
        let nll = if row.label == 1 { softplus(-z) } else { softplus(z) };
        acc = acc + row.weight * nll;
    }
    let reg: T = params.iter().map(|&w| w * w).sum::<T>() * l2 / T::two();
    acc / total + reg
}

/// Analytic gradient of [`weighted_bce`].
pub fn weighted_bce_gradient<T: Real>(params: &[T], set: &TrainingSet<T>, l2: T) -> Vec<T> {
    let total = set.total_weight();
    let mut grad = vec![T::zero(); set.param_len()];
    let bias = set.param_len() - 1;
    for row in &set.rows {
        let p = sigmoid(set.logit(params, row));
        let y = if row.label == 1 { T::one() } else { T::zero() };
        let g = row.weight * (p - y) / total;
        for &(i, x) in row.text.entries() {
            grad[i as usize] = grad[i as usize] + g * x;
        }
        grad[set.text_dim + row.publisher] = grad[set.text_dim + row.publisher] + g;
        grad[bias] = grad[bias] + g;
    }
    for (g, &w) in grad.iter_mut().zip(params) {
        *g = *g + l2 * w;
    }
    grad
}

/// Parameters and per-epoch loss from full-batch gradient descent.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit<T> {
    pub params: Vec<T>,
    /// `loss_history[e]` is the objective at the start of epoch `e`; the last
    /// entry is the objective after the final update.
    pub loss_history: Vec<T>,
}

/// Deterministic full-batch gradient descent from zero weights.
pub fn fit<T: Real>(set: &TrainingSet<T>, config: &TrainConfig) -> Result<Fit<T>> {
    config.validate()?;
    let (has_pos, has_neg) = set.rows.iter().fold((false, false), |(p, n), r| {
        let w = r.weight > T::zero();
        (p || (w && r.label == 1), n || (w && r.label == 0))
    });
    if !has_pos || !has_neg {
        return Err(Error::Degenerate("training data needs both clicked and unclicked mass".into()));
    }
    let lr = T::from_f64_lossy(config.learning_rate);
    let l2 = T::from_f64_lossy(config.l2_penalty);
    let mut params = vec![T::zero(); set.param_len()];
    let mut loss_history = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..=config.epochs {
        let loss = weighted_bce(&params, set, l2);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        log::debug!("epoch {epoch}: loss {loss}");
        loss_history.push(loss);
        if epoch == config.epochs {
            break;
        }
        let grad = weighted_bce_gradient(&params, set, l2);
        for (w, g) in params.iter_mut().zip(grad) {
            *w = *w - lr * g;
        }
    }
    Ok(Fit {
        params,
        loss_history,
    })
}

/// Naive Bayes log-count ratio over text features:
/// `r = ln((p / |p|_1) / (q / |q|_1))` with `p = alpha + Σ_{y=1} w x`,
/// `q = alpha + Σ_{y=0} w x`.
pub fn nb_log_ratio<T: Real>(set: &TrainingSet<T>, alpha: T) -> Result<Vec<T>> {
    let mut p = vec![alpha; set.text_dim];
    let mut q = vec![alpha; set.text_dim];
    let (mut pos_mass, mut neg_mass) = (T::zero(), T::zero());
    for row in &set.rows {
        let (acc, mass) = if row.label == 1 {
            (&mut p, &mut pos_mass)
        } else {
            (&mut q, &mut neg_mass)
        };
        *mass = *mass + row.weight;
        for &(i, x) in row.text.entries() {
            acc[i as usize] = acc[i as usize] + row.weight * x;
        }
    }
    if !(pos_mass > T::zero()) || !(neg_mass > T::zero()) {
        return Err(Error::Degenerate("naive Bayes ratio needs positive and negative mass".into()));
    }
    let p_norm: T = p.iter().map(|v| v.abs()).sum();
    let q_norm: T = q.iter().map(|v| v.abs()).sum();
    let r: Vec<T> = p
        .iter()
        .zip(&q)
        .map(|(&pi, &qi)| ((pi / p_norm) / (qi / q_norm)).ln())
        .collect();
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite naive Bayes ratio".into()));
    }
    Ok(r)
}

/// Scales every row's text features elementwise by `ratio`.
pub fn apply_ratio<T: Real>(set: &TrainingSet<T>, ratio: &[T]) -> TrainingSet<T> {
    TrainingSet {
        rows: set
            .rows
            .iter()
            .map(|r| TrainingRow {
                text: r.text.scaled_by(ratio),
                ..r.clone()
            })
            .collect(),
        text_dim: set.text_dim,
        publisher_dim: set.publisher_dim,
    }
}

/// Trains an LR or NBLR model on the two-sample expansion of `ads`.
pub fn train<'a, T: Real>(
    ads: impl IntoIterator<Item = &'a Ad>,
    vocab: &Vocab,
    publishers: &[String],
    config: &TrainConfig,
    variant: Variant,
) -> Result<(LrModel<T>, Vec<T>)> {
    config.validate()?;
    let publishers: Vec<String> = publishers.iter().take(config.max_publishers).cloned().collect();
    let set = TrainingSet::<T>::from_ads(ads, vocab, config.feature_scheme, &publishers);
    let (set, nb_ratio) = match variant {
        Variant::Lr => (set, None),
        Variant::Nblr => {
            let r = nb_log_ratio(&set, T::from_f64_lossy(config.nb_alpha))?;
            (apply_ratio(&set, &r), Some(r))
        }
    };
    let fit = fit(&set, config)?;
    let model = LrModel::from_parts(variant, vocab.clone(), publishers, fit.params, nb_ratio, config.clone())?;
    Ok((model, fit.loss_history))
}
