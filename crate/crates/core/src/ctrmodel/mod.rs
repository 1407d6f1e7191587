//! Text (+ publisher) to pCTR predictors.

mod train;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use train::{
    apply_ratio, fit, nb_log_ratio, train, weighted_bce, weighted_bce_gradient, Fit, TrainConfig,
    TrainingRow, TrainingSet,
};

use crate::textproc::{featurize, AdText, FeatureScheme, SparseVec, Vocab};
use crate::{Error, ProviderError, Real, Result};

pub const PCTR_FLOOR: f64 = 1e-6;
pub const PCTR_CEIL: f64 = 1.0 - 1e-6;

/// Anything that maps ad text and publisher to a click probability.
///
/// Implementations must be deterministic for fixed state and return values
/// strictly inside (0, 1).
pub trait PctrProvider: Send + Sync {
    fn predict(&self, text: &AdText, publisher: &str) -> Result<f64, ProviderError>;
}

impl<P: PctrProvider + ?Sized> PctrProvider for std::sync::Arc<P> {
    fn predict(&self, text: &AdText, publisher: &str) -> Result<f64, ProviderError> {
        (**self).predict(text, publisher)
    }
}

impl<P: PctrProvider + ?Sized> PctrProvider for &P {
    fn predict(&self, text: &AdText, publisher: &str) -> Result<f64, ProviderError> {
        (**self).predict(text, publisher)
    }
}

/// Checks the provider output contract.
pub fn check_pctr(p: f64) -> Result<f64, ProviderError> {
    if !p.is_finite() {
        Err(ProviderError::NonFinite)
    } else if p <= 0.0 || p >= 1.0 {
        Err(ProviderError::OutOfRange(p))
    } else {
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Lr,
    Nblr,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lr" => Ok(Variant::Lr),
            "nblr" => Ok(Variant::Nblr),
            other => Err(Error::InvalidArgument(format!("unknown model variant {other:?}"))),
        }
    }
}

/// Column of `publisher` in the one-hot block; unknown publishers share the
/// trailing OTHER column.
pub(crate) fn publisher_column(publishers: &[String], publisher: &str) -> usize {
    publishers
        .iter()
        .position(|p| p == publisher)
        .unwrap_or(publishers.len())
}

/// Linear model over `[text features | publisher one-hot | bias]`. With a
/// naive Bayes ratio present the text features are scaled by it first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct LrModel<T> {
    variant: Variant,
    vocab_hash: String,
    weights: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nb_ratio: Option<Vec<T>>,
    publishers: Vec<String>,
    feature_scheme: FeatureScheme,
    config: TrainConfig,
    vocab: Vocab,
}

impl<T: Real> LrModel<T> {
    pub fn from_parts(
        variant: Variant,
        vocab: Vocab,
        publishers: Vec<String>,
        weights: Vec<T>,
        nb_ratio: Option<Vec<T>>,
        config: TrainConfig,
    ) -> Result<Self> {
        let model = LrModel {
            variant,
            vocab_hash: vocab.content_hash(),
            weights,
            nb_ratio,
            publishers,
            feature_scheme: config.feature_scheme,
            config,
            vocab,
        };
        model.validate()?;
        Ok(model)
    }

    /// All-zero weights: predicts 0.5 everywhere.
    pub fn zeros(vocab: Vocab, publishers: Vec<String>, config: TrainConfig) -> Self {
        let n = vocab.len() + publishers.len() + 2;
        LrModel::from_parts(Variant::Lr, vocab, publishers, vec![T::zero(); n], None, config)
            .expect("zero model is well formed")
    }

    fn validate(&self) -> Result<()> {
        let want = self.vocab.len() + self.publishers.len() + 2;
        if self.weights.len() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                got: self.weights.len(),
            });
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Degenerate("non-finite model weight".into()));
        }
        match (&self.nb_ratio, self.variant) {
            (Some(r), Variant::Nblr) => {
                if r.len() != self.vocab.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.vocab.len(),
                        got: r.len(),
                    });
                }
                if r.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Degenerate("non-finite naive Bayes ratio".into()));
                }
            }
            (None, Variant::Lr) => {}
            _ => return Err(Error::Degenerate("variant and naive Bayes ratio disagree".into())),
        }
        if self.vocab_hash != self.vocab.content_hash() {
            return Err(Error::Degenerate("vocabulary hash mismatch".into()));
        }
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn nb_ratio(&self) -> Option<&[T]> {
        self.nb_ratio.as_deref()
    }

    pub fn publishers(&self) -> &[String] {
        &self.publishers
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn vocab_hash(&self) -> &str {
        &self.vocab_hash
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Weight of the publisher's one-hot column.
    pub fn publisher_weight(&self, publisher: &str) -> T {
        self.weights[self.vocab.len() + publisher_column(&self.publishers, publisher)]
    }

    fn text_features(&self, text: &str) -> SparseVec<T> {
        let x: SparseVec<T> = featurize(text, &self.vocab, self.feature_scheme).cast();
        match &self.nb_ratio {
            Some(r) => x.scaled_by(r),
            None => x,
        }
    }

    pub fn logit(&self, text: &str, publisher: &str) -> T {
        let v = self.vocab.len();
        self.text_features(text).dot_dense(&self.weights[..v])
            + self.weights[v + publisher_column(&self.publishers, publisher)]
            + self.weights[self.weights.len() - 1]
    }

    /// `sigmoid(logit)` clamped to `[1e-6, 1 - 1e-6]`.
    pub fn predict(&self, text: &str, publisher: &str) -> T {
        let p = train::sigmoid(self.logit(text, publisher));
        p.max(T::from_f64_lossy(PCTR_FLOOR))
            .min(T::from_f64_lossy(PCTR_CEIL))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let w = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: Self = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        model.validate()?;
        Ok(model)
    }
}

impl<T: Real> PctrProvider for LrModel<T> {
    fn predict(&self, text: &AdText, publisher: &str) -> Result<f64, ProviderError> {
        check_pctr(LrModel::predict(self, text.as_str(), publisher).as_f64())
    }
}

/// Returns the same probability for every input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPctr(pub f64);

impl PctrProvider for ConstantPctr {
    fn predict(&self, _: &AdText, _: &str) -> Result<f64, ProviderError> {
        check_pctr(self.0)
    }
}

/// Precomputed pCTRs keyed by composed ad text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PctrTable {
    entries: HashMap<String, f64>,
    #[serde(default)]
    fallback: Option<f64>,
}

impl PctrTable {
    pub fn new(entries: impl IntoIterator<Item = (AdText, f64)>, fallback: Option<f64>) -> Result<Self> {
        let entries: HashMap<String, f64> = entries
            .into_iter()
            .map(|(t, p)| (t.into_string(), p))
            .collect();
        for &p in entries.values().chain(fallback.as_ref()) {
            check_pctr(p)?;
        }
        Ok(PctrTable { entries, fallback })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let w = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t: PctrTable = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        PctrTable::new(t.entries.into_iter().map(|(k, v)| (AdText::new(k), v)), t.fallback)
    }
}

impl PctrProvider for PctrTable {
    fn predict(&self, text: &AdText, _: &str) -> Result<f64, ProviderError> {
        self.entries
            .get(text.as_str())
            .copied()
            .or(self.fallback)
            .ok_or_else(|| ProviderError::Other(format!("no pctr for text {:?}", text.as_str())))
    }
}
