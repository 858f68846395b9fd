//! Probabilistic classifiers that separate observed rows (label 1) from
//! simulated rows (label 0).

pub mod features;
pub mod forest;
pub mod logistic;
pub mod neural;

use serde::{Deserialize, Serialize};

pub use features::{
    build_features, pooled_features, FeatureMatrix, FeatureSpec, PcaBasis, SummaryOptions,
};
pub use forest::{Forest, ForestOptions};
pub use logistic::{LogisticFitInfo, LogisticModel, LogisticOptions};
pub use neural::{Net, NetOptions};

use crate::error::{Error, Result};
use crate::models::{ModelSpec, ParamPoint};
use crate::rng::RngStream;
use crate::special::{logit, sigmoid};

pub const FORMAT_VERSION: u32 = 1;

fn default_clip() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierKind {
    LogisticL1Cv(LogisticOptions),
    RandomForest(ForestOptions),
    NeuralNet(NetOptions),
    /// The true density ratio; only for models with a tractable likelihood.
    Oracle,
    /// `D = 1/2` everywhere, so every estimate is zero.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    #[serde(flatten)]
    pub kind: ClassifierKind,
    /// Predicted probabilities are clipped to `[clip, 1 - clip]`.
    #[serde(default = "default_clip")]
    pub clip: f64,
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind) -> Self {
        ClassifierSpec {
            kind,
            clip: default_clip(),
        }
    }

    pub fn logistic_mle() -> Self {
        ClassifierSpec::new(ClassifierKind::LogisticL1Cv(LogisticOptions {
            lambda: Some(0.0),
            ..Default::default()
        }))
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ClassifierKind::LogisticL1Cv(_) => "logistic_l1_cv",
            ClassifierKind::RandomForest(_) => "random_forest",
            ClassifierKind::NeuralNet(_) => "neural_net",
            ClassifierKind::Oracle => "oracle",
            ClassifierKind::Constant => "constant",
        }
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self.kind, ClassifierKind::Oracle)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 0.5) {
            return Err(Error::Config(format!("clip must lie in (0, 0.5), got {}", self.clip)));
        }
        match &self.kind {
            ClassifierKind::LogisticL1Cv(o) => o.validate(),
            ClassifierKind::RandomForest(o) => o.validate(),
            ClassifierKind::NeuralNet(o) => o.validate(),
            ClassifierKind::Oracle | ClassifierKind::Constant => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fitted {
    Logistic {
        model: LogisticModel,
        info: LogisticFitInfo,
    },
    Forest(Forest),
    Net(Net),
    Oracle {
        model: ModelSpec,
        theta: ParamPoint,
        theta0: ParamPoint,
    },
    Constant,
}

/// A fitted classifier. `log_odds` is `log D/(1-D)` with `D` the probability
/// that a row is real, after clipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub format_version: u32,
    pub fitted: Fitted,
    pub clip: f64,
    pub n_features: usize,
}

impl Discriminator {
    fn bound(&self) -> f64 {
        logit(1.0 - self.clip)
    }

    pub fn log_odds(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::Feature(format!(
                "row has {} features, classifier expects {}",
                row.len(),
                self.n_features
            )));
        }
        let b = self.bound();
        let raw = match &self.fitted {
            Fitted::Logistic { model, .. } => model.log_odds(row),
            Fitted::Forest(f) => {
                let p = f.predict(row).clamp(self.clip, 1.0 - self.clip);
                logit(p)
            }
            Fitted::Net(n) => n.log_odds(row),
            Fitted::Oracle {
                model,
                theta,
                theta0,
            } => model.row_log_density(theta0, row)? - model.row_log_density(theta, row)?,
            Fitted::Constant => 0.0,
        };
        if raw.is_nan() {
            return Err(Error::Domain("classifier produced NaN".into()));
        }
        Ok(raw.clamp(-b, b))
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.log_odds(row)?).clamp(self.clip, 1.0 - self.clip))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: Discriminator = serde_json::from_str(s).map_err(|e| Error::Io(e.to_string()))?;
        if d.format_version != FORMAT_VERSION {
            return Err(Error::Io(format!(
                "unsupported classifier format {}",
                d.format_version
            )));
        }
        Ok(d)
    }
}

/// Fits on real (label 1) and fake (label 0) feature rows.
pub fn fit(
    spec: &ClassifierSpec,
    real: &FeatureMatrix,
    fake: &FeatureMatrix,
    stream: &mut RngStream,
) -> Result<Discriminator> {
    spec.validate()?;
    if real.rows() == 0 || fake.rows() == 0 {
        return Err(Error::Contract("both classes need at least one row".into()));
    }
    if real.cols() != fake.cols() {
        return Err(Error::Feature(format!(
            "real features have width {}, fake {}",
            real.cols(),
            fake.cols()
        )));
    }
    let x = real.vstack(fake)?;
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Feature("non-finite feature value".into()));
    }
    let mut y = vec![1.0; real.rows()];
    y.resize(x.rows(), 0.0);
    let fitted = match &spec.kind {
        ClassifierKind::LogisticL1Cv(o) => {
            let (model, info) = logistic::fit_logistic(&x, &y, o, stream)?;
            Fitted::Logistic { model, info }
        }
        ClassifierKind::RandomForest(o) => Fitted::Forest(forest::fit_forest(&x, &y, o, stream)?),
        ClassifierKind::NeuralNet(o) => Fitted::Net(neural::fit_net(&x, &y, o, stream)?),
        ClassifierKind::Constant => Fitted::Constant,
        ClassifierKind::Oracle => {
            return Err(Error::Contract(
                "the oracle is built from the model, not fitted".into(),
            ))
        }
    };
    Ok(Discriminator {
        format_version: FORMAT_VERSION,
        fitted,
        clip: spec.clip,
        n_features: x.cols(),
    })
}

/// The exact discriminator between `p_theta0` (real) and `p_theta` (fake),
/// acting on raw rows.
pub fn oracle(
    model: &ModelSpec,
    theta: &ParamPoint,
    theta0: &ParamPoint,
    clip: f64,
) -> Result<Discriminator> {
    if !model.has_oracle() {
        return Err(Error::Unavailable(format!(
            "no tractable density for {}",
            model.id().as_str()
        )));
    }
    model.check_theta(theta)?;
    model.check_theta(theta0)?;
    Ok(Discriminator {
        format_version: FORMAT_VERSION,
        fitted: Fitted::Oracle {
            model: model.clone(),
            theta: theta.clone(),
            theta0: theta0.clone(),
        },
        clip,
        n_features: model.row_len(),
    })
}
