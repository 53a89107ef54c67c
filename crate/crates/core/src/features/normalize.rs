use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizerKind {
    /// `log10(max(raw, 1))` for long-tailed money amounts.
    Log10,
    /// `ln(1 + raw)` for counts.
    Ln1p,
    /// `(raw - min) / (max - min)` clamped to [0, 1].
    MinMax,
    /// Min-max applied after the `log10` transform.
    Log10MinMax,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStat {
    pub kind: NormalizerKind,
    #[serde(default)]
    pub min: f64,
    #[serde(default)]
    pub max: f64,
}

/// Named feature normalizers; min/max bounds come from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub features: BTreeMap<String, FeatureStat>,
}

pub mod names {
    pub const BUDGET: &str = "budget";
    pub const REVENUE: &str = "revenue";
    pub const PRIOR_REVENUE_MEAN: &str = "prior_revenue_mean";
    pub const PROFITABILITY: &str = "profitability";
    pub const N_COMPETITORS: &str = "n_competitors";
    pub const COMPETITOR_SIMILARITY: &str = "competitor_similarity";
    pub const N_PRIOR_MOVIES: &str = "n_prior_movies";
    pub const N_PERSON: &str = "n_person";
    pub const N_MAN: &str = "n_man";
    pub const N_WOMAN: &str = "n_woman";
    pub const ACTOR_AGE: &str = "actor_age";
}

impl FeatureStats {
    /// Stats with every feature registered and bounds set to the given values.
    pub fn with_bounds(log10_revenue: (f64, f64), actor_age: (f64, f64)) -> Self {
        use names::*;
        use NormalizerKind::*;
        let fixed = |kind| FeatureStat { kind, min: 0.0, max: 0.0 };
        let mut features = BTreeMap::new();
        features.insert(BUDGET.into(), fixed(Log10));
        features.insert(REVENUE.into(), fixed(Log10));
        features.insert(PRIOR_REVENUE_MEAN.into(), fixed(Log10));
        for n in [N_COMPETITORS, N_PRIOR_MOVIES, N_PERSON, N_MAN, N_WOMAN] {
            features.insert(n.into(), fixed(Ln1p));
        }
        features.insert(COMPETITOR_SIMILARITY.into(), fixed(Identity));
        features.insert(
            PROFITABILITY.into(),
            FeatureStat { kind: Log10MinMax, min: log10_revenue.0, max: log10_revenue.1 },
        );
        features.insert(
            ACTOR_AGE.into(),
            FeatureStat { kind: MinMax, min: actor_age.0, max: actor_age.1 },
        );
        Self { features }
    }

    /// Fit the min-max bounds from training-split observations.
    pub fn fit(train_revenues: impl IntoIterator<Item = u64>, train_ages: impl IntoIterator<Item = f64>) -> Self {
        let bounds = |it: &mut dyn Iterator<Item = f64>| {
            it.fold(None, |acc: Option<(f64, f64)>, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
            .unwrap_or((0.0, 1.0))
        };
        let rev = bounds(&mut train_revenues.into_iter().filter(|&r| r > 0).map(|r| (r as f64).log10()));
        let age = bounds(&mut train_ages.into_iter());
        Self::with_bounds(rev, age)
    }

    pub fn normalize(&self, name: &str, raw: f64) -> Result<f64> {
        let stat = self
            .features
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("unknown feature {name:?}")))?;
        Ok(apply(stat, raw))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn min_max(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

fn apply(stat: &FeatureStat, raw: f64) -> f64 {
    match stat.kind {
        NormalizerKind::Log10 => raw.max(1.0).log10(),
        NormalizerKind::Ln1p => raw.ln_1p(),
        NormalizerKind::MinMax => min_max(raw, stat.min, stat.max),
        NormalizerKind::Log10MinMax => min_max(raw.max(1.0).log10(), stat.min, stat.max),
        NormalizerKind::Identity => raw,
    }
}

/// Normalize one raw feature value by name.
pub fn normalize_feature(name: &str, raw: f64, stats: &FeatureStats) -> Result<f64> {
    stats.normalize(name, raw)
}
