use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnovaError {
    #[error("need at least 2 groups, got {0}")]
    InsufficientGroups(usize),
    #[error("group {group} has {len} samples, need at least 2")]
    InsufficientSamples { group: usize, len: usize },
    #[error("every group has zero variance but the group means differ")]
    DegenerateGroups,
    #[error("group {0} contains a non-finite sample")]
    NonFinite(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_statistic: f64,
    pub p_value: f64,
    pub df_between: u64,
    pub df_within: u64,
    pub group_means: Vec<f64>,
    pub grand_mean: f64,
    pub ss_between: f64,
    pub ss_within: f64,
    pub ss_total: f64,
}

/// Upper tail of the F distribution, `P(X > f)`.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)).clamp(0.0, 1.0)
}

/// One-way analysis of variance across `groups`.
///
/// Identical constant groups give `F = 0`; constant groups with different
/// means have no defined ratio and are rejected.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<AnovaResult, AnovaError> {
    let k = groups.len();
    if k < 2 {
        return Err(AnovaError::InsufficientGroups(k));
    }
    for (g, xs) in groups.iter().enumerate() {
        if xs.len() < 2 {
            return Err(AnovaError::InsufficientSamples { group: g, len: xs.len() });
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(AnovaError::NonFinite(g));
        }
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand_mean = groups.iter().flatten().sum::<f64>() / n as f64;
    let group_means: Vec<f64> =
        groups.iter().map(|xs| xs.iter().sum::<f64>() / xs.len() as f64).collect();

    let ss_between: f64 = groups
        .iter()
        .zip(&group_means)
        .map(|(xs, m)| xs.len() as f64 * (m - grand_mean).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&group_means)
        .map(|(xs, m)| xs.iter().map(|x| (x - m).powi(2)).sum::<f64>())
        .sum();
    let ss_total: f64 = groups.iter().flatten().map(|x| (x - grand_mean).powi(2)).sum();

    let df_between = (k - 1) as u64;
    let df_within = (n - k) as u64;
    let msb = ss_between / df_between as f64;
    let msw = ss_within / df_within as f64;
    let f_statistic = if ss_between == 0.0 {
        0.0
    } else if ss_within == 0.0 {
        return Err(AnovaError::DegenerateGroups);
    } else {
        msb / msw
    };
    let p_value = f_survival(f_statistic, df_between as f64, df_within as f64);
    Ok(AnovaResult {
        f_statistic,
        p_value,
        df_between,
        df_within,
        group_means,
        grand_mean,
        ss_between,
        ss_within,
        ss_total,
    })
}
