//! Per-time evaluation metrics against simulated ground truth, plus
//! discrimination measures on observed outcomes.
//!
//! Effect matrices are subject-major (`[i][t-1]`); `group` selects the
//! subject rows that enter a metric.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TcsError};

/// Terms whose true effect is smaller than this in magnitude are skipped in
/// percentage bias.
pub const BIAS_FLOOR: f64 = 1e-6;

fn check(est: &[Vec<f64>], truth: &[Vec<f64>], group: &[usize]) -> Result<usize> {
    if group.is_empty() {
        return Err(TcsError::Selection("metric over an empty group".into()));
    }
    if est.len() != truth.len() {
        return Err(TcsError::Structural(format!(
            "{} estimate rows for {} truth rows",
            est.len(),
            truth.len()
        )));
    }
    let q = truth.first().map_or(0, Vec::len);
    for &i in group {
        if i >= est.len() {
            return Err(TcsError::Usage(format!("group index {i} out of range")));
        }
        if est[i].len() != q || truth[i].len() != q {
            return Err(TcsError::Structural(format!("row {i} has the wrong length")));
        }
    }
    Ok(q)
}

/// Group-mean squared error per time point.
pub fn mse(est: &[Vec<f64>], truth: &[Vec<f64>], group: &[usize]) -> Result<Vec<f64>> {
    let q = check(est, truth, group)?;
    Ok((0..q)
        .map(|t| {
            group
                .iter()
                .map(|&i| (est[i][t] - truth[i][t]).powi(2))
                .sum::<f64>()
                / group.len() as f64
        })
        .collect())
}

pub fn rmse(est: &[Vec<f64>], truth: &[Vec<f64>], group: &[usize]) -> Result<Vec<f64>> {
    Ok(mse(est, truth, group)?.into_iter().map(f64::sqrt).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    /// Mean absolute percentage bias per time, `None` when every term at
    /// that time was skipped.
    pub per_time: Vec<Option<f64>>,
    pub skipped: Vec<usize>,
}

impl BiasSummary {
    /// Mean over the defined time points.
    pub fn average(&self) -> f64 {
        let defined: Vec<f64> = self.per_time.iter().flatten().copied().collect();
        defined.iter().sum::<f64>() / defined.len() as f64
    }

    pub fn total_skipped(&self) -> usize {
        self.skipped.iter().sum()
    }
}

/// Group mean of `|(est - truth) / truth|` per time point.
pub fn bias(est: &[Vec<f64>], truth: &[Vec<f64>], group: &[usize]) -> Result<BiasSummary> {
    let q = check(est, truth, group)?;
    let mut per_time = Vec::with_capacity(q);
    let mut skipped = Vec::with_capacity(q);
    for t in 0..q {
        let mut sum = 0.0;
        let mut used = 0usize;
        for &i in group {
            let tr = truth[i][t];
            if tr.abs() < BIAS_FLOOR {
                continue;
            }
            sum += ((est[i][t] - tr) / tr).abs();
            used += 1;
        }
        skipped.push(group.len() - used);
        per_time.push((used > 0).then(|| sum / used as f64));
    }
    if per_time.iter().all(Option::is_none) {
        return Err(TcsError::UndefinedMetric(
            "percentage bias: every true effect is below the floor".into(),
        ));
    }
    Ok(BiasSummary { per_time, skipped })
}

/// Percentage bias of a population-level curve against its truth.
pub fn bias_curve(est: &[f64], truth: &[f64]) -> Result<BiasSummary> {
    let e: Vec<Vec<f64>> = vec![est.to_vec()];
    let t: Vec<Vec<f64>> = vec![truth.to_vec()];
    bias(&e, &t, &[0])
}

/// Fraction of the group whose truth lies inside `[lo, hi]`, per time point.
pub fn coverage(lo: &[Vec<f64>], hi: &[Vec<f64>], truth: &[Vec<f64>], group: &[usize]) -> Result<Vec<f64>> {
    let q = check(lo, truth, group)?;
    check(hi, truth, group)?;
    Ok((0..q)
        .map(|t| {
            group
                .iter()
                .filter(|&&i| lo[i][t] <= truth[i][t] && truth[i][t] <= hi[i][t])
                .count() as f64
                / group.len() as f64
        })
        .collect())
}

/// Fenwick tree over ranks.
struct Counts(Vec<usize>);

impl Counts {
    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks `< i`.
    fn below(&self, mut i: usize) -> usize {
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

fn dense_ranks(values: &[f64]) -> (Vec<usize>, usize) {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let ranks = values
        .iter()
        .map(|v| sorted.partition_point(|s| s.total_cmp(v).is_lt()))
        .collect();
    (ranks, sorted.len())
}

/// Harrell's C. A pair is comparable when `times[i] < times[j]` and `i` had
/// the event; it is concordant when `risk[i] > risk[j]`, ties count half.
pub fn concordance(risk: &[f64], times: &[usize], events: &[bool]) -> Result<f64> {
    let n = risk.len();
    if times.len() != n || events.len() != n {
        return Err(TcsError::Structural("concordance inputs disagree in length".into()));
    }
    if risk.iter().any(|r| r.is_nan()) {
        return Err(TcsError::Numerical("concordance: NaN risk score".into()));
    }
    let (ranks, levels) = dense_ranks(risk);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].cmp(&times[a]));
    let mut later = Counts(vec![0; levels + 1]);
    let mut inserted = 0usize;
    let (mut concordant, mut ties, mut comparable) = (0usize, 0usize, 0usize);
    let mut k = 0;
    while k < n {
        let t = times[order[k]];
        let end = k + order[k..].iter().take_while(|&&i| times[i] == t).count();
        for &i in &order[k..end] {
            if events[i] {
                let below = later.below(ranks[i]);
                let at_or_below = later.below(ranks[i] + 1);
                concordant += below;
                ties += at_or_below - below;
                comparable += inserted;
            }
        }
        for &i in &order[k..end] {
            later.add(ranks[i]);
            inserted += 1;
        }
        k = end;
    }
    if comparable == 0 {
        return Err(TcsError::UndefinedMetric("concordance: no comparable pairs".into()));
    }
    Ok((concordant as f64 + 0.5 * ties as f64) / comparable as f64)
}

/// Area under the ROC curve as the Mann-Whitney statistic with mid-ranks.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(TcsError::Structural("auroc inputs disagree in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(TcsError::Numerical("auroc: NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(TcsError::UndefinedMetric("auroc needs both labels present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let end = k + order[k..].iter().take_while(|&&i| scores[i] == scores[order[k]]).count();
        // 1-based mid-rank of the tie block
        let mid = (k + 1 + end) as f64 / 2.0;
        rank_sum += mid * order[k..end].iter().filter(|&&i| labels[i]).count() as f64;
        k = end;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Risk score for concordance: `sum_t (1 - S(t))`.
pub fn risk_from_survival(survival: &[f64]) -> f64 {
    survival.iter().map(|s| 1.0 - s).sum()
}

/// Per-time AUROC of `1 - S(t)` for "event by `t`", excluding subjects
/// censored before `t`. Times where one label is absent give `None`.
pub fn auroc_by_time(survival: &[Vec<f64>], times: &[usize], events: &[bool]) -> Result<Vec<Option<f64>>> {
    let q = survival.first().map_or(0, Vec::len);
    (1..=q)
        .map(|t| {
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            for (i, s) in survival.iter().enumerate() {
                if !events[i] && times[i] <= t {
                    continue;
                }
                let died = events[i] && times[i] <= t;
                scores.push(1.0 - s[t - 1]);
                labels.push(died);
            }
            match auroc(&scores, &labels) {
                Ok(v) => Ok(Some(v)),
                Err(TcsError::UndefinedMetric(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Pooled AUROC over every (subject, time) cell used by [`auroc_by_time`].
pub fn auroc_pooled(survival: &[Vec<f64>], times: &[usize], events: &[bool]) -> Result<f64> {
    let q = survival.first().map_or(0, Vec::len);
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for t in 1..=q {
        for (i, s) in survival.iter().enumerate() {
            if !events[i] && times[i] <= t {
                continue;
            }
            let died = events[i] && times[i] <= t;
            scores.push(1.0 - s[t - 1]);
            labels.push(died);
        }
    }
    auroc(&scores, &labels)
}

/// Mean of the defined entries, NaN when none are.
pub fn mean_defined(values: &[Option<f64>]) -> f64 {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Metrics for one estimator on one replicate. Fields that do not apply to
/// an estimator are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scenario: String,
    pub replicate: usize,
    pub estimator: String,
    pub seed: u64,
    pub subgroup: String,
    pub rmse: Option<Vec<f64>>,
    pub mse: Option<Vec<f64>>,
    pub bias_ite: Option<BiasSummary>,
    pub bias_ate: Option<BiasSummary>,
    pub coverage: Option<Vec<f64>>,
    pub auroc: Option<Vec<Option<f64>>>,
    pub auroc_pooled: Option<f64>,
    pub concordance: Option<f64>,
    /// Failure message when the estimator could not be evaluated.
    pub error: Option<String>,
}

impl MetricReport {
    pub fn empty(scenario: &str, replicate: usize, estimator: &str, seed: u64) -> Self {
        MetricReport {
            scenario: scenario.to_string(),
            replicate,
            estimator: estimator.to_string(),
            seed,
            subgroup: "all".to_string(),
            rmse: None,
            mse: None,
            bias_ite: None,
            bias_ate: None,
            coverage: None,
            auroc: None,
            auroc_pooled: None,
            concordance: None,
            error: None,
        }
    }

    pub fn mean_bias_ite(&self) -> Option<f64> {
        self.bias_ite.as_ref().map(BiasSummary::average)
    }

    pub fn mean_bias_ate(&self) -> Option<f64> {
        self.bias_ate.as_ref().map(BiasSummary::average)
    }

    pub fn mean_coverage(&self) -> Option<f64> {
        self.coverage.as_deref().map(mean)
    }

    pub fn mean_rmse(&self) -> Option<f64> {
        self.rmse.as_deref().map(mean)
    }

    pub fn mean_auroc(&self) -> Option<f64> {
        self.auroc.as_deref().map(mean_defined)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        let truth = vec![vec![0.1, 0.2], vec![0.3, -0.1]];
        assert_eq!(rmse(&truth, &truth, &[0, 1]).unwrap(), vec![0.0, 0.0]);
        let shifted: Vec<Vec<f64>> = truth.iter().map(|r| r.iter().map(|v| v + 0.2).collect()).collect();
        for v in rmse(&shifted, &truth, &[0, 1]).unwrap() {
            assert!((v - 0.2).abs() < 1e-12);
        }
        assert!(matches!(rmse(&truth, &truth, &[]), Err(TcsError::Selection(_))));
    }

    #[test]
    fn bias_examples() {
        let truth = vec![vec![0.5, -0.2], vec![0.1, 0.4]];
        let est: Vec<Vec<f64>> = truth.iter().map(|r| r.iter().map(|v| v * 1.1).collect()).collect();
        let b = bias(&est, &truth, &[0, 1]).unwrap();
        for v in b.per_time.iter().flatten() {
            assert!((v - 0.1).abs() < 1e-12);
        }
        assert_eq!(bias(&truth, &truth, &[0, 1]).unwrap().average(), 0.0);
        let zero = vec![vec![0.0, 0.0]];
        assert!(matches!(bias(&zero, &zero, &[0]), Err(TcsError::UndefinedMetric(_))));
    }

    #[test]
    fn bias_counts_skips() {
        let truth = vec![vec![0.0, 0.2], vec![0.1, 0.4]];
        let b = bias(&truth, &truth, &[0, 1]).unwrap();
        assert_eq!(b.skipped, vec![1, 0]);
    }

    #[test]
    fn coverage_examples() {
        let truth = vec![vec![0.1], vec![0.2]];
        let lo = vec![vec![0.0], vec![0.0]];
        let hi = vec![vec![1.0], vec![1.0]];
        assert_eq!(coverage(&lo, &hi, &truth, &[0, 1]).unwrap(), vec![1.0]);
        let point = vec![vec![0.5], vec![0.5]];
        assert_eq!(coverage(&point, &point, &truth, &[0, 1]).unwrap(), vec![0.0]);
    }

    #[test]
    fn perfect_ordering() {
        let times = [1, 2, 3, 4];
        let events = [true; 4];
        let risk = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(concordance(&risk, &times, &events).unwrap(), 1.0);
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
    }

    #[test]
    fn undefined_cases() {
        assert!(matches!(
            concordance(&[1.0, 2.0], &[3, 3], &[true, true]),
            Err(TcsError::UndefinedMetric(_))
        ));
        assert!(matches!(auroc(&[0.1, 0.2], &[true, true]), Err(TcsError::UndefinedMetric(_))));
    }

    #[test]
    fn auroc_ties_count_half() {
        assert_eq!(auroc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
    }
}
