//! Agreement, rank stability, severity difference and significance tests
//! over panels of normalized bias scores.
//!
//! A panel is subjects (models) × conditions (sample sizes, prompt variants).
//! All matrices are row-major with one row per subject.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::{AuditMatrix, BiasDimension, DimensionOutcome, Severity};
use crate::special::student_t_two_sided_p;

/// Default false discovery rate for pairwise comparisons.
pub const DEFAULT_FDR_Q: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobustnessError {
    #[error("zero variance: {0}")]
    ZeroVariance(&'static str),
    #[error("need at least {needed} {what}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("ragged matrix: row {row} has {len} values, expected {expected}")]
    Ragged {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("condition `{0}` has no audits")]
    MissingCondition(String),
    #[error("model sets differ: condition `{condition}` lacks `{model}`")]
    ModelSetMismatch { condition: String, model: String },
    #[error("model `{model}` cannot be compared on `{dimension}`")]
    Unscorable { model: String, dimension: String },
    #[error("audits score different dimension sets")]
    DimensionMismatch,
}

type Result<T> = std::result::Result<T, RobustnessError>;

/// Scores of one dimension for every subject under every condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionPanel {
    pub dimension: BiasDimension,
    pub subjects: Vec<String>,
    pub conditions: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub severities: Vec<Vec<Severity>>,
    /// Models left out because a condition could not score them.
    pub dropped: Vec<String>,
}

impl ConditionPanel {
    /// Builds the panel for `dimension` from per-condition audit sets.
    ///
    /// Every condition must audit the same models. Subjects follow the
    /// first condition's order.
    pub fn from_audits(
        dimension: BiasDimension,
        conditions: &[(String, Vec<AuditMatrix>)],
    ) -> Result<Self> {
        let (_, first) = conditions.first().ok_or(RobustnessError::TooFew {
            what: "conditions",
            needed: 1,
            got: 0,
        })?;
        for (name, audits) in conditions {
            if audits.is_empty() {
                return Err(RobustnessError::MissingCondition(name.clone()));
            }
        }
        let models: Vec<&str> = first.iter().map(|a| a.model_id.as_str()).collect();
        for (name, audits) in conditions {
            let mut expected: Vec<&str> = models.clone();
            let mut got: Vec<&str> = audits.iter().map(|a| a.model_id.as_str()).collect();
            expected.sort_unstable();
            got.sort_unstable();
            if let Some(missing) = expected.iter().find(|m| got.binary_search(m).is_err()) {
                return Err(RobustnessError::ModelSetMismatch {
                    condition: name.clone(),
                    model: missing.to_string(),
                });
            }
            if let Some(extra) = got.iter().find(|m| expected.binary_search(m).is_err()) {
                return Err(RobustnessError::ModelSetMismatch {
                    condition: conditions[0].0.clone(),
                    model: extra.to_string(),
                });
            }
        }

        let mut panel = ConditionPanel {
            dimension,
            subjects: Vec::new(),
            conditions: conditions.iter().map(|(n, _)| n.clone()).collect(),
            values: Vec::new(),
            severities: Vec::new(),
            dropped: Vec::new(),
        };
        for model in models {
            let scores: Option<Vec<_>> = conditions
                .iter()
                .map(|(_, audits)| {
                    audits
                        .iter()
                        .find(|a| a.model_id == model)
                        .and_then(|a| a.score(&dimension))
                        .copied()
                })
                .collect();
            match scores {
                Some(scores) => {
                    panel.subjects.push(model.to_string());
                    panel
                        .values
                        .push(scores.iter().map(|s| s.normalized).collect());
                    panel
                        .severities
                        .push(scores.iter().map(|s| s.severity).collect());
                }
                None => panel.dropped.push(model.to_string()),
            }
        }
        Ok(panel)
    }
}

fn check_matrix(values: &[Vec<f64>]) -> Result<(usize, usize)> {
    let n = values.len();
    let k = values.first().map_or(0, Vec::len);
    for (row, r) in values.iter().enumerate() {
        if r.len() != k {
            return Err(RobustnessError::Ragged {
                row,
                len: r.len(),
                expected: k,
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(RobustnessError::NonFinite);
        }
    }
    if n < 2 {
        return Err(RobustnessError::TooFew {
            what: "subjects",
            needed: 2,
            got: n,
        });
    }
    if k < 2 {
        return Err(RobustnessError::TooFew {
            what: "conditions",
            needed: 2,
            got: k,
        });
    }
    Ok((n, k))
}

/// Two-way ANOVA mean squares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSquares {
    pub rows: f64,
    pub cols: f64,
    pub error: f64,
    pub n: usize,
    pub k: usize,
}

pub fn mean_squares(values: &[Vec<f64>]) -> Result<MeanSquares> {
    let (n, k) = check_matrix(values)?;
    let (nf, kf) = (n as f64, k as f64);
    let grand = values.iter().flatten().sum::<f64>() / (nf * kf);
    let row_means: Vec<f64> = values.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| values.iter().map(|r| r[j]).sum::<f64>() / nf)
        .collect();
    let ss_rows = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_cols = nf * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    // Residuals directly, rather than SST − SSR − SSC, to avoid cancellation.
    let ss_err: f64 = values
        .iter()
        .zip(&row_means)
        .flat_map(|(r, rm)| {
            r.iter()
                .zip(&col_means)
                .map(move |(x, cm)| (x - rm - cm + grand).powi(2))
        })
        .sum();
    Ok(MeanSquares {
        rows: ss_rows / (nf - 1.0),
        cols: ss_cols / (kf - 1.0),
        error: ss_err / ((nf - 1.0) * (kf - 1.0)),
        n,
        k,
    })
}

/// An intraclass correlation. `degenerate` marks a zero denominator, in
/// which case `value` is 1.0 by convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Icc {
    pub value: f64,
    pub degenerate: bool,
}

fn all_equal(values: &[Vec<f64>]) -> bool {
    let first = values[0][0];
    values.iter().flatten().all(|&v| v == first)
}

fn icc_from(numerator: f64, denominator: f64) -> Icc {
    if denominator == 0.0 {
        Icc {
            value: 1.0,
            degenerate: true,
        }
    } else {
        Icc {
            value: numerator / denominator,
            degenerate: false,
        }
    }
}

/// ICC(C,1): two-way, consistency, single measurement.
pub fn icc_c1(values: &[Vec<f64>]) -> Result<Icc> {
    let ms = mean_squares(values)?;
    if all_equal(values) {
        return Ok(icc_from(0.0, 0.0));
    }
    let k = ms.k as f64;
    Ok(icc_from(ms.rows - ms.error, ms.rows + (k - 1.0) * ms.error))
}

/// ICC(A,1): two-way, absolute agreement, single measurement.
pub fn icc_a1(values: &[Vec<f64>]) -> Result<Icc> {
    let ms = mean_squares(values)?;
    if all_equal(values) {
        return Ok(icc_from(0.0, 0.0));
    }
    let (n, k) = (ms.n as f64, ms.k as f64);
    Ok(icc_from(
        ms.rows - ms.error,
        ms.rows + (k - 1.0) * ms.error + (k / n) * (ms.cols - ms.error),
    ))
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(RobustnessError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(RobustnessError::TooFew {
            what: "observations",
            needed: 2,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(RobustnessError::NonFinite);
    }
    Ok(())
}

/// 1-based ranks, ties sharing their mean rank.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(RobustnessError::ZeroVariance("constant ranks"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ as the Pearson correlation of midranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&midranks(x), &midranks(y))
}

/// Number of tied pairs, Σ t(t−1)/2 over runs of equal adjacent keys.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort counting inversions; equal keys are not inversions.
fn sort_counting_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_swaps(&mut v[..mid], &mut buf[..mid])
        + sort_counting_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut out) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[out] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[out] = v[i];
            i += 1;
        }
        out += 1;
    }
    buf[out..out + mid - i].copy_from_slice(&v[i..mid]);
    out += mid - i;
    buf[out..out + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's τ_b in O(n log n) (Knight's algorithm).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as u64;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let total = n * (n - 1) / 2;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let tied_x = tied_pairs(&xs);
    let tied_xy = tied_pairs(&pairs);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = sort_counting_swaps(&mut ys, &mut buf);
    let tied_y = tied_pairs(&ys);

    if tied_x == total || tied_y == total {
        return Err(RobustnessError::ZeroVariance("all values tied"));
    }
    let concordant_minus_discordant =
        total as f64 - tied_x as f64 - tied_y as f64 + tied_xy as f64 - 2.0 * swaps as f64;
    let denom = ((total - tied_x) as f64 * (total - tied_y) as f64).sqrt();
    Ok((concordant_minus_discordant / denom).clamp(-1.0, 1.0))
}

/// Mean pairwise rank correlations across condition pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankStability {
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
    /// Condition pairs left out of a mean for zero variance.
    pub excluded_pairs: usize,
    pub pairs: usize,
}

fn column(values: &[Vec<f64>], j: usize) -> Vec<f64> {
    values.iter().map(|r| r[j]).collect()
}

fn condition_pairs(k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..k).flat_map(move |a| (a + 1..k).map(move |b| (a, b)))
}

pub fn panel_rank_stability(values: &[Vec<f64>]) -> Result<RankStability> {
    let (_, k) = check_matrix(values)?;
    let (mut rho, mut tau) = (Vec::new(), Vec::new());
    let mut excluded = 0;
    for (a, b) in condition_pairs(k) {
        let (ca, cb) = (column(values, a), column(values, b));
        match (spearman_rho(&ca, &cb), kendall_tau_b(&ca, &cb)) {
            (Ok(r), Ok(t)) => {
                rho.push(r);
                tau.push(t);
            }
            (Err(RobustnessError::ZeroVariance(_)), _)
            | (_, Err(RobustnessError::ZeroVariance(_))) => excluded += 1,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(RankStability {
        spearman: mean(&rho),
        kendall: mean(&tau),
        excluded_pairs: excluded,
        pairs: k * (k - 1) / 2,
    })
}

/// Which condition pairs enter the severity difference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdPairing {
    /// Neighbouring conditions in declared order (c1–c2, c2–c3, …).
    #[default]
    Adjacent,
    /// Every unordered condition pair.
    All,
}

/// Mean |level_a − level_b| over subjects and consecutive condition pairs.
///
/// Conditions are taken in declared order, so for sample sizes this compares
/// each size with the next. A 6 × 4 panel has 18 terms.
pub fn severity_difference(severities: &[Vec<Severity>]) -> Result<f64> {
    severity_difference_with(severities, SdPairing::Adjacent)
}

pub fn severity_difference_with(severities: &[Vec<Severity>], pairing: SdPairing) -> Result<f64> {
    let k = severities.first().map_or(0, Vec::len);
    if k < 2 {
        return Err(RobustnessError::TooFew {
            what: "conditions",
            needed: 2,
            got: k,
        });
    }
    if let Some((row, r)) = severities.iter().enumerate().find(|(_, r)| r.len() != k) {
        return Err(RobustnessError::Ragged {
            row,
            len: r.len(),
            expected: k,
        });
    }
    let pairs: Vec<(usize, usize)> = match pairing {
        SdPairing::Adjacent => (1..k).map(|b| (b - 1, b)).collect(),
        SdPairing::All => condition_pairs(k).collect(),
    };
    let mut sum = 0u64;
    for row in severities {
        for &(a, b) in &pairs {
            sum += row[a].level().abs_diff(row[b].level()) as u64;
        }
    }
    Ok(sum as f64 / (severities.len() * pairs.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Two-sided.
    pub p: f64,
    pub df: usize,
    pub mean_diff: f64,
}

/// Paired t-test on `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    check_pair(a, b)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(RobustnessError::ZeroVariance("paired differences"));
    }
    let t = mean / (var.sqrt() / n.sqrt());
    let df = d.len() - 1;
    Ok(TTest {
        t,
        p: student_t_two_sided_p(t, df as f64),
        df,
        mean_diff: mean,
    })
}

/// Benjamini–Hochberg step-up. Returns one reject flag per p-value.
pub fn bh_fdr(p_values: &[f64], q: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut sorted: Vec<f64> = p_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cutoff = sorted
        .iter()
        .enumerate()
        .rev()
        .find(|&(i, &p)| p <= (i + 1) as f64 / m as f64 * q)
        .map(|(_, &p)| p);
    match cutoff {
        Some(c) => p_values.iter().map(|&p| p <= c).collect(),
        None => vec![false; m],
    }
}

/// One model pair; `a` has the lower mean bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    /// `None` when the score differences have zero variance.
    pub test: Option<TTest>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMatrix {
    pub q: f64,
    /// Models by ascending mean normalized score.
    pub models: Vec<String>,
    pub means: Vec<f64>,
    pub pairs: Vec<PairComparison>,
    /// Number of p-values in the BH pass.
    pub tested: usize,
}

impl SignificanceMatrix {
    pub fn pair(&self, x: &str, y: &str) -> Option<&PairComparison> {
        self.pairs
            .iter()
            .find(|p| (p.a == x && p.b == y) || (p.a == y && p.b == x))
    }
}

/// Paired t-tests over the dimension scores of every model pair, with one
/// BH pass across all comparable pairs.
pub fn pairwise_model_significance(audits: &[AuditMatrix], q: f64) -> Result<SignificanceMatrix> {
    if audits.len() < 2 {
        return Err(RobustnessError::TooFew {
            what: "audits",
            needed: 2,
            got: audits.len(),
        });
    }
    let dims: Vec<BiasDimension> = audits[0].entries.iter().map(|(d, _)| *d).collect();
    let mut rows: Vec<(&str, Vec<f64>, f64)> = Vec::with_capacity(audits.len());
    for audit in audits {
        let own: Vec<BiasDimension> = audit.entries.iter().map(|(d, _)| *d).collect();
        if own != dims {
            return Err(RobustnessError::DimensionMismatch);
        }
        let mut scores = Vec::with_capacity(dims.len());
        for (dim, outcome) in &audit.entries {
            match outcome {
                DimensionOutcome::Scored(s) => scores.push(s.normalized),
                DimensionOutcome::Unscorable(_) => {
                    return Err(RobustnessError::Unscorable {
                        model: audit.model_id.clone(),
                        dimension: dim.key(),
                    })
                }
            }
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        rows.push((&audit.model_id, scores, mean));
    }
    rows.sort_by(|a, b| a.2.total_cmp(&b.2).then_with(|| a.0.cmp(b.0)));

    let index_pairs: Vec<(usize, usize)> = condition_pairs(rows.len()).collect();
    let tests: Vec<Option<TTest>> = index_pairs
        .par_iter()
        .map(|&(i, j)| match paired_t_test(&rows[i].1, &rows[j].1) {
            Ok(t) => Ok(Some(t)),
            Err(RobustnessError::ZeroVariance(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;

    let p_values: Vec<f64> = tests.iter().flatten().map(|t| t.p).collect();
    let mut flags = bh_fdr(&p_values, q).into_iter();
    let pairs = index_pairs
        .iter()
        .zip(tests)
        .map(|(&(i, j), test)| PairComparison {
            a: rows[i].0.to_string(),
            b: rows[j].0.to_string(),
            significant: test.is_some() && flags.next().unwrap_or(false),
            test,
        })
        .collect();

    Ok(SignificanceMatrix {
        q,
        models: rows.iter().map(|r| r.0.to_string()).collect(),
        means: rows.iter().map(|r| r.2).collect(),
        pairs,
        tested: p_values.len(),
    })
}

/// One row of the agreement table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub dimension: BiasDimension,
    pub subjects: usize,
    pub conditions: usize,
    pub icc_c1: Option<Icc>,
    pub icc_a1: Option<Icc>,
    pub rank: Option<RankStability>,
    /// Over consecutive condition pairs.
    pub severity_difference: Option<f64>,
    /// Two-condition panels only; first condition minus second.
    pub t_test: Option<TTest>,
    pub dropped: Vec<String>,
}

pub fn agreement_report(panel: &ConditionPanel) -> AgreementReport {
    let two_conditions = panel.conditions.len() == 2;
    AgreementReport {
        dimension: panel.dimension,
        subjects: panel.subjects.len(),
        conditions: panel.conditions.len(),
        icc_c1: icc_c1(&panel.values).ok(),
        icc_a1: icc_a1(&panel.values).ok(),
        rank: panel_rank_stability(&panel.values).ok(),
        severity_difference: severity_difference(&panel.severities).ok(),
        t_test: two_conditions
            .then(|| paired_t_test(&column(&panel.values, 0), &column(&panel.values, 1)).ok())
            .flatten(),
        dropped: panel.dropped.clone(),
    }
}

/// Agreement rows for every dimension of the first condition's audits.
pub fn agreement_table(conditions: &[(String, Vec<AuditMatrix>)]) -> Result<Vec<AgreementReport>> {
    let dims: Vec<BiasDimension> = conditions
        .first()
        .and_then(|(_, audits)| audits.first())
        .map(|a| a.entries.iter().map(|(d, _)| *d).collect())
        .unwrap_or_default();
    dims.into_iter()
        .map(|d| ConditionPanel::from_audits(d, conditions).map(|p| agreement_report(&p)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use Severity::*;

    fn pairs_oracle(x: &[f64], y: &[f64]) -> f64 {
        let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                let dx = x[i] - x[j];
                let dy = y[i] - y[j];
                if dx == 0.0 && dy == 0.0 {
                } else if dx == 0.0 {
                    tx += 1;
                } else if dy == 0.0 {
                    ty += 1;
                } else if dx * dy > 0.0 {
                    c += 1;
                } else {
                    d += 1;
                }
            }
        }
        (c - d) as f64 / (((c + d + tx) * (c + d + ty)) as f64).sqrt()
    }

    #[test]
    fn icc_identical_columns() {
        let v = vec![
            vec![0.2, 0.2, 0.2],
            vec![0.5, 0.5, 0.5],
            vec![0.9, 0.9, 0.9],
        ];
        assert_relative_eq!(icc_c1(&v).unwrap().value, 1.0, epsilon = 1e-12);
        assert_relative_eq!(icc_a1(&v).unwrap().value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn icc_shift() {
        let v = vec![vec![0.2, 0.3], vec![0.5, 0.6], vec![0.9, 1.0]];
        assert_relative_eq!(icc_c1(&v).unwrap().value, 1.0, epsilon = 1e-12);
        assert!(icc_a1(&v).unwrap().value < 1.0);
    }

    #[test]
    fn icc_all_equal_is_flagged() {
        let v = vec![vec![0.1; 4]; 6];
        let icc = icc_c1(&v).unwrap();
        assert!(icc.degenerate);
        assert_eq!(icc.value, 1.0);
        assert!(icc_a1(&v).unwrap().degenerate);
    }

    #[test]
    fn spearman_and_kendall_basics() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let rev = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert_eq!(spearman_rho(&x, &x).unwrap(), 1.0);
        assert_eq!(
            spearman_rho(&[0.3, 0.1, 0.7, 0.2], &[0.3, 0.1, 0.7, 0.2]).unwrap(),
            1.0
        );
        assert_relative_eq!(spearman_rho(&x, &rev).unwrap(), -1.0, epsilon = 1e-15);
        assert_eq!(kendall_tau_b(&x, &x).unwrap(), 1.0);
        assert_eq!(kendall_tau_b(&x, &rev).unwrap(), -1.0);
        assert!(matches!(
            kendall_tau_b(&x, &[2.0; 5]),
            Err(RobustnessError::ZeroVariance(_))
        ));
        assert!(matches!(
            spearman_rho(&[2.0; 5], &x),
            Err(RobustnessError::ZeroVariance(_))
        ));
    }

    #[test]
    fn spearman_midrank_example() {
        // ranks x = [1, 2.5, 2.5, 4], y = [1, 3, 2, 4]
        let rho = spearman_rho(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        // Σ(rx−2.5)(ry−2.5) = 4.5, Σ(rx−2.5)² = 4.5, Σ(ry−2.5)² = 5
        assert_relative_eq!(rho, 4.5 / (4.5f64 * 5.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn midranks_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn severity_difference_denominators() {
        let mut panel = vec![vec![Small; 4]; 6];
        assert_eq!(severity_difference(&panel).unwrap(), 0.0);
        panel[3] = vec![Small, Small, Small, Medium];
        assert_relative_eq!(
            severity_difference(&panel).unwrap(),
            2.0 / 36.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            severity_difference_with(&panel, SdPairing::All).unwrap(),
            3.0 / 36.0,
            epsilon = 1e-15
        );

        let mut two = vec![vec![High, High]; 6];
        two[0] = vec![High, VeryHigh];
        two[5] = vec![Medium, Small];
        assert_relative_eq!(
            severity_difference(&two).unwrap(),
            2.0 / 6.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn paired_t_examples() {
        let t = paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(t.t, 2.0 * 3f64.sqrt(), epsilon = 1e-12);
        assert_eq!(t.df, 2);
        // df = 2 closed form: p = 1 − |t| / sqrt(2 + t²)
        assert_relative_eq!(t.p, 1.0 - t.t / (2.0 + t.t * t.t).sqrt(), epsilon = 1e-12);

        let zero = paired_t_test(&[1.0, -1.0, 2.0, -2.0], &[0.0; 4]).unwrap();
        assert_eq!(zero.t, 0.0);
        assert_eq!(zero.p, 1.0);
        assert!(matches!(
            paired_t_test(&[0.3, 0.4], &[0.3, 0.4]),
            Err(RobustnessError::ZeroVariance(_))
        ));
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_fdr(&[0.01, 0.02, 0.03, 0.04], 0.05), vec![true; 4]);
        assert_eq!(bh_fdr(&[1.0, 1.0, 1.0], 0.05), vec![false; 3]);
        assert_eq!(bh_fdr(&[0.04], 0.05), vec![true]);
        assert_eq!(bh_fdr(&[0.01, 0.02], 0.0), vec![false; 2]);
        // step-up: p_(2) = 0.03 misses 0.025 but p_(3) = 0.035 meets 0.0375
        assert_eq!(
            bh_fdr(&[0.03, 0.01, 0.035, 0.9], 0.05),
            vec![true, true, true, false]
        );
        assert!(bh_fdr(&[], 0.05).is_empty());
    }

    proptest! {
        #[test]
        fn kendall_matches_pair_oracle(
            pts in proptest::collection::vec((0u8..6, 0u8..6), 2..40)
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1 as f64).collect();
            match kendall_tau_b(&x, &y) {
                Ok(tau) => prop_assert!((tau - pairs_oracle(&x, &y)).abs() < 1e-12),
                Err(RobustnessError::ZeroVariance(_)) => {
                    prop_assert!(x.iter().all(|&v| v == x[0]) || y.iter().all(|&v| v == y[0]))
                }
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn rank_stats_monotone_invariant(
            pts in proptest::collection::vec((0u8..10, 0u8..10), 3..30)
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1 as f64).collect();
            let fx: Vec<f64> = x.iter().map(|v| (v * 0.3).exp() - 4.0).collect();
            if let (Ok(a), Ok(b)) = (spearman_rho(&x, &y), spearman_rho(&fx, &y)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            if let (Ok(a), Ok(b)) = (kendall_tau_b(&x, &y), kendall_tau_b(&fx, &y)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn t_test_antisymmetric(
            a in proptest::collection::vec(-2.0f64..2.0, 2..20),
            seed in any::<u64>()
        ) {
            let b: Vec<f64> = a.iter().enumerate()
                .map(|(i, v)| v * 0.5 + ((seed >> (i % 60)) & 1) as f64 * 0.1)
                .collect();
            if let (Ok(ab), Ok(ba)) = (paired_t_test(&a, &b), paired_t_test(&b, &a)) {
                prop_assert!((ab.t + ba.t).abs() < 1e-12 * ab.t.abs().max(1.0));
                prop_assert!((ab.p - ba.p).abs() < 1e-12);
            }
        }

        #[test]
        fn bh_monotone_in_q(
            p in proptest::collection::vec(0.0f64..1.0, 1..30),
            q1 in 0.0f64..1.0, q2 in 0.0f64..1.0
        ) {
            let (lo, hi) = if q1 < q2 { (q1, q2) } else { (q2, q1) };
            let a = bh_fdr(&p, lo);
            let b = bh_fdr(&p, hi);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(!x | y);
            }
        }

        #[test]
        fn icc_c1_shift_invariant(
            rows in proptest::collection::vec(proptest::collection::vec(0.0f64..2.0, 4), 3..8),
            shift in 0.05f64..1.0, col in 0usize..4
        ) {
            let mut shifted = rows.clone();
            for r in shifted.iter_mut() { r[col] += shift; }
            let (a, b) = (icc_c1(&rows).unwrap(), icc_c1(&shifted).unwrap());
            prop_assert!((a.value - b.value).abs() < 1e-9);
        }

        #[test]
        fn icc_a1_penalizes_shift_from_balanced_columns(
            rows in proptest::collection::vec(proptest::collection::vec(0.0f64..2.0, 4), 3..8),
            shift in 0.05f64..1.0, col in 0usize..4
        ) {
            // Centre every column on the grand mean so MS_C = 0, then shift one.
            let n = rows.len() as f64;
            let col_means: Vec<f64> = (0..4).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
            let grand = col_means.iter().sum::<f64>() / 4.0;
            let balanced: Vec<Vec<f64>> = rows.iter()
                .map(|r| r.iter().zip(&col_means).map(|(x, m)| x - m + grand).collect())
                .collect();
            let mut shifted = balanced.clone();
            for r in shifted.iter_mut() { r[col] += shift; }
            let base = icc_a1(&balanced).unwrap();
            prop_assume!(!base.degenerate && icc_c1(&balanced).unwrap().value > 1e-6);
            prop_assert!(icc_a1(&shifted).unwrap().value < base.value);
        }

        #[test]
        fn severity_difference_zero_iff_constant_rows(
            rows in proptest::collection::vec(proptest::collection::vec(0u8..4, 3), 1..6)
        ) {
            let sev: Vec<Vec<Severity>> = rows.iter()
                .map(|r| r.iter().map(|&l| [Small, Medium, High, VeryHigh][l as usize]).collect())
                .collect();
            let constant = rows.iter().all(|r| r.iter().all(|&l| l == r[0]));
            prop_assert_eq!(severity_difference(&sev).unwrap() == 0.0, constant);
        }
    }
}
