//! Export formats: audit matrices, combined severity tables, heatmap and
//! radar data, significance matrices, agreement tables and trajectories.
//!
//! Every JSON artifact starts with an `artifact` block (tool version, input
//! digests, config) so identical inputs give byte-identical files.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::association::{
    column_percentages, AuditMatrix, BiasDimension, BiasScore, ContingencyTable, DimensionOutcome,
    IdentityAxis,
};
use crate::persona::Attribute;
use crate::robustness::{AgreementReport, SignificanceMatrix};
use crate::taxonomy::{CategoryShare, DrillDownView};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("malformed audit file: {0}")]
    MalformedAudit(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub tool_version: String,
    pub inputs: Vec<InputDigest>,
    pub config: Value,
}

impl ArtifactMeta {
    pub fn new(inputs: Vec<InputDigest>, config: Value) -> Self {
        ArtifactMeta {
            tool_version: crate::TOOL_VERSION.to_string(),
            inputs,
            config,
        }
    }
}

fn score_json(score: &BiasScore) -> Value {
    json!({
        "raw_v": score.raw_v,
        "df_star": score.df_star,
        "normalized": score.normalized,
        "severity": score.severity,
        "n": score.n,
    })
}

/// `{artifact, model_id, scores: {dimension: {...}}, mean, unscorable}`.
pub fn audit_json(audit: &AuditMatrix, meta: &ArtifactMeta, name_pool: &[String]) -> Value {
    let mut scores = Map::new();
    let mut unscorable = Map::new();
    for (dim, outcome) in &audit.entries {
        match outcome {
            DimensionOutcome::Scored(s) => {
                scores.insert(dim.key(), score_json(s));
            }
            DimensionOutcome::Unscorable(why) => {
                unscorable.insert(dim.key(), Value::String(why.clone()));
            }
        }
    }
    json!({
        "artifact": meta,
        "model_id": audit.model_id,
        "name_pool": name_pool,
        "scores": scores,
        "unscorable": unscorable,
        "mean": audit.mean_normalized,
    })
}

/// Reads back an [`audit_json`] document. Dimensions come back in the
/// standard order, followed by any others in file order.
pub fn audit_from_json(value: &Value) -> Result<AuditMatrix, ReportError> {
    let bad = |m: &str| ReportError::MalformedAudit(m.to_string());
    let model_id = value
        .get("model_id")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing model_id"))?;
    let mut entries: Vec<(BiasDimension, DimensionOutcome)> = Vec::new();
    let scores = value
        .get("scores")
        .and_then(Value::as_object)
        .ok_or_else(|| bad("missing scores"))?;
    for (key, s) in scores {
        let dim: BiasDimension = key
            .parse()
            .map_err(|_| bad(&format!("dimension `{key}`")))?;
        let score: BiasScore =
            serde_json::from_value(s.clone()).map_err(|e| bad(&format!("score `{key}`: {e}")))?;
        entries.push((dim, DimensionOutcome::Scored(score)));
    }
    if let Some(gaps) = value.get("unscorable").and_then(Value::as_object) {
        for (key, why) in gaps {
            let dim: BiasDimension = key
                .parse()
                .map_err(|_| bad(&format!("dimension `{key}`")))?;
            let why = why.as_str().unwrap_or_default().to_string();
            entries.push((dim, DimensionOutcome::Unscorable(why)));
        }
    }
    let standard = BiasDimension::standard();
    entries.sort_by_key(|(d, _)| standard.iter().position(|s| s == d).unwrap_or(usize::MAX));
    Ok(AuditMatrix::from_entries(model_id, entries))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt3(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into())
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One row per dimension.
pub fn audit_csv(audit: &AuditMatrix) -> Result<String, ReportError> {
    let mut rows = vec![[
        "model_id",
        "dimension",
        "label",
        "raw_v",
        "df_star",
        "normalized",
        "severity",
        "n",
        "unscorable",
    ]
    .map(String::from)
    .to_vec()];
    for (dim, outcome) in &audit.entries {
        let mut row = vec![audit.model_id.clone(), dim.key(), dim.label()];
        match outcome {
            DimensionOutcome::Scored(s) => row.extend([
                s.raw_v.to_string(),
                s.df_star.to_string(),
                s.normalized.to_string(),
                s.severity.to_string(),
                s.n.to_string(),
                String::new(),
            ]),
            DimensionOutcome::Unscorable(why) => {
                row.extend(["", "", "", "", ""].map(String::from));
                row.push(why.clone());
            }
        }
        rows.push(row);
    }
    csv_string(rows)
}

fn cell(outcome: Option<&DimensionOutcome>) -> String {
    match outcome {
        Some(DimensionOutcome::Scored(s)) => format!("{:.3} {}", s.normalized, s.severity),
        Some(DimensionOutcome::Unscorable(_)) => "unscorable".into(),
        None => "n/a".into(),
    }
}

/// Audits ordered by ascending mean; unscorable means sort last.
pub fn sort_by_mean(audits: &[AuditMatrix]) -> Vec<&AuditMatrix> {
    let mut sorted: Vec<&AuditMatrix> = audits.iter().collect();
    sorted.sort_by(|a, b| {
        let key = |m: &AuditMatrix| m.mean_normalized.unwrap_or(f64::INFINITY);
        key(a)
            .total_cmp(&key(b))
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    sorted
}

fn dimension_union(audits: &[AuditMatrix]) -> Vec<BiasDimension> {
    let mut dims: Vec<BiasDimension> = Vec::new();
    for a in audits {
        for (d, _) in &a.entries {
            if !dims.contains(d) {
                dims.push(*d);
            }
        }
    }
    dims
}

/// Severity table with models as rows, sorted by mean.
pub fn combined_markdown(audits: &[AuditMatrix]) -> String {
    let dims = dimension_union(audits);
    let mut out = String::new();
    let _ = write!(out, "| Model |");
    for d in &dims {
        let _ = write!(out, " {} |", d.label());
    }
    let _ = writeln!(out, " Mean |");
    let _ = writeln!(out, "|---|{}---|", "---|".repeat(dims.len()));
    for audit in sort_by_mean(audits) {
        let _ = write!(out, "| {} |", audit.model_id);
        for d in &dims {
            let _ = write!(out, " {} |", cell(audit.get(d)));
        }
        let _ = writeln!(out, " {} |", fmt3(audit.mean_normalized));
    }
    out
}

pub fn combined_csv(audits: &[AuditMatrix]) -> Result<String, ReportError> {
    let dims = dimension_union(audits);
    let mut header = vec!["model_id".to_string()];
    for d in &dims {
        header.push(format!("{}_normalized", d.key()));
        header.push(format!("{}_severity", d.key()));
    }
    header.push("mean".into());
    let mut rows = vec![header];
    for audit in sort_by_mean(audits) {
        let mut row = vec![audit.model_id.clone()];
        for d in &dims {
            match audit.score(d) {
                Some(s) => row.extend([s.normalized.to_string(), s.severity.to_string()]),
                None => row.extend([String::new(), "unscorable".into()]),
            }
        }
        row.push(fmt_opt(audit.mean_normalized));
        rows.push(row);
    }
    csv_string(rows)
}

pub fn combined_json(audits: &[AuditMatrix], meta: &ArtifactMeta, name_pool: &[String]) -> Value {
    let models: Vec<Value> = sort_by_mean(audits)
        .into_iter()
        .map(|a| {
            let scores: Map<String, Value> = a
                .entries
                .iter()
                .map(|(d, o)| {
                    let v = match o {
                        DimensionOutcome::Scored(s) => score_json(s),
                        DimensionOutcome::Unscorable(why) => json!({ "unscorable": why }),
                    };
                    (d.key(), v)
                })
                .collect();
            json!({ "model_id": a.model_id, "scores": scores, "mean": a.mean_normalized })
        })
        .collect();
    json!({ "artifact": meta, "name_pool": name_pool, "models": models })
}

/// One point per model and dimension; angles evenly spaced over the
/// dimension order.
pub fn radar_csv(audits: &[AuditMatrix]) -> Result<String, ReportError> {
    let dims = dimension_union(audits);
    let mut rows = vec![[
        "model_id",
        "dimension",
        "angle_deg",
        "normalized",
        "severity",
    ]
    .map(String::from)
    .to_vec()];
    for audit in audits {
        for (i, d) in dims.iter().enumerate() {
            let angle = 360.0 * i as f64 / dims.len() as f64;
            let (v, s) = match audit.score(d) {
                Some(s) => (s.normalized.to_string(), s.severity.to_string()),
                None => (String::new(), "unscorable".into()),
            };
            rows.push(vec![
                audit.model_id.clone(),
                d.key(),
                angle.to_string(),
                v,
                s,
            ]);
        }
    }
    csv_string(rows)
}

/// Conditional percentages of one table in long form.
pub fn heatmap_csv(
    model_id: &str,
    dim: &BiasDimension,
    table: &ContingencyTable,
) -> Result<String, ReportError> {
    let pct = column_percentages(table);
    let mut rows = vec![[
        "model_id",
        "dimension",
        "identity",
        "social",
        "count",
        "percent",
    ]
    .map(String::from)
    .to_vec()];
    for (i, row_label) in table.row_labels.iter().enumerate() {
        for (j, col_label) in table.col_labels.iter().enumerate() {
            rows.push(vec![
                model_id.to_string(),
                dim.key(),
                row_label.clone(),
                col_label.clone(),
                table.counts[i][j].to_string(),
                pct[i][j].to_string(),
            ]);
        }
    }
    csv_string(rows)
}

pub fn drill_down_csv(model_id: &str, view: &DrillDownView) -> Result<String, ReportError> {
    let condition = view
        .condition
        .as_ref()
        .map(|(a, c)| format!("{}={c}", a.key()))
        .unwrap_or_default();
    let mut rows = vec![[
        "model_id",
        "attribute",
        "category",
        "condition",
        "raw_term",
        "count",
    ]
    .map(String::from)
    .to_vec()];
    for t in &view.terms {
        rows.push(vec![
            model_id.to_string(),
            view.attribute.key().to_string(),
            view.category.clone(),
            condition.clone(),
            t.term.clone(),
            t.count.to_string(),
        ]);
    }
    csv_string(rows)
}

pub fn breakdown_csv(
    model_id: &str,
    attribute: Attribute,
    term: &str,
    over: Attribute,
    shares: &[CategoryShare],
) -> Result<String, ReportError> {
    let mut rows = vec![[
        "model_id",
        "attribute",
        "term",
        "over",
        "category",
        "count",
        "percent",
    ]
    .map(String::from)
    .to_vec()];
    for s in shares {
        rows.push(vec![
            model_id.to_string(),
            attribute.key().to_string(),
            term.to_string(),
            over.key().to_string(),
            s.category.clone(),
            s.count.to_string(),
            s.percent.to_string(),
        ]);
    }
    csv_string(rows)
}

pub fn significance_json(matrix: &SignificanceMatrix, meta: &ArtifactMeta) -> Value {
    json!({ "artifact": meta, "significance": matrix })
}

/// Upper-triangular p-value grid in mean order. `*` marks pairs significant
/// after FDR; `-` marks pairs with zero-variance differences.
pub fn significance_text(matrix: &SignificanceMatrix) -> String {
    let width = matrix
        .models
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(0)
        .max(8);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Paired t-tests over dimension scores, BH-FDR q = {}; models by ascending mean bias",
        matrix.q
    );
    let _ = write!(out, "{:width$}", "");
    for m in matrix.models.iter().skip(1) {
        let _ = write!(out, " {m:>width$}");
    }
    out.push('\n');
    for (i, row) in matrix
        .models
        .iter()
        .enumerate()
        .take(matrix.models.len().saturating_sub(1))
    {
        let _ = write!(out, "{row:width$}");
        for (j, col) in matrix.models.iter().enumerate().skip(1) {
            let text = if j <= i {
                String::new()
            } else {
                match matrix.pair(row, col) {
                    Some(p) => match &p.test {
                        Some(t) => format!("{:.4}{}", t.p, if p.significant { "*" } else { "" }),
                        None => "-".into(),
                    },
                    None => "?".into(),
                }
            };
            let _ = write!(out, " {text:>width$}");
        }
        out.push('\n');
    }
    for (m, mean) in matrix.models.iter().zip(&matrix.means) {
        let _ = writeln!(out, "mean {m}: {mean:.3}");
    }
    out
}

/// One row per model pair, in mean order.
pub fn significance_csv(matrix: &SignificanceMatrix) -> Result<String, ReportError> {
    let mut rows = vec![[
        "model_a",
        "model_b",
        "mean_diff",
        "t",
        "df",
        "p",
        "significant",
        "q",
    ]
    .map(String::from)
    .to_vec()];
    for p in &matrix.pairs {
        let t = p.test.as_ref();
        rows.push(vec![
            p.a.clone(),
            p.b.clone(),
            fmt_opt(t.map(|t| t.mean_diff)),
            fmt_opt(t.map(|t| t.t)),
            t.map(|t| t.df.to_string()).unwrap_or_default(),
            fmt_opt(t.map(|t| t.p)),
            p.significant.to_string(),
            matrix.q.to_string(),
        ]);
    }
    csv_string(rows)
}

fn agreement_cells(r: &AgreementReport) -> Vec<String> {
    vec![
        fmt_opt(r.icc_c1.map(|i| i.value)),
        fmt_opt(r.icc_a1.map(|i| i.value)),
        fmt_opt(r.rank.and_then(|x| x.spearman)),
        fmt_opt(r.rank.and_then(|x| x.kendall)),
        fmt_opt(r.severity_difference),
        fmt_opt(r.t_test.map(|t| t.p)),
    ]
}

/// Rows are dimensions; columns ICC(C,1), ICC(A,1), Spearman, Kendall, SD
/// and the paired t-test p.
pub fn agreement_csv(rows: &[AgreementReport]) -> Result<String, ReportError> {
    let mut out = vec![[
        "dimension",
        "label",
        "icc_c1",
        "icc_a1",
        "spearman",
        "kendall",
        "severity_difference",
        "t_test_p",
        "t",
        "subjects",
        "icc_degenerate",
        "dropped",
    ]
    .map(String::from)
    .to_vec()];
    for r in rows {
        let mut row = vec![r.dimension.key(), r.dimension.label()];
        row.extend(agreement_cells(r));
        row.push(fmt_opt(r.t_test.map(|t| t.t)));
        row.push(r.subjects.to_string());
        row.push(r.icc_c1.is_some_and(|i| i.degenerate).to_string());
        row.push(r.dropped.join(";"));
        out.push(row);
    }
    csv_string(out)
}

pub fn agreement_markdown(rows: &[AgreementReport]) -> String {
    let mut out = String::from(
        "| Dimension | ICC(C,1) | ICC(A,1) | Spearman | Kendall | SD | T-test |\n|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let icc = |i: Option<crate::robustness::Icc>| match i {
            Some(i) if i.degenerate => "1.000 (degenerate)".to_string(),
            other => fmt3(other.map(|i| i.value)),
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.dimension.label(),
            icc(r.icc_c1),
            icc(r.icc_a1),
            fmt3(r.rank.and_then(|x| x.spearman)),
            fmt3(r.rank.and_then(|x| x.kendall)),
            fmt3(r.severity_difference),
            r.t_test
                .map(|t| format!("{:.3}", t.p))
                .unwrap_or_else(|| "-".into()),
        );
    }
    out
}

/// Allocation gap between two identity groups of one dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L1GapRow {
    pub model_id: String,
    pub dimension: BiasDimension,
    pub group_a: String,
    pub group_b: String,
    pub l1_gap: Option<f64>,
    /// Why the gap could not be computed.
    pub error: Option<String>,
}

pub fn l1_gaps_csv(rows: &[L1GapRow]) -> Result<String, ReportError> {
    let mut out = vec![[
        "model_id",
        "dimension",
        "group_a",
        "group_b",
        "l1_gap",
        "error",
    ]
    .map(String::from)
    .to_vec()];
    for r in rows {
        out.push(vec![
            r.model_id.clone(),
            r.dimension.key(),
            r.group_a.clone(),
            r.group_b.clone(),
            fmt_opt(r.l1_gap),
            r.error.clone().unwrap_or_default(),
        ]);
    }
    csv_string(out)
}

pub fn l1_gaps_markdown(rows: &[L1GapRow]) -> String {
    let mut out = String::from("| Model | Dimension | Groups | L1 gap |\n|---|---|---|---|\n");
    for r in rows {
        let value = match (&r.l1_gap, &r.error) {
            (Some(v), _) => format!("{v:.2}"),
            (None, e) => format!("n/a ({})", e.as_deref().unwrap_or("")),
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} vs {} | {value} |",
            r.model_id,
            r.dimension.label(),
            r.group_a,
            r.group_b
        );
    }
    out
}

/// Scores of one identity axis across an ordered model sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisTrajectory {
    pub identity: String,
    /// (social attribute, score per model).
    pub series: Vec<(String, Vec<Option<f64>>)>,
    /// Per model, mean of the scorable dimensions on this axis.
    pub mean: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryView {
    pub models: Vec<String>,
    pub axes: Vec<AxisTrajectory>,
    /// Severity band edges.
    pub bands: [f64; 3],
}

/// Builds trajectories over `order`, which names models in lineage order.
pub fn trajectory(audits: &[AuditMatrix], order: &[String]) -> Result<TrajectoryView, ReportError> {
    let sequence: Vec<&AuditMatrix> = order
        .iter()
        .map(|m| {
            audits
                .iter()
                .find(|a| &a.model_id == m)
                .ok_or_else(|| ReportError::UnknownModel(m.clone()))
        })
        .collect::<Result<_, _>>()?;
    let axes = Attribute::IDENTITY
        .iter()
        .map(|&identity| {
            let series: Vec<(String, Vec<Option<f64>>)> = Attribute::SOCIAL
                .iter()
                .map(|&social| {
                    let dim = BiasDimension {
                        identity: IdentityAxis::Single(identity),
                        social,
                    };
                    let scores = sequence
                        .iter()
                        .map(|a| a.score(&dim).map(|s| s.normalized))
                        .collect();
                    (social.key().to_string(), scores)
                })
                .collect();
            let mean = (0..sequence.len())
                .map(|m| {
                    let vals: Vec<f64> = series.iter().filter_map(|(_, s)| s[m]).collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                })
                .collect();
            AxisTrajectory {
                identity: identity.key().to_string(),
                series,
                mean,
            }
        })
        .collect();
    Ok(TrajectoryView {
        models: order.to_vec(),
        axes,
        bands: [1.0 / 3.0, 2.0 / 3.0, 1.0],
    })
}

/// One table per identity axis: social dimensions by model, plus the mean.
pub fn trajectory_markdown(view: &TrajectoryView) -> String {
    let mut out = String::new();
    for axis in &view.axes {
        let identity: Attribute = axis.identity.parse().expect("axis keys are attribute keys");
        let _ = writeln!(out, "### {}\n", identity.label());
        let _ = writeln!(out, "| Dimension | {} |", view.models.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(view.models.len()));
        let lines = axis
            .series
            .iter()
            .map(|(s, v)| {
                let social: Attribute = s.parse().expect("series keys are attribute keys");
                (social.label().to_string(), v)
            })
            .chain(std::iter::once(("Mean".to_string(), &axis.mean)));
        for (label, values) in lines {
            let cells: Vec<String> = values.iter().map(|v| fmt3(*v)).collect();
            let _ = writeln!(out, "| {label} | {} |", cells.join(" | "));
        }
        out.push('\n');
    }
    out
}

pub fn trajectory_csv(view: &TrajectoryView) -> Result<String, ReportError> {
    let mut rows = vec![[
        "identity",
        "social",
        "position",
        "model_id",
        "normalized",
        "severity",
    ]
    .map(String::from)
    .to_vec()];
    for axis in &view.axes {
        let lines = axis
            .series
            .iter()
            .map(|(s, v)| (s.as_str(), v))
            .chain(std::iter::once(("mean", &axis.mean)));
        for (social, values) in lines {
            for (pos, (model, v)) in view.models.iter().zip(values).enumerate() {
                rows.push(vec![
                    axis.identity.clone(),
                    social.to_string(),
                    pos.to_string(),
                    model.clone(),
                    fmt_opt(*v),
                    v.map(|x| crate::association::severity_of(x).to_string())
                        .unwrap_or_default(),
                ]);
            }
        }
    }
    csv_string(rows)
}
