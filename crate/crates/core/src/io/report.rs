//! Serialized results: fit and prediction documents, comparison and sweep
//! tables.

use serde::{Deserialize, Serialize};

use crate::em::FitReport;
use crate::eval::{ComparisonTable, Method, PredictionReport, SweepTable};
use crate::model::{MatrixDoc, ParamsDocument};
use crate::scalar::Scalar;

pub const FIT_FORMAT: &str = "fracnet.fit/1";
pub const PREDICTION_FORMAT: &str = "fracnet.prediction/1";
pub const COMPARISON_FORMAT: &str = "fracnet.comparison/1";
pub const SWEEP_FORMAT: &str = "fracnet.sweep/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDocument {
    pub format_version: String,
    pub observed_channels: Vec<String>,
    pub params: ParamsDocument,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub regularized: bool,
    pub q_trace: Vec<f64>,
    /// Filtered latent means under the final parameters, `m × (N−1)`.
    pub z_hat: MatrixDoc,
    /// Estimated unknown inputs, `p × (N−1)`.
    pub inputs: MatrixDoc,
}

impl FitDocument {
    pub fn new<T: Scalar>(report: &FitReport<T>, observed_channels: Vec<String>) -> Self {
        Self {
            format_version: FIT_FORMAT.into(),
            observed_channels,
            params: ParamsDocument::from_params(&report.theta_final),
            lambda: report.lambda.as_f64(),
            iterations: report.iterations,
            converged: report.converged,
            regularized: report.regularized,
            q_trace: report.q_trace.iter().map(|q| q.as_f64()).collect(),
            z_hat: MatrixDoc::from_matrix(&report.z_hat_final),
            inputs: MatrixDoc::from_matrix(report.inputs_final.values()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionDocument {
    pub format_version: String,
    pub horizon: usize,
    pub channels: Vec<String>,
    /// Relative error per channel; `null` where the target has zero energy.
    pub per_node_error: Vec<Option<f64>>,
    pub mean_error: Option<f64>,
    /// Time index of the first predicted sample.
    pub first_target: usize,
    pub predictions: MatrixDoc,
}

impl PredictionDocument {
    pub fn new<T: Scalar>(report: &PredictionReport<T>, channels: Vec<String>) -> Self {
        Self {
            format_version: PREDICTION_FORMAT.into(),
            horizon: report.horizon,
            channels,
            per_node_error: report.per_node_error.clone(),
            mean_error: report.mean_error,
            first_target: report.first_target,
            predictions: MatrixDoc::from_matrix(report.predictions.values()),
        }
    }
}

/// Summary of one observed/hidden split.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub observed: Vec<String>,
    pub hidden: Vec<String>,
    pub methods: Vec<Method>,
    /// `median_errors[method][channel]`, median over seeds.
    pub median_errors: Vec<Vec<Option<f64>>>,
    /// Fraction of seeds where the with-latent mean error is at most the
    /// baseline's.
    pub latent_not_worse: Option<f64>,
    pub win_rate: Option<f64>,
    pub convergence_rate: Option<f64>,
}

impl ComparisonRow {
    pub fn new(table: &ComparisonTable, label: &dyn Fn(usize) -> String) -> Self {
        Self {
            observed: table.observed_ids.iter().map(|&i| label(i)).collect(),
            hidden: table.hidden_ids.iter().map(|&i| label(i)).collect(),
            methods: table.methods.clone(),
            median_errors: table.methods.iter().map(|&m| table.median_errors(m)).collect(),
            latent_not_worse: table.fraction_where(|latent, base| latent <= base),
            win_rate: table.win_rate(),
            convergence_rate: table.convergence_rate(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonDocument<'a> {
    pub format_version: &'static str,
    pub rows: Vec<ComparisonRow>,
    pub tables: &'a [ComparisonTable],
}

impl<'a> ComparisonDocument<'a> {
    pub fn new(tables: &'a [ComparisonTable], label: &dyn Fn(usize) -> String) -> Self {
        Self {
            format_version: COMPARISON_FORMAT,
            rows: tables.iter().map(|t| ComparisonRow::new(t, label)).collect(),
            tables,
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn join(ids: &[usize], label: &dyn Fn(usize) -> String) -> String {
    ids.iter().map(|&i| label(i)).collect::<Vec<_>>().join(" ")
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

/// One line per split and observed channel with the median error of every
/// method, shaped like a table of observed pairs against method columns.
pub fn comparison_csv(tables: &[ComparisonTable], label: &dyn Fn(usize) -> String) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let methods = tables.first().map(|t| t.methods.clone()).unwrap_or_default();
    let mut header = vec!["row".to_string(), "observed".into(), "hidden".into(), "channel".into()];
    header.extend(methods.iter().map(|m| m.label().to_string()));
    header.extend(["latent_not_worse".into(), "win_rate".into(), "convergence_rate".into()]);
    w.write_record(&header).expect("in-memory csv");
    for (r, t) in tables.iter().enumerate() {
        let medians: Vec<Vec<Option<f64>>> = methods.iter().map(|&m| t.median_errors(m)).collect();
        for (c, &id) in t.observed_ids.iter().enumerate() {
            let mut rec = vec![r.to_string(), join(&t.observed_ids, label), join(&t.hidden_ids, label), label(id)];
            rec.extend(medians.iter().map(|col| cell(col.get(c).copied().flatten())));
            rec.push(cell(t.fraction_where(|a, b| a <= b)));
            rec.push(cell(t.win_rate()));
            rec.push(cell(t.convergence_rate()));
            w.write_record(&rec).expect("in-memory csv");
        }
    }
    finish(w)
}

/// Long format: one line per split, seed, method and observed channel.
pub fn comparison_seeds_csv(tables: &[ComparisonTable], label: &dyn Fn(usize) -> String) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", "seed", "method", "channel", "error", "mean_error", "iterations", "converged"])
        .expect("in-memory csv");
    for (r, t) in tables.iter().enumerate() {
        for s in &t.seeds {
            for m in &s.methods {
                for (c, &id) in t.observed_ids.iter().enumerate() {
                    w.write_record([
                        r.to_string(),
                        s.seed.to_string(),
                        m.method.label().to_string(),
                        label(id),
                        cell(m.errors[c]),
                        cell(m.mean_error),
                        m.iterations.to_string(),
                        m.converged.map(|c| c.to_string()).unwrap_or_default(),
                    ])
                    .expect("in-memory csv");
                }
            }
        }
    }
    finish(w)
}

/// Column headers of a sweep: `none`, then the revealed range.
pub fn sweep_positions(table: &SweepTable, label: &dyn Fn(usize) -> String) -> Vec<String> {
    (0..table.spec.positions())
        .map(|k| match &table.spec.reveal_order[..k] {
            [] => "none".to_string(),
            [only] => label(*only),
            [first, .., last] => format!("{}-{}", label(*first), label(*last)),
        })
        .collect()
}

/// One line per method, one column per sweep position (median over seeds of
/// the fixed-channel mean error).
pub fn sweep_csv(table: &SweepTable, label: &dyn Fn(usize) -> String) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["method".to_string()];
    header.extend(sweep_positions(table, label));
    w.write_record(&header).expect("in-memory csv");
    let methods = table.columns.first().map(|c| c.methods.clone()).unwrap_or_default();
    for m in methods {
        let mut rec = vec![m.label().to_string()];
        rec.extend(table.row(m).into_iter().map(cell));
        w.write_record(&rec).expect("in-memory csv");
    }
    finish(w)
}

pub fn sweep_seeds_csv(table: &SweepTable, label: &dyn Fn(usize) -> String) -> String {
    let positions = sweep_positions(table, label);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["position", "seed", "method", "mean_error", "iterations", "converged"])
        .expect("in-memory csv");
    for (k, col) in table.columns.iter().enumerate() {
        for s in &col.seeds {
            for m in &s.methods {
                w.write_record([
                    positions[k].clone(),
                    s.seed.to_string(),
                    m.method.label().to_string(),
                    cell(m.mean_error),
                    m.iterations.to_string(),
                    m.converged.map(|c| c.to_string()).unwrap_or_default(),
                ])
                .expect("in-memory csv");
            }
        }
    }
    finish(w)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepDocument<'a> {
    pub format_version: &'static str,
    pub positions: Vec<String>,
    pub methods: Vec<Method>,
    /// `rows[method][position]`.
    pub rows: Vec<Vec<Option<f64>>>,
    pub columns: &'a [ComparisonTable],
}

impl<'a> SweepDocument<'a> {
    pub fn new(table: &'a SweepTable, label: &dyn Fn(usize) -> String) -> Self {
        let methods = table.columns.first().map(|c| c.methods.clone()).unwrap_or_default();
        Self {
            format_version: SWEEP_FORMAT,
            positions: sweep_positions(table, label),
            rows: methods.iter().map(|&m| table.row(m)).collect(),
            methods,
            columns: &table.columns,
        }
    }
}
