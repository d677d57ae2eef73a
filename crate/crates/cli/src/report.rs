//! Human-readable metric tables and the machine-readable mirrors
//! (metrics JSON, training log).

use serde::Serialize;

use cdarec_core::metrics::{MetricsReport, TTestResult, REF_COUNT_BUCKETS};
use cdarec_core::train::TrainReport;

#[derive(Serialize)]
struct MicroJson {
    precision: f64,
    recall: f64,
    f1: f64,
}

#[derive(Serialize)]
struct RefBucketJson {
    bucket: &'static str,
    utterances: usize,
    percent: f64,
    mean_hamming: f64,
    mean_predicted: f64,
}

#[derive(Serialize)]
struct LengthJson {
    length: usize,
    dialogues: usize,
    utterances: usize,
    mean_hamming: f64,
}

#[derive(Serialize)]
struct TTestJson {
    t: f64,
    p: f64,
    df: usize,
    degenerate_variance: bool,
}

#[derive(Serialize)]
struct MetricsJson {
    utterances: usize,
    accuracy: f64,
    micro: MicroJson,
    by_ref_count: Vec<RefBucketJson>,
    by_dialogue_length: Vec<LengthJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_test: Option<TTestJson>,
}

/// The metrics file content: a JSON mirror of the report, with the
/// t-test block when a comparison ran.
pub fn metrics_json(report: &MetricsReport, t_test: Option<&TTestResult>) -> String {
    let json = MetricsJson {
        utterances: report.utterances,
        accuracy: report.accuracy,
        micro: MicroJson {
            precision: report.micro.precision,
            recall: report.micro.recall,
            f1: report.micro.f1,
        },
        by_ref_count: report
            .by_ref_count
            .iter()
            .zip(REF_COUNT_BUCKETS)
            .map(|(g, bucket)| RefBucketJson {
                bucket,
                utterances: g.utterances,
                percent: g.percent,
                mean_hamming: g.mean_hamming,
                mean_predicted: g.mean_predicted,
            })
            .collect(),
        by_dialogue_length: report
            .by_dialogue_length
            .iter()
            .map(|(&length, g)| LengthJson {
                length,
                dialogues: g.dialogues,
                utterances: g.utterances,
                mean_hamming: g.mean_hamming,
            })
            .collect(),
        t_test: t_test.map(|t| TTestJson {
            t: t.t,
            p: t.p,
            df: t.df,
            degenerate_variance: t.degenerate_variance,
        }),
    };
    let mut text = serde_json::to_string_pretty(&json).expect("report serializes");
    text.push('\n');
    text
}

/// Aligned stdout tables for one evaluation.
pub fn render_metrics(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("utterances       {}\n", report.utterances));
    out.push_str(&format!("accuracy         {:.4}\n", report.accuracy));
    out.push_str(&format!("micro precision  {:.4}\n", report.micro.precision));
    out.push_str(&format!("micro recall     {:.4}\n", report.micro.recall));
    out.push_str(&format!("micro F1         {:.4}\n", report.micro.f1));
    out.push('\n');
    out.push_str("by reference count:\n");
    out.push_str("  refs  utterances  percent  mean_hamming  mean_predicted\n");
    for (g, bucket) in report.by_ref_count.iter().zip(REF_COUNT_BUCKETS) {
        out.push_str(&format!(
            "  {bucket:<4}  {:>10}  {:>6.1}%  {:>12.4}  {:>14.2}\n",
            g.utterances, g.percent, g.mean_hamming, g.mean_predicted
        ));
    }
    out.push('\n');
    out.push_str("by dialogue length:\n");
    out.push_str("  length  dialogues  utterances  mean_hamming\n");
    for (length, g) in &report.by_dialogue_length {
        out.push_str(&format!(
            "  {length:>6}  {:>9}  {:>10}  {:>12.4}\n",
            g.dialogues, g.utterances, g.mean_hamming
        ));
    }
    out
}

pub fn render_t_test(t: &TTestResult) -> String {
    let mut out = String::new();
    out.push_str(&format!("paired t-test: t = {:.6}, p = {:.6}, df = {}\n", t.t, t.p, t.df));
    if t.degenerate_variance {
        out.push_str("note: zero variance with nonzero mean difference\n");
    }
    out
}

/// Line-oriented training history: epoch, loss, validation metrics.
pub fn training_log(report: &TrainReport) -> String {
    let mut out = String::from("epoch\ttrain_loss\tval_hamming\tval_micro_f1\n");
    for (i, e) in report.epochs.iter().enumerate() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            i + 1,
            e.train_loss,
            e.val_hamming,
            e.val_micro_f1
        ));
    }
    out.push_str(&format!("best_epoch\t{}\n", report.best_epoch + 1));
    if let Some(secs) = report.wall_seconds {
        out.push_str(&format!("wall_seconds\t{secs:.3}\n"));
    }
    out
}
