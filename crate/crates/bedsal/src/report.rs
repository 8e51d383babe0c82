//! CSV and text outputs: training log, PR curves and summary tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use bedsal_core::evalkit::{EvalReport, MethodScore, PrCurve};
use bedsal_core::train::LogRecord;

use crate::error::{IoContext, Result};

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).at(path)
}

pub fn train_log_csv(records: &[LogRecord]) -> String {
    let mut out = String::from("stage,step,lr,loss\n");
    for r in records {
        let _ = writeln!(out, "{},{},{},{}", r.stage, r.step, r.lr, r.loss);
    }
    out
}

pub fn write_train_log(path: &Path, records: &[LogRecord]) -> Result<()> {
    write(path, &train_log_csv(records))
}

pub fn pr_curve_csv(curve: &PrCurve) -> String {
    let mut out = String::from("tau,precision,recall,f\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{},{},{}", p.tau, p.precision, p.recall, p.f);
    }
    out
}

pub fn write_pr_curve(path: &Path, curve: &PrCurve) -> Result<()> {
    write(path, &pr_curve_csv(curve))
}

pub fn summary_csv(report: &EvalReport) -> String {
    let mut out = String::from("method,precision,recall,f,mode,beta2\n");
    for row in &report.rows {
        let s = &row.score;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.method,
            s.precision,
            s.recall,
            s.f,
            report.options.mode.name(),
            report.options.beta2
        );
    }
    out
}

/// Fixed-width table of mean precision, recall and F per method.
pub fn summary_table(report: &EvalReport, dataset: &str) -> String {
    let width = report.rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
    let mut out = format!(
        "dataset: {dataset}\nF-measure: {} thresholding, beta2={}\n\n{:<width$}  {:>9}  {:>9}  {:>9}\n",
        report.options.mode.name(),
        report.options.beta2,
        "method",
        "precision",
        "recall",
        "F"
    );
    for row in &report.rows {
        let s = &row.score;
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.6}  {:>9.6}  {:>9.6}",
            row.method, s.precision, s.recall, s.f
        );
    }
    out
}

pub fn per_image_csv(score: &MethodScore, ids: &[String]) -> String {
    let mut out = String::from("id,precision,recall,f\n");
    for s in &score.per_image {
        let _ = writeln!(out, "{},{},{},{}", ids[s.index], s.precision, s.recall, s.f);
    }
    out
}

/// Writes `summary.csv`, `table.txt` and, per method, `<method>/pr_curve.csv`
/// and `<method>/per_image.csv` under `dir`.
pub fn write_report(dir: &Path, report: &EvalReport, ids: &[String], dataset: &str) -> Result<()> {
    write(&dir.join("summary.csv"), &summary_csv(report))?;
    write(&dir.join("table.txt"), &summary_table(report, dataset))?;
    for row in &report.rows {
        let sub = dir.join(&row.method);
        fs::create_dir_all(&sub).at(&sub)?;
        write_pr_curve(&sub.join("pr_curve.csv"), &row.score.curve)?;
        write(&sub.join("per_image.csv"), &per_image_csv(&row.score, ids))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use bedsal_core::evalkit::{report, EvalOptions};
    use bedsal_core::Raster;

    #[test]
    fn perfect_method_row() {
        let gt = Raster::from_fn(6, 6, |x, _| if x < 3 { 1.0 } else { 0.0 });
        let methods = vec![("perfect".to_string(), vec![gt.clone()])];
        let rep = report(&methods, &[gt], &EvalOptions::default()).unwrap();
        assert_eq!(summary_csv(&rep), "method,precision,recall,f,mode,beta2\nperfect,1,1,1,best_threshold,0.3\n");
        let table = summary_table(&rep, "toy");
        assert!(table.contains("perfect   1.000000   1.000000   1.000000"), "{table}");
        let curve = pr_curve_csv(&rep.rows[0].score.curve);
        assert_eq!(curve.lines().count(), 257);
        assert!(curve.starts_with("tau,precision,recall,f\n0,1,1,1\n"));
    }

    #[test]
    fn train_log_columns() {
        let log = [LogRecord {
            stage: 1,
            step: 0,
            lr: 0.05,
            loss: 0.5,
        }];
        assert_eq!(train_log_csv(&log), "stage,step,lr,loss\n1,0,0.05,0.5\n");
    }
}
