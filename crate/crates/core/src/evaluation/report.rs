//! Pairwise DM tables: lower-triangular t-statistics plus an average-loss row.

use super::{dm_test, into_string, mean, NW_LAGS};
use crate::error::{Error, Result};

/// One CSV record. Pairwise rows have `model_a` as the table row and
/// `model_b` as the column; each model also gets a diagonal row
/// (`model_a == model_b`, no statistic) carrying its average loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model_a: String,
    pub model_b: String,
    pub t_stat: Option<f64>,
    pub mean_loss_a: f64,
    pub mean_loss_b: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub csv: String,
    pub text: String,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn emit_report(models: &[(String, Vec<f64>)]) -> Result<Report> {
    if models.is_empty() {
        return Err(Error::Config("no models to report".into()));
    }
    let n = models[0].1.len();
    if models.iter().any(|(_, l)| l.len() != n) {
        return Err(Error::Data("loss series have different lengths".into()));
    }
    let avgs: Vec<f64> = models.iter().map(|(_, l)| mean(l)).collect();
    let mut rows = Vec::new();
    for (i, (name, _)) in models.iter().enumerate() {
        rows.push(ReportRow {
            model_a: name.clone(),
            model_b: name.clone(),
            t_stat: None,
            mean_loss_a: avgs[i],
            mean_loss_b: avgs[i],
            n,
        });
    }
    let mut grid = vec![vec![None; models.len()]; models.len()];
    for i in 1..models.len() {
        for j in 0..i {
            let dm = dm_test(&models[i].1, &models[j].1, NW_LAGS)?;
            grid[i][j] = dm.t_stat;
            rows.push(ReportRow {
                model_a: models[i].0.clone(),
                model_b: models[j].0.clone(),
                t_stat: dm.t_stat,
                mean_loss_a: avgs[i],
                mean_loss_b: avgs[j],
                n,
            });
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model_a", "model_b", "t_stat", "mean_loss_a", "mean_loss_b", "n"])?;
    for r in &rows {
        w.write_record([
            r.model_a.clone(),
            r.model_b.clone(),
            fmt_opt(r.t_stat),
            r.mean_loss_a.to_string(),
            r.mean_loss_b.to_string(),
            r.n.to_string(),
        ])?;
    }
    let csv = into_string(w)?;

    let label = models
        .iter()
        .map(|(m, _)| m.len())
        .chain(["Avg Loss".len()])
        .max()
        .unwrap_or(8)
        + 2;
    let col = models.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max(9) + 2;
    let mut text = format!("{:label$}", "");
    for (m, _) in models {
        text.push_str(&format!("{m:>col$}"));
    }
    text.push('\n');
    for (i, (m, _)) in models.iter().enumerate().skip(1) {
        text.push_str(&format!("{m:label$}"));
        for cell in grid[i].iter().take(i) {
            let s = cell.map_or_else(|| "NA".to_string(), |t| format!("{t:.3}"));
            text.push_str(&format!("{s:>col$}"));
        }
        text.push('\n');
    }
    text.push_str(&format!("{:label$}", "Avg Loss"));
    for a in &avgs {
        text.push_str(&format!("{:>col$}", format!("{a:.3}")));
    }
    text.push('\n');
    Ok(Report { rows, csv, text })
}

/// Reads back a report CSV produced by [`emit_report`].
pub fn parse_report_csv(s: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(s.as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::Data(format!("report field `{}`: {e}", &rec[i])))
        };
        out.push(ReportRow {
            model_a: rec[0].to_string(),
            model_b: rec[1].to_string(),
            t_stat: if &rec[2] == "NA" { None } else { Some(num(2)?) },
            mean_loss_a: num(3)?,
            mean_loss_b: num(4)?,
            n: rec[5]
                .parse()
                .map_err(|e| Error::Data(format!("report field n: {e}")))?,
        });
    }
    Ok(out)
}
