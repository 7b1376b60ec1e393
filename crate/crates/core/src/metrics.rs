//! ROC-AUC and cross-seed summaries of run records.

use std::io::{BufRead, Write};

use crate::engine::RunRecord;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("ROC-AUC needs at least one positive and one negative")]
    SingleClass,
    #[error("non-finite score at position {0}")]
    NonFinite(usize),
    #[error("nothing to summarize")]
    Empty,
    #[error("summary line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Mann-Whitney estimate of ROC-AUC: the fraction of (positive, negative)
/// pairs ranked correctly, with ties worth one half. O(n log n).
pub fn roc_auc(data: &[(f64, bool)]) -> Result<f64, MetricsError> {
    if let Some(i) = data.iter().position(|(s, _)| !s.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    let n_pos = data.iter().filter(|(_, y)| *y).count();
    let n_neg = data.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut sorted: Vec<(f64, bool)> = data.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Sweep groups of equal score from low to high. Each positive beats every
    // negative below its group and ties with negatives inside it.
    let mut negatives_below = 0.0f64;
    let mut wins = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0.0f64, 0.0f64);
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 {
                pos += 1.0;
            } else {
                neg += 1.0;
            }
            j += 1;
        }
        wins += pos * (negatives_below + 0.5 * neg);
        negatives_below += neg;
        i = j;
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub iter: usize,
    pub mean_auc: f64,
    pub sd_auc: f64,
    pub n_runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    /// Mean over runs of each run's last AUC.
    pub final_auc_mean: f64,
    /// Trapezoidal area under mean AUC against labels used, divided by the
    /// label span. Equals the only AUC when there is a single row.
    pub label_efficiency: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(records: &[RunRecord]) -> Result<Summary, MetricsError> {
    let longest = records.iter().map(|r| r.rows.len()).max().unwrap_or(0);
    if longest == 0 {
        return Err(MetricsError::Empty);
    }
    let mut rows = Vec::with_capacity(longest);
    for k in 0..longest {
        let aucs: Vec<f64> = records
            .iter()
            .filter_map(|r| r.rows.get(k).map(|row| row.auc))
            .collect();
        let (mean_auc, sd_auc) = mean_sd(&aucs);
        let iter = records
            .iter()
            .find_map(|r| r.rows.get(k).map(|row| row.iter))
            .unwrap_or(k + 1);
        rows.push(SummaryRow {
            iter,
            mean_auc,
            sd_auc,
            n_runs: aucs.len(),
        });
    }
    let finals: Vec<f64> = records
        .iter()
        .filter_map(|r| r.rows.last().map(|row| row.auc))
        .collect();
    let final_auc_mean = mean_sd(&finals).0;
    let label_efficiency = if rows.len() == 1 {
        rows[0].mean_auc
    } else {
        let area: f64 = rows
            .windows(2)
            .map(|w| 0.5 * (w[0].mean_auc + w[1].mean_auc) * (w[1].iter as f64 - w[0].iter as f64))
            .sum();
        area / (rows[rows.len() - 1].iter as f64 - rows[0].iter as f64)
    };
    Ok(Summary {
        rows,
        final_auc_mean,
        label_efficiency,
    })
}

pub const SUMMARY_HEADER: &str = "iter,mean_auc,sd_auc,n_runs";

pub fn write_summary_csv<W: Write>(out: &mut W, summary: &Summary) -> std::io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in &summary.rows {
        writeln!(out, "{},{},{},{}", r.iter, r.mean_auc, r.sd_auc, r.n_runs)?;
    }
    Ok(())
}

/// Write one `# strategy=<name>` block per summary.
pub fn write_summary_blocks<W: Write>(out: &mut W, blocks: &[(String, Summary)]) -> std::io::Result<()> {
    for (name, summary) in blocks {
        writeln!(out, "# strategy={name}")?;
        write_summary_csv(out, summary)?;
    }
    Ok(())
}

/// Parse summary CSV, either a bare table or `# strategy=` blocks.
/// Bare tables come back under the name `""`.
pub fn read_summary_blocks<R: BufRead>(reader: R) -> Result<Vec<(String, Vec<SummaryRow>)>, MetricsError> {
    let mut blocks: Vec<(String, Vec<SummaryRow>)> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| MetricsError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix("# strategy=") {
            blocks.push((name.to_string(), Vec::new()));
            continue;
        }
        if line == SUMMARY_HEADER {
            if blocks.is_empty() {
                blocks.push((String::new(), Vec::new()));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |msg: &str| MetricsError::Parse {
            line: line_no,
            msg: msg.to_string(),
        };
        if fields.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        let row = SummaryRow {
            iter: fields[0].parse().map_err(|_| bad("bad iter"))?,
            mean_auc: fields[1].parse().map_err(|_| bad("bad mean_auc"))?,
            sd_auc: fields[2].parse().map_err(|_| bad("bad sd_auc"))?,
            n_runs: fields[3].parse().map_err(|_| bad("bad n_runs"))?,
        };
        match blocks.last_mut() {
            Some((_, rows)) => rows.push(row),
            None => return Err(bad("row before header")),
        }
    }
    Ok(blocks)
}
