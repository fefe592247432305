//! Ranking accuracy against withheld ground truth, and report aggregation.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::matrix::{QoSMatrix, UserId};
use crate::ranker::Ranking;

pub const ROWS_HEADER: [&str; 6] = [
    "density",
    "kind",
    "user_id",
    "tau",
    "accuracy",
    "evaluated_pairs",
];
pub const SUMMARY_HEADER: [&str; 6] = [
    "density",
    "kind",
    "mean_tau",
    "std_tau",
    "mean_accuracy",
    "trials",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankScore {
    pub tau: f64,
    /// `(tau + 1) / 2`.
    pub accuracy: f64,
    pub evaluated_pairs: usize,
}

impl RankScore {
    pub fn from_tau(tau: f64, evaluated_pairs: usize) -> Self {
        RankScore {
            tau,
            accuracy: (tau + 1.0) / 2.0,
            evaluated_pairs,
        }
    }
}

/// Kendall tau between the predicted order and the truth values of `u`.
///
/// Only services with a truth value are scored. Returns `None` when fewer
/// than two of them appear in the ranking.
pub fn kendall_tau_score(
    predicted: &Ranking,
    truth: &QoSMatrix,
    u: UserId,
) -> Result<Option<RankScore>> {
    truth.check_user(u)?;
    let values: Vec<f64> = predicted
        .order
        .iter()
        .filter_map(|&s| truth.get(u, s))
        .collect();
    let p = values.len();
    if p < 2 {
        return Ok(None);
    }
    let mut score: i64 = 0;
    for (k, &hi) in values.iter().enumerate() {
        for &lo in &values[k + 1..] {
            if hi > lo {
                score += 1;
            } else if hi < lo {
                score -= 1;
            }
        }
    }
    let pairs = p * (p - 1) / 2;
    Ok(Some(RankScore::from_tau(score as f64 / pairs as f64, pairs)))
}

/// One scored (user, density, kind) cell of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub density: f64,
    pub kind: String,
    pub trial: usize,
    pub user: UserId,
    pub score: RankScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub density: f64,
    pub kind: String,
    pub mean_tau: f64,
    pub std_tau: f64,
    pub mean_accuracy: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ScoreRow>,
    pub summary: Vec<SummaryRow>,
    pub seeds: Vec<u64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; 0 for a single value.
fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Groups rows by (density, kind) and summarizes each group.
///
/// Summary rows are ordered by density, then kind name; within a group,
/// values are folded in input order.
pub fn aggregate(rows: Vec<ScoreRow>, seeds: Vec<u64>) -> Result<ExperimentReport> {
    if rows.is_empty() {
        return Err(Error::domain("no scored rows to aggregate"));
    }
    let mut groups: BTreeMap<(u64, &str), Vec<&ScoreRow>> = BTreeMap::new();
    for row in &rows {
        // Densities are in (0, 1], so the bit pattern orders like the value.
        groups
            .entry((row.density.to_bits(), row.kind.as_str()))
            .or_default()
            .push(row);
    }
    let summary = groups
        .into_iter()
        .map(|((density, kind), members)| {
            let taus: Vec<f64> = members.iter().map(|r| r.score.tau).collect();
            let accs: Vec<f64> = members.iter().map(|r| r.score.accuracy).collect();
            SummaryRow {
                density: f64::from_bits(density),
                kind: kind.to_string(),
                mean_tau: mean(&taus),
                std_tau: std_dev(&taus),
                mean_accuracy: mean(&accs),
                trials: members.len(),
            }
        })
        .collect();
    Ok(ExperimentReport {
        rows,
        summary,
        seeds,
    })
}

impl ExperimentReport {
    pub fn summary_for(&self, density: f64, kind: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.density == density && s.kind == kind)
    }

    /// Mean accuracy of `kind` over all its rows, across densities.
    pub fn overall_accuracy(&self, kind: &str) -> Option<f64> {
        let accs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.score.accuracy)
            .collect();
        (!accs.is_empty()).then(|| mean(&accs))
    }

    pub fn write_rows<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(ROWS_HEADER)?;
        for r in &self.rows {
            wtr.write_record([
                r.density.to_string(),
                r.kind.clone(),
                r.user.0.to_string(),
                r.score.tau.to_string(),
                r.score.accuracy.to_string(),
                r.score.evaluated_pairs.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<rows csv>", e))?;
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(SUMMARY_HEADER)?;
        for s in &self.summary {
            wtr.write_record([
                s.density.to_string(),
                s.kind.clone(),
                s.mean_tau.to_string(),
                s.std_tau.to_string(),
                s.mean_accuracy.to_string(),
                s.trials.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<summary csv>", e))?;
        Ok(())
    }
}
