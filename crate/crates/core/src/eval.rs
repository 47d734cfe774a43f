//! Scoring estimated compositions against ground truth.

use std::cmp::Ordering;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CompositionMatrix;
use crate::synth::{purpose, sample_dirichlet, stream_rng};

pub const DEFAULT_PROMINENT_MASS: f64 = 0.8;
/// Smoothing applied to the prediction inside KL divergence.
pub const KL_EPS: f64 = 1e-10;
/// Slack when comparing a cumulative sum against the prominent mass.
const MASS_SLACK: f64 = 1e-12;

/// Smallest set of top topics (sorted descending, ties by index) whose
/// cumulative mass reaches `mass`. Returned in ascending index order.
pub fn prominent_topics(w: &[f64], mass: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&i, &j| w[j].partial_cmp(&w[i]).unwrap_or(Ordering::Equal));
    let mut cum = 0.0;
    let mut len = order.len();
    for (r, &i) in order.iter().enumerate() {
        cum += w[i];
        if cum >= mass - MASS_SLACK {
            len = r + 1;
            break;
        }
    }
    let mut set = order[..len].to_vec();
    set.sort_unstable();
    set
}

/// Precision, recall and F1 of `pred` against `truth` (both sorted).
pub fn set_prf(truth: &[usize], pred: &[usize]) -> (f64, f64, f64) {
    let hits = pred.iter().filter(|p| truth.binary_search(p).is_ok()).count() as f64;
    let precision = if pred.is_empty() { 0.0 } else { hits / pred.len() as f64 };
    let recall = if truth.is_empty() { 0.0 } else { hits / truth.len() as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionMetrics {
    pub l1: f64,
    pub linf: f64,
    pub hellinger: f64,
    pub kl: f64,
}

/// L1, L-infinity, Hellinger and `KL(truth || pred)` with the prediction
/// smoothed as `(q + eps) / (1 + K eps)`.
///
/// Hellinger is computed as `sqrt(sum (sqrt p - sqrt q)^2 / 2)`, which equals
/// `sqrt(1 - sum sqrt(p q))` on the simplex and is exactly zero for identical
/// inputs.
pub fn distribution_metrics(truth: &[f64], pred: &[f64]) -> DistributionMetrics {
    let k = truth.len();
    let mut l1 = 0.0;
    let mut linf = 0.0f64;
    let mut sq = 0.0;
    let mut kl = 0.0;
    for (&p, &q) in truth.iter().zip(pred) {
        let d = (p - q).abs();
        l1 += d;
        linf = linf.max(d);
        let r = p.max(0.0).sqrt() - q.max(0.0).sqrt();
        sq += r * r;
        if p > 0.0 {
            let qs = (q.max(0.0) + KL_EPS) / (1.0 + k as f64 * KL_EPS);
            kl += p * (p / qs).ln();
        }
    }
    DistributionMetrics {
        l1,
        linf,
        hellinger: (0.5 * sq).sqrt().min(1.0),
        kl: kl.max(0.0),
    }
}

/// `||A0 - (1/M) W W^T||_F`.
pub fn prior_distance(a0: &DMatrix<f64>, w: &CompositionMatrix) -> Result<f64> {
    let k = w.n_topics();
    if a0.shape() != (k, k) {
        return Err(Error::Dimension(format!(
            "prior is {}x{} but compositions have {k} topics",
            a0.nrows(),
            a0.ncols()
        )));
    }
    Ok((a0 - w.second_moment()).norm())
}

/// Predicted mass outside the truth's prominent topics.
pub fn nonsupport_mass(truth: &[f64], pred: &[f64], mass: f64) -> f64 {
    let support = prominent_topics(truth, mass);
    pred.iter()
        .enumerate()
        .filter(|(i, _)| support.binary_search(i).is_err())
        .map(|(_, &v)| v)
        .sum::<f64>()
        .min(1.0)
}

/// Uniform-on-simplex compositions, one RNG stream per column.
pub fn random_baseline(k: usize, m: usize, seed: u64) -> Result<CompositionMatrix> {
    if k < 1 || m < 1 {
        return Err(Error::Config(format!("random baseline needs K, M >= 1, got {k}, {m}")));
    }
    let alpha = vec![1.0; k];
    let cols: Vec<DVector<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(seed, purpose::RANDOM_BASELINE, j as u64);
            DVector::from_vec(sample_dirichlet(&alpha, &mut rng))
        })
        .collect();
    CompositionMatrix::from_columns(k, &cols)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub l1_error: f64,
    pub linf_error: f64,
    pub hellinger: f64,
    pub kl: f64,
    pub nonsupp_mass: f64,
}

impl DocMetrics {
    pub const NAMES: [&'static str; 8] = [
        "precision",
        "recall",
        "f1",
        "l1_error",
        "linf_error",
        "hellinger",
        "kl",
        "nonsupp_mass",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.precision,
            self.recall,
            self.f1,
            self.l1_error,
            self.linf_error,
            self.hellinger,
            self.kl,
            self.nonsupp_mass,
        ]
    }
}

pub fn doc_metrics(truth: &[f64], pred: &[f64], mass: f64) -> DocMetrics {
    let t = prominent_topics(truth, mass);
    let p = prominent_topics(pred, mass);
    let (precision, recall, f1) = set_prf(&t, &p);
    let d = distribution_metrics(truth, pred);
    DocMetrics {
        precision,
        recall,
        f1,
        l1_error: d.l1,
        linf_error: d.linf,
        hellinger: d.hellinger,
        kl: d.kl,
        nonsupp_mass: nonsupport_mass(truth, pred, mass),
    }
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Summary { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub prominent_mass: f64,
    pub per_doc: Vec<DocMetrics>,
    /// Macro averages, in [`DocMetrics::NAMES`] order.
    pub summary: Vec<(String, Summary)>,
    pub prior_dist: f64,
}

impl EvalReport {
    pub const REPORT_HEADER: &'static str = "metric\tmean\tstd";

    pub fn mean(&self, metric: &str) -> Option<f64> {
        if metric == "prior_dist" {
            return Some(self.prior_dist);
        }
        self.summary.iter().find(|(n, _)| n == metric).map(|(_, s)| s.mean)
    }

    /// One row per metric: the seven per-document metrics, then `prior_dist`
    /// and `nonsupp_mass`.
    pub fn report_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", Self::REPORT_HEADER);
        let row = |out: &mut String, name: &str| {
            let s = self.summary.iter().find(|(n, _)| n == name).unwrap().1;
            let _ = writeln!(out, "{name}\t{}\t{}", s.mean, s.std);
        };
        for name in &DocMetrics::NAMES[..7] {
            row(&mut out, name);
        }
        let _ = writeln!(out, "prior_dist\t{}\t0", self.prior_dist);
        row(&mut out, "nonsupp_mass");
        out
    }

    pub fn per_doc_tsv(&self) -> String {
        let mut out = String::from("doc");
        for name in DocMetrics::NAMES {
            out.push('\t');
            out.push_str(name);
        }
        out.push('\n');
        for (m, d) in self.per_doc.iter().enumerate() {
            let _ = write!(out, "{}", m + 1);
            for v in d.values() {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Scores `pred` against `truth` document by document, plus the distance of
/// the predicted second moment to `prior`.
pub fn evaluate(
    truth: &CompositionMatrix,
    pred: &CompositionMatrix,
    prior: &DMatrix<f64>,
    prominent_mass: f64,
) -> Result<EvalReport> {
    if !(prominent_mass > 0.0 && prominent_mass <= 1.0) {
        return Err(Error::Config(format!(
            "prominent mass must lie in (0, 1], got {prominent_mass}"
        )));
    }
    if truth.n_topics() != pred.n_topics() {
        return Err(Error::Dimension(format!(
            "truth has {} topics, prediction has {}",
            truth.n_topics(),
            pred.n_topics()
        )));
    }
    if truth.n_docs() != pred.n_docs() {
        return Err(Error::Dimension(format!(
            "truth has {} documents, prediction has {}",
            truth.n_docs(),
            pred.n_docs()
        )));
    }
    let per_doc: Vec<DocMetrics> = (0..truth.n_docs())
        .into_par_iter()
        .map(|m| {
            let t = truth.matrix().column(m);
            let p = pred.matrix().column(m);
            doc_metrics(t.as_slice(), p.as_slice(), prominent_mass)
        })
        .collect();
    let summary = DocMetrics::NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| (name.to_string(), Summary::of(per_doc.iter().map(|d| d.values()[i]))))
        .collect();
    Ok(EvalReport {
        prominent_mass,
        per_doc,
        summary,
        prior_dist: prior_distance(prior, pred)?,
    })
}
