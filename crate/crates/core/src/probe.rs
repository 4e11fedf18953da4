//! Linear-probe evaluation of frozen document embeddings.
//!
//! A softmax regression is fit by full-batch gradient descent on a
//! stratified training split and scored on the held-out rest. Precision is
//! test accuracy; F1 is macro-averaged unless configured otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum F1Mode {
    #[default]
    Macro,
    Micro,
}

impl FromStr for F1Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "macro" => Ok(Self::Macro),
            "micro" => Ok(Self::Micro),
            other => Err(format!("unknown F1 mode {other:?} (allowed: macro, micro)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub train_fraction: f64,
    pub probe_lr: f64,
    pub probe_epochs: usize,
    pub repeats: usize,
    /// Split seeds; when empty, `0..repeats` is used.
    pub seeds: Vec<u64>,
    pub f1: F1Mode,
    /// Z-score every embedding column with statistics of the training split.
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            probe_lr: 0.5,
            probe_epochs: 300,
            repeats: 10,
            seeds: Vec::new(),
            f1: F1Mode::Macro,
            standardize: true,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(
                "probe config",
                "train_fraction must lie in (0, 1)",
            ));
        }
        if !(self.probe_lr > 0.0 && self.probe_lr.is_finite()) {
            return Err(Error::invalid("probe config", "probe_lr must be positive"));
        }
        if self.repeats == 0 && self.seeds.is_empty() {
            return Err(Error::invalid("probe config", "repeats must be >= 1"));
        }
        Ok(())
    }

    pub fn resolved_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.repeats as u64).collect()
        } else {
            self.seeds.clone()
        }
    }
}

/// Stratified split of `(id, label)` pairs into train and test ids.
///
/// Each class contributes its share of `round(N · train_fraction)` training
/// documents by largest remainder, clamped so every class keeps at least
/// one document on each side. Ids inside a class are shuffled with `seed`.
pub fn split(
    items: &[(String, String)],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid("split", "train_fraction must lie in (0, 1)"));
    }
    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, label) in items {
        by_class
            .entry(label.as_str())
            .or_default()
            .push(id.as_str());
    }
    if let Some((label, ids)) = by_class.iter().find(|(_, ids)| ids.len() < 2) {
        return Err(Error::invalid(
            "split",
            format!(
                "class {label:?} has {} document(s); at least 2 are required",
                ids.len()
            ),
        ));
    }
    let total = items.len();
    let target = (total as f64 * train_fraction).round() as usize;
    let quotas: Vec<f64> = by_class
        .values()
        .map(|ids| ids.len() as f64 * target as f64 / total as f64)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = target.saturating_sub(counts.iter().sum());
    for &c in order.iter().cycle().take(order.len() * 2) {
        if left == 0 {
            break;
        }
        counts[c] += 1;
        left -= 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for ((_, ids), &count) in by_class.iter().zip(&counts) {
        let count = count.clamp(1, ids.len() - 1);
        let mut ids = ids.clone();
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        train.extend(ids[..count].iter().map(|s| s.to_string()));
        test.extend(ids[count..].iter().map(|s| s.to_string()));
    }
    Ok((train, test))
}

/// Softmax-regression weights over a fixed class list.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub classes: Vec<String>,
    /// `d × C`
    pub weight: Array2<f64>,
    /// `1 × C`
    pub bias: Array2<f64>,
    /// Column means and scales applied before the linear map.
    pub shift: Option<(Array1<f64>, Array1<f64>)>,
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

impl Probe {
    fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        match &self.shift {
            Some((mean, scale)) => (x - mean) / scale,
            None => x.clone(),
        }
    }

    pub fn probabilities(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut z = self.transform(x).dot(&self.weight) + &self.bias;
        softmax_rows(&mut z);
        z
    }

    /// Predicted class indices; ties go to the lowest index.
    pub fn predict(&self, x: &Array2<f64>) -> Vec<usize> {
        self.probabilities(x)
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                        if p > best.1 {
                            (i, p)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }
}

/// Fits a probe from zero-initialized weights.
pub fn train_probe(x: &Array2<f64>, labels: &[String], cfg: &ProbeConfig) -> Result<Probe> {
    if x.nrows() != labels.len() {
        return Err(Error::Shape {
            context: "probe input",
            expected: format!("{} rows", labels.len()),
            got: format!("{} rows", x.nrows()),
        });
    }
    let classes: Vec<String> = labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(Error::invalid(
            "probe",
            "training labels must contain at least two classes",
        ));
    }
    let (n, d, c) = (x.nrows(), x.ncols(), classes.len());
    let index: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut y = Array2::<f64>::zeros((n, c));
    for (i, l) in labels.iter().enumerate() {
        y[[i, index[l.as_str()]]] = 1.0;
    }
    let shift = cfg.standardize.then(|| {
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let scale = x
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 1e-12 { s } else { 1.0 });
        (mean, scale)
    });
    let mut probe = Probe {
        classes,
        weight: Array2::zeros((d, c)),
        bias: Array2::zeros((1, c)),
        shift,
    };
    let xt = probe.transform(x);
    for epoch in 0..cfg.probe_epochs {
        let mut p = xt.dot(&probe.weight) + &probe.bias;
        softmax_rows(&mut p);
        let loss = -(&y * &p.mapv(|v| v.max(1e-300).ln())).sum() / n as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: "probe cross-entropy is not finite".into(),
            });
        }
        let g = (&p - &y) / n as f64;
        let gw = xt.t().dot(&g);
        let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
        probe.weight.scaled_add(-cfg.probe_lr, &gw);
        probe.bias.scaled_add(-cfg.probe_lr, &gb);
    }
    Ok(probe)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scores of one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    /// Test accuracy.
    pub precision: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub train_size: usize,
    pub test_size: usize,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Accuracy, F1 and per-class scores from parallel label lists.
pub fn score(
    classes: &[String],
    truth: &[usize],
    predicted: &[usize],
    mode: F1Mode,
) -> Result<(f64, f64, Vec<ClassMetrics>)> {
    if truth.is_empty() {
        return Err(Error::invalid("evaluate", "test set is empty"));
    }
    let c = classes.len();
    let mut confusion = Array2::<usize>::zeros((c, c));
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion[[t, p]] += 1;
    }
    let correct: usize = (0..c).map(|i| confusion[[i, i]]).sum();
    let accuracy = correct as f64 / truth.len() as f64;
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|k| {
            let tp = confusion[[k, k]] as f64;
            let predicted_k = confusion.column(k).sum() as f64;
            let actual_k = confusion.row(k).sum() as f64;
            let precision = if predicted_k > 0.0 {
                tp / predicted_k
            } else {
                0.0
            };
            let recall = if actual_k > 0.0 { tp / actual_k } else { 0.0 };
            ClassMetrics {
                class: classes[k].clone(),
                support: actual_k as usize,
                precision,
                recall,
                f1: harmonic(precision, recall),
            }
        })
        .collect();
    let f1 = match mode {
        // classes absent from both truth and predictions carry no signal
        F1Mode::Macro => {
            let present: Vec<&ClassMetrics> = per_class
                .iter()
                .enumerate()
                .filter(|(k, m)| m.support > 0 || confusion.column(*k).sum() > 0)
                .map(|(_, m)| m)
                .collect();
            present.iter().map(|m| m.f1).sum::<f64>() / present.len() as f64
        }
        F1Mode::Micro => accuracy,
    };
    Ok((accuracy, f1, per_class))
}

/// Aggregate over repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision_mean: f64,
    pub f1_mean: f64,
    pub precision_best: f64,
    pub f1_best: f64,
    pub f1_mode: F1Mode,
    pub runs: Vec<RunMetrics>,
}

/// Labeled document embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVector {
    pub doc_id: String,
    pub label: String,
    pub vector: Vec<f64>,
}

fn matrix(rows: &[&LabeledVector]) -> Result<Array2<f64>> {
    let d = rows.first().map_or(0, |r| r.vector.len());
    let mut out = Array2::zeros((rows.len(), d));
    for (i, r) in rows.iter().enumerate() {
        if r.vector.len() != d {
            return Err(Error::Shape {
                context: "embedding",
                expected: format!("{d} values"),
                got: format!("{} values for {}", r.vector.len(), r.doc_id),
            });
        }
        out.row_mut(i).assign(&Array1::from(r.vector.clone()));
    }
    Ok(out)
}

/// One split, fit, and score.
pub fn evaluate_once(data: &[LabeledVector], cfg: &ProbeConfig, seed: u64) -> Result<RunMetrics> {
    let pairs: Vec<(String, String)> = data
        .iter()
        .map(|d| (d.doc_id.clone(), d.label.clone()))
        .collect();
    let (train_ids, test_ids) = split(&pairs, cfg.train_fraction, seed)?;
    let by_id: BTreeMap<&str, &LabeledVector> =
        data.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let pick = |ids: &[String]| ids.iter().map(|i| by_id[i.as_str()]).collect::<Vec<_>>();
    let (train_rows, test_rows) = (pick(&train_ids), pick(&test_ids));
    if test_rows.is_empty() {
        return Err(Error::invalid("evaluate", "test set is empty"));
    }
    let train_labels: Vec<String> = train_rows.iter().map(|r| r.label.clone()).collect();
    let probe = train_probe(&matrix(&train_rows)?, &train_labels, cfg)?;
    let predicted = probe.predict(&matrix(&test_rows)?);
    // test labels are a subset of train labels because every class keeps
    // at least one training document
    let truth: Vec<usize> = test_rows
        .iter()
        .map(|r| {
            probe
                .classes
                .iter()
                .position(|c| c == &r.label)
                .expect("class seen in training")
        })
        .collect();
    let (precision, f1, per_class) = score(&probe.classes, &truth, &predicted, cfg.f1)?;
    Ok(RunMetrics {
        seed,
        precision,
        f1,
        per_class,
        train_size: train_rows.len(),
        test_size: test_rows.len(),
    })
}

/// Runs every repeat (in parallel) and aggregates mean and best.
pub fn evaluate(data: &[LabeledVector], cfg: &ProbeConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let mut seen = BTreeSet::new();
    for d in data {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(Error::invalid(
                "evaluate",
                format!("duplicate document id {}", d.doc_id),
            ));
        }
    }
    let runs: Vec<RunMetrics> = cfg
        .resolved_seeds()
        .into_par_iter()
        .map(|seed| evaluate_once(data, cfg, seed))
        .collect::<Result<_>>()?;
    let m = runs.len() as f64;
    Ok(MetricsReport {
        precision_mean: runs.iter().map(|r| r.precision).sum::<f64>() / m,
        f1_mean: runs.iter().map(|r| r.f1).sum::<f64>() / m,
        precision_best: runs.iter().map(|r| r.precision).fold(0.0, f64::max),
        f1_best: runs.iter().map(|r| r.f1).fold(0.0, f64::max),
        f1_mode: cfg.f1,
        runs,
    })
}

impl MetricsReport {
    /// Range checks on every reported number.
    pub fn check(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(
                    "metrics",
                    format!("{name} = {v} is outside [0, 1]"),
                ))
            }
        };
        unit("precision_mean", self.precision_mean)?;
        unit("f1_mean", self.f1_mean)?;
        for r in &self.runs {
            unit("precision", r.precision)?;
            unit("f1", r.f1)?;
            if r.test_size == 0 {
                return Err(Error::invalid("metrics", "empty test split"));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,precision,f1\n");
        for r in &self.runs {
            let _ = writeln!(s, "{},{},{}", r.seed, r.precision, r.f1);
        }
        let _ = writeln!(s, "mean,{},{}", self.precision_mean, self.f1_mean);
        let _ = writeln!(s, "best,{},{}", self.precision_best, self.f1_best);
        s
    }

    pub fn to_table(&self) -> String {
        let f1 = match self.f1_mode {
            F1Mode::Macro => "macro-F1",
            F1Mode::Micro => "micro-F1",
        };
        let mut s = format!("{:<8} {:>10} {:>10}\n", "seed", "precision", f1);
        for r in &self.runs {
            let _ = writeln!(s, "{:<8} {:>10.4} {:>10.4}", r.seed, r.precision, r.f1);
        }
        let _ = writeln!(
            s,
            "{:<8} {:>10.4} {:>10.4}",
            "mean", self.precision_mean, self.f1_mean
        );
        let _ = writeln!(
            s,
            "{:<8} {:>10.4} {:>10.4}",
            "best", self.precision_best, self.f1_best
        );
        if let Some(first) = self.runs.first() {
            let _ = writeln!(s, "\nper class (seed {}):", first.seed);
            let _ = writeln!(
                s,
                "{:<16} {:>8} {:>10} {:>10} {:>10}",
                "class", "support", "precision", "recall", "F1"
            );
            for c in &first.per_class {
                let _ = writeln!(
                    s,
                    "{:<16} {:>8} {:>10.4} {:>10.4} {:>10.4}",
                    c.class, c.support, c.precision, c.recall, c.f1
                );
            }
        }
        s
    }
}
