//! Re-identification and verification metrics.
//!
//! CMC ranks are computed per gallery identity: an identity's distance to a
//! probe is the smallest distance over its gallery samples, and each
//! distractor sample is an identity of its own. Ties go to the identity whose
//! closest sample has the lower gallery index.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{split_identities, LabeledDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::pipeline::{nk3ml_fit, Nk3mlModel, PipelineConfig};

/// Gallery id of a sample that matches no probe.
pub const DISTRACTOR: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    #[default]
    Euclidean,
    Cosine,
}

/// `D[p, g]` between rows of `a` and rows of `b`.
pub fn pairwise_distances(a: &Matrix, b: &Matrix, kind: DistanceKind) -> Result<Matrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            actual: b.ncols(),
        });
    }
    let at = a.transpose();
    let bt = b.transpose();
    Ok(Matrix::from_fn(a.nrows(), b.nrows(), |p, g| {
        let (x, y) = (at.column(p), bt.column(g));
        match kind {
            DistanceKind::Euclidean => (x - y).norm(),
            DistanceKind::Cosine => {
                let denom = x.norm() * y.norm();
                if denom == 0.0 {
                    1.0
                } else {
                    1.0 - x.dot(&y) / denom
                }
            }
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmcCurve {
    /// `accuracies[k - 1]` is the fraction of probes matched within rank `k`.
    pub accuracies: Vec<f64>,
    pub probe_count: usize,
    pub gallery_count: usize,
}

impl CmcCurve {
    /// Accuracy at 1-based `rank`; ranks past the end saturate.
    pub fn at(&self, rank: usize) -> f64 {
        assert!(rank >= 1, "ranks start at 1");
        match self.accuracies.len() {
            0 => 0.0,
            len => self.accuracies[(rank - 1).min(len - 1)],
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,accuracy\n");
        for (k, a) in self.accuracies.iter().enumerate() {
            writeln!(out, "{},{a:?}", k + 1).unwrap();
        }
        out
    }
}

/// 1-based rank of the correct identity for every probe.
pub fn match_ranks(distances: &Matrix, probe_ids: &[usize], gallery_ids: &[usize]) -> Result<Vec<usize>> {
    if distances.nrows() != probe_ids.len() || distances.ncols() != gallery_ids.len() {
        return Err(Error::InvalidInput(format!(
            "distance matrix is {}x{} for {} probes and {} gallery items",
            distances.nrows(),
            distances.ncols(),
            probe_ids.len(),
            gallery_ids.len()
        )));
    }
    // Group gallery indices by identity, distractors singly, in order of
    // first appearance.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of: std::collections::HashMap<usize, usize> = Default::default();
    for (g, &id) in gallery_ids.iter().enumerate() {
        if id == DISTRACTOR {
            groups.push(vec![g]);
        } else {
            let next = groups.len();
            let slot = *group_of.entry(id).or_insert(next);
            if slot == next {
                groups.push(Vec::new());
            }
            groups[slot].push(g);
        }
    }

    let mut ranks = Vec::with_capacity(probe_ids.len());
    for (p, &id) in probe_ids.iter().enumerate() {
        let Some(&target) = group_of.get(&id) else {
            return Err(Error::Protocol(format!(
                "probe {p} has identity {id} with no gallery sample"
            )));
        };
        let row = distances.row(p);
        // (distance, index) of each group's closest sample.
        let best = |members: &Vec<usize>| {
            members
                .iter()
                .map(|&g| (row[g], g))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .unwrap()
        };
        let (d_true, i_true) = best(&groups[target]);
        let ahead = groups
            .iter()
            .enumerate()
            .filter(|&(k, members)| {
                if k == target {
                    return false;
                }
                let (d, i) = best(members);
                d < d_true || (d == d_true && i < i_true)
            })
            .count();
        ranks.push(ahead + 1);
    }
    Ok(ranks)
}

/// CMC curve from a probe-by-gallery distance matrix.
pub fn cmc_from_distances(distances: &Matrix, probe_ids: &[usize], gallery_ids: &[usize]) -> Result<CmcCurve> {
    if probe_ids.is_empty() {
        return Err(Error::InvalidInput("no probes".into()));
    }
    let ranks = match_ranks(distances, probe_ids, gallery_ids)?;
    let mut distinct: Vec<usize> = gallery_ids.iter().copied().filter(|&g| g != DISTRACTOR).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let identities = distinct.len() + gallery_ids.iter().filter(|&&g| g == DISTRACTOR).count();

    let mut hist = vec![0usize; identities + 1];
    for r in &ranks {
        hist[*r] += 1;
    }
    let total = ranks.len() as f64;
    let mut acc = Vec::with_capacity(identities);
    let mut cum = 0usize;
    for count in &hist[1..] {
        cum += count;
        acc.push(cum as f64 / total);
    }
    Ok(CmcCurve {
        accuracies: acc,
        probe_count: ranks.len(),
        gallery_count: gallery_ids.len(),
    })
}

pub fn cmc(
    probes: &Matrix,
    probe_ids: &[usize],
    gallery: &Matrix,
    gallery_ids: &[usize],
    kind: DistanceKind,
) -> Result<CmcCurve> {
    cmc_from_distances(&pairwise_distances(probes, gallery, kind)?, probe_ids, gallery_ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Pairs scoring at or above the threshold are accepted.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocResult {
    pub points: Vec<RocPoint>,
    pub eer: f64,
}

impl RocResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr,threshold\n");
        for p in &self.points {
            writeln!(out, "{:?},{:?},{:?}", p.fpr, p.tpr, p.threshold).unwrap();
        }
        out
    }
}

/// ROC over every distinct score and the equal error rate.
///
/// Scores are similarities: higher means more alike. The EER is where the
/// false positive rate equals the false negative rate, interpolated
/// linearly between neighboring operating points.
pub fn roc_eer(similar: &[f64], dissimilar: &[f64]) -> Result<RocResult> {
    if similar.is_empty() || dissimilar.is_empty() {
        return Err(Error::InvalidInput("both score sets must be non-empty".into()));
    }
    if similar.iter().chain(dissimilar).any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    let desc = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    };
    let (pos, neg) = (desc(similar), desc(dissimilar));
    let mut thresholds: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut ip, mut ineg) = (0, 0);
    for t in thresholds {
        while ip < pos.len() && pos[ip] >= t {
            ip += 1;
        }
        while ineg < neg.len() && neg[ineg] >= t {
            ineg += 1;
        }
        points.push(RocPoint {
            fpr: ineg as f64 / nn,
            tpr: ip as f64 / np,
            threshold: t,
        });
    }

    // FPR - FNR rises from -1 to 1 along the sweep.
    let gap = |p: &RocPoint| p.fpr - (1.0 - p.tpr);
    let cross = points.iter().position(|p| gap(p) >= 0.0).expect("final point has gap 1");
    let eer = if gap(&points[cross]) == 0.0 {
        points[cross].fpr
    } else {
        let (a, b) = (&points[cross - 1], &points[cross]);
        let t = -gap(a) / (gap(b) - gap(a));
        a.fpr + t * (b.fpr - a.fpr)
    };
    Ok(RocResult { points, eer })
}

/// Ratio of the smallest to the mean distance between class centroids.
pub fn class_margin_ratio(points: &Matrix, labels: &[usize]) -> Result<f64> {
    let c = labels.iter().max().map_or(0, |&m| m + 1);
    if c < 2 || labels.len() != points.nrows() {
        return Err(Error::InvalidInput("need labeled points from at least 2 classes".into()));
    }
    let mut centroids = Matrix::zeros(c, points.ncols());
    let mut counts = vec![0usize; c];
    for (i, &l) in labels.iter().enumerate() {
        let mut row = centroids.row_mut(l);
        row += points.row(i);
        counts[l] += 1;
    }
    for (l, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(Error::InvalidInput(format!("class {l} has no points")));
        }
        let mut row = centroids.row_mut(l);
        row /= n as f64;
    }
    let d = pairwise_distances(&centroids, &centroids, DistanceKind::Euclidean)?;
    let pairs: Vec<f64> = (0..c)
        .flat_map(|i| ((i + 1)..c).map(move |j| (i, j)))
        .map(|(i, j)| d[(i, j)])
        .collect();
    let mean = pairs.iter().sum::<f64>() / pairs.len() as f64;
    let min = pairs.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(min / mean)
}

/// Probe and gallery sample indices of a test set.
///
/// With view tags, samples carrying the first view tag seen are probes and
/// all others are gallery. Without tags, the first sample of each identity
/// is the probe and the rest form the gallery.
pub fn probe_gallery_split(test: &LabeledDataset) -> (Vec<usize>, Vec<usize>) {
    let mut probes = Vec::new();
    let mut gallery = Vec::new();
    match test.views() {
        Some(views) => {
            let probe_view = &views[0];
            for (i, v) in views.iter().enumerate() {
                if v == probe_view {
                    probes.push(i);
                } else {
                    gallery.push(i);
                }
            }
        }
        None => {
            let mut seen = vec![false; test.class_count()];
            for (i, &l) in test.labels().iter().enumerate() {
                if seen[l] {
                    gallery.push(i);
                } else {
                    seen[l] = true;
                    probes.push(i);
                }
            }
        }
    }
    (probes, gallery)
}

/// Embedded probes and gallery for one test set, distractors appended to the
/// gallery.
pub struct EmbeddedTestSet {
    pub probes: Matrix,
    pub probe_ids: Vec<usize>,
    pub gallery: Matrix,
    pub gallery_ids: Vec<usize>,
}

pub fn embed_test_set(model: &Nk3mlModel, test: &LabeledDataset) -> Result<EmbeddedTestSet> {
    let (p_idx, g_idx) = probe_gallery_split(test);
    let x = test.features();
    let probes = model.transform_rows(&x.select_rows(&p_idx))?;
    let mut gallery_x = x.select_rows(&g_idx);
    let mut gallery_ids: Vec<usize> = g_idx.iter().map(|&i| test.labels()[i]).collect();
    if let Some(dis) = test.distractors() {
        let rows = gallery_x.nrows();
        gallery_x = gallery_x.insert_rows(rows, dis.features.nrows(), 0.0);
        gallery_x.rows_mut(rows, dis.features.nrows()).copy_from(&dis.features);
        gallery_ids.extend(std::iter::repeat_n(DISTRACTOR, dis.features.nrows()));
    }
    Ok(EmbeddedTestSet {
        probes,
        probe_ids: p_idx.iter().map(|&i| test.labels()[i]).collect(),
        gallery: model.transform_rows(&gallery_x)?,
        gallery_ids,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalConfig {
    pub pipeline: PipelineConfig,
    pub distance: DistanceKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub mean: CmcCurve,
    pub trials: Vec<CmcCurve>,
}

/// Element-wise mean; shorter curves are extended with their final value.
fn mean_curve(curves: &[CmcCurve]) -> CmcCurve {
    let len = curves.iter().map(|c| c.accuracies.len()).max().unwrap_or(0);
    let n = curves.len() as f64;
    let accuracies = (1..=len)
        .map(|k| curves.iter().map(|c| c.at(k)).sum::<f64>() / n)
        .collect();
    CmcCurve {
        accuracies,
        probe_count: curves.iter().map(|c| c.probe_count).sum(),
        gallery_count: curves.iter().map(|c| c.gallery_count).sum(),
    }
}

/// Repeated identity splits: fit on the training identities, rank the test
/// identities, average the CMC curves in trial order.
pub fn run_trials(dataset: &LabeledDataset, spec: &SplitSpec, config: &EvalConfig) -> Result<TrialReport> {
    spec.validate()?;
    let trials = (0..spec.trial_count)
        .map(|t| {
            let attempt = || -> Result<CmcCurve> {
                let (train, test) = split_identities(dataset, spec, t)?;
                let model = nk3ml_fit(&train, &config.pipeline)?;
                let set = embed_test_set(&model, &test)?;
                cmc(&set.probes, &set.probe_ids, &set.gallery, &set.gallery_ids, config.distance)
            };
            attempt().map_err(|e| Error::Trial {
                trial: t,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialReport {
        mean: mean_curve(&trials),
        trials,
    })
}

/// Similarity scores (negated distances) of all same-identity and
/// different-identity pairs of embedded samples.
pub fn pair_scores(embedded: &Matrix, ids: &[usize], kind: DistanceKind) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = pairwise_distances(embedded, embedded, kind)?;
    let (mut similar, mut dissimilar) = (Vec::new(), Vec::new());
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len() {
            let s = -d[(i, j)];
            if ids[i] == ids[j] {
                similar.push(s);
            } else {
                dissimilar.push(s);
            }
        }
    }
    Ok((similar, dissimilar))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub trial_eers: Vec<f64>,
    pub mean_eer: f64,
    /// ROC of the scores pooled over all trials.
    pub pooled: RocResult,
}

/// Verification on unseen identities: fit on the training identities and
/// score every pair of test samples.
pub fn run_verification_trials(
    dataset: &LabeledDataset,
    spec: &SplitSpec,
    config: &EvalConfig,
) -> Result<VerificationReport> {
    spec.validate()?;
    let mut trial_eers = Vec::new();
    let (mut all_sim, mut all_dis) = (Vec::new(), Vec::new());
    for t in 0..spec.trial_count {
        let attempt = || -> Result<(Vec<f64>, Vec<f64>)> {
            let (train, test) = split_identities(dataset, spec, t)?;
            let model = nk3ml_fit(&train, &config.pipeline)?;
            let y = model.transform_rows(test.features())?;
            pair_scores(&y, test.labels(), config.distance)
        };
        let (sim, dis) = attempt().map_err(|e| Error::Trial {
            trial: t,
            source: Box::new(e),
        })?;
        trial_eers.push(roc_eer(&sim, &dis)?.eer);
        all_sim.extend(sim);
        all_dis.extend(dis);
    }
    let mean_eer = trial_eers.iter().sum::<f64>() / trial_eers.len() as f64;
    Ok(VerificationReport {
        trial_eers,
        mean_eer,
        pooled: roc_eer(&all_sim, &all_dis)?,
    })
}
