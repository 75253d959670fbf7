use crate::error::{Error, Result};

/// Standard deviations below this are treated as constant input.
const CONSTANT_TOL: f64 = 1e-12;

pub fn pearson_corr(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("correlation needs at least 2 samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if (sxx / n).sqrt() < CONSTANT_TOL || (syy / n).sqrt() < CONSTANT_TOL {
        return Err(Error::Degenerate("correlation of a constant sequence".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Similarity scores of mated (same-speaker) and non-mated comparisons.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub mated: Vec<f64>,
    pub nonmated: Vec<f64>,
}

impl ScoreSet {
    pub fn new(mated: Vec<f64>, nonmated: Vec<f64>) -> Self {
        Self { mated, nonmated }
    }

    pub fn len(&self) -> usize {
        self.mated.len() + self.nonmated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self) -> Result<()> {
        if self.mated.is_empty() {
            return Err(Error::Empty("mated score list"));
        }
        if self.nonmated.is_empty() {
            return Err(Error::Empty("non-mated score list"));
        }
        if self.mated.iter().chain(&self.nonmated).any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("scores must be finite".into()));
        }
        Ok(())
    }
}

/// Equal error rate, as a fraction.
///
/// A trial is accepted when its score is at least the threshold. Thresholds
/// are swept over every midpoint between consecutive distinct scores plus
/// one below and one above all scores. The result is `(FAR + FRR) / 2` at
/// the threshold minimizing `|FAR - FRR|`, taking the lowest mean among ties.
/// Values above 0.5 mean mated trials score systematically lower.
pub fn eer(scores: &ScoreSet) -> Result<f64> {
    scores.check()?;
    let mut mated = scores.mated.clone();
    let mut nonmated = scores.nonmated.clone();
    mated.sort_by(f64::total_cmp);
    nonmated.sort_by(f64::total_cmp);

    let mut all: Vec<f64> = mated.iter().chain(&nonmated).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();

    let nm = mated.len() as f64;
    let nn = nonmated.len() as f64;
    let mut thresholds = Vec::with_capacity(all.len() + 1);
    thresholds.push(all[0] - 1.0);
    thresholds.extend(all.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    thresholds.push(all[all.len() - 1] + 1.0);

    let mut best = (f64::INFINITY, f64::INFINITY);
    for t in thresholds {
        // sorted lists: count of entries below t
        let far = (nonmated.len() - nonmated.partition_point(|s| *s < t)) as f64 / nn;
        let frr = mated.partition_point(|s| *s < t) as f64 / nm;
        let candidate = ((far - frr).abs(), 0.5 * (far + frr));
        if candidate.0 < best.0 || (candidate.0 == best.0 && candidate.1 < best.1) {
            best = candidate;
        }
    }
    Ok(best.1)
}

/// Global unlinkability `1 - D_sys` from shared-range histograms.
///
/// With equal priors the local linkability of a bin is
/// `max(0, 2 p(mated | s) - 1)` where `p(mated | s) = pm / (pm + pn)`, and
/// `D_sys` is its expectation under the mated score distribution.
pub fn unlinkability(scores: &ScoreSet, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {bins}")));
    }
    scores.check()?;
    let (lo, hi) = scores
        .mated
        .iter()
        .chain(&scores.nonmated)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if hi <= lo {
        return Ok(1.0);
    }
    let width = (hi - lo) / bins as f64;
    let histogram = |values: &[f64]| {
        let mut h = vec![0.0; bins];
        for &v in values {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            h[b] += 1.0;
        }
        let n = values.len() as f64;
        h.iter_mut().for_each(|c| *c /= n);
        h
    };
    let pm = histogram(&scores.mated);
    let pn = histogram(&scores.nonmated);
    let d_sys: f64 = pm
        .iter()
        .zip(&pn)
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, n)| m * (2.0 * m / (m + n) - 1.0).max(0.0))
        .sum();
    Ok((1.0 - d_sys).clamp(0.0, 1.0))
}

/// Unit-cost edit distance between word sequences.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

/// Word error rate in percent.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Empty("reference transcript"));
    }
    Ok(100.0 * edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

/// ASR utility, `100 - WER`.
pub fn asr_utility<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64> {
    Ok(100.0 - wer(reference, hypothesis)?)
}
