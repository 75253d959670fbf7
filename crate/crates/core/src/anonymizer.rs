//! Target speaker-vector selection and the utterance anonymization pipeline.
//!
//! Public speaker vectors are clustered with Affinity Propagation on cosine
//! similarity. A target is built by picking one of the ten largest clusters,
//! sampling half of its members and averaging them. Selection never looks at
//! the utterance being anonymized.

use std::collections::HashMap;
use std::sync::RwLock;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autoencoder::{anonymize_pitch, PitchAutoencoder};
use crate::bn::{noise_layer, AcousticFrames, AcousticModel, NoisyBnFeatures};
use crate::dp::{pipeline_ledger, PrivacyBudget, PrivacyLedger};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::pitch::{PitchSequence, PitchStats};

/// Smallest pool that supports choosing among the ten largest clusters.
pub const MIN_POOL_SIZE: usize = 20;
/// Number of largest clusters a target is drawn from.
pub const TOP_CLUSTERS: usize = 10;

/// Public speaker vectors, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorPool(Matrix);

impl VectorPool {
    pub fn new(vectors: Matrix) -> Result<Self> {
        if vectors.rows() < MIN_POOL_SIZE {
            return Err(Error::InvalidArgument(format!(
                "vector pool needs at least {MIN_POOL_SIZE} rows, got {}",
                vectors.rows()
            )));
        }
        if vectors.cols() == 0 {
            return Err(Error::Empty("vector dimension"));
        }
        if !vectors.is_finite() {
            return Err(Error::InvalidArgument("pool vectors must be finite".into()));
        }
        Ok(Self(vectors))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityConfig {
    pub damping: f64,
    pub max_iterations: usize,
    /// Iterations the exemplar set must stay unchanged to count as converged.
    pub convergence_iterations: usize,
}

impl Default for AffinityConfig {
    fn default() -> Self {
        Self {
            damping: 0.9,
            max_iterations: 1000,
            convergence_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    exemplars: Vec<usize>,
}

impl ClusterAssignment {
    /// Cluster id of every vector.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Pool index of each cluster's exemplar.
    pub fn exemplars(&self) -> &[usize] {
        &self.exemplars
    }

    pub fn cluster_count(&self) -> usize {
        self.exemplars.len()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == cluster).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.exemplars.len()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Cluster ids by decreasing size; ties keep the lower id first.
    pub fn largest(&self, n: usize) -> Vec<usize> {
        let sizes = self.sizes();
        let mut ids: Vec<usize> = (0..sizes.len()).collect();
        ids.sort_by_key(|&c| std::cmp::Reverse(sizes[c]));
        ids.truncate(n);
        ids
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn cluster_pool(pool: &VectorPool) -> Result<ClusterAssignment> {
    affinity_propagation(pool.matrix(), &AffinityConfig::default())
}

/// Affinity Propagation over the rows of `vectors` with cosine similarity
/// and the median similarity as every point's preference.
pub fn affinity_propagation(vectors: &Matrix, config: &AffinityConfig) -> Result<ClusterAssignment> {
    let n = vectors.rows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("clustering needs at least 2 vectors, got {n}")));
    }
    if !(config.damping >= 0.5 && config.damping < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "damping must lie in [0.5, 1), got {}",
            config.damping
        )));
    }
    let mut s = Matrix::zeros(n, n);
    let mut off_diagonal = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for k in 0..n {
            if i != k {
                let v = cosine_similarity(vectors.row(i), vectors.row(k));
                s.set(i, k, v);
                off_diagonal.push(v);
            }
        }
    }
    let first = off_diagonal[0];
    if off_diagonal.iter().all(|v| (v - first).abs() <= 1e-12) {
        return Ok(ClusterAssignment {
            labels: vec![0; n],
            exemplars: vec![0],
        });
    }
    let preference = median(&mut off_diagonal);
    for i in 0..n {
        s.set(i, i, preference);
    }
    // Fixed-seed jitter breaks exact ties between equally good exemplars.
    let mut jitter = ChaCha8Rng::seed_from_u64(0);
    for v in s.as_mut_slice() {
        *v += (f64::EPSILON * v.abs() + 1e-300) * jitter.gen::<f64>();
    }

    let lambda = config.damping;
    let mut r = Matrix::zeros(n, n);
    let mut a = Matrix::zeros(n, n);
    let mut exemplars: Vec<usize> = Vec::new();
    let mut stable = 0;
    for _ in 0..config.max_iterations {
        for i in 0..n {
            let (mut best, mut second, mut best_k) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
            for k in 0..n {
                let v = a.get(i, k) + s.get(i, k);
                if v > best {
                    second = best;
                    best = v;
                    best_k = k;
                } else if v > second {
                    second = v;
                }
            }
            for k in 0..n {
                let competitor = if k == best_k { second } else { best };
                let new = s.get(i, k) - competitor;
                r.set(i, k, lambda * r.get(i, k) + (1.0 - lambda) * new);
            }
        }
        for k in 0..n {
            let positive: f64 = (0..n).filter(|&i| i != k).map(|i| r.get(i, k).max(0.0)).sum();
            for i in 0..n {
                let new = if i == k {
                    positive
                } else {
                    (r.get(k, k) + positive - r.get(i, k).max(0.0)).min(0.0)
                };
                a.set(i, k, lambda * a.get(i, k) + (1.0 - lambda) * new);
            }
        }
        let current: Vec<usize> = (0..n).filter(|&k| a.get(k, k) + r.get(k, k) > 0.0).collect();
        if !current.is_empty() && current == exemplars {
            stable += 1;
            if stable >= config.convergence_iterations {
                return Ok(assign(&s, current));
            }
        } else {
            stable = 0;
            exemplars = current;
        }
    }
    Err(Error::NotConverged {
        algorithm: "affinity propagation",
        iterations: config.max_iterations,
    })
}

fn assign(s: &Matrix, exemplars: Vec<usize>) -> ClusterAssignment {
    let labels = (0..s.rows())
        .map(|i| {
            if let Some(c) = exemplars.iter().position(|&e| e == i) {
                return c;
            }
            (0..exemplars.len())
                .max_by(|&x, &y| s.get(i, exemplars[x]).total_cmp(&s.get(i, exemplars[y])))
                .expect("at least one exemplar")
        })
        .collect();
    ClusterAssignment { labels, exemplars }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignmentMode {
    /// A fresh target for every utterance.
    Utterance,
    /// One target per speaker, reused for all of their utterances.
    Speaker,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSelection {
    pub cluster: usize,
    pub members: Vec<usize>,
    pub vector: Vec<f64>,
    pub mode: AssignmentMode,
}

/// One uncached draw: a cluster among the largest, half its members, their mean.
pub fn draw_target<R: Rng + ?Sized>(
    clusters: &ClusterAssignment,
    pool: &VectorPool,
    mode: AssignmentMode,
    rng: &mut R,
) -> Result<TargetSelection> {
    if clusters.cluster_count() == 0 {
        return Err(Error::Empty("cluster assignment"));
    }
    if clusters.labels.len() != pool.len() {
        return Err(Error::shape(format!("{} cluster labels", pool.len()), clusters.labels.len()));
    }
    let candidates = clusters.largest(TOP_CLUSTERS);
    let cluster = candidates[rng.gen_range(0..candidates.len())];
    let all = clusters.members(cluster);
    let take = all.len().div_ceil(2);
    let mut members: Vec<usize> = sample(rng, all.len(), take).into_iter().map(|i| all[i]).collect();
    members.sort_unstable();
    let mut vector = vec![0.0; pool.dim()];
    for &m in &members {
        for (acc, v) in vector.iter_mut().zip(pool.row(m)) {
            *acc += v;
        }
    }
    vector.iter_mut().for_each(|v| *v /= take as f64);
    Ok(TargetSelection {
        cluster,
        members,
        vector,
        mode,
    })
}

/// Clustered pool plus the per-speaker cache used in speaker-level mode.
#[derive(Debug)]
pub struct TargetSelector {
    pool: VectorPool,
    clusters: ClusterAssignment,
    mode: AssignmentMode,
    cache: RwLock<HashMap<String, TargetSelection>>,
}

impl TargetSelector {
    pub fn new(pool: VectorPool, mode: AssignmentMode) -> Result<Self> {
        let clusters = cluster_pool(&pool)?;
        Self::with_clusters(pool, clusters, mode)
    }

    pub fn with_clusters(pool: VectorPool, clusters: ClusterAssignment, mode: AssignmentMode) -> Result<Self> {
        if clusters.labels.len() != pool.len() {
            return Err(Error::shape(format!("{} cluster labels", pool.len()), clusters.labels.len()));
        }
        Ok(Self {
            pool,
            clusters,
            mode,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn pool(&self) -> &VectorPool {
        &self.pool
    }

    pub fn clusters(&self) -> &ClusterAssignment {
        &self.clusters
    }

    pub fn mode(&self) -> AssignmentMode {
        self.mode
    }

    /// In speaker-level mode `speaker_id` is required and the first selection
    /// for that speaker is returned on every later call.
    pub fn select<R: Rng + ?Sized>(&self, speaker_id: Option<&str>, rng: &mut R) -> Result<TargetSelection> {
        match self.mode {
            AssignmentMode::Utterance => draw_target(&self.clusters, &self.pool, self.mode, rng),
            AssignmentMode::Speaker => {
                let id = speaker_id.ok_or_else(|| {
                    Error::InvalidArgument("speaker-level selection needs a speaker id".into())
                })?;
                if let Some(hit) = self.cache.read().expect("target cache poisoned").get(id) {
                    return Ok(hit.clone());
                }
                let mut cache = self.cache.write().expect("target cache poisoned");
                if let Some(hit) = cache.get(id) {
                    return Ok(hit.clone());
                }
                let fresh = draw_target(&self.clusters, &self.pool, self.mode, rng)?;
                cache.insert(id.to_owned(), fresh.clone());
                Ok(fresh)
            }
        }
    }
}

/// Everything released for one utterance, with its privacy cost.
#[derive(Debug, Clone, PartialEq)]
pub struct AnonymizedBundle {
    pub pitch: PitchSequence,
    pub bn: NoisyBnFeatures,
    pub target: Vec<f64>,
    pub ledger: PrivacyLedger,
}

impl AnonymizedBundle {
    pub fn frames(&self) -> usize {
        self.pitch.len()
    }

    /// `eps_pitch + K * eps_bn`.
    pub fn simple_budget(&self) -> Result<f64> {
        self.ledger.simple_total()
    }

    /// The advanced-composition alternative.
    pub fn advanced_budget(&self) -> Result<PrivacyBudget> {
        self.ledger.advanced_total()
    }
}

/// Privacy parameters of one pipeline run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineBudget {
    pub epsilon_pitch: f64,
    pub epsilon_bn: f64,
    pub delta: f64,
}

/// Anonymizes one utterance. Both models must be private and carry the
/// budgets in `budget`.
#[allow(clippy::too_many_arguments)]
pub fn anonymize_utterance<R: Rng + ?Sized>(
    pitch_model: &PitchAutoencoder,
    bn_model: &AcousticModel,
    pitch: &PitchSequence,
    frames: &AcousticFrames,
    selector: &TargetSelector,
    speaker_id: Option<&str>,
    budget: PipelineBudget,
    target_stats: PitchStats,
    rng: &mut R,
) -> Result<AnonymizedBundle> {
    if pitch.len() != frames.frames() {
        return Err(Error::shape(
            format!("{} acoustic frames", pitch.len()),
            frames.frames(),
        ));
    }
    if pitch_model.epsilon() != budget.epsilon_pitch {
        return Err(Error::InvalidArgument(format!(
            "pitch model is calibrated for epsilon {}, budget says {}",
            pitch_model.epsilon(),
            budget.epsilon_pitch
        )));
    }
    if bn_model.epsilon() != budget.epsilon_bn {
        return Err(Error::InvalidArgument(format!(
            "BN model is calibrated for epsilon {}, budget says {}",
            bn_model.epsilon(),
            budget.epsilon_bn
        )));
    }
    let ledger = pipeline_ledger(budget.epsilon_pitch, budget.epsilon_bn, frames.frames() as u64, budget.delta)?;
    let target = selector.select(speaker_id, rng)?;
    let anonymized_pitch = anonymize_pitch(pitch_model, pitch, target_stats, rng)?;
    let bn = noise_layer(&bn_model.extract_bn(frames)?, budget.epsilon_bn, rng)?;
    Ok(AnonymizedBundle {
        pitch: anonymized_pitch,
        bn,
        target: target.vector,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::BnArchitecture;
    use crate::dp::NoiseRng;

    fn planted(groups: &[(Vec<f64>, usize)], spread: f64, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = groups[0].0.len();
        let rows: Vec<f64> = groups
            .iter()
            .flat_map(|(centre, n)| {
                let centre = centre.clone();
                (0..*n).flat_map(move |_| centre.clone())
            })
            .map(|v| v + spread * rng.gen_range(-1.0..1.0))
            .collect();
        Matrix::from_vec(rows.len() / dim, dim, rows).unwrap()
    }

    #[test]
    fn two_groups_found() {
        let m = planted(&[(vec![1.0, 0.0, 0.0], 12), (vec![0.0, 1.0, 0.0], 13)], 0.02, 1);
        let c = cluster_pool(&VectorPool::new(m).unwrap()).unwrap();
        assert_eq!(c.cluster_count(), 2);
        let first = c.labels()[0];
        assert!(c.labels()[..12].iter().all(|&l| l == first));
        assert!(c.labels()[12..].iter().all(|&l| l != first));
    }

    #[test]
    fn identical_vectors_form_one_cluster() {
        let m = Matrix::from_fn(20, 4, |_, c| c as f64 + 1.0);
        let c = cluster_pool(&VectorPool::new(m).unwrap()).unwrap();
        assert_eq!(c.cluster_count(), 1);
        assert_eq!(c.sizes(), vec![20]);
    }

    #[test]
    fn assignment_is_total_and_contiguous() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Matrix::from_fn(60, 6, |_, _| rng.gen_range(-1.0..1.0));
        let c = cluster_pool(&VectorPool::new(m).unwrap()).unwrap();
        assert_eq!(c.labels().len(), 60);
        assert_eq!(c.sizes().iter().sum::<usize>(), 60);
        assert!(c.sizes().iter().all(|&s| s > 0));
        for (id, &e) in c.exemplars().iter().enumerate() {
            assert_eq!(c.labels()[e], id);
        }
    }

    #[test]
    fn pool_validation() {
        assert!(VectorPool::new(Matrix::zeros(19, 3)).is_err());
        assert!(VectorPool::new(Matrix::from_fn(20, 2, |r, _| if r == 3 { f64::NAN } else { 1.0 })).is_err());
        assert!(affinity_propagation(&Matrix::zeros(1, 3), &AffinityConfig::default()).is_err());
    }

    #[test]
    fn target_is_mean_of_members() {
        let m = planted(
            &[(vec![1.0, 0.0, 0.0], 9), (vec![0.0, 1.0, 0.0], 7), (vec![0.0, 0.0, 1.0], 5)],
            0.05,
            4,
        );
        let pool = VectorPool::new(m).unwrap();
        let selector = TargetSelector::new(pool.clone(), AssignmentMode::Utterance).unwrap();
        let mut rng = NoiseRng::seeded(5);
        for _ in 0..20 {
            let t = selector.select(None, &mut rng).unwrap();
            let size = selector.clusters().sizes()[t.cluster];
            assert_eq!(t.members.len(), size.div_ceil(2));
            for d in 0..3 {
                let mean: f64 = t.members.iter().map(|&i| pool.row(i)[d]).sum::<f64>() / t.members.len() as f64;
                assert!((mean - t.vector[d]).abs() < 1e-12);
                let (lo, hi) = t
                    .members
                    .iter()
                    .map(|&i| pool.row(i)[d])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                assert!(t.vector[d] >= lo - 1e-12 && t.vector[d] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn identical_cluster_gives_that_vector() {
        let m = Matrix::from_fn(20, 3, |_, c| [0.3, -1.2, 2.0][c]);
        let selector = TargetSelector::new(VectorPool::new(m).unwrap(), AssignmentMode::Utterance).unwrap();
        let t = selector.select(None, &mut NoiseRng::seeded(0)).unwrap();
        for (a, b) in t.vector.iter().zip([0.3, -1.2, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn speaker_mode_caches() {
        let mut gen = ChaCha8Rng::seed_from_u64(9);
        let m = Matrix::from_fn(40, 5, |_, _| gen.gen_range(-1.0..1.0));
        let pool = VectorPool::new(m).unwrap();
        let speaker = TargetSelector::new(pool.clone(), AssignmentMode::Speaker).unwrap();
        let mut rng = NoiseRng::seeded(1);
        let a = speaker.select(Some("spk1"), &mut rng).unwrap();
        for _ in 0..10 {
            assert_eq!(speaker.select(Some("spk1"), &mut rng).unwrap(), a);
        }
        assert!(speaker.select(None, &mut rng).is_err());

        let utterance = TargetSelector::with_clusters(pool, speaker.clusters().clone(), AssignmentMode::Utterance).unwrap();
        let draws: Vec<Vec<usize>> = (0..10).map(|_| utterance.select(None, &mut rng).unwrap().members).collect();
        assert!(draws.iter().any(|d| *d != draws[0]));
    }

    #[test]
    fn bundle_and_ledger() {
        let mut rng = NoiseRng::seeded(11);
        let mut gen = ChaCha8Rng::seed_from_u64(2);
        let pool = VectorPool::new(Matrix::from_fn(30, 4, |_, _| gen.gen_range(-1.0..1.0))).unwrap();
        let selector = TargetSelector::new(pool, AssignmentMode::Utterance).unwrap();
        let pitch_model = PitchAutoencoder::new(2, 5, 1.0, &mut rng).unwrap();
        let arch = BnArchitecture {
            input_dim: 3,
            hidden: 4,
            bn_dim: 4,
            classifier_hidden: 4,
            classes: 2,
            kernel_width: 5,
        };
        let bn_model = AcousticModel::new(arch, 0.5, &mut rng).unwrap();
        let k = 100;
        let pitch = PitchSequence::new(
            (0..k).map(|t| if t % 7 == 0 { 0.0 } else { 120.0 + 10.0 * (t as f64 * 0.2).sin() }).collect(),
        )
        .unwrap();
        let frames = AcousticFrames::new(Matrix::from_fn(k, 3, |r, c| ((r * 3 + c) as f64 * 0.7).cos())).unwrap();
        let budget = PipelineBudget {
            epsilon_pitch: 1.0,
            epsilon_bn: 0.5,
            delta: 1e-5,
        };
        let stats = PitchStats::new(200.0, 20.0).unwrap();
        let bundle =
            anonymize_utterance(&pitch_model, &bn_model, &pitch, &frames, &selector, None, budget, stats, &mut rng).unwrap();
        assert_eq!(bundle.pitch.len(), k);
        assert_eq!(bundle.bn.frames(), k);
        assert_eq!(bundle.target.len(), 4);
        assert_eq!(bundle.simple_budget().unwrap(), 51.0);
        let adv = bundle.advanced_budget().unwrap();
        assert!((adv.epsilon() - 1.0 - crate::dp::compose_advanced(0.5, 100, 1e-5).unwrap()).abs() < 1e-12);
        assert_eq!(adv.delta(), 1e-5);

        let short = AcousticFrames::new(Matrix::zeros(k - 1, 3)).unwrap();
        assert!(anonymize_utterance(&pitch_model, &bn_model, &pitch, &short, &selector, None, budget, stats, &mut rng).is_err());
        let wrong = PipelineBudget { epsilon_bn: 1.0, ..budget };
        assert!(anonymize_utterance(&pitch_model, &bn_model, &pitch, &frames, &selector, None, wrong, stats, &mut rng).is_err());
    }
}
