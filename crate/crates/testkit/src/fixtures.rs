use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random point on the simplex (normalized exponentials, i.e. uniform).
pub fn random_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// N x K matrix whose columns are uniform random points on the simplex.
pub fn random_column_stochastic<R: Rng>(rng: &mut R, n: usize, k: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, k);
    for c in 0..k {
        let col = random_simplex(rng, n);
        b.set_column(c, &DVector::from_vec(col));
    }
    b
}

/// Joint-stochastic `A = (1/M) sum w w^T` from `m` random simplex points.
pub fn random_joint_stochastic<R: Rng>(rng: &mut R, k: usize, m: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(k, k);
    for _ in 0..m {
        let w = DVector::from_vec(random_simplex(rng, k));
        a += &w * w.transpose();
    }
    let total: f64 = a.iter().sum();
    a / total
}

/// Dirichlet draw through log-gammas (`Gamma(a) = Gamma(a + 1) U^{1/a}`).
pub fn dirichlet<R: Rng>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    use rand_distr::{Distribution, Gamma};
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            let g: f64 = Gamma::new(a + 1.0, 1.0).unwrap().sample(rng);
            g.ln() + (1.0 - rng.random::<f64>()).ln() / a
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Stand-in for a learned word-topic matrix.
///
/// `groups` parent themes are drawn from `Dir(sparsity)` over the vocabulary;
/// topic `k` is drawn from `Dir(concentration * parent_{k mod groups})`. With
/// `groups < k` some topics get a near-duplicate sibling, as learned topic
/// sets usually do, which makes the minimum max-entry left inverse large.
pub fn hierarchical_topics(
    n: usize,
    k: usize,
    groups: usize,
    sparsity: f64,
    concentration: f64,
    seed: u64,
) -> DMatrix<f64> {
    let mut r = rng(seed);
    let parents: Vec<Vec<f64>> = (0..groups).map(|_| dirichlet(&mut r, &vec![sparsity; n])).collect();
    let mut b = DMatrix::zeros(n, k);
    for c in 0..k {
        let alpha: Vec<f64> = parents[c % groups]
            .iter()
            .map(|p| (concentration * p).max(1e-3))
            .collect();
        b.set_column(c, &DVector::from_vec(dirichlet(&mut r, &alpha)));
    }
    b
}

/// Block covariance: `variance` on the diagonal, `within` between topics of
/// the same block, zero across blocks. Topics are split into `blocks`
/// contiguous blocks of near-equal size.
pub fn block_covariance(k: usize, blocks: usize, variance: f64, within: f64) -> DMatrix<f64> {
    let block_of = |i: usize| i * blocks / k;
    DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            variance
        } else if block_of(i) == block_of(j) {
            within
        } else {
            0.0
        }
    })
}

/// Minimal valid topic-topic matrix: uniform joint probabilities.
pub fn uniform_joint(k: usize) -> DMatrix<f64> {
    DMatrix::from_element(k, k, 1.0 / (k * k) as f64)
}
