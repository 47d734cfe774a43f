//! Corpus synthesis with known ground-truth compositions.
//!
//! Every document draws from its own ChaCha stream derived from
//! `(seed, purpose, document index)`, so output does not depend on how the
//! documents are scheduled across threads.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{second_moment, CompositionMatrix, Corpus, TopicModel};

/// Stream tags keeping independent consumers of one seed apart.
pub mod purpose {
    pub const SYNTH: u64 = 0x5359_4e54_4800_0001;
    pub const RANDOM_BASELINE: u64 = 0x5241_4e44_0000_0002;
}

/// Drift below zero tolerated in the eigenvalues of a covariance matrix,
/// relative to `max(1, |largest eigenvalue|)`.
const PSD_DRIFT_TOL: f64 = 1e-10;

/// Independent RNG stream for item `index` of the consumer `purpose`.
pub fn stream_rng(seed: u64, purpose: u64, index: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Draw from `Dir(alpha)` by normalizing independent `Gamma(alpha_k, 1)`
/// variates.
///
/// The gammas are formed in log space (`Gamma(a) = Gamma(a + 1) U^{1/a}`) so
/// small concentrations cannot underflow every coordinate to zero.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    if alpha.len() == 1 {
        return vec![1.0];
    }
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            let g: f64 = Gamma::new(a + 1.0, 1.0).expect("alpha > 0").sample(rng);
            let u: f64 = 1.0 - rng.random::<f64>();
            g.ln() + u.ln() / a
        })
        .collect();
    softmax(&logs)
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Logistic-normal prior `softmax(mu + L z)` with `L L^T = sigma`.
#[derive(Clone, Debug)]
pub struct LogisticNormal {
    mu: DVector<f64>,
    factor: DMatrix<f64>,
}

impl LogisticNormal {
    /// Factors `sigma` by Cholesky, or by a clamped eigendecomposition when
    /// `sigma` is only positive semidefinite.
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let k = mu.len();
        if sigma.shape() != (k, k) {
            return Err(Error::Dimension(format!(
                "mu has {k} entries but sigma is {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if sigma.iter().any(|v| !v.is_finite()) || mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logistic-normal parameters".into()));
        }
        let asym = (&sigma - sigma.transpose()).amax();
        if asym > PSD_DRIFT_TOL * sigma.amax().max(1.0) {
            return Err(Error::Config(format!("sigma is not symmetric (|S - S^T| = {asym:e})")));
        }
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let factor = match sigma.clone().cholesky() {
            Some(chol) => chol.l(),
            None => psd_factor(sigma)?,
        };
        Ok(LogisticNormal { mu, factor })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let k = self.mu.len();
        let z = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &self.mu + &self.factor * z;
        softmax(x.as_slice())
    }
}

fn psd_factor(sigma: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(sigma);
    let tol = PSD_DRIFT_TOL * eig.eigenvalues.amax().max(1.0);
    let min = eig.eigenvalues.min();
    if min < -tol {
        return Err(Error::Sampling(format!(
            "sigma is not positive semidefinite (smallest eigenvalue {min:e})"
        )));
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// One draw from `LN(mu, sigma)`.
pub fn sample_logistic_normal<R: Rng + ?Sized>(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(LogisticNormal::new(mu.clone(), sigma.clone())?.sample(rng))
}

/// `n` multinomial word draws from `B w`, aggregated into sorted
/// `(word, count)` pairs.
pub fn sample_document<R: Rng + ?Sized>(
    b: &DMatrix<f64>,
    w: &[f64],
    n: u64,
    rng: &mut R,
) -> Result<Vec<(usize, u64)>> {
    let probs = b * DVector::from_column_slice(w);
    let dist = WeightedIndex::new(probs.iter().map(|p| p.max(0.0)))
        .map_err(|e| Error::Sampling(format!("word distribution: {e}")))?;
    let mut counts = vec![0u64; b.nrows()];
    for _ in 0..n {
        counts[dist.sample(rng)] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    Dirichlet { alpha: Vec<f64> },
    LogisticNormal { mu: Vec<f64>, sigma: Vec<Vec<f64>> },
}

impl Prior {
    /// `Dir((scale / K) 1)`.
    pub fn symmetric_dirichlet(k: usize, scale: f64) -> Self {
        Prior::Dirichlet {
            alpha: vec![scale / k as f64; k],
        }
    }

    pub fn logistic_normal(mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Self {
        Prior::LogisticNormal {
            mu: mu.iter().copied().collect(),
            sigma: sigma.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    pub fn n_topics(&self) -> usize {
        match self {
            Prior::Dirichlet { alpha } => alpha.len(),
            Prior::LogisticNormal { mu, .. } => mu.len(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum DocLength {
    Fixed(u64),
    /// Poisson with the given mean, conditioned on being at least 1.
    Poisson(f64),
}

impl std::str::FromStr for DocLength {
    type Err = Error;

    /// `"150"` or `"poisson:150"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad document length '{s}', expected <n> or poisson:<mean>"));
        match s.strip_prefix("poisson:") {
            Some(mean) => Ok(DocLength::Poisson(mean.parse().map_err(|_| bad())?)),
            None => Ok(DocLength::Fixed(s.parse().map_err(|_| bad())?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub prior: Prior,
    pub n_docs: usize,
    pub doc_length: DocLength,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.prior.n_topics() != k {
            return Err(Error::Dimension(format!(
                "prior has {} topics, model has {k}",
                self.prior.n_topics()
            )));
        }
        if let Prior::Dirichlet { alpha } = &self.prior {
            if let Some(a) = alpha.iter().find(|&&a| !(a > 0.0 && a.is_finite())) {
                return Err(Error::Config(format!("Dirichlet alpha must be > 0, got {a}")));
            }
        }
        if self.n_docs < 1 {
            return Err(Error::Config("at least one document is required".into()));
        }
        match self.doc_length {
            DocLength::Fixed(0) => Err(Error::Config("document length must be >= 1".into())),
            DocLength::Poisson(mean) if !(mean > 0.0 && mean.is_finite()) => Err(Error::Config(
                format!("Poisson mean length must be > 0, got {mean}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Synthetic corpus with its ground truth.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub corpus: Corpus,
    pub wstar: CompositionMatrix,
    /// `(1/M) W* W*^T`.
    pub astar: DMatrix<f64>,
}

enum Sampler {
    Dirichlet(Vec<f64>),
    LogisticNormal(LogisticNormal),
}

impl Sampler {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Sampler::Dirichlet(alpha) => sample_dirichlet(alpha, rng),
            Sampler::LogisticNormal(ln) => ln.sample(rng),
        }
    }
}

fn draw_length<R: Rng + ?Sized>(length: DocLength, rng: &mut R) -> Result<u64> {
    match length {
        DocLength::Fixed(n) => Ok(n),
        DocLength::Poisson(mean) => {
            let dist = Poisson::new(mean).map_err(|e| Error::Sampling(format!("{e}")))?;
            loop {
                let n: f64 = dist.sample(rng);
                if n >= 1.0 {
                    return Ok(n as u64);
                }
            }
        }
    }
}

pub fn synthesize(model: &TopicModel, config: &SynthConfig) -> Result<SynthOutput> {
    let k = model.n_topics();
    config.validate(k)?;
    let sampler = match &config.prior {
        Prior::Dirichlet { alpha } => Sampler::Dirichlet(alpha.clone()),
        Prior::LogisticNormal { mu, sigma } => {
            let rows = sigma.len();
            if sigma.iter().any(|r| r.len() != rows) {
                return Err(Error::Dimension("sigma rows have unequal lengths".into()));
            }
            let sigma = DMatrix::from_fn(rows, rows, |i, j| sigma[i][j]);
            Sampler::LogisticNormal(LogisticNormal::new(DVector::from_column_slice(mu), sigma)?)
        }
    };

    let docs: Vec<(Vec<f64>, Vec<(usize, u64)>)> = (0..config.n_docs)
        .into_par_iter()
        .map(|m| {
            let mut rng = stream_rng(config.seed, purpose::SYNTH, m as u64);
            let w = sampler.draw(&mut rng);
            let n = draw_length(config.doc_length, &mut rng)?;
            let doc = sample_document(model.b(), &w, n, &mut rng)?;
            Ok((w, doc))
        })
        .collect::<Result<_>>()?;

    let mut w = DMatrix::zeros(k, config.n_docs);
    for (m, (col, _)) in docs.iter().enumerate() {
        w.set_column(m, &DVector::from_column_slice(col));
    }
    let astar = second_moment(w.column_iter().map(|c| c.into_owned()));
    let corpus = Corpus::from_docs(model.n_words(), docs.into_iter().map(|(_, d)| d).collect())?;
    Ok(SynthOutput {
        corpus,
        wstar: CompositionMatrix::new(w)?,
        astar,
    })
}
