//! Topic models, corpora and composition matrices.
//!
//! Indices are 0-based everywhere in memory. The file formats in [`crate::io`]
//! use 1-based document and word indices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance on column sums of `B` and on the total mass of `A`.
pub const STOCHASTIC_TOL: f64 = 1e-8;
/// Entries in `[-NEG_TOL, 0)` are treated as round-off and clamped to zero.
pub const NEG_TOL: f64 = 1e-12;
/// Tolerance on column sums of a composition matrix.
pub const COMPOSITION_TOL: f64 = 1e-6;

/// A learned spectral topic model: word-topic matrix `B` (N x K, column
/// stochastic) and topic-topic matrix `A` (K x K, symmetric, joint stochastic).
#[derive(Clone, Debug)]
pub struct TopicModel {
    b: DMatrix<f64>,
    a: DMatrix<f64>,
}

impl TopicModel {
    /// Validates `b` and `a`. `a` is symmetrized as `(a + a^T) / 2` first.
    pub fn new(mut b: DMatrix<f64>, a: DMatrix<f64>) -> Result<Self> {
        let (n, k) = b.shape();
        if k == 0 {
            return Err(Error::InvalidModel("model has no topics".into()));
        }
        if k > n {
            return Err(Error::InvalidModel(format!(
                "overcomplete model: {k} topics over a vocabulary of {n} words"
            )));
        }
        if a.shape() != (k, k) {
            return Err(Error::Dimension(format!(
                "B has {k} topics but A is {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }

        clamp_nonnegative(&mut b, "B")?;
        for (col, column) in b.column_iter().enumerate() {
            let s: f64 = column.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidModel(format!(
                    "column {col} of B sums to {s}, expected 1"
                )));
            }
        }

        let mut a = (&a + a.transpose()) * 0.5;
        clamp_nonnegative(&mut a, "A")?;
        let total: f64 = a.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidModel(format!(
                "entries of A sum to {total}, expected 1"
            )));
        }

        Ok(TopicModel { b, a })
    }

    pub fn n_words(&self) -> usize {
        self.b.nrows()
    }

    pub fn n_topics(&self) -> usize {
        self.b.ncols()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Replaces the topic-topic matrix, keeping `B`.
    pub fn with_a(&self, a: DMatrix<f64>) -> Result<Self> {
        TopicModel::new(self.b.clone(), a)
    }

    /// Marginal topic probabilities `p(z = k)`, the row sums of `A`.
    pub fn topic_marginals(&self) -> DVector<f64> {
        let k = self.n_topics();
        DVector::from_iterator(k, self.a.row_iter().map(|r| r.sum()))
    }

    /// Word-specific topic posteriors `p(z = k | x = i)` by Bayes rule with
    /// the prior [`topic_marginals`](Self::topic_marginals).
    ///
    /// A word that no topic can emit gets the prior itself.
    pub fn word_topic_posterior(&self) -> WordTopicPosterior {
        let prior = self.topic_marginals();
        let (n, k) = self.b.shape();
        let mut post = DMatrix::zeros(k, n);
        for i in 0..n {
            let mut total = 0.0;
            for t in 0..k {
                let joint = self.b[(i, t)] * prior[t];
                post[(t, i)] = joint;
                total += joint;
            }
            if total > 0.0 {
                for t in 0..k {
                    post[(t, i)] /= total;
                }
            } else {
                post.set_column(i, &prior);
            }
        }
        WordTopicPosterior { matrix: post }
    }
}

fn clamp_nonnegative(m: &mut DMatrix<f64>, name: &str) -> Result<()> {
    let nrows = m.nrows();
    for (idx, v) in m.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidModel(format!(
                "{name}[{}, {}] is not finite",
                idx % nrows,
                idx / nrows
            )));
        }
        if *v < 0.0 {
            if *v < -NEG_TOL {
                return Err(Error::InvalidModel(format!(
                    "{name}[{}, {}] = {} is negative",
                    idx % nrows,
                    idx / nrows,
                    v
                )));
            }
            *v = 0.0;
        }
    }
    Ok(())
}

/// `p(z | x)` as a K x N matrix; column `i` is the topic posterior of word `i`.
#[derive(Clone, Debug)]
pub struct WordTopicPosterior {
    pub matrix: DMatrix<f64>,
}

/// Bag-of-words corpus. Each document is a list of `(word, count)` pairs
/// sorted by word index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    n_words: usize,
    docs: Vec<Vec<(usize, u64)>>,
}

impl Corpus {
    /// Builds a corpus from `(doc, word, count)` triplets with 0-based indices.
    pub fn from_triplets(
        n_docs: usize,
        n_words: usize,
        triplets: impl IntoIterator<Item = (usize, usize, u64)>,
    ) -> Result<Self> {
        let mut docs = vec![Vec::new(); n_docs];
        for (m, i, c) in triplets {
            if m >= n_docs {
                return Err(Error::InvalidCorpus(format!(
                    "document index {m} out of range for {n_docs} documents"
                )));
            }
            if i >= n_words {
                return Err(Error::InvalidCorpus(format!(
                    "word index {i} out of range for vocabulary of {n_words}"
                )));
            }
            if c == 0 {
                return Err(Error::InvalidCorpus(format!(
                    "zero count for document {m}, word {i}"
                )));
            }
            docs[m].push((i, c));
        }
        Corpus::from_docs(n_words, docs)
    }

    /// Builds a corpus from per-document `(word, count)` lists in any order.
    pub fn from_docs(n_words: usize, mut docs: Vec<Vec<(usize, u64)>>) -> Result<Self> {
        for (m, doc) in docs.iter_mut().enumerate() {
            if doc.is_empty() {
                return Err(Error::InvalidCorpus(format!("document {m} is empty")));
            }
            doc.sort_unstable_by_key(|&(i, _)| i);
            for pair in doc.windows(2) {
                if pair[0].0 == pair[1].0 {
                    return Err(Error::InvalidCorpus(format!(
                        "duplicate entry for document {m}, word {}",
                        pair[0].0
                    )));
                }
            }
            if let Some(&(i, _)) = doc.iter().find(|&&(i, c)| i >= n_words || c == 0) {
                return Err(Error::InvalidCorpus(format!(
                    "document {m} has an invalid entry for word {i}"
                )));
            }
        }
        Ok(Corpus { n_words, docs })
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn doc(&self, m: usize) -> &[(usize, u64)] {
        &self.docs[m]
    }

    pub fn docs(&self) -> &[Vec<(usize, u64)>] {
        &self.docs
    }

    pub fn nnz(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }

    /// Document length `n_m`.
    pub fn length(&self, m: usize) -> u64 {
        self.docs[m].iter().map(|&(_, c)| c).sum()
    }

    pub fn lengths(&self) -> Vec<u64> {
        (0..self.n_docs()).map(|m| self.length(m)).collect()
    }

    /// Column-normalized word-document matrix: column `m` is `h_m / n_m`.
    pub fn normalize(&self) -> NormalizedCorpus {
        let cols = self
            .docs
            .iter()
            .map(|doc| {
                let n = doc.iter().map(|&(_, c)| c).sum::<u64>() as f64;
                doc.iter().map(|&(i, c)| (i, c as f64 / n)).collect()
            })
            .collect();
        NormalizedCorpus {
            n_words: self.n_words,
            cols,
        }
    }

    pub(crate) fn check_against(&self, model: &TopicModel) -> Result<()> {
        if self.n_words != model.n_words() {
            return Err(Error::Dimension(format!(
                "corpus vocabulary has {} words but the model has {}",
                self.n_words,
                model.n_words()
            )));
        }
        Ok(())
    }
}

/// Sparse column-normalized corpus `H~` (N x M).
#[derive(Clone, Debug)]
pub struct NormalizedCorpus {
    pub n_words: usize,
    pub cols: Vec<Vec<(usize, f64)>>,
}

impl NormalizedCorpus {
    pub fn n_docs(&self) -> usize {
        self.cols.len()
    }

    pub fn column(&self, m: usize) -> &[(usize, f64)] {
        &self.cols[m]
    }

    /// Dense copy of column `m`.
    pub fn dense_column(&self, m: usize) -> DVector<f64> {
        let mut v = DVector::zeros(self.n_words);
        for &(i, x) in &self.cols[m] {
            v[i] = x;
        }
        v
    }
}

/// K x M matrix whose columns are topic compositions on the simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositionMatrix {
    w: DMatrix<f64>,
}

impl CompositionMatrix {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        for (m, col) in w.column_iter().enumerate() {
            if let Some(v) = col.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("column {m} contains {v}")));
            }
            if let Some(v) = col.iter().find(|&&v| v < -NEG_TOL) {
                return Err(Error::InvalidComposition(format!(
                    "column {m} has negative entry {v}"
                )));
            }
            let s: f64 = col.iter().sum();
            if (s - 1.0).abs() > COMPOSITION_TOL {
                return Err(Error::InvalidComposition(format!(
                    "column {m} sums to {s}, expected 1"
                )));
            }
        }
        Ok(CompositionMatrix { w })
    }

    pub fn from_columns(k: usize, columns: &[DVector<f64>]) -> Result<Self> {
        let mut w = DMatrix::zeros(k, columns.len());
        for (m, c) in columns.iter().enumerate() {
            if c.len() != k {
                return Err(Error::Dimension(format!(
                    "column {m} has length {}, expected {k}",
                    c.len()
                )));
            }
            w.set_column(m, c);
        }
        CompositionMatrix::new(w)
    }

    pub fn n_topics(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_docs(&self) -> usize {
        self.w.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.w
    }

    pub fn column(&self, m: usize) -> DVector<f64> {
        self.w.column(m).into_owned()
    }

    /// `(1/M) W W^T`, accumulated column by column in document order.
    pub fn second_moment(&self) -> DMatrix<f64> {
        second_moment(self.w.column_iter().map(|c| c.into_owned()))
    }
}

/// `(1/M) sum_m w_m w_m^T` over the given columns, summed in iteration order.
pub fn second_moment<I>(columns: I) -> DMatrix<f64>
where
    I: IntoIterator<Item = DVector<f64>>,
{
    let mut acc: Option<DMatrix<f64>> = None;
    let mut count = 0usize;
    for w in columns {
        let k = w.len();
        let acc = acc.get_or_insert_with(|| DMatrix::zeros(k, k));
        for j in 0..k {
            for i in 0..k {
                acc[(i, j)] += w[i] * w[j];
            }
        }
        count += 1;
    }
    match acc {
        Some(acc) => acc / count as f64,
        None => DMatrix::zeros(0, 0),
    }
}
