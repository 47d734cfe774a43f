use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::Result;
use crate::model::{CompositionMatrix, Corpus, NormalizedCorpus, TopicModel, WordTopicPosterior};

/// Simple probabilistic inverse: `W = B^breve H~`.
///
/// Each column is a convex combination of word posteriors, so it lies on the
/// simplex without projection.
pub fn spi_infer(model: &TopicModel, corpus: &Corpus) -> Result<CompositionMatrix> {
    corpus.check_against(model)?;
    let posterior = model.word_topic_posterior();
    let h = corpus.normalize();
    CompositionMatrix::new(spi_matrix(&posterior, &h))
}

pub(crate) fn spi_matrix(posterior: &WordTopicPosterior, h: &NormalizedCorpus) -> DMatrix<f64> {
    let k = posterior.matrix.nrows();
    let cols: Vec<DVector<f64>> = h
        .cols
        .par_iter()
        .map(|col| {
            let mut w = DVector::zeros(k);
            for &(i, x) in col {
                w.axpy(x, &posterior.matrix.column(i), 1.0);
            }
            w
        })
        .collect();
    let mut w = DMatrix::zeros(k, cols.len());
    for (m, c) in cols.iter().enumerate() {
        w.set_column(m, c);
    }
    w
}
