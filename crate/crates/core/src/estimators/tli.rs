use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CompositionMatrix, Corpus, TopicModel};

/// Extra slack on the bias constraint when validating a solution, per unit
/// of `lambda_delta` (solver round-off grows with the entries of the inverse).
const BIAS_SLACK: f64 = 1e-6;
/// Gram-matrix condition number beyond which `B` is treated as rank deficient.
const MAX_GRAM_CONDITION: f64 = 1e14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TliSolver {
    /// Minimum max-entry left inverse, one LP per topic.
    Lp,
    /// `(B^T B)^{-1} B^T`.
    Pseudoinverse,
}

impl std::str::FromStr for TliSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lp" => Ok(TliSolver::Lp),
            "pseudoinverse" => Ok(TliSolver::Pseudoinverse),
            other => Err(Error::Config(format!("unknown TLI solver '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TliConfig {
    /// Bias budget `delta` on `|B^dagger B - I|_max`.
    pub delta: f64,
    /// The threshold `tau` is divided by this value.
    pub threshold_divisor: f64,
    pub solver: TliSolver,
}

impl Default for TliConfig {
    fn default() -> Self {
        TliConfig {
            delta: 0.0,
            threshold_divisor: 4.5,
            solver: TliSolver::Lp,
        }
    }
}

impl TliConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(self.threshold_divisor > 0.0 && self.threshold_divisor.is_finite()) {
            return Err(Error::Config(format!(
                "threshold divisor must be > 0, got {}",
                self.threshold_divisor
            )));
        }
        Ok(())
    }
}

/// A left inverse `B^dagger` (K x N) and its largest absolute entry.
#[derive(Clone, Debug)]
pub struct TliInverse {
    pub bdagger: DMatrix<f64>,
    pub delta: f64,
    pub lambda_delta: f64,
    pub solver: TliSolver,
}

impl TliInverse {
    /// `|B^dagger B - I|_max`.
    pub fn bias(&self, model: &TopicModel) -> f64 {
        let k = model.n_topics();
        let prod = &self.bdagger * model.b();
        (prod - DMatrix::<f64>::identity(k, k)).amax()
    }
}

pub fn tli_compute_inverse(model: &TopicModel, config: &TliConfig) -> Result<TliInverse> {
    config.validate()?;
    let bdagger = match config.solver {
        TliSolver::Lp => lp_inverse(model.b(), config.delta)?,
        TliSolver::Pseudoinverse => pseudoinverse(model.b())?,
    };
    if let Some(v) = bdagger.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("left inverse contains {v}")));
    }
    let inverse = TliInverse {
        lambda_delta: bdagger.amax(),
        bdagger,
        delta: config.delta,
        solver: config.solver,
    };
    let bias = inverse.bias(model);
    let slack = BIAS_SLACK * inverse.lambda_delta.max(1.0);
    let allowed = match config.solver {
        TliSolver::Lp => config.delta + slack,
        TliSolver::Pseudoinverse => slack.max(config.delta),
    };
    if bias > allowed {
        return Err(Error::TliInverse(format!(
            "bias {bias:e} exceeds the allowed {allowed:e}"
        )));
    }
    Ok(inverse)
}

fn lp_inverse(b: &DMatrix<f64>, delta: f64) -> Result<DMatrix<f64>> {
    let k = b.ncols();
    let rows: Vec<DVector<f64>> = (0..k)
        .into_par_iter()
        .map(|row| lp_row(b, row, delta))
        .collect::<Result<_>>()?;
    let mut out = DMatrix::zeros(k, b.nrows());
    for (r, x) in rows.iter().enumerate() {
        out.set_row(r, &x.transpose());
    }
    Ok(out)
}

/// minimize t  s.t.  -t <= x_j <= t,  |(x^T B)_l - 1{l = row}| <= delta.
fn lp_row(b: &DMatrix<f64>, row: usize, delta: f64) -> Result<DVector<f64>> {
    let (n, k) = b.shape();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let xs: Vec<_> = (0..n)
        .map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    let t = lp.add_var(1.0, (0.0, f64::INFINITY));
    for &x in &xs {
        lp.add_constraint([(x, 1.0), (t, -1.0)], ComparisonOp::Le, 0.0);
        lp.add_constraint([(x, 1.0), (t, 1.0)], ComparisonOp::Ge, 0.0);
    }
    for l in 0..k {
        let target = if l == row { 1.0 } else { 0.0 };
        let expr: Vec<_> = xs
            .iter()
            .enumerate()
            .filter(|&(j, _)| b[(j, l)] != 0.0)
            .map(|(j, &x)| (x, b[(j, l)]))
            .collect();
        if delta == 0.0 {
            lp.add_constraint(expr, ComparisonOp::Eq, target);
        } else {
            lp.add_constraint(expr.clone(), ComparisonOp::Le, target + delta);
            lp.add_constraint(expr, ComparisonOp::Ge, target - delta);
        }
    }
    let solution = lp.solve().map_err(|e| {
        Error::TliInverse(format!("LP for row {row} failed: {e}"))
    })?;
    Ok(DVector::from_iterator(
        n,
        xs.iter().map(|&x| *solution.var_value(x)),
    ))
}

fn pseudoinverse(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = b.transpose() * b;
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(cond <= MAX_GRAM_CONDITION) {
        return Err(Error::TliInverse(format!(
            "B is rank deficient: condition estimate of B^T B is {cond:e}"
        )));
    }
    let chol = gram.cholesky().ok_or_else(|| {
        Error::TliInverse(format!(
            "Cholesky of B^T B failed (condition estimate {cond:e})"
        ))
    })?;
    Ok(chol.solve(&b.transpose()))
}

/// `tau_m = (2 lambda_delta sqrt(ln K / n_m) + delta) / divisor`.
pub fn tli_threshold(lambda_delta: f64, k: usize, n_m: u64, delta: f64, divisor: f64) -> f64 {
    let ln_k = (k as f64).ln();
    (2.0 * lambda_delta * (ln_k / n_m as f64).sqrt() + delta) / divisor
}

/// Zeroes entries below `tau` and renormalizes. Falls back to uniform when
/// nothing survives.
pub(crate) fn threshold_and_normalize(raw: &mut DVector<f64>, tau: f64) {
    for v in raw.iter_mut() {
        if *v < tau {
            *v = 0.0;
        }
    }
    let s = raw.sum();
    if s > 0.0 {
        *raw /= s;
    } else {
        let k = raw.len();
        raw.fill(1.0 / k as f64);
    }
}

pub fn tli_infer(
    inverse: &TliInverse,
    model: &TopicModel,
    corpus: &Corpus,
    config: &TliConfig,
) -> Result<CompositionMatrix> {
    config.validate()?;
    corpus.check_against(model)?;
    let k = model.n_topics();
    if inverse.bdagger.shape() != (k, model.n_words()) {
        return Err(Error::Dimension(format!(
            "inverse is {}x{}, model needs {}x{}",
            inverse.bdagger.nrows(),
            inverse.bdagger.ncols(),
            k,
            model.n_words()
        )));
    }
    let h = corpus.normalize();
    let lengths = corpus.lengths();
    let cols: Vec<DVector<f64>> = (0..corpus.n_docs())
        .into_par_iter()
        .map(|m| {
            if k == 1 {
                return DVector::from_element(1, 1.0);
            }
            let mut w = DVector::zeros(k);
            for &(i, x) in h.column(m) {
                w.axpy(x, &inverse.bdagger.column(i), 1.0);
            }
            let tau = tli_threshold(
                inverse.lambda_delta,
                k,
                lengths[m],
                inverse.delta,
                config.threshold_divisor,
            );
            threshold_and_normalize(&mut w, tau);
            w
        })
        .collect();
    CompositionMatrix::from_columns(k, &cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use topic_compose_testkit::fixtures::{random_column_stochastic, random_joint_stochastic, rng};
    use topic_compose_testkit::oracle::min_inf_norm_left_inverse_row;

    fn identity_model(k: usize) -> TopicModel {
        let a = DMatrix::identity(k, k) / k as f64;
        TopicModel::new(DMatrix::identity(k, k), a).unwrap()
    }

    #[test]
    fn identity_inverse() {
        let model = identity_model(4);
        let inv = tli_compute_inverse(&model, &TliConfig::default()).unwrap();
        assert!((&inv.bdagger - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
        assert_eq!(inv.lambda_delta, 1.0);
    }

    #[test]
    fn duplicate_columns_are_rejected() {
        let b = dmatrix![0.5, 0.5, 0.2; 0.3, 0.3, 0.2; 0.2, 0.2, 0.6];
        let a = DMatrix::from_element(3, 3, 1.0 / 9.0);
        let model = TopicModel::new(b, a).unwrap();
        for solver in [TliSolver::Lp, TliSolver::Pseudoinverse] {
            let config = TliConfig { solver, ..TliConfig::default() };
            let err = tli_compute_inverse(&model, &config).unwrap_err();
            assert!(matches!(err, Error::TliInverse(_)), "{solver:?}: {err}");
        }
    }

    #[test]
    fn lp_rows_match_dual_oracle() {
        let mut r = rng(11);
        for _ in 0..10 {
            let b = random_column_stochastic(&mut r, 6, 2);
            let a = random_joint_stochastic(&mut r, 2, 5);
            let model = TopicModel::new(b.clone(), a).unwrap();
            let inv = tli_compute_inverse(&model, &TliConfig::default()).unwrap();
            assert!(inv.bias(&model) <= 1e-6);
            for row in 0..2 {
                let got = inv.bdagger.row(row).amax();
                let want = min_inf_norm_left_inverse_row(&b, row);
                assert!((got - want).abs() <= 1e-6, "row {row}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn pseudoinverse_is_unbiased_but_not_smaller() {
        let mut r = rng(5);
        let b = random_column_stochastic(&mut r, 12, 3);
        let a = random_joint_stochastic(&mut r, 3, 5);
        let model = TopicModel::new(b, a).unwrap();
        let lp = tli_compute_inverse(&model, &TliConfig::default()).unwrap();
        let config = TliConfig { solver: TliSolver::Pseudoinverse, ..TliConfig::default() };
        let pinv = tli_compute_inverse(&model, &config).unwrap();
        assert!(pinv.bias(&model) < 1e-10);
        assert!(lp.lambda_delta <= pinv.lambda_delta + 1e-9);
    }

    #[test]
    fn lambda_monotone_in_delta() {
        let mut r = rng(21);
        for _ in 0..5 {
            let b = random_column_stochastic(&mut r, 15, 4);
            let a = random_joint_stochastic(&mut r, 4, 5);
            let model = TopicModel::new(b, a).unwrap();
            let mut prev = f64::INFINITY;
            for delta in [0.0, 0.01, 0.05] {
                let config = TliConfig { delta, ..TliConfig::default() };
                let inv = tli_compute_inverse(&model, &config).unwrap();
                assert!(inv.bias(&model) <= delta + 1e-6);
                assert!((inv.lambda_delta - inv.bdagger.amax()).abs() < 1e-10);
                assert!(inv.lambda_delta <= prev + 1e-9, "{} > {prev}", inv.lambda_delta);
                prev = inv.lambda_delta;
            }
        }
    }

    #[test]
    fn threshold_value() {
        let tau = tli_threshold(1.0, 2, 100, 0.0, 4.5);
        let want = 2.0 * (2f64.ln() / 100.0).sqrt() / 4.5;
        assert!((tau - want).abs() < 1e-15);
        assert!((tau - 0.0370).abs() < 1e-4);
    }

    #[test]
    fn threshold_rules() {
        let mut w = DVector::from_vec(vec![1.05, -0.05]);
        threshold_and_normalize(&mut w, 0.1);
        assert_eq!(w.as_slice(), &[1.0, 0.0]);

        let mut w = DVector::from_vec(vec![0.05, 0.02, -0.3]);
        threshold_and_normalize(&mut w, 0.1);
        assert_eq!(w.as_slice(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn identity_model_keeps_both_topics() {
        let model = identity_model(2);
        let inv = tli_compute_inverse(&model, &TliConfig::default()).unwrap();
        let corpus = Corpus::from_triplets(1, 2, [(0, 0, 90), (0, 1, 10)]).unwrap();
        let w = tli_infer(&inv, &model, &corpus, &TliConfig::default()).unwrap();
        let col = w.column(0);
        assert!((col[0] - 0.9).abs() < 1e-12 && (col[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn single_topic() {
        let b = DMatrix::from_column_slice(3, 1, &[0.2, 0.3, 0.5]);
        let model = TopicModel::new(b, dmatrix![1.0]).unwrap();
        let inv = tli_compute_inverse(&model, &TliConfig::default()).unwrap();
        let corpus = Corpus::from_triplets(1, 3, [(0, 1, 3)]).unwrap();
        let w = tli_infer(&inv, &model, &corpus, &TliConfig::default()).unwrap();
        assert_eq!(w.matrix(), &DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn config_validation() {
        assert!(TliConfig { delta: -0.1, ..TliConfig::default() }.validate().is_err());
        assert!(TliConfig { threshold_divisor: 0.0, ..TliConfig::default() }.validate().is_err());
        assert!("simplex".parse::<TliSolver>().is_err());
    }
}
