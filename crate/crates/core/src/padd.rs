//! Prior-aware dual decomposition.
//!
//! The master loop relaxes the moment constraint `(1/M) sum_m w_m w_m^T = A`
//! with a symmetric dual matrix `Lambda`. For fixed `Lambda` the Lagrangian
//! splits into one problem per document,
//!
//! ```text
//! min_{w in simplex}  ||B w - h~_m||^2 + (1/M) <Lambda, w w^T>
//! ```
//!
//! each solved by Douglas-Rachford splitting between the quadratic (through
//! the resolvent `G = (gamma (B^T B + Lambda / M) + I)^{-1}`) and the simplex.
//! `Lambda` then takes a subgradient step on the constraint residual.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::spi_matrix;
use crate::model::{second_moment, CompositionMatrix, Corpus, TopicModel};
use crate::simplex::project_simplex_into;

/// Condition number of `G^{-1}` above which a ridge is added.
const MAX_CONDITION: f64 = 1e12;
/// Number of x10 ridge escalations after the first ridge attempt.
const RIDGE_ESCALATIONS: u32 = 3;
/// Master loop stops once the dual update's Frobenius norm drops below this.
const DUAL_UPDATE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSchedule {
    Constant,
    InvSqrt,
}

impl std::str::FromStr for TauSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(TauSchedule::Constant),
            "inv_sqrt" | "inv-sqrt" => Ok(TauSchedule::InvSqrt),
            other => Err(Error::Config(format!("unknown tau schedule '{other}'"))),
        }
    }
}

/// Dual step size for master round `t >= 1`.
pub fn dual_step(tau0: f64, schedule: TauSchedule, t: usize) -> f64 {
    debug_assert!(t >= 1);
    match schedule {
        TauSchedule::Constant => tau0,
        TauSchedule::InvSqrt => tau0 / (t as f64).sqrt(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaddConfig {
    /// Douglas-Rachford relaxation, in (0, 2).
    pub lambda: f64,
    /// Weight of the loss inside the resolvent.
    pub gamma: f64,
    pub master_iters: usize,
    pub slave_iters: usize,
    /// Slave stops when successive iterates differ by at most this (max norm).
    pub slave_tol: f64,
    pub tau0: f64,
    pub tau_schedule: TauSchedule,
    pub ridge_eps: f64,
    /// Start each slave from the previous round's solution instead of the
    /// SPI estimate.
    pub warm_start_previous: bool,
}

impl Default for PaddConfig {
    fn default() -> Self {
        PaddConfig {
            lambda: 1.9,
            gamma: 3.0,
            master_iters: 15,
            slave_iters: 150,
            slave_tol: 1e-7,
            tau0: 1.0,
            tau_schedule: TauSchedule::InvSqrt,
            ridge_eps: 1e-8,
            warm_start_previous: false,
        }
    }
}

impl PaddConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lambda > 0.0 && self.lambda < 2.0) {
            return bad(format!("lambda must lie in (0, 2), got {}", self.lambda));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be > 0, got {}", self.gamma));
        }
        if self.master_iters < 1 {
            return bad("master iterations must be >= 1".into());
        }
        if self.slave_iters < 1 {
            return bad("slave iterations must be >= 1".into());
        }
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            return bad(format!("tau0 must be > 0, got {}", self.tau0));
        }
        if !(self.ridge_eps >= 0.0 && self.ridge_eps.is_finite()) {
            return bad(format!("ridge eps must be >= 0, got {}", self.ridge_eps));
        }
        if !(self.slave_tol >= 0.0) {
            return bad(format!("slave tolerance must be >= 0, got {}", self.slave_tol));
        }
        Ok(())
    }
}

/// Result of one Douglas-Rachford solve.
#[derive(Clone, Debug)]
pub struct DrSolution {
    pub w: DVector<f64>,
    pub iterations: usize,
    /// `||w^(t) - w^(t-1)||_inf` at the last iteration.
    pub final_step: f64,
}

/// Douglas-Rachford iteration for `min_{w in simplex} q(w)` where the
/// resolvent of the quadratic `q` is `x -> G (x + f)`:
///
/// ```text
/// p <- G (2 w - q + f);  q <- q + lambda (p - w);  w <- proj(q)
/// ```
///
/// Starts from `q = w = w0` and stops after `max_iters` or once successive
/// iterates agree to `tol` in max norm.
pub fn admm_dr_solve(
    g: &DMatrix<f64>,
    f: &DVector<f64>,
    w0: &DVector<f64>,
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> Result<DrSolution> {
    let k = w0.len();
    if g.shape() != (k, k) || f.len() != k {
        return Err(Error::Dimension(format!(
            "G is {}x{}, f has {} entries, w0 has {k}",
            g.nrows(),
            g.ncols(),
            f.len()
        )));
    }
    if k == 1 {
        return Ok(DrSolution {
            w: DVector::from_element(1, 1.0),
            iterations: 0,
            final_step: 0.0,
        });
    }

    let mut w = w0.clone();
    let mut q = w0.clone();
    let mut rhs = DVector::zeros(k);
    let mut p = DVector::zeros(k);
    let mut next = DVector::zeros(k);
    let mut step = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        // rhs = 2w - q + f
        rhs.copy_from(f);
        rhs.axpy(2.0, &w, 1.0);
        rhs.axpy(-1.0, &q, 1.0);
        p.gemv(1.0, g, &rhs, 0.0);
        // q += lambda (p - w)
        q.axpy(lambda, &p, 1.0);
        q.axpy(-lambda, &w, 1.0);
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "Douglas-Rachford iterate diverged at iteration {iterations}"
            )));
        }
        project_simplex_into(q.as_slice(), next.as_mut_slice())?;
        step = (&next - &w).amax();
        std::mem::swap(&mut w, &mut next);
        if step <= tol {
            break;
        }
    }
    Ok(DrSolution {
        w,
        iterations,
        final_step: step,
    })
}

/// Per-round record of the master loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaddRound {
    pub round: usize,
    /// Step size used for the dual update of this round.
    pub tau: f64,
    /// Ridge added to `G^{-1}` before inversion (0 when none was needed).
    pub ridge: f64,
    /// `||A - (1/M) sum w w^T||_F` for this round's slave solutions.
    pub constraint_violation: f64,
    /// Mean `||B w - h~||^2` over documents.
    pub mean_loss: f64,
    /// `||Lambda||_F` after the update.
    pub lambda_norm: f64,
    pub mean_final_step: f64,
    pub mean_slave_iters: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PaddDiagnostics {
    pub rounds: Vec<PaddRound>,
}

impl PaddDiagnostics {
    pub const TSV_HEADER: &'static str = "round\ttau\tridge\tconstraint_violation\tmean_loss\tlambda_norm\tmean_final_step\tmean_slave_iters";

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(Self::TSV_HEADER);
        out.push('\n');
        for r in &self.rounds {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.round,
                r.tau,
                r.ridge,
                r.constraint_violation,
                r.mean_loss,
                r.lambda_norm,
                r.mean_final_step,
                r.mean_slave_iters
            );
        }
        out
    }
}

/// Mutable state of the master loop.
#[derive(Clone, Debug)]
pub struct PaddState {
    /// Dual matrix `Lambda` (K x K, symmetric).
    pub lambda: DMatrix<f64>,
    /// Current resolvent `G`.
    pub g: DMatrix<f64>,
    /// Linear terms `F = gamma B^T H~` (K x M).
    pub f: DMatrix<f64>,
    /// Current compositions (K x M).
    pub w: DMatrix<f64>,
}

/// Inverts the symmetric matrix `m`, adding `eps I`, `10 eps I`, ... when it
/// is singular or worse conditioned than `1e12`. Returns the inverse and the
/// ridge used.
pub fn invert_with_ridge(m: &DMatrix<f64>, ridge_eps: f64) -> Result<(DMatrix<f64>, f64)> {
    let k = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let mut report = Vec::new();
    for attempt in 0..=(RIDGE_ESCALATIONS + 1) {
        let ridge = if attempt == 0 {
            0.0
        } else {
            ridge_eps * 10f64.powi(attempt as i32 - 1)
        };
        let shifted = &sym + DMatrix::<f64>::identity(k, k) * ridge;
        let eig = SymmetricEigen::new(shifted);
        let abs_max = eig.eigenvalues.amax();
        let abs_min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        let cond = abs_max / abs_min;
        if abs_min > 0.0 && cond.is_finite() && cond <= MAX_CONDITION {
            let inv_diag = eig.eigenvalues.map(|v| 1.0 / v);
            let v = &eig.eigenvectors;
            let inv = v * DMatrix::from_diagonal(&inv_diag) * v.transpose();
            let inv = (&inv + inv.transpose()) * 0.5;
            if inv.iter().all(|x| x.is_finite()) {
                return Ok((inv, ridge));
            }
        }
        report.push(format!("ridge {ridge:e}: condition {cond:e}"));
    }
    Err(Error::Inversion(format!(
        "resolvent matrix stays ill-conditioned ({})",
        report.join(", ")
    )))
}

/// Runs the master/slave loop and returns the final compositions.
pub fn padd_infer(
    model: &TopicModel,
    corpus: &Corpus,
    config: &PaddConfig,
) -> Result<(CompositionMatrix, PaddDiagnostics)> {
    config.validate()?;
    corpus.check_against(model)?;
    let m_docs = corpus.n_docs();
    if m_docs == 0 {
        return Err(Error::InvalidCorpus("corpus has no documents".into()));
    }
    let k = model.n_topics();
    let b = model.b();
    let a = model.a();
    let gamma = config.gamma;

    let h = corpus.normalize();
    let w0 = spi_matrix(&model.word_topic_posterior(), &h);
    let f_cols: Vec<DVector<f64>> = h
        .cols
        .par_iter()
        .map(|col| {
            let mut f = DVector::zeros(k);
            for &(i, x) in col {
                f.axpy(gamma * x, &b.row(i).transpose(), 1.0);
            }
            f
        })
        .collect();
    let h_sq: Vec<f64> = h
        .cols
        .iter()
        .map(|c| c.iter().map(|&(_, x)| x * x).sum())
        .collect();
    let btb = b.transpose() * b;

    let mut state = PaddState {
        lambda: DMatrix::zeros(k, k),
        g: DMatrix::zeros(k, k),
        f: DMatrix::from_columns(&f_cols),
        w: w0.clone(),
    };
    let mut diagnostics = PaddDiagnostics::default();

    for t in 1..=config.master_iters {
        let resolvent_inv =
            (&btb + &state.lambda / m_docs as f64) * gamma + DMatrix::<f64>::identity(k, k);
        let (g, ridge) = invert_with_ridge(&resolvent_inv, config.ridge_eps)?;
        state.g = g;

        let start = if config.warm_start_previous { &state.w } else { &w0 };
        let solutions: Vec<DrSolution> = (0..m_docs)
            .into_par_iter()
            .map(|m| {
                let w_init = start.column(m).into_owned();
                admm_dr_solve(
                    &state.g,
                    &f_cols[m],
                    &w_init,
                    config.lambda,
                    config.slave_iters,
                    config.slave_tol,
                )
            })
            .collect::<Result<_>>()?;

        let moment = second_moment(solutions.iter().map(|s| s.w.clone()));
        let residual = a - &moment;
        let tau = dual_step(config.tau0, config.tau_schedule, t);
        let update = &residual * tau;
        state.lambda -= &update;
        if (&state.lambda - state.lambda.transpose()).amax() > 1e-10 {
            return Err(Error::NonFinite("dual matrix lost symmetry".into()));
        }
        for (m, s) in solutions.iter().enumerate() {
            state.w.set_column(m, &s.w);
        }

        let mean_loss = solutions
            .iter()
            .enumerate()
            .map(|(m, s)| {
                let quad = s.w.dot(&(&btb * &s.w));
                quad - 2.0 * s.w.dot(&f_cols[m]) / gamma + h_sq[m]
            })
            .sum::<f64>()
            / m_docs as f64;
        let round = PaddRound {
            round: t,
            tau,
            ridge,
            constraint_violation: residual.norm(),
            mean_loss,
            lambda_norm: state.lambda.norm(),
            mean_final_step: solutions.iter().map(|s| s.final_step).sum::<f64>() / m_docs as f64,
            mean_slave_iters: solutions.iter().map(|s| s.iterations as f64).sum::<f64>()
                / m_docs as f64,
        };
        let finite = [
            round.constraint_violation,
            round.mean_loss,
            round.lambda_norm,
            round.mean_final_step,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite(format!("master round {t} produced {round:?}")));
        }
        diagnostics.rounds.push(round);

        if update.norm() < DUAL_UPDATE_TOL {
            break;
        }
    }

    Ok((CompositionMatrix::new(state.w)?, diagnostics))
}
