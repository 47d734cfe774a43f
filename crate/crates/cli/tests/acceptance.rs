//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use tempfile::TempDir;
use topic_compose::estimators::{spi_infer, tli_compute_inverse, tli_infer, TliConfig};
use topic_compose::eval::{evaluate, EvalReport, DEFAULT_PROMINENT_MASS};
use topic_compose::io;
use topic_compose::padd::{admm_dr_solve, invert_with_ridge, padd_infer, PaddConfig};
use topic_compose::simplex::project_simplex;
use topic_compose::synth::{sample_dirichlet, stream_rng, synthesize, DocLength, Prior, SynthConfig};
use topic_compose::{CompositionMatrix, Corpus, TopicModel};
use topic_compose_testkit::{fixtures, oracle};

const VOCAB: usize = 500;
const DOCS: usize = 5000;
const MEAN_LENGTH: f64 = 150.0;
const SYNTH_SEED: u64 = 42;
const TOPIC_SEED: u64 = 1;
const SPARSITY: f64 = 0.1;
const CONCENTRATION: f64 = 2000.0;
/// Dual step for the correlated-prior runs; the default 1.0 leaves the
/// moment constraint almost inactive at M = 5000.
const SR_TAU0: f64 = 100.0;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }

    fn within(self, elapsed: Duration, limit: Duration) -> Self {
        if elapsed <= limit {
            self
        } else {
            Outcome::new(
                false,
                format!("{} (took {:.1?}, limit {:.0?})", self.detail, elapsed, limit),
            )
        }
    }
}

/// Criterion 1: projection against the support-enumeration oracle.
fn simplex_projection() -> Outcome {
    let mut rng = fixtures::rng(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(1..=10);
        let v: Vec<f64> = (0..k).map(|_| rng.random_range(-10.0..=10.0)).collect();
        let got = project_simplex(&v).unwrap();
        let want = oracle::brute_force_simplex_projection(&v);
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    Outcome::new(worst <= 1e-8, format!("max deviation {worst:.2e} over 1000 vectors"))
}

/// Criterion 2: Douglas-Rachford slave with `Lambda = 0` against grid search.
fn slave_vs_grid() -> Outcome {
    let mut rng = fixtures::rng(202);
    let gamma = PaddConfig::default().gamma;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..50 {
        let (k, step) = if i % 2 == 0 { (2, 1e-4) } else { (3, 1e-2) };
        let n = rng.random_range(k..=8);
        let b = fixtures::random_column_stochastic(&mut rng, n, k);
        let h = DVector::from_vec(fixtures::random_simplex(&mut rng, n));
        let gram = b.transpose() * &b * gamma + DMatrix::identity(k, k);
        let g = invert_with_ridge(&gram, 1e-8).unwrap().0;
        let f = b.transpose() * &h * gamma;
        let w0 = DVector::from_element(k, 1.0 / k as f64);
        let sol = admm_dr_solve(&g, &f, &w0, 1.9, 150, 1e-7).unwrap();
        let val = oracle::least_squares_loss(&b, &h, sol.w.as_slice());
        let (_, grid) = oracle::grid_search_simplex(k, step, |w| oracle::least_squares_loss(&b, &h, w));
        worst = worst.max(val - grid);
    }
    Outcome::new(worst <= 1e-3, format!("max objective gap {worst:.2e} over 50 instances"))
}

/// Criterion 3: PADD on exact word frequencies with `B = I`.
fn noiseless_recovery() -> Outcome {
    let (k, m, n) = (3, 200, 1_000_000u64);
    let mut rng = fixtures::rng(303);
    let mut docs = Vec::with_capacity(m);
    let mut cols = Vec::with_capacity(m);
    for _ in 0..m {
        // integer counts so that h~ equals w* exactly
        let w = fixtures::random_simplex(&mut rng, k);
        let counts: Vec<u64> = w.iter().map(|x| (x * n as f64).round() as u64).collect();
        let total: u64 = counts.iter().sum();
        let doc: Vec<(usize, u64)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i, c))
            .collect();
        cols.push(DVector::from_iterator(k, counts.iter().map(|&c| c as f64 / total as f64)));
        docs.push(doc);
    }
    let truth = CompositionMatrix::from_columns(k, &cols).unwrap();
    let model = TopicModel::new(DMatrix::identity(k, k), truth.second_moment()).unwrap();
    let corpus = Corpus::from_docs(k, docs).unwrap();
    let (w, _) = padd_infer(&model, &corpus, &PaddConfig::default()).unwrap();
    let l1 = (0..m)
        .map(|c| (truth.matrix().column(c) - w.matrix().column(c)).abs().sum())
        .sum::<f64>()
        / m as f64;
    Outcome::new(l1 <= 0.05, format!("mean l1 error {l1:.2e}"))
}

/// Criterion 4: TLI linear program at `delta = 0`.
fn tli_lp() -> Outcome {
    let config = TliConfig::default();
    let identity = TopicModel::new(DMatrix::identity(4, 4), fixtures::uniform_joint(4)).unwrap();
    let inv = tli_compute_inverse(&identity, &config).unwrap();
    let id_ok = inv.bdagger == DMatrix::identity(4, 4) && inv.lambda_delta == 1.0;

    let mut rng = fixtures::rng(404);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let b = fixtures::random_column_stochastic(&mut rng, 6, 2);
        let model = TopicModel::new(b.clone(), fixtures::uniform_joint(2)).unwrap();
        let inv = tli_compute_inverse(&model, &config).unwrap();
        for row in 0..2 {
            let got = inv.bdagger.row(row).amax();
            let want = oracle::min_inf_norm_left_inverse_row(&b, row);
            worst = worst.max((got - want).abs());
        }
        worst = worst.max(inv.bias(&model));
    }
    Outcome::new(
        id_ok && worst <= 1e-6,
        format!("identity exact: {id_ok}; max row deviation {worst:.2e} over 20 instances"),
    )
}

fn synth_model(k: usize, groups: usize) -> TopicModel {
    let b = fixtures::hierarchical_topics(VOCAB, k, groups, SPARSITY, CONCENTRATION, TOPIC_SEED);
    TopicModel::new(b, fixtures::uniform_joint(k)).unwrap()
}

/// Samples the corpus and swaps the empirical `A*` into the model.
fn synthesize_with_moment(model: TopicModel, prior: Prior) -> (TopicModel, Corpus, CompositionMatrix) {
    let config = SynthConfig {
        prior,
        n_docs: DOCS,
        doc_length: DocLength::Poisson(MEAN_LENGTH),
        seed: SYNTH_SEED,
    };
    let out = synthesize(&model, &config).unwrap();
    (model.with_a(out.astar).unwrap(), out.corpus, out.wstar)
}

fn semi_synthetic() -> (TopicModel, Corpus, CompositionMatrix) {
    let k = 25;
    let model = synth_model(k, 20);
    synthesize_with_moment(model, Prior::symmetric_dirichlet(k, 5.0))
}

fn report(truth: &CompositionMatrix, pred: &CompositionMatrix, prior: &DMatrix<f64>) -> EvalReport {
    evaluate(truth, pred, prior, DEFAULT_PROMINENT_MASS).unwrap()
}

/// Criterion 5: with a Dirichlet prior and K = 25, SPI keeps up with TLI.
fn semi_synthetic_ordering() -> Outcome {
    let (model, corpus, truth) = semi_synthetic();
    let spi = spi_infer(&model, &corpus).unwrap();
    let tli_config = TliConfig::default();
    let inv = tli_compute_inverse(&model, &tli_config).unwrap();
    let tli = tli_infer(&inv, &model, &corpus, &tli_config).unwrap();
    let spi = report(&truth, &spi, model.a());
    let tli = report(&truth, &tli, model.a());
    let (recall, spi_f1, tli_f1) = (
        spi.mean("recall").unwrap(),
        spi.mean("f1").unwrap(),
        tli.mean("f1").unwrap(),
    );
    Outcome::new(
        recall >= 0.95 && spi_f1 >= tli_f1,
        format!("SPI recall {recall:.3}, SPI F1 {spi_f1:.3} vs TLI F1 {tli_f1:.3}"),
    )
}

/// Criteria 6 and 7 share one correlated-prior corpus.
fn semi_real() -> (Outcome, Outcome) {
    let k = 10;
    let sigma = fixtures::block_covariance(k, 2, 4.0, 0.5);
    let prior = Prior::logistic_normal(&DVector::zeros(k), &sigma);
    let (model, corpus, truth) = synthesize_with_moment(synth_model(k, 8), prior);

    let spi = spi_infer(&model, &corpus).unwrap();
    let tli_config = TliConfig::default();
    let inv = tli_compute_inverse(&model, &tli_config).unwrap();
    let tli = tli_infer(&inv, &model, &corpus, &tli_config).unwrap();
    let padd_config = PaddConfig {
        tau0: SR_TAU0,
        ..PaddConfig::default()
    };
    let (padd, diag) = padd_infer(&model, &corpus, &padd_config).unwrap();

    let spi = report(&truth, &spi, model.a());
    let tli = report(&truth, &tli, model.a());
    let padd = report(&truth, &padd, model.a());
    let get = |r: &EvalReport, m: &str| r.mean(m).unwrap();

    let f1 = (get(&padd, "f1"), get(&tli, "f1"), get(&spi, "f1"));
    let hel = (get(&padd, "hellinger"), get(&tli, "hellinger"), get(&spi, "hellinger"));
    let ns = (get(&padd, "nonsupp_mass"), get(&tli, "nonsupp_mass"));
    let ordering = Outcome::new(
        f1.0 > f1.1 && f1.0 > f1.2 && hel.0 < hel.1 && hel.0 < hel.2 && ns.0 < ns.1,
        format!(
            "F1 padd/tli/spi {:.3}/{:.3}/{:.3}; Hellinger {:.3}/{:.3}/{:.3}; nonsupp padd/tli {:.3}/{:.3}",
            f1.0, f1.1, f1.2, hel.0, hel.1, hel.2, ns.0, ns.1
        ),
    );

    let pd = (get(&padd, "prior_dist"), get(&spi, "prior_dist"));
    let first = diag.rounds.first().unwrap().constraint_violation;
    let last = diag.rounds.last().unwrap().constraint_violation;
    let prior_match = Outcome::new(
        pd.0 < pd.1 && last <= first,
        format!(
            "prior_dist padd {:.4} vs spi {:.4}; violation round 1 {first:.4}, round {} {last:.4}",
            pd.0,
            pd.1,
            diag.rounds.len()
        ),
    );
    (ordering, prior_match)
}

fn run_cli(threads: &str, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_topic-compose"))
        .env_remove("TOPIC_COMPOSE_THREADS")
        .arg("--threads")
        .arg(threads)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

/// Full synth -> infer -> eval pipeline through the binary; returns the
/// output files that must be reproducible.
fn pipeline(model_dir: &Path, work: &Path, threads: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    let p = |path: &Path| path.to_str().unwrap().to_string();
    let syn = work.join("synth");
    let seed = SYNTH_SEED.to_string();
    let docs = DOCS.to_string();
    let len = format!("poisson:{MEAN_LENGTH}");
    run_cli(
        threads,
        &[
            "synth", "--model", &p(model_dir), "--prior", "dirichlet", "--alpha-scale", "5", "--docs",
            &docs, "--len", &len, "--seed", &seed, "--out", &p(&syn),
        ],
    )?;
    let mut files = Vec::new();
    for name in ["corpus.tsv", "Wstar.tsv", "Astar.tsv"] {
        files.push((format!("synth/{name}"), fs::read(syn.join(name)).map_err(|e| e.to_string())?));
    }
    for method in ["spi", "tli", "padd", "rand"] {
        let out = work.join(method);
        run_cli(
            threads,
            &[
                "infer", "--method", method, "--model", &p(model_dir), "--corpus",
                &p(&syn.join("corpus.tsv")), "--out", &p(&out),
            ],
        )?;
        run_cli(
            threads,
            &[
                "eval", "--truth", &p(&syn.join("Wstar.tsv")), "--pred", &p(&out.join("W.tsv")),
                "--prior", &p(&syn.join("Astar.tsv")), "--out", &p(&out.join("report.tsv")),
                "--per-doc", &p(&out.join("per_doc.tsv")),
            ],
        )?;
        for name in ["W.tsv", "report.tsv", "per_doc.tsv"] {
            files.push((format!("{method}/{name}"), fs::read(out.join(name)).map_err(|e| e.to_string())?));
        }
        if method == "padd" {
            files.push((
                "padd/diagnostics.tsv".into(),
                fs::read(out.join("diagnostics.tsv")).map_err(|e| e.to_string())?,
            ));
        }
    }
    Ok(files)
}

/// Criterion 8: one worker and eight workers give identical bytes.
fn determinism() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let (model, _, _) = semi_synthetic();
    let model_dir = tmp.path().join("model");
    fs::create_dir_all(&model_dir).unwrap();
    io::save_model(&model_dir, &model).unwrap();

    let one = pipeline(&model_dir, &tmp.path().join("t1"), "1");
    let eight = pipeline(&model_dir, &tmp.path().join("t8"), "8");
    match (one, eight) {
        (Ok(a), Ok(b)) => {
            let differing: Vec<&str> = a
                .iter()
                .zip(&b)
                .filter(|(x, y)| x.1 != y.1)
                .map(|(x, _)| x.0.as_str())
                .collect();
            if differing.is_empty() {
                Outcome::new(true, format!("{} files identical across 1 and 8 threads", a.len()))
            } else {
                Outcome::new(false, format!("files differ: {}", differing.join(", ")))
            }
        }
        (Err(e), _) | (_, Err(e)) => Outcome::new(false, format!("pipeline failed: {e}")),
    }
}

/// Criterion 9: sampler moments against closed forms.
fn sampler_moments() -> Outcome {
    const DRAWS: usize = 100_000;
    let k = 5;
    let alpha = vec![5.0 / k as f64; k];

    let mut rng = stream_rng(9, 0, 0);
    let mut mean = vec![0.0; k];
    for _ in 0..DRAWS {
        for (m, x) in mean.iter_mut().zip(sample_dirichlet(&alpha, &mut rng)) {
            *m += x / DRAWS as f64;
        }
    }
    let mean_dev = mean.iter().map(|m| (m - 0.2).abs()).fold(0.0, f64::max);

    let mut rng = stream_rng(9, 0, 1);
    let xs: Vec<f64> = (0..DRAWS).map(|_| sample_dirichlet(&[1.0, 1.0], &mut rng)[0]).collect();
    let mu = xs.iter().sum::<f64>() / DRAWS as f64;
    let var = xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / DRAWS as f64;
    let var_dev = (var - 1.0 / 12.0).abs();

    let model = TopicModel::new(DMatrix::identity(k, k), fixtures::uniform_joint(k)).unwrap();
    let out = synthesize(
        &model,
        &SynthConfig {
            prior: Prior::Dirichlet { alpha: alpha.clone() },
            n_docs: DRAWS,
            doc_length: DocLength::Fixed(1),
            seed: 9,
        },
    )
    .unwrap();
    let total: f64 = alpha.iter().sum();
    let analytic = DMatrix::from_fn(k, k, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        alpha[i] * (alpha[j] + delta) / (total * (total + 1.0))
    });
    let moment_dev = (out.astar - analytic).amax();

    Outcome::new(
        mean_dev <= 0.01 && var_dev <= 0.005 && moment_dev <= 0.01,
        format!("mean dev {mean_dev:.1e}, variance dev {var_dev:.1e}, A* dev {moment_dev:.1e}"),
    )
}

fn main() {
    // `cargo test` passes harness flags such as --list or filters; honour
    // --list so test discovery does not run the whole suite.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let secs = Duration::from_secs;
    let timed = |f: &dyn Fn() -> Outcome, limit: Option<Duration>| {
        let start = Instant::now();
        let out = f();
        let elapsed = start.elapsed();
        match limit {
            Some(limit) => out.within(elapsed, limit),
            None => out,
        }
    };

    let mut results: Vec<(u32, Outcome)> = vec![
        (1, timed(&simplex_projection, Some(secs(5)))),
        (2, timed(&slave_vs_grid, Some(secs(30)))),
        (3, timed(&noiseless_recovery, Some(secs(30)))),
        (4, timed(&tli_lp, None)),
        (5, timed(&semi_synthetic_ordering, Some(secs(300)))),
    ];
    let start = Instant::now();
    let (ordering, prior_match) = semi_real();
    results.push((6, ordering.within(start.elapsed(), secs(600))));
    results.push((7, prior_match));
    results.push((8, timed(&determinism, None)));
    results.push((9, timed(&sampler_moments, Some(secs(60)))));

    let mut failed = 0;
    for (n, r) in &results {
        println!("{} criterion {n}: {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
