use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use nalgebra::{DMatrix, DVector};
use serde_json::json;
use topic_compose::estimators::{spi_infer, tli_compute_inverse, tli_infer, TliConfig};
use topic_compose::eval::{evaluate, random_baseline};
use topic_compose::io::{self, A_FILE, B_FILE};
use topic_compose::padd::{padd_infer, PaddConfig};
use topic_compose::synth::{synthesize, DocLength, Prior, SynthConfig};
use topic_compose::{CompositionMatrix, Error, TopicModel};

use crate::manifest::RunManifest;
use crate::{Cli, Command, EvalArgs, InferArgs, Method, PriorKind, SynthArgs};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Synth(args) => synth(args),
        Command::Infer(args) => infer(args),
        Command::Eval(args) => eval(args),
    }
}

fn load_model(dir: &Path, manifest: &mut RunManifest) -> anyhow::Result<TopicModel> {
    manifest.add_input("B", &dir.join(B_FILE))?;
    manifest.add_input("A", &dir.join(A_FILE))?;
    Ok(io::load_model(dir)?)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn read_vector(path: &Path) -> anyhow::Result<DVector<f64>> {
    let m = io::read_dense(path)?;
    if m.ncols() != 1 && m.nrows() != 1 {
        return Err(Error::Dimension(format!(
            "{}: expected a vector, got {}x{}",
            path.display(),
            m.nrows(),
            m.ncols()
        ))
        .into());
    }
    Ok(DVector::from_iterator(m.len(), m.iter().copied()))
}

fn synth(args: &SynthArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let doc_length: DocLength = args.len.parse()?;
    let mut manifest = RunManifest::new("synth", json!(null), Some(args.seed));
    let model = load_model(&args.model, &mut manifest)?;
    let k = model.n_topics();

    let prior = match args.prior {
        PriorKind::Dirichlet => {
            if !(args.alpha_scale > 0.0 && args.alpha_scale.is_finite()) {
                return Err(Error::Config(format!(
                    "--alpha-scale must be > 0, got {}",
                    args.alpha_scale
                ))
                .into());
            }
            Prior::symmetric_dirichlet(k, args.alpha_scale)
        }
        PriorKind::LogisticNormal => {
            // clap enforces presence of both files for this prior
            let mu_path = args.mu.as_deref().unwrap();
            let sigma_path = args.sigma.as_deref().unwrap();
            manifest.add_input("mu", mu_path)?;
            manifest.add_input("sigma", sigma_path)?;
            let mu = read_vector(mu_path)?;
            let sigma: DMatrix<f64> = io::read_dense(sigma_path)?;
            Prior::logistic_normal(&mu, &sigma)
        }
    };
    let config = SynthConfig {
        prior,
        n_docs: args.docs,
        doc_length,
        seed: args.seed,
    };
    config.validate(k)?;
    manifest.config = json!({
        "model": args.model,
        "synth": config,
    });

    let out = synthesize(&model, &config)?;
    create_dir(&args.out)?;
    let corpus_path = args.out.join("corpus.tsv");
    let wstar_path = args.out.join("Wstar.tsv");
    let astar_path = args.out.join("Astar.tsv");
    io::write_corpus(&corpus_path, &out.corpus)?;
    io::write_dense(&wstar_path, out.wstar.matrix())?;
    io::write_dense(&astar_path, &out.astar)?;
    for p in [&corpus_path, &wstar_path, &astar_path] {
        manifest.add_output(p);
    }
    manifest.write(&args.out.join(MANIFEST_FILE), started)
}

fn infer(args: &InferArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let method = format!("{:?}", args.method).to_lowercase();
    let seed = (args.method == Method::Rand).then_some(args.seed);
    let mut manifest = RunManifest::new("infer", json!(null), seed);

    let tli = TliConfig {
        delta: args.delta,
        threshold_divisor: args.threshold_divisor,
        solver: args.tli_solver,
    };
    let padd = PaddConfig {
        lambda: args.lambda,
        gamma: args.gamma,
        master_iters: args.master_iters,
        slave_iters: args.slave_iters,
        slave_tol: args.slave_tol,
        tau0: args.tau0,
        tau_schedule: args.tau_schedule,
        ridge_eps: args.ridge_eps,
        warm_start_previous: args.warm_start_previous,
    };
    let diagnostics_path = args
        .diagnostics
        .clone()
        .unwrap_or_else(|| args.out.join("diagnostics.tsv"));
    let method_config = match args.method {
        Method::Spi => json!({}),
        Method::Tli => {
            tli.validate()?;
            json!({ "tli": tli })
        }
        Method::Padd => {
            padd.validate()?;
            json!({ "padd": padd, "diagnostics": diagnostics_path })
        }
        Method::Rand => json!({ "seed": args.seed }),
    };
    manifest.config = json!({
        "method": method,
        "model": args.model,
        "corpus": args.corpus,
        "settings": method_config,
    });

    let model = load_model(&args.model, &mut manifest)?;
    manifest.add_input("corpus", &args.corpus)?;
    let corpus = io::read_corpus(&args.corpus)?;

    let mut diagnostics = None;
    let w: CompositionMatrix = match args.method {
        Method::Spi => spi_infer(&model, &corpus),
        Method::Tli => tli_compute_inverse(&model, &tli)
            .and_then(|inv| tli_infer(&inv, &model, &corpus, &tli)),
        Method::Padd => padd_infer(&model, &corpus, &padd).map(|(w, d)| {
            diagnostics = Some(d);
            w
        }),
        Method::Rand => {
            if corpus.n_words() != model.n_words() {
                Err(Error::Dimension(format!(
                    "corpus has {} words, model has {}",
                    corpus.n_words(),
                    model.n_words()
                )))
            } else {
                random_baseline(model.n_topics(), corpus.n_docs(), args.seed)
            }
        }
    }
    .with_context(|| format!("method {method}"))?;

    if w.matrix().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("method {method} produced non-finite output")).into());
    }
    create_dir(&args.out)?;
    let w_path = args.out.join("W.tsv");
    io::write_dense(&w_path, w.matrix())?;
    manifest.add_output(&w_path);
    if let Some(d) = diagnostics {
        if let Some(parent) = diagnostics_path.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        io::write_atomic(&diagnostics_path, d.to_tsv().as_bytes())?;
        manifest.add_output(&diagnostics_path);
    }
    manifest.write(&args.out.join(MANIFEST_FILE), started)
}

/// `report.tsv` gets `report.manifest.json` beside it.
fn eval_manifest_path(report: &Path) -> PathBuf {
    let stem = report
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    report.with_file_name(format!("{stem}.{MANIFEST_FILE}"))
}

fn read_composition(path: &Path) -> anyhow::Result<CompositionMatrix> {
    let m = io::read_dense(path)?;
    CompositionMatrix::new(m).with_context(|| format!("{}", path.display()))
}

fn eval(args: &EvalArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new(
        "eval",
        json!({
            "truth": args.truth,
            "pred": args.pred,
            "prior": args.prior,
            "prominent_mass": args.prominent_mass,
            "out": args.out,
            "per_doc": args.per_doc,
        }),
        None,
    );
    manifest.add_input("truth", &args.truth)?;
    manifest.add_input("pred", &args.pred)?;
    manifest.add_input("prior", &args.prior)?;
    let truth = read_composition(&args.truth)?;
    let pred = read_composition(&args.pred)?;
    let prior = io::read_dense(&args.prior)?;

    let report = evaluate(&truth, &pred, &prior, args.prominent_mass)?;
    for path in std::iter::once(&args.out).chain(args.per_doc.as_ref()) {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
    }
    io::write_atomic(&args.out, report.report_tsv().as_bytes())?;
    manifest.add_output(&args.out);
    if let Some(per_doc) = &args.per_doc {
        io::write_atomic(per_doc, report.per_doc_tsv().as_bytes())?;
        manifest.add_output(per_doc);
    }
    manifest.write(&eval_manifest_path(&args.out), started)
}
