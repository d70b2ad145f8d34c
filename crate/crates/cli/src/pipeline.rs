//! Manifest-driven experiment runs.
//!
//! A run has two parallel phases. The learnability phase trains the
//! baseline `M`, the attention-regularised `R`, and the token classifier
//! `T` once per `(task, seed)`. The cell phase then scores every
//! `(task, provider, seed)` cell: contextual impact under each strategy,
//! ΔPred of `R` on the CI extremes, and instance-level correlations.
//! Aggregate tables are computed from the successful cells. A failed cell
//! is recorded and skipped; it never aborts the run.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use rationale_core::ci::{dataset_ci, decile_split};
use rationale_core::corpus::{load_jsonl, Dataset};
use rationale_core::metrics::{
    ar_metric, macro_f1, majority_token_baseline, normalise_improvement, tc_metric, token_f1,
};
use rationale_core::neural::{load_checkpoint, train, train_token_classifier};
use rationale_core::provider::{
    train_bow, BagOfWords, BowConfig, ProbabilityProvider, ProviderKind, RemoteProvider,
};
use rationale_core::stats::{
    bootstrap_ar, delta_pred, fleiss_kappa, kendall, pearson, spearman, RatingMatrix,
};
use rationale_core::{AttentionProvider, CiReport, Classifier, Correlation, PredictionOutcome};
use rayon::prelude::*;
use serde_json::Value;

use crate::manifest::{ExperimentManifest, ProviderSpec, TaskSpec};
use crate::report::{num, opt_num, Table};
use crate::{io_err, CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellFailure {
    pub task: String,
    /// Empty for learnability-phase failures, which affect every provider.
    pub provider: String,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report_dir: PathBuf,
    pub manifest_hash: String,
    pub cells: usize,
    pub failures: Vec<CellFailure>,
}

impl RunSummary {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

struct TaskData {
    train: Dataset,
    test: Dataset,
}

/// Models and test-set results for one `(task, seed)`.
struct LearnRun {
    baseline: Classifier,
    m_f1: f64,
    r_f1: f64,
    t_f1: f64,
    majority_f1: f64,
    m_pred: Vec<usize>,
    r_pred: Vec<usize>,
}

struct CellResult {
    reports: Vec<CiReport>,
    delta_rows: Vec<Vec<Value>>,
    correlation_rows: Vec<Vec<Value>>,
}

fn load_task(task: &TaskSpec) -> std::result::Result<TaskData, String> {
    let load = |p: &PathBuf| load_jsonl(p).map_err(|e| format!("{}: {e}", p.display()));
    let mut train_ds = load(&task.train)?;
    let mut test_ds = load(&task.test)?;
    let classes = train_ds.num_classes.max(test_ds.num_classes);
    train_ds.num_classes = classes;
    test_ds.num_classes = classes;
    train_ds.name = task.name.clone();
    test_ds.name = task.name.clone();
    test_ds.split = rationale_core::corpus::Split::Test;
    Ok(TaskData {
        train: train_ds,
        test: test_ds,
    })
}

fn learn(
    data: &TaskData,
    manifest: &ExperimentManifest,
    seed: u64,
) -> std::result::Result<LearnRun, String> {
    let cfg = rationale_core::TrainingConfig {
        seed,
        ..manifest.training.clone()
    };
    fn err(what: &'static str) -> impl Fn(rationale_core::neural::NeuralError) -> String {
        move |e| format!("{what}: {e}")
    }
    let baseline = train(&data.train, &cfg, false).map_err(err("training M"))?;
    let regularised = train(&data.train, &cfg, true).map_err(err("training R"))?;
    let token_model = train_token_classifier(&data.train, &cfg).map_err(err("training T"))?;

    let test = &data.test;
    let gold: Vec<usize> = test.instances.iter().map(|i| i.label).collect();
    let m_pred = baseline
        .predict_classes(test)
        .map_err(err("predicting with M"))?;
    let r_pred = regularised
        .predict_classes(test)
        .map_err(err("predicting with R"))?;
    let t_masks = token_model
        .predict_rationales(test)
        .map_err(err("predicting with T"))?;
    let metric = |e: rationale_core::metrics::MetricError| e.to_string();
    let m_f1 = macro_f1(&m_pred, &gold).map_err(metric)?;
    let r_f1 = macro_f1(&r_pred, &gold).map_err(metric)?;
    let mut t_total = 0.0;
    for (pred, inst) in t_masks.iter().zip(&test.instances) {
        t_total += token_f1::<f64>(pred, &inst.rationale_mask).map_err(metric)?;
    }
    Ok(LearnRun {
        baseline,
        m_f1,
        r_f1,
        t_f1: t_total / test.len() as f64,
        majority_f1: majority_token_baseline(test).map_err(metric)?,
        m_pred,
        r_pred,
    })
}

fn build_provider(
    spec: &ProviderSpec,
    data: &TaskData,
    learned: &LearnRun,
    manifest: &ExperimentManifest,
    seed: u64,
) -> std::result::Result<Box<dyn ProbabilityProvider<f64>>, String> {
    match spec.kind {
        ProviderKind::ToyAttention => {
            let model = match &spec.checkpoint {
                Some(path) => {
                    load_checkpoint(path).map_err(|e| format!("{}: {e}", path.display()))?
                }
                None => learned.baseline.clone(),
            };
            Ok(Box::new(AttentionProvider::new(
                &spec.name,
                model,
                spec.mask_strategy,
                spec.seed,
            )))
        }
        ProviderKind::ToyBow => {
            let model = match &spec.checkpoint {
                Some(path) => {
                    BagOfWords::load(path).map_err(|e| format!("{}: {e}", path.display()))?
                }
                None => train_bow(
                    &data.train,
                    &BowConfig {
                        learning_rate: manifest.bow_learning_rate,
                        epochs: manifest.bow_epochs,
                        seed,
                    },
                ),
            };
            Ok(Box::new(
                model
                    .with_mask_strategy(spec.mask_strategy, spec.seed)
                    .with_name(&spec.name),
            ))
        }
        ProviderKind::Remote => {
            let endpoint = spec
                .endpoint
                .clone()
                .ok_or("remote provider without endpoint")?;
            Ok(Box::new(
                RemoteProvider::new(endpoint, data.test.num_classes)
                    .with_timeout(Duration::from_millis(spec.timeout_ms)),
            ))
        }
    }
}

fn correlation_row(
    task: &str,
    provider: &str,
    seed: Value,
    scope: &str,
    x: &str,
    y: &str,
    method: &str,
    result: std::result::Result<Correlation, String>,
) -> Vec<Value> {
    let head = vec![
        Value::from(scope),
        Value::from(task),
        Value::from(provider),
        seed,
        Value::from(x),
        Value::from(y),
        Value::from(method),
    ];
    let tail = match result {
        Ok(c) => vec![
            Value::from(c.n),
            num(c.coefficient),
            num(c.p_value),
            Value::from(format!("{:?}", c.method).to_lowercase()),
            Value::Null,
        ],
        Err(e) => vec![
            Value::Null,
            Value::Null,
            Value::Null,
            Value::Null,
            Value::from(e),
        ],
    };
    head.into_iter().chain(tail).collect()
}

fn run_cell(
    data: &TaskData,
    learned: &LearnRun,
    spec: &ProviderSpec,
    manifest: &ExperimentManifest,
    seed: u64,
) -> std::result::Result<CellResult, String> {
    let provider = build_provider(spec, data, learned, manifest, seed)?;
    let task = data.test.name.as_str();
    let mut reports = Vec::new();
    let mut delta_rows = Vec::new();
    let mut correlation_rows = Vec::new();
    let correct: BTreeMap<&str, bool> = data
        .test
        .instances
        .iter()
        .zip(&learned.r_pred)
        .map(|(inst, &p)| (inst.id.as_str(), p == inst.label))
        .collect();

    for &strategy in &manifest.strategies {
        let report = dataset_ci(provider.as_ref(), &data.test, strategy, 1)
            .map_err(|e| format!("{strategy}: {e}"))?;
        let (bottom, top) =
            decile_split(&report.records, manifest.decile_fraction).map_err(|e| e.to_string())?;
        let outcomes = |records: &[rationale_core::CiRecord]| -> Vec<PredictionOutcome> {
            records
                .iter()
                .map(|r| PredictionOutcome::Binary {
                    instance_id: r.instance_id.clone(),
                    correct: correct[r.instance_id.as_str()],
                })
                .collect()
        };
        let (top_out, bottom_out) = (outcomes(&top), outcomes(&bottom));
        let pct = |o: &[PredictionOutcome]| {
            rationale_core::stats::percent_correct(o).map_err(|e| e.to_string())
        };
        delta_rows.push(vec![
            Value::from(task),
            Value::from(provider.id()),
            Value::from(seed),
            Value::from(strategy.to_string()),
            Value::from(top.len()),
            num(pct(&top_out)?),
            num(pct(&bottom_out)?),
            num(delta_pred(&top_out, &bottom_out).map_err(|e| e.to_string())?),
        ]);

        let suff: Vec<f64> = report.records.iter().map(|r| r.suff).collect();
        let hits: Vec<f64> = report
            .records
            .iter()
            .map(|r| f64::from(u8::from(correct[r.instance_id.as_str()])))
            .collect();
        correlation_rows.push(correlation_row(
            task,
            &provider.id(),
            Value::from(seed),
            "instance",
            &format!("ci_{strategy}"),
            "r_correct",
            "point_biserial",
            pearson(&suff, &hits).map_err(|e| e.to_string()),
        ));
        reports.push(report);
    }

    if let [a, b] = reports.as_slice() {
        let by_id: BTreeMap<&str, f64> = b
            .records
            .iter()
            .map(|r| (r.instance_id.as_str(), r.suff))
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = a
            .records
            .iter()
            .filter_map(|r| by_id.get(r.instance_id.as_str()).map(|&s| (r.suff, s)))
            .unzip();
        let (xn, yn) = (format!("ci_{}", a.strategy), format!("ci_{}", b.strategy));
        let provider_id = provider.id();
        let mut row = |method: &str, res: std::result::Result<Correlation, String>| {
            correlation_rows.push(correlation_row(
                task,
                &provider_id,
                Value::from(seed),
                "instance",
                &xn,
                &yn,
                method,
                res,
            ));
        };
        row("pearson", pearson(&x, &y).map_err(|e| e.to_string()));
        row("spearman", spearman(&x, &y).map_err(|e| e.to_string()));
        row("kendall", kendall(&x, &y).map_err(|e| e.to_string()));
        let agree = x
            .iter()
            .zip(&y)
            .filter(|(p, q)| p.signum() == q.signum())
            .count();
        correlation_rows.push(
            [
                vec![
                    Value::from("instance"),
                    Value::from(task),
                    Value::from(provider_id.clone()),
                    Value::from(seed),
                    Value::from(xn.clone()),
                    Value::from(yn.clone()),
                    Value::from("sign_agreement"),
                    Value::from(x.len()),
                ],
                vec![
                    num(agree as f64 / x.len().max(1) as f64),
                    Value::Null,
                    Value::Null,
                    Value::Null,
                ],
            ]
            .concat(),
        );
    }
    Ok(CellResult {
        reports,
        delta_rows,
        correlation_rows,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Runs every cell of the manifest and writes the report tables.
pub fn run(manifest: &ExperimentManifest) -> Result<RunSummary> {
    manifest.validate()?;
    manifest.check_paths()?;
    let hash = manifest.hash();
    let workers = manifest
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Invalid(format!("cannot start worker pool: {e}")))?;

    let tasks: Vec<std::result::Result<TaskData, String>> =
        manifest.tasks.iter().map(load_task).collect();
    let learn_keys: Vec<(usize, u64)> = (0..manifest.tasks.len())
        .flat_map(|t| manifest.seeds.iter().map(move |&s| (t, s)))
        .collect();
    let learned: Vec<std::result::Result<LearnRun, String>> = pool.install(|| {
        learn_keys
            .par_iter()
            .map(|&(t, seed)| {
                let data = tasks[t].as_ref().map_err(Clone::clone)?;
                learn(data, manifest, seed)
            })
            .collect()
    });

    let cell_keys: Vec<(usize, usize, usize)> = (0..learn_keys.len())
        .flat_map(|l| (0..manifest.providers.len()).map(move |p| (l, p)))
        .map(|(l, p)| (learn_keys[l].0, p, l))
        .collect();
    let cells: Vec<std::result::Result<CellResult, String>> = pool.install(|| {
        cell_keys
            .par_iter()
            .map(|&(t, p, l)| {
                let data = tasks[t].as_ref().map_err(Clone::clone)?;
                let learned = learned[l]
                    .as_ref()
                    .map_err(|e| format!("learnability phase failed: {e}"))?;
                run_cell(
                    data,
                    learned,
                    &manifest.providers[p],
                    manifest,
                    learn_keys[l].1,
                )
            })
            .collect()
    });

    let mut failures = Vec::new();
    for (&(t, seed), res) in learn_keys.iter().zip(&learned) {
        if let Err(e) = res {
            failures.push(CellFailure {
                task: manifest.tasks[t].name.clone(),
                provider: String::new(),
                seed,
                message: e.clone(),
            });
        }
    }
    for (&(t, p, l), res) in cell_keys.iter().zip(&cells) {
        if let Err(e) = res {
            log::error!(
                "cell {}/{}/{} failed: {e}",
                manifest.tasks[t].name,
                manifest.providers[p].name,
                learn_keys[l].1
            );
            failures.push(CellFailure {
                task: manifest.tasks[t].name.clone(),
                provider: manifest.providers[p].name.clone(),
                seed: learn_keys[l].1,
                message: e.clone(),
            });
        }
    }

    let tables = build_tables(
        manifest,
        &learn_keys,
        &learned,
        &cell_keys,
        &cells,
        &failures,
    );
    fs::create_dir_all(&manifest.output_dir).map_err(io_err(&manifest.output_dir))?;
    for table in &tables {
        table.write(&manifest.output_dir, &hash)?;
    }
    let canonical_path = manifest.output_dir.join("manifest.txt");
    fs::write(
        &canonical_path,
        format!("# manifest-sha256: {hash}\n{}", manifest.canonical()),
    )
    .map_err(io_err(canonical_path))?;

    Ok(RunSummary {
        report_dir: manifest.output_dir.clone(),
        manifest_hash: hash,
        cells: cell_keys.len(),
        failures,
    })
}

fn build_tables(
    manifest: &ExperimentManifest,
    learn_keys: &[(usize, u64)],
    learned: &[std::result::Result<LearnRun, String>],
    cell_keys: &[(usize, usize, usize)],
    cells: &[std::result::Result<CellResult, String>],
    failures: &[CellFailure],
) -> Vec<Table> {
    let mut records = Table::new(
        "ci-records",
        &[
            "task",
            "provider",
            "seed",
            "strategy",
            "instance_id",
            "class",
            "p_full",
            "p_reduced",
            "suff",
            "degenerate",
        ],
    );
    let mut overview = Table::new(
        "ci-overview",
        &[
            "task",
            "provider",
            "strategy",
            "runs",
            "instances",
            "mean_suff",
            "std_suff",
            "failed_instances",
        ],
    );
    let mut runs = Table::new(
        "learnability-runs",
        &[
            "task",
            "seed",
            "m_macro_f1",
            "r_macro_f1",
            "t_token_f1",
            "majority_token_f1",
        ],
    );
    let mut grid = Table::new(
        "tc-ar-grid",
        &[
            "task",
            "metric",
            "runs",
            "baseline_f1",
            "model_f1",
            "ratio",
            "normalised",
        ],
    );
    let mut intervals = Table::new(
        "intervals",
        &[
            "task",
            "metric",
            "runs",
            "point",
            "lower",
            "upper",
            "level",
            "iterations",
            "discarded",
        ],
    );
    let mut kappa = Table::new(
        "kappa",
        &["task", "model", "raters", "items", "kappa", "note"],
    );
    let mut delta = Table::new(
        "delta-pred",
        &[
            "task",
            "provider",
            "seed",
            "strategy",
            "decile_size",
            "top_pct",
            "bottom_pct",
            "delta_pred",
        ],
    );
    let corr_cols = [
        "scope",
        "task",
        "provider",
        "seed",
        "x",
        "y",
        "method",
        "n",
        "coefficient",
        "p_value",
        "p_method",
        "note",
    ];
    let mut correlations = Table::new("correlations", &corr_cols);
    let mut failed = Table::new("failures", &["task", "provider", "seed", "message"]);

    // Per-task learnability aggregates, used for the dataset-level correlation.
    let mut ar_by_task: BTreeMap<usize, f64> = BTreeMap::new();

    for (t, task) in manifest.tasks.iter().enumerate() {
        let ok: Vec<(u64, &LearnRun)> = learn_keys
            .iter()
            .zip(learned)
            .filter(|((ti, _), _)| *ti == t)
            .filter_map(|((_, s), r)| r.as_ref().ok().map(|r| (*s, r)))
            .collect();
        for (seed, r) in &ok {
            runs.push(vec![
                Value::from(task.name.clone()),
                Value::from(*seed),
                num(r.m_f1),
                num(r.r_f1),
                num(r.t_f1),
                num(r.majority_f1),
            ]);
        }
        if ok.is_empty() {
            continue;
        }
        let m: Vec<f64> = ok.iter().map(|(_, r)| r.m_f1).collect();
        let r: Vec<f64> = ok.iter().map(|(_, r)| r.r_f1).collect();
        let tf: Vec<f64> = ok.iter().map(|(_, r)| r.t_f1).collect();
        let b: Vec<f64> = ok.iter().map(|(_, r)| r.majority_f1).collect();
        for (metric, model_runs, base_runs) in [("TC", &tf, &b), ("AR", &r, &m)] {
            let (base_mean, model_mean) = (mean(base_runs), mean(model_runs));
            let score = if metric == "TC" {
                tc_metric(model_mean, base_mean)
            } else {
                ar_metric(model_mean, base_mean)
            };
            let (ratio, normalised) = match score {
                Ok(s) => (
                    num(s.ratio),
                    opt_num(normalise_improvement(s.ratio, base_mean)),
                ),
                Err(_) => (Value::Null, Value::Null),
            };
            if metric == "AR" {
                if let Ok(s) = score {
                    ar_by_task.insert(t, s.ratio);
                }
            }
            grid.push(vec![
                Value::from(task.name.clone()),
                Value::from(metric),
                Value::from(ok.len()),
                num(base_mean),
                num(model_mean),
                ratio,
                normalised,
            ]);
            let boot = bootstrap_ar(model_runs, base_runs, &manifest.bootstrap);
            intervals.push(match boot {
                Ok(res) => vec![
                    Value::from(task.name.clone()),
                    Value::from(metric),
                    Value::from(ok.len()),
                    num(res.interval.point),
                    num(res.interval.lower),
                    num(res.interval.upper),
                    num(res.interval.level),
                    Value::from(res.iterations),
                    Value::from(res.discarded),
                ],
                Err(_) => vec![
                    Value::from(task.name.clone()),
                    Value::from(metric),
                    Value::from(ok.len()),
                    Value::Null,
                    Value::Null,
                    Value::Null,
                    num(manifest.bootstrap.level),
                    Value::from(manifest.bootstrap.iterations),
                    Value::from(manifest.bootstrap.iterations),
                ],
            });
        }
        for (model, preds) in [
            (
                "M",
                ok.iter().map(|(_, r)| r.m_pred.clone()).collect::<Vec<_>>(),
            ),
            ("R", ok.iter().map(|(_, r)| r.r_pred.clone()).collect()),
        ] {
            let classes = preds.iter().flatten().copied().max().unwrap_or(0) + 1;
            let items = preds.first().map_or(0, Vec::len);
            let (value, note) = match RatingMatrix::from_raters(&preds, classes.max(2))
                .and_then(|m| fleiss_kappa::<f64>(&m))
            {
                Ok(k) => (num(k), Value::Null),
                Err(e) => (Value::Null, Value::from(e.to_string())),
            };
            kappa.push(vec![
                Value::from(task.name.clone()),
                Value::from(model),
                Value::from(preds.len()),
                Value::from(items),
                value,
                note,
            ]);
        }
    }

    // Mean CI per (provider, strategy, task) for overview and dataset-level correlations.
    let mut ci_means: BTreeMap<(usize, String), BTreeMap<usize, f64>> = BTreeMap::new();
    for (t, task) in manifest.tasks.iter().enumerate() {
        for p in 0..manifest.providers.len() {
            for &strategy in &manifest.strategies {
                let reports: Vec<&CiReport> = cell_keys
                    .iter()
                    .zip(cells)
                    .filter(|((ti, pi, _), _)| *ti == t && *pi == p)
                    .filter_map(|(_, c)| c.as_ref().ok())
                    .flat_map(|c| c.reports.iter().filter(|r| r.strategy == strategy))
                    .collect();
                if reports.is_empty() {
                    continue;
                }
                let suff: Vec<f64> = reports
                    .iter()
                    .flat_map(|r| r.records.iter().map(|x| x.suff))
                    .collect();
                let m = mean(&suff);
                let sd =
                    (suff.iter().map(|x| (x - m).powi(2)).sum::<f64>() / suff.len() as f64).sqrt();
                overview.push(vec![
                    Value::from(task.name.clone()),
                    Value::from(reports[0].provider.clone()),
                    Value::from(strategy.to_string()),
                    Value::from(reports.len()),
                    Value::from(suff.len()),
                    num(m),
                    num(sd),
                    Value::from(reports.iter().map(|r| r.failures.len()).sum::<usize>()),
                ]);
                ci_means
                    .entry((p, strategy.to_string()))
                    .or_default()
                    .insert(t, m);
            }
        }
    }

    for (&(t, _, l), cell) in cell_keys.iter().zip(cells) {
        let Ok(cell) = cell else { continue };
        let seed = learn_keys[l].1;
        for report in &cell.reports {
            for r in &report.records {
                records.push(vec![
                    Value::from(manifest.tasks[t].name.clone()),
                    Value::from(report.provider.clone()),
                    Value::from(seed),
                    Value::from(r.strategy.to_string()),
                    Value::from(r.instance_id.clone()),
                    Value::from(r.class),
                    num(r.p_full),
                    num(r.p_reduced),
                    num(r.suff),
                    Value::from(r.degenerate),
                ]);
            }
        }
        for row in &cell.delta_rows {
            delta.push(row.clone());
        }
        for row in &cell.correlation_rows {
            correlations.push(row.clone());
        }
    }

    if manifest.tasks.len() >= 3 {
        for ((p, strategy), by_task) in &ci_means {
            let (x, y): (Vec<f64>, Vec<f64>) = by_task
                .iter()
                .filter_map(|(t, ci)| ar_by_task.get(t).map(|ar| (*ci, *ar)))
                .unzip();
            let res = spearman(&x, &y).map_err(|e| e.to_string());
            correlations.push(correlation_row(
                "*",
                &manifest.providers[*p].name,
                Value::Null,
                "dataset",
                &format!("mean_ci_{strategy}"),
                "ar",
                "spearman",
                res,
            ));
        }
    }

    for f in failures {
        failed.push(vec![
            Value::from(f.task.clone()),
            Value::from(f.provider.clone()),
            Value::from(f.seed),
            Value::from(f.message.clone()),
        ]);
    }
    vec![
        records,
        overview,
        runs,
        grid,
        intervals,
        kappa,
        delta,
        correlations,
        failed,
    ]
}
