//! One function per subcommand. Each writes `resolved_config.json` first and
//! returns the exit status for runs that completed with a warning-level
//! outcome (degenerate metrics, exhausted oracles).

use std::path::PathBuf;

use anyhow::{bail, Context};
use rpad_core::agreement::{
    kappa_report, pairwise_table, DecisionMatrix, ExactMatcher, KappaReport, Metric, PairKind,
    PairwiseTable, RelativeReport, RelativeValue, VarianceReport,
};
use rpad_core::corpus::{load_labeled_pairs, write_evaluation_dataset, EvaluationDataset, LabeledPair};
use rpad_core::lingfeat::{write_feature_csv, FeatureRow};
use rpad_core::matchmodel::{self, feature_correlation, permutation_importance, train, MatchModel};
use rpad_core::normalizer::{normalize_dataset, NormalizationIssue};
use rpad_core::pipeline::{FeatureBatch, ModelMatcher, OracleFailure};
use serde::Serialize;

use crate::config::{MatchMode, Resolved, Split};
use crate::error::ExitKind;
use crate::output::{
    csv_bytes, json_bytes, markdown_bytes, num, sha256_hex, summary_csv_rows, summary_markdown,
    OutDir, Provenance, SummaryRow, SUMMARY_HEADER,
};
use crate::setup;

pub struct Run {
    pub r: Resolved,
    pub out: OutDir,
    pub prov: Provenance,
}

impl Run {
    pub fn start(r: Resolved, out: &std::path::Path) -> anyhow::Result<Self> {
        let out = OutDir::create(out)?;
        let cfg = r.canonical_json();
        out.write("resolved_config.json", cfg.as_bytes())?;
        let prov = Provenance {
            config_sha256: sha256_hex(cfg.as_bytes()),
            decisions_sha256: None,
        };
        Ok(Self { r, out, prov })
    }

    fn model_path(&self) -> PathBuf {
        self.r
            .optional(&self.r.config.paths.model)
            .unwrap_or_else(|| self.out.path("model.json"))
    }

    fn decisions_path(&self) -> PathBuf {
        self.r
            .optional(&self.r.config.paths.decisions)
            .unwrap_or_else(|| self.out.path("decisions.jsonl"))
    }

    fn model_name(&self, ds: &EvaluationDataset) -> String {
        self.r
            .config
            .model_name
            .clone()
            .unwrap_or_else(|| ds.raters()[ds.algorithm()].id.clone())
    }

    fn check_issues(&self, issues: &[NormalizationIssue]) -> anyhow::Result<()> {
        if self.r.strict && !issues.is_empty() {
            bail!(
                "{} diagnosis(es) empty after normalization, first: case {} rater {} rank {}",
                issues.len(),
                issues[0].case_id,
                issues[0].rater_id,
                issues[0].rank
            );
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct PrepareReport<'a> {
    cases: usize,
    experts: usize,
    k_max: usize,
    normalized_sha256: String,
    issues: &'a [NormalizationIssue],
}

pub fn prepare(run: &Run) -> anyhow::Result<ExitKind> {
    let r = &run.r;
    let path = r.require(&r.config.paths.dataset, "dataset")?;
    let ds = rpad_core::corpus::load_evaluation_dataset(&path, r.config.sweep.k_max)
        .with_context(|| format!("dataset {}", path.display()))?;
    let (norm, issues) = normalize_dataset(&ds, &setup::rules(r)?)?;
    let mut bytes = Vec::new();
    write_evaluation_dataset(&norm, &mut bytes)?;
    run.out.write("normalized.jsonl", &bytes)?;
    let report = PrepareReport {
        cases: norm.n_cases(),
        experts: norm.n_experts(),
        k_max: norm.k_max(),
        normalized_sha256: sha256_hex(&bytes),
        issues: &issues,
    };
    run.out.write("prepare_report.json", &json_bytes(&run.prov, "prepare_report", &report))?;
    for i in &issues {
        eprintln!("case {} rater {} rank {}: {}", i.case_id, i.rater_id, i.rank, i.reason);
    }
    println!("normalized {} case(s), {} issue(s)", norm.n_cases(), issues.len());
    if r.strict && !issues.is_empty() {
        return Ok(ExitKind::Validation);
    }
    Ok(ExitKind::Ok)
}

fn pair_texts(pairs: &[LabeledPair]) -> Vec<(String, String)> {
    pairs.iter().map(|p| (p.a.clone(), p.b.clone())).collect()
}

fn labels(pairs: &[LabeledPair]) -> Vec<u8> {
    pairs.iter().map(|p| p.label).collect()
}

fn featurize_labeled(run: &Run, split: Split) -> anyhow::Result<(Vec<LabeledPair>, FeatureBatch, usize)> {
    let r = &run.r;
    let path = match split {
        Split::Train => r.require(&r.config.paths.train_pairs, "train_pairs")?,
        Split::Test => r.require(&r.config.paths.test_pairs, "test_pairs")?,
    };
    let pairs = load_labeled_pairs(&path).with_context(|| format!("pairs {}", path.display()))?;
    let f = setup::featurizer(r)?;
    let batch = f.featurize_batch(&pair_texts(&pairs))?;
    report_failures(&batch.failures);
    Ok((pairs, batch, f.oracle_calls()))
}

fn report_failures(failures: &[OracleFailure]) {
    for f in failures.iter().take(10) {
        eprintln!("pair {}: {}: {}", f.pair_index, f.oracle, f.message);
    }
    if failures.len() > 10 {
        eprintln!("... {} more oracle failure(s)", failures.len() - 10);
    }
}

fn oracle_status(batch: &FeatureBatch) -> ExitKind {
    if batch.transport_failures() > 0 {
        ExitKind::OracleExhausted
    } else {
        ExitKind::Ok
    }
}

#[derive(Serialize)]
struct TrainReport<'a> {
    samples: usize,
    missing_values: usize,
    oracle_failures: &'a [OracleFailure],
    features_sha256: String,
    model_sha256: String,
    threshold: f64,
    dataset_hash: &'a str,
    log: &'a matchmodel::TrainingLog,
}

pub fn train_match(run: &Run) -> anyhow::Result<ExitKind> {
    let (pairs, batch, _) = featurize_labeled(run, Split::Train)?;
    if batch.transport_failures() > 0 && !run.r.config.train.allow_missing {
        eprintln!(
            "{} oracle call(s) exhausted their retries; rerun when the endpoints recover or set train.allow_missing",
            batch.transport_failures()
        );
        return Ok(ExitKind::OracleExhausted);
    }
    let labels = labels(&pairs);
    let rows: Vec<FeatureRow> = batch
        .vectors
        .iter()
        .zip(&labels)
        .map(|(fv, &l)| FeatureRow {
            features: fv.clone(),
            label: Some(l),
        })
        .collect();
    let mut csv = Vec::new();
    write_feature_csv(&rows, &mut csv)?;
    run.out.write("train_features.csv", &csv)?;

    let model = train(&batch.vectors, &labels, &run.r.config.train)?;
    let bytes = matchmodel::to_bytes(&model);
    let model_path = run.model_path();
    std::fs::write(&model_path, &bytes).with_context(|| format!("writing {}", model_path.display()))?;
    let report = TrainReport {
        samples: pairs.len(),
        missing_values: batch.missing_values(),
        oracle_failures: &batch.failures,
        features_sha256: sha256_hex(&csv),
        model_sha256: sha256_hex(&bytes),
        threshold: model.threshold(),
        dataset_hash: model.dataset_hash(),
        log: model.log(),
    };
    run.out.write("train_report.json", &json_bytes(&run.prov, "train_report", &report))?;
    let oof = &model.log().oof_report;
    println!(
        "trained on {} pair(s): threshold {:.4}, out-of-fold F1 {:.4}",
        pairs.len(),
        model.threshold(),
        oof.f1
    );
    Ok(oracle_status(&batch))
}

fn load_model(run: &Run) -> anyhow::Result<MatchModel> {
    let p = run.model_path();
    matchmodel::load(&p).with_context(|| format!("model {}", p.display()))
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    report: &'a matchmodel::EvalReport,
    missing_values: usize,
    oracle_failures: &'a [OracleFailure],
}

pub fn eval_match(run: &Run) -> anyhow::Result<ExitKind> {
    let model = load_model(run)?;
    let (pairs, batch, _) = featurize_labeled(run, Split::Test)?;
    let labels = labels(&pairs);
    let report = model.evaluate(&batch.vectors, &labels)?;
    let rows: Vec<Vec<String>> = pairs
        .iter()
        .zip(&batch.vectors)
        .map(|(p, fv)| {
            let prob = model.predict(fv);
            vec![
                p.a.clone(),
                p.b.clone(),
                p.label.to_string(),
                format!("{prob}"),
                u8::from(prob >= model.threshold()).to_string(),
            ]
        })
        .collect();
    run.out.write(
        "eval_predictions.csv",
        &csv_bytes(&run.prov, &[], &["a", "b", "label", "probability", "decision"], &rows),
    )?;
    let out = EvalOutput {
        report: &report,
        missing_values: batch.missing_values(),
        oracle_failures: &batch.failures,
    };
    run.out.write("eval_report.json", &json_bytes(&run.prov, "eval_report", &out))?;
    let table = format!(
        "| Precision | Recall | F1 | Accuracy | Support |\n|---|---|---|---|---|\n| {:.2} | {:.2} | {:.2} | {:.2} | {} |\n",
        report.precision, report.recall, report.f1, report.accuracy, report.support
    );
    run.out.write("eval_table.md", &markdown_bytes(&run.prov, &table))?;
    print!("{table}");
    Ok(oracle_status(&batch))
}

#[derive(Serialize)]
struct ExplainOutput<'a> {
    importance: &'a matchmodel::ImportanceReport,
    correlation: &'a matchmodel::CorrelationReport,
}

pub fn explain_match(run: &Run) -> anyhow::Result<ExitKind> {
    let model = load_model(run)?;
    let (pairs, batch, _) = featurize_labeled(run, run.r.config.explain.split)?;
    let labels = labels(&pairs);
    let imp = permutation_importance(&model, &batch.vectors, &labels, run.r.config.seed, run.r.config.explain.repeats)?;
    let corr = feature_correlation(model.medians(), &batch.vectors, run.r.config.explain.correlation_threshold);
    let rows: Vec<Vec<String>> = imp
        .ranked()
        .iter()
        .map(|f| vec![f.rank.to_string(), f.feature.clone(), format!("{}", f.importance), format!("{}", f.std)])
        .collect();
    run.out.write(
        "importance.csv",
        &csv_bytes(
            &run.prov,
            &[("baseline_ap", format!("{}", imp.baseline_ap)), ("repeats", imp.repeats.to_string())],
            &["rank", "feature", "importance", "std"],
            &rows,
        ),
    )?;
    run.out.write(
        "explain_report.json",
        &json_bytes(
            &run.prov,
            "explain_report",
            &ExplainOutput {
                importance: &imp,
                correlation: &corr,
            },
        ),
    )?;
    for f in imp.ranked().iter().take(5) {
        println!("{:>2}. {:<14} {:+.4}", f.rank, f.feature, f.importance);
    }
    Ok(oracle_status(&batch))
}

#[derive(Serialize)]
struct MatchSummary<'a> {
    mode: MatchMode,
    k_max: usize,
    comparisons: usize,
    positive: usize,
    unique_pairs: usize,
    missing_values: usize,
    oracle_failures: &'a [OracleFailure],
    oracle_calls: usize,
    cache_hits: usize,
    cache_misses: usize,
}

pub fn match_pairs(run: &Run, mode: MatchMode) -> anyhow::Result<ExitKind> {
    let r = &run.r;
    let (ds, issues) = setup::dataset(r)?;
    run.check_issues(&issues)?;
    let k = r.config.sweep.k_max;
    let sym = r.config.metric.symmetrize;
    let empty = FeatureBatch {
        vectors: Vec::new(),
        failures: Vec::new(),
    };
    let (dm, batch, unique, calls, hits, misses) = match mode {
        MatchMode::Exact => {
            let dm = DecisionMatrix::compute(&ds, &ExactMatcher, k, sym)?;
            let unique = rpad_core::pipeline::unique_pairs(dm.records().iter().map(|d| (d.a.as_str(), d.b.as_str()))).0.len();
            (dm, empty, unique, 0, 0, 0)
        }
        MatchMode::Model => {
            let model = load_model(run)?;
            let f = setup::featurizer(r)?;
            let (dm, outcome) = ModelMatcher {
                featurizer: &f,
                model: &model,
            }
            .decision_matrix(&ds, k, sym)?;
            let unique = outcome.decisions.len();
            (dm, outcome.batch, unique, f.oracle_calls(), f.cache().hits(), f.cache().misses())
        }
    };
    report_failures(&batch.failures);
    let bytes = dm.to_jsonl_bytes();
    run.out.write("decisions.jsonl", &bytes)?;
    if let Some(extra) = r.optional(&r.config.paths.decisions) {
        std::fs::write(&extra, &bytes).with_context(|| format!("writing {}", extra.display()))?;
    }
    let prov = Provenance {
        decisions_sha256: Some(sha256_hex(&bytes)),
        ..run.prov.clone()
    };
    let summary = MatchSummary {
        mode,
        k_max: k,
        comparisons: dm.len(),
        positive: dm.records().iter().filter(|d| d.decision == 1).count(),
        unique_pairs: unique,
        missing_values: batch.missing_values(),
        oracle_failures: &batch.failures,
        oracle_calls: calls,
        cache_hits: hits,
        cache_misses: misses,
    };
    run.out.write("match_summary.json", &json_bytes(&prov, "match_summary", &summary))?;
    println!(
        "{} decision(s), {} positive; oracle calls {}, cache hits {}, misses {}",
        summary.comparisons, summary.positive, calls, hits, misses
    );
    Ok(oracle_status(&batch))
}

/// Panel, decisions and provenance shared by `evaluate` and `sweep-k`.
struct Scored {
    ds: EvaluationDataset,
    dm: DecisionMatrix,
    prov: Provenance,
    model: String,
}

fn scored(run: &Run) -> anyhow::Result<Scored> {
    let r = &run.r;
    let (ds, issues) = setup::dataset(r)?;
    run.check_issues(&issues)?;
    let path = run.decisions_path();
    let bytes = std::fs::read(&path).with_context(|| format!("decisions {}; run `match` first", path.display()))?;
    let dm = DecisionMatrix::read_jsonl(bytes.as_slice())?;
    dm.check_coverage(&ds, r.config.sweep.k_max, r.config.metric.symmetrize)?;
    let model = run.model_name(&ds);
    Ok(Scored {
        ds,
        dm,
        prov: Provenance {
            decisions_sha256: Some(sha256_hex(&bytes)),
            ..run.prov.clone()
        },
        model,
    })
}

fn tables(run: &Run, s: &Scored) -> anyhow::Result<Vec<PairwiseTable>> {
    (1..=run.r.config.sweep.k_max)
        .map(|k| Ok(pairwise_table(&s.ds, &s.dm, &run.r.config.metric.with_k(k))?))
        .collect()
}

fn kind_name(kind: PairKind) -> &'static str {
    match kind {
        PairKind::AlgorithmExpert => "algorithm_expert",
        PairKind::ExpertExpert => "expert_expert",
    }
}

fn rel_cells(v: &RelativeValue) -> [String; 2] {
    [num(v.value), v.flag.clone()]
}

#[derive(Serialize)]
struct EvaluateReport<'a> {
    model: &'a str,
    hardness: f64,
    pairwise: &'a [PairwiseTable],
    relative: &'a [RelativeReport],
    variance: &'a [VarianceReport],
    kappa: &'a KappaReport,
    summary: &'a SummaryRow,
}

pub fn evaluate(run: &Run) -> anyhow::Result<ExitKind> {
    let s = scored(run)?;
    let cfg = &run.r.config;
    let h = cfg.metric.hardness;
    let tables = tables(run, &s)?;
    let relative: Vec<RelativeReport> = tables
        .iter()
        .map(|t| RelativeReport::from_table(t, h))
        .collect::<Result<_, _>>()?;
    let kappa = kappa_report(&s.ds, cfg.kappa_categories, &s.dm, cfg.metric.symmetrize)?;
    let variance: Vec<VarianceReport> = tables.iter().map(|t| VarianceReport::from_tables(t, Some(&kappa))).collect();
    let out = &run.out;
    let prov = &s.prov;

    // pairwise values, wide and long (distribution data)
    let mut wide = Vec::new();
    let mut long = Vec::new();
    for t in &tables {
        for row in &t.rows {
            wide.push(vec![
                t.k.to_string(),
                kind_name(row.kind).into(),
                row.rater_x.clone(),
                row.rater_y.clone(),
                num(Some(row.precision)),
                num(Some(row.recall)),
            ]);
            for (metric, v) in [("precision", row.precision), ("recall", row.recall)] {
                long.push(vec![
                    t.k.to_string(),
                    metric.into(),
                    kind_name(row.kind).into(),
                    row.rater_x.clone(),
                    row.rater_y.clone(),
                    num(Some(v)),
                ]);
            }
        }
    }
    out.write(
        "pairwise.csv",
        &csv_bytes(prov, &[], &["k", "kind", "rater_x", "rater_y", "precision", "recall"], &wide),
    )?;
    out.write(
        "distributions.csv",
        &csv_bytes(prov, &[], &["k", "metric", "group", "rater_x", "rater_y", "value"], &long),
    )?;

    let rel_rows: Vec<Vec<String>> = relative
        .iter()
        .map(|r| {
            let mut row = vec![r.k.to_string(), format!("{}", r.hardness)];
            for v in [&r.p_opt, &r.r_opt, &r.p_avg, &r.r_avg, &r.rpad, &r.rrad] {
                row.extend(rel_cells(v));
            }
            row
        })
        .collect();
    out.write(
        "relative.csv",
        &csv_bytes(
            prov,
            &[],
            &[
                "k", "hardness", "p_opt", "p_opt_flag", "r_opt", "r_opt_flag", "p_avg", "p_avg_flag", "r_avg",
                "r_avg_flag", "rpad", "rpad_flag", "rrad", "rrad_flag",
            ],
            &rel_rows,
        ),
    )?;

    // averaged-precision/recall curves in k, H = 1
    let curve_rows: Vec<Vec<String>> = tables
        .iter()
        .map(|t| {
            let v = |m| t.relative(m, 1.0).ok();
            vec![s.model.clone(), t.k.to_string(), num(v(Metric::Precision)), num(v(Metric::Recall))]
        })
        .collect();
    out.write(
        "curves.csv",
        &csv_bytes(
            prov,
            &[("hardness", "1".into()), ("reference", "1.0".into())],
            &["model", "k", "rpad", "rrad"],
            &curve_rows,
        ),
    )?;

    let mut sigma_rows = Vec::new();
    for v in &variance {
        sigma_rows.push(vec![v.k.to_string(), "precision".into(), num(v.sigma_algo_precision), num(v.sigma_expert_precision)]);
        sigma_rows.push(vec![v.k.to_string(), "recall".into(), num(v.sigma_algo_recall), num(v.sigma_expert_recall)]);
    }
    if let Some(v) = variance.first() {
        sigma_rows.push(vec!["1".into(), "kappa".into(), num(v.sigma_algo_kappa), num(v.sigma_expert_kappa)]);
    }
    out.write(
        "sigma.csv",
        &csv_bytes(prov, &[], &["k", "metric", "sigma_algorithm", "sigma_expert"], &sigma_rows),
    )?;

    let kappa_rows: Vec<Vec<String>> = kappa
        .rows
        .iter()
        .map(|r| {
            vec![
                kind_name(r.kind).into(),
                r.rater_x.clone(),
                r.rater_y.clone(),
                num(Some(r.kappa)),
                num(Some(r.p_o)),
                num(Some(r.p_e)),
                r.degenerate.to_string(),
            ]
        })
        .collect();
    out.write(
        "kappa.csv",
        &csv_bytes(
            prov,
            &[("categories", format!("{:?}", cfg.kappa_categories).to_lowercase())],
            &["kind", "rater_x", "rater_y", "kappa", "p_o", "p_e", "degenerate"],
            &kappa_rows,
        ),
    )?;

    let at1 = &relative[0];
    let at3 = &relative[relative.len().min(3) - 1];
    let summary = SummaryRow {
        model: s.model.clone(),
        p_avg_1: at1.p_avg.value,
        p_opt_1_flag: at1.p_opt.flag.clone(),
        r_avg_3: at3.r_avg.value,
        r_opt_3_flag: at3.r_opt.flag.clone(),
    };
    let md = summary_markdown(std::slice::from_ref(&summary));
    out.write("summary.md", &markdown_bytes(prov, &md))?;
    out.write(
        "summary.csv",
        &csv_bytes(
            prov,
            &[("r_at_k", at3.k.to_string())],
            &SUMMARY_HEADER,
            &summary_csv_rows(std::slice::from_ref(&summary)),
        ),
    )?;
    out.write(
        "report.json",
        &json_bytes(
            prov,
            "evaluate_report",
            &EvaluateReport {
                model: &s.model,
                hardness: h,
                pairwise: &tables,
                relative: &relative,
                variance: &variance,
                kappa: &kappa,
                summary: &summary,
            },
        ),
    )?;
    print!("{md}");
    if relative.iter().any(RelativeReport::has_degenerate) {
        eprintln!("some relative metrics are degenerate (experts never agree); shown as n/a");
        return Ok(ExitKind::Degenerate);
    }
    Ok(ExitKind::Ok)
}

pub fn sweep_k(run: &Run) -> anyhow::Result<ExitKind> {
    let s = scored(run)?;
    let tables = tables(run, &s)?;
    let mut rows = Vec::new();
    let mut degenerate = false;
    for &h in &run.r.config.sweep.hardness {
        for t in &tables {
            let p = t.relative(Metric::Precision, h).ok();
            let r = t.relative(Metric::Recall, h).ok();
            degenerate |= p.is_none() || r.is_none();
            rows.push(vec![s.model.clone(), format!("{h}"), t.k.to_string(), num(p), num(r)]);
        }
    }
    run.out.write(
        "sweep_k.csv",
        &csv_bytes(&s.prov, &[("reference", "1.0".into())], &["model", "hardness", "k", "rpad", "rrad"], &rows),
    )?;
    println!("{} row(s) written to sweep_k.csv", rows.len());
    Ok(if degenerate { ExitKind::Degenerate } else { ExitKind::Ok })
}
