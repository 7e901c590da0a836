//! Run orchestration: resolve a config into (target × seed) jobs, execute
//! them on a bounded worker pool, and persist per-run artifacts —
//! `config.resolved`, `record.jsonl`, `diag.json`, `summary.csv`,
//! `model.ckpt`, plus expert checkpoints where the prophet has any.

use std::fs;
use std::path::{Path, PathBuf};

use dtcs_core::{
    converged_loss_std, generate_synthetic, gs, ingest_csv, leave_one_out, median_heuristic_gamma,
    mmd_squared, pretrain_experts, run_training, split, Domain, Mat, Method, MultiDomainDataset,
    Prophet, ProphetKind, ProphetSpec, RunData, RunOutput, SplitPlan,
};
use rayon::prelude::*;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use crate::formats::{save_checkpoint, write_domain_csv, write_record_jsonl};

pub const WORKERS_ENV: &str = "DTCS_WORKERS";

/// Headline numbers for one completed run; one row of `summary.csv`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_id: String,
    pub method: String,
    pub prophet: Option<String>,
    pub target: usize,
    pub seed: u64,
    pub source_val_acc: Vec<f64>,
    pub pooled_val_acc: Option<f64>,
    pub target_acc: Option<f64>,
    pub converged_loss_std: Option<f64>,
    pub mean_negative_fraction: Option<f64>,
    pub dir: PathBuf,
}

pub const SUMMARY_HEADER: &str = "run_id,method,prophet,target,seed,pooled_val_acc,target_acc,converged_loss_std,mean_negative_fraction";

impl RunSummary {
    pub fn csv_row(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.method,
            self.prophet.as_deref().unwrap_or(""),
            self.target,
            self.seed,
            cell(self.pooled_val_acc),
            cell(self.target_acc),
            cell(self.converged_loss_std),
            cell(self.mean_negative_fraction),
        )
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<MultiDomainDataset> {
    match cfg.data.source.as_str() {
        "synthetic" => Ok(generate_synthetic(&cfg.synthetic_spec())?),
        "csv" => {
            let path = cfg.data.csv_path.as_ref().expect("validated");
            let text = fs::read_to_string(path)?;
            Ok(ingest_csv(&text)?)
        }
        other => Err(LabError::Config(format!("data.source `{other}` is not synthetic|csv"))),
    }
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| LabError::Config(format!("{WORKERS_ENV}=`{v}` is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| LabError::Config(format!("worker pool: {e}")))
}

pub fn run_id(cfg: &ExperimentConfig, target: usize, seed: u64) -> String {
    let method = &cfg.plan.method;
    if cfg.method() == Method::Dtcs {
        format!("{method}-{}_t{target}_s{seed}", cfg.plan.prophet)
    } else {
        format!("{method}_t{target}_s{seed}")
    }
}

fn resolved_config(cfg: &ExperimentConfig, target: usize, seed: u64) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.run.seeds = vec![seed];
    c.run.target_domain = target;
    c.run.sweep_targets = false;
    c
}

/// Execute one (target, seed) run and write its artifact directory.
/// `shared_prophet` skips expert pretraining when the caller already has a
/// suitable prophet (ablation arms sharing experts).
pub fn run_single(
    cfg: &ExperimentConfig,
    data: &MultiDomainDataset,
    dir: &Path,
    target: usize,
    seed: u64,
    shared_prophet: Option<&Prophet>,
) -> Result<RunSummary> {
    let id = run_id(cfg, target, seed);
    let fail = |message: String| LabError::Run { run_id: id.clone(), message };
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.resolved"), resolved_config(cfg, target, seed).to_toml()?)?;

    let (sources, target_domain) = leave_one_out(data, target).map_err(|e| fail(e.to_string()))?;
    let split_plan = SplitPlan::stratified(&sources, cfg.run.train_fraction, seed, Some(target))
        .map_err(|e| fail(e.to_string()))?;
    let (train, val) = split(&sources, &split_plan).map_err(|e| fail(e.to_string()))?;

    let mut plan = cfg.train_plan();
    if cfg.method() == Method::Dtcs {
        plan.prophet = Some(match cfg.prophet_kind() {
            kind @ (ProphetKind::MultiExpert | ProphetKind::SingleExpert) => match shared_prophet {
                Some(p) => ProphetSpec::Ready(p.clone()),
                None => ProphetSpec::Ready(
                    pretrain_experts(
                        kind,
                        &train,
                        &plan.hidden,
                        &cfg.expert_optim_config(),
                        cfg.prophet.pretrain_epochs,
                        plan.batch_size,
                        seed,
                    )
                    .map_err(|e| fail(format!("expert pretraining: {e}")))?,
                ),
            },
            ProphetKind::PrevEpoch => ProphetSpec::PrevEpoch,
            ProphetKind::MultiHead => {
                ProphetSpec::MultiHead { head_loss_weight: cfg.prophet.head_loss_weight }
            }
        });
    }

    let run_data = RunData { train: &train, val: &val, target: Some(&target_domain) };
    let output = match run_training(&plan, &run_data, seed) {
        Ok(out) => out,
        Err(failure) => {
            // Keep whatever was recorded, plus a machine-readable marker.
            write_record_jsonl(&dir.join("record.jsonl"), &failure.record)?;
            let marker = json!({
                "run_id": id,
                "error": failure.error.to_string(),
                "iterations_recorded": failure.record.iterations.len(),
            });
            fs::write(dir.join("failure.json"), format!("{marker:#}\n"))?;
            return Err(fail(failure.error.to_string()));
        }
    };

    write_record_jsonl(&dir.join("record.jsonl"), &output.record)?;
    save_checkpoint(&dir.join("model.ckpt"), &output.model)?;
    save_expert_checkpoints(dir, output.prophet.as_ref(), &train)?;

    let summary = summarize(cfg, &id, dir, target, seed, &output);
    fs::write(
        dir.join("summary.csv"),
        format!("{SUMMARY_HEADER}\n{}\n", summary.csv_row()),
    )?;
    fs::write(dir.join("diag.json"), diag_json(cfg, &id, &train, &output)?)?;
    Ok(summary)
}

fn save_expert_checkpoints(
    dir: &Path,
    prophet: Option<&Prophet>,
    train: &MultiDomainDataset,
) -> Result<()> {
    let domain_id = |i: usize| train.domains.get(i).map(|d| d.id).unwrap_or(i);
    match prophet {
        Some(Prophet::MultiExpert { experts }) => {
            for (i, expert) in experts.iter().enumerate() {
                save_checkpoint(&dir.join(format!("expert_me_{}.ckpt", domain_id(i))), expert)?;
            }
        }
        Some(Prophet::SingleExpert { expert }) => {
            save_checkpoint(&dir.join("expert_se_all.ckpt"), expert)?;
        }
        Some(Prophet::MultiHead { heads, .. }) => {
            for (i, head) in heads.iter().enumerate() {
                save_checkpoint(&dir.join(format!("expert_mc_{}.ckpt", domain_id(i))), head)?;
            }
        }
        Some(Prophet::PrevEpoch { .. }) | None => {}
    }
    Ok(())
}

fn summarize(
    cfg: &ExperimentConfig,
    id: &str,
    dir: &Path,
    target: usize,
    seed: u64,
    output: &RunOutput,
) -> RunSummary {
    let record = &output.record;
    let eval = record.final_eval();
    RunSummary {
        run_id: id.to_string(),
        method: cfg.plan.method.clone(),
        prophet: (cfg.method() == Method::Dtcs).then(|| cfg.plan.prophet.clone()),
        target,
        seed,
        source_val_acc: eval.map(|e| e.source_val_acc.clone()).unwrap_or_default(),
        pooled_val_acc: eval.map(|e| e.pooled_val_acc),
        target_acc: eval.and_then(|e| e.target_acc),
        converged_loss_std: converged_std_total(cfg, record),
        mean_negative_fraction: mean_negative_fraction(record),
        dir: dir.to_path_buf(),
    }
}

fn converged_std_total(cfg: &ExperimentConfig, record: &dtcs_core::RunRecord) -> Option<f64> {
    let total = record.total_series();
    let start = converged_start(cfg.diagnostics.converged_fraction, total.len());
    let per_domain = record.composite_series();
    converged_loss_std(&per_domain, &total, start).ok().map(|c| c.total)
}

pub fn converged_start(fraction: f64, iterations: usize) -> usize {
    (fraction * iterations as f64).round() as usize
}

fn mean_negative_fraction(record: &dtcs_core::RunRecord) -> Option<f64> {
    let fracs: Vec<f64> = record
        .iterations
        .iter()
        .filter_map(|it| it.conflict.as_ref().map(|c| c.negative_fraction))
        .collect();
    (!fracs.is_empty()).then(|| fracs.iter().sum::<f64>() / fracs.len() as f64)
}

/// Keep pairwise input-discrepancy costs bounded on big domains.
const MMD_ROW_CAP: usize = 256;

fn subsample_rows(xs: &Mat, cap: usize) -> Mat {
    if xs.rows() <= cap {
        return xs.clone();
    }
    let step = xs.rows().div_ceil(cap);
    let mut data = Vec::new();
    let mut rows = 0;
    let mut r = 0;
    while r < xs.rows() {
        data.extend_from_slice(xs.row(r));
        rows += 1;
        r += step;
    }
    Mat::from_vec(rows, xs.cols(), data).expect("strided rows keep the column count")
}

fn diag_json(
    cfg: &ExperimentConfig,
    id: &str,
    train: &MultiDomainDataset,
    output: &RunOutput,
) -> Result<String> {
    let record = &output.record;
    let total = record.total_series();
    let start = converged_start(cfg.diagnostics.converged_fraction, total.len());
    let converged = converged_loss_std(&record.composite_series(), &total, start).ok();
    let eval = record.final_eval();

    let mut mmd_pairs = Vec::new();
    if cfg.diagnostics.mmd {
        let sampled: Vec<(usize, Mat)> =
            train.domains.iter().map(|d| (d.id, subsample_rows(&d.xs, MMD_ROW_CAP))).collect();
        for i in 0..sampled.len() {
            for j in i + 1..sampled.len() {
                let (a, p) = &sampled[i];
                let (b, q) = &sampled[j];
                let gamma = median_heuristic_gamma(p, q)?;
                mmd_pairs.push(json!({
                    "a": a,
                    "b": b,
                    "gamma": gamma,
                    "mmd_squared": mmd_squared(p, q, gamma)?,
                }));
            }
        }
    }

    let doc = json!({
        "run_id": id,
        "iterations": record.iterations.len(),
        "weights": output.weights.weights,
        "converged_loss_std": converged.map(|c| json!({
            "start": c.start,
            "per_domain": c.per_domain,
            "total": c.total,
        })),
        "mean_negative_fraction": mean_negative_fraction(record),
        "final_eval": eval.map(|e| json!({
            "epoch": e.epoch,
            "iter": e.iter,
            "source_val_acc": e.source_val_acc,
            "pooled_val_acc": e.pooled_val_acc,
            "target_acc": e.target_acc,
        })),
        "input_mmd": mmd_pairs,
    });
    Ok(format!("{doc:#}\n"))
}

fn write_summary_csv(path: &Path, rows: &[RunSummary]) -> Result<()> {
    let mut text = String::from(SUMMARY_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    Ok(fs::write(path, text)?)
}

pub fn targets_for(cfg: &ExperimentConfig, data: &MultiDomainDataset) -> Vec<usize> {
    if cfg.run.sweep_targets {
        data.domains.iter().map(|d| d.id).collect()
    } else {
        vec![cfg.run.target_domain]
    }
}

/// Execute every (target × seed) job under `<out>/<run-id>/` and write the
/// aggregate `<out>/summary.csv`. All jobs run even if some fail; the first
/// failure is returned after the survivors' artifacts are on disk.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<RunSummary>> {
    let data = load_dataset(cfg)?;
    let out = PathBuf::from(&cfg.run.out);
    fs::create_dir_all(&out)?;
    let jobs: Vec<(usize, u64)> = targets_for(cfg, &data)
        .into_iter()
        .flat_map(|t| cfg.run.seeds.iter().map(move |&s| (t, s)))
        .collect();

    let pool = worker_pool()?;
    let results: Vec<Result<RunSummary>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(target, seed)| {
                let dir = out.join(run_id(cfg, target, seed));
                run_single(cfg, &data, &dir, target, seed, None)
            })
            .collect()
    });

    let mut summaries = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(s) => {
                println!(
                    "run {}: pooled_val {} target {}",
                    s.run_id,
                    s.pooled_val_acc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                    s.target_acc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                );
                summaries.push(s);
            }
            Err(e) => {
                eprintln!("{e}");
                first_err.get_or_insert(e);
            }
        }
    }
    write_summary_csv(&out.join("summary.csv"), &summaries)?;
    if summaries.len() > 1 {
        print_aggregate(cfg, &summaries);
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(summaries),
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn print_aggregate(cfg: &ExperimentConfig, summaries: &[RunSummary]) {
    let mut targets: Vec<usize> = summaries.iter().map(|s| s.target).collect();
    targets.sort_unstable();
    targets.dedup();
    let mut per_target = Vec::new();
    println!("target  mean_target_acc  runs");
    for &t in &targets {
        let accs: Vec<f64> =
            summaries.iter().filter(|s| s.target == t).filter_map(|s| s.target_acc).collect();
        if accs.is_empty() {
            continue;
        }
        let m = mean(&accs);
        println!("{t:<6}  {m:<15.4}  {}", accs.len());
        per_target.push(m);
    }
    if per_target.len() > 1 {
        println!("avg     {:.4}", mean(&per_target));
        if let Ok(g) = gs(&per_target, cfg.gs_variant()) {
            println!("gs ({}): {:.6}", cfg.diagnostics.gs_variant, g);
        }
    }
    let conv: Vec<f64> = summaries.iter().filter_map(|s| s.converged_loss_std).collect();
    if !conv.is_empty() {
        println!("converged loss std (mean): {:.6}", mean(&conv));
    }
}

/// One component-removal arm: which pieces of the full method stay on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationArm {
    /// Plain uniform-mean baseline.
    Baseline,
    /// Contribution balancing only (soft targets disabled via alpha = 1).
    BalanceOnly,
    /// Soft targets only (balancing off).
    TargetsOnly,
    /// Both components on.
    Full,
}

impl AblationArm {
    pub const ALL: [AblationArm; 4] =
        [AblationArm::Baseline, AblationArm::BalanceOnly, AblationArm::TargetsOnly, AblationArm::Full];

    pub fn row_id(self) -> &'static str {
        match self {
            AblationArm::Baseline => "A",
            AblationArm::BalanceOnly => "B",
            AblationArm::TargetsOnly => "C",
            AblationArm::Full => "D",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AblationArm::Baseline => "baseline",
            AblationArm::BalanceOnly => "balance-only",
            AblationArm::TargetsOnly => "soft-targets-only",
            AblationArm::Full => "full",
        }
    }

    /// The config this arm trains under. Alpha = 1 turns the soft-target
    /// term off without touching anything else; the snapshot prophet kind
    /// is a placeholder there (never queried at alpha = 1).
    pub fn apply(self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut c = cfg.clone();
        match self {
            AblationArm::Baseline => {
                c.plan.method = "erm".into();
                c.plan.dcb = false;
            }
            AblationArm::BalanceOnly => {
                c.plan.method = "dtcs".into();
                c.plan.alpha = 1.0;
                c.plan.prophet = "mp".into();
                c.plan.dcb = true;
            }
            AblationArm::TargetsOnly => {
                c.plan.method = "dtcs".into();
                c.plan.dcb = false;
            }
            AblationArm::Full => {
                c.plan.method = "dtcs".into();
                c.plan.dcb = true;
            }
        }
        c
    }

    fn uses_shared_experts(self, cfg: &ExperimentConfig) -> bool {
        matches!(self, AblationArm::TargetsOnly | AblationArm::Full)
            && matches!(
                cfg.prophet_kind(),
                ProphetKind::MultiExpert | ProphetKind::SingleExpert
            )
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub id: &'static str,
    pub label: String,
    /// Mean target accuracy per held-out domain, over seeds.
    pub per_target: Vec<f64>,
    pub avg: f64,
}

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub targets: Vec<usize>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut text = String::from("row,label");
        for t in &self.targets {
            text.push_str(&format!(",t{t}"));
        }
        text.push_str(",avg\n");
        for r in &self.rows {
            text.push_str(&format!("{},{}", r.id, r.label));
            for v in &r.per_target {
                text.push_str(&format!(",{v}"));
            }
            text.push_str(&format!(",{}\n", r.avg));
        }
        text
    }
}

/// Remove each component in turn: four arms × every (target × seed) job,
/// artifacts under `<out>/ablation/`, cell = mean target accuracy. Arms
/// that share an expert prophet pretrain it once per job.
pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<AblationTable> {
    let data = load_dataset(cfg)?;
    let out = PathBuf::from(&cfg.run.out).join("ablation");
    fs::create_dir_all(&out)?;
    let targets = targets_for(cfg, &data);
    let jobs: Vec<(usize, u64)> = targets
        .iter()
        .flat_map(|&t| cfg.run.seeds.iter().map(move |&s| (t, s)))
        .collect();

    let pool = worker_pool()?;
    let results: Vec<Result<Vec<(AblationArm, RunSummary)>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(target, seed)| {
                let shared = pretrain_shared(cfg, &data, target, seed)?;
                AblationArm::ALL
                    .iter()
                    .map(|&arm| {
                        let arm_cfg = arm.apply(cfg);
                        let dir = out
                            .join(arm.row_id())
                            .join(run_id(&arm_cfg, target, seed));
                        let prophet =
                            arm.uses_shared_experts(cfg).then_some(shared.as_ref()).flatten();
                        run_single(&arm_cfg, &data, &dir, target, seed, prophet)
                            .map(|s| (arm, s))
                    })
                    .collect()
            })
            .collect()
    });

    let mut by_arm: Vec<Vec<RunSummary>> = vec![Vec::new(); AblationArm::ALL.len()];
    let mut first_err = None;
    for r in results {
        match r {
            Ok(pairs) => {
                for (arm, s) in pairs {
                    by_arm[arm as usize].push(s);
                }
            }
            Err(e) => {
                eprintln!("{e}");
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }

    let rows = AblationArm::ALL
        .iter()
        .map(|&arm| {
            let summaries = &by_arm[arm as usize];
            let per_target: Vec<f64> = targets
                .iter()
                .map(|&t| {
                    let accs: Vec<f64> = summaries
                        .iter()
                        .filter(|s| s.target == t)
                        .filter_map(|s| s.target_acc)
                        .collect();
                    mean(&accs)
                })
                .collect();
            AblationRow {
                id: arm.row_id(),
                label: arm.label().to_string(),
                avg: mean(&per_target),
                per_target,
            }
        })
        .collect();

    let table = AblationTable { targets: targets.clone(), rows };
    fs::write(out.join("ablation.csv"), table.to_csv())?;
    print!("{}", render_ablation(&table));
    Ok(table)
}

fn render_ablation(table: &AblationTable) -> String {
    let mut text = format!("{:<4}{:<20}", "row", "arm");
    for t in &table.targets {
        text.push_str(&format!("{:<10}", format!("t{t}")));
    }
    text.push_str("avg\n");
    for r in &table.rows {
        text.push_str(&format!("{:<4}{:<20}", r.id, r.label));
        for v in &r.per_target {
            text.push_str(&format!("{:<10.4}", v));
        }
        text.push_str(&format!("{:.4}\n", r.avg));
    }
    text
}

/// Pretrain the expert prophet once per (target, seed) so every arm that
/// needs it sees identical experts.
fn pretrain_shared(
    cfg: &ExperimentConfig,
    data: &MultiDomainDataset,
    target: usize,
    seed: u64,
) -> Result<Option<Prophet>> {
    let kind = cfg.prophet_kind();
    if !matches!(kind, ProphetKind::MultiExpert | ProphetKind::SingleExpert) {
        return Ok(None);
    }
    let (sources, _) = leave_one_out(data, target)?;
    let split_plan = SplitPlan::stratified(&sources, cfg.run.train_fraction, seed, Some(target))?;
    let (train, _) = split(&sources, &split_plan)?;
    let plan = cfg.train_plan();
    Ok(Some(pretrain_experts(
        kind,
        &train,
        &plan.hidden,
        &cfg.expert_optim_config(),
        cfg.prophet.pretrain_epochs,
        plan.batch_size,
        seed,
    )?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub lr: f64,
    pub tau: f64,
    pub alpha: f64,
    pub momentum: f64,
}

impl SweepPoint {
    pub fn dir_name(&self) -> String {
        format!("lr{}_tau{}_a{}_m{}", self.lr, self.tau, self.alpha, self.momentum)
    }

    pub fn apply(&self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut c = cfg.clone();
        c.optim.lr = self.lr;
        c.plan.tau = self.tau;
        c.plan.alpha = self.alpha;
        c.plan.momentum = self.momentum;
        c
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub point: SweepPoint,
    /// Mean final pooled source-validation accuracy over the point's runs.
    pub score: f64,
    pub runs: usize,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub best: ExperimentConfig,
}

/// Grid points in lexicographic (lr, tau, alpha, momentum) order, which is
/// also the tie-break order for selection.
pub fn sweep_grid(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let s = &cfg.sweep;
    let mut points = Vec::with_capacity(s.lr.len() * s.tau.len() * s.alpha.len() * s.momentum.len());
    for &lr in &s.lr {
        for &tau in &s.tau {
            for &alpha in &s.alpha {
                for &momentum in &s.momentum {
                    points.push(SweepPoint { lr, tau, alpha, momentum });
                }
            }
        }
    }
    let key = |p: &SweepPoint| [p.lr, p.tau, p.alpha, p.momentum];
    points.sort_by(|a, b| key(a).partial_cmp(&key(b)).expect("validated finite grid"));
    points.dedup();
    points
}

/// Train the whole grid and select by source validation: highest mean
/// pooled accuracy wins, ties going to the lexicographically smallest
/// point. Artifacts land under `<out>/sweep/<point>/`.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    let sweep_out = PathBuf::from(&cfg.run.out).join("sweep");
    fs::create_dir_all(&sweep_out)?;
    let mut rows = Vec::new();
    let mut best: Option<(SweepRow, ExperimentConfig)> = None;
    for point in sweep_grid(cfg) {
        let mut point_cfg = point.apply(cfg);
        point_cfg.run.out = sweep_out.join(point.dir_name()).display().to_string();
        point_cfg.validate()?;
        let summaries = cmd_run(&point_cfg)?;
        let scores: Vec<f64> = summaries.iter().filter_map(|s| s.pooled_val_acc).collect();
        if scores.is_empty() {
            return Err(LabError::Config(format!(
                "sweep point {} produced no validation scores",
                point.dir_name()
            )));
        }
        let row = SweepRow { point, score: mean(&scores), runs: summaries.len() };
        if best.as_ref().is_none_or(|(b, _)| row.score > b.score) {
            best = Some((row.clone(), point_cfg));
        }
        rows.push(row);
    }
    let (best_row, best_cfg) = best.expect("validated nonempty grid");

    let mut csv = String::from("lr,tau,alpha,momentum,score,runs\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.point.lr, r.point.tau, r.point.alpha, r.point.momentum, r.score, r.runs
        ));
    }
    fs::write(sweep_out.join("sweep.csv"), csv)?;
    fs::write(sweep_out.join("best.toml"), best_cfg.to_toml()?)?;
    println!(
        "best: lr={} tau={} alpha={} momentum={} (pooled val acc {:.4} over {} runs)",
        best_row.point.lr,
        best_row.point.tau,
        best_row.point.alpha,
        best_row.point.momentum,
        best_row.score,
        best_row.runs
    );
    Ok(SweepOutcome { rows, best: best_cfg })
}

/// Emit the configured dataset (synthetic by default) as one CSV.
pub fn cmd_gen_data(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let data = load_dataset(cfg)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_domain_csv(path, &data)?;
    let rows: usize = data.domains.iter().map(Domain::len).sum();
    println!("wrote {} rows ({} domains) to {}", rows, data.domains.len(), path.display());
    Ok(())
}
