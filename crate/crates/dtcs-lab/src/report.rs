//! Comparison reports over persisted run directories. Every number here is
//! recomputed from `record.jsonl` + `config.resolved`; nothing is carried
//! in report-only state.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dtcs_core::{converged_loss_std, gs, GsVariant};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::formats::{read_record_jsonl, ParsedRun};
use crate::runner::converged_start;

/// One successfully parsed run directory.
#[derive(Debug)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub record: ParsedRun,
    pub target: usize,
    pub seed: u64,
}

impl LoadedRun {
    /// Runs that differ only in seed and held-out target compare as one
    /// configuration.
    pub fn group_key(&self) -> String {
        let mut c = self.config.clone();
        c.run.seeds = Vec::new();
        c.run.target_domain = 0;
        c.run.sweep_targets = false;
        c.run.out = String::new();
        c.to_toml().unwrap_or_else(|_| format!("{c:?}"))
    }

    pub fn group_label(&self) -> String {
        let p = &self.config.plan;
        let mut label = p.method.clone();
        if p.method == "dtcs" {
            label.push('-');
            label.push_str(&p.prophet);
            label.push_str(&format!(" a={} tau={}", p.alpha, p.tau));
            label.push_str(if p.dcb { " dcb=on" } else { " dcb=off" });
        }
        label
    }

    fn converged_std(&self) -> Option<f64> {
        let total = self.record.total_series();
        let start =
            converged_start(self.config.diagnostics.converged_fraction, total.len());
        converged_loss_std(&self.record.composite_series(), &total, start).ok().map(|c| c.total)
    }
}

fn load_run(dir: &Path) -> Result<LoadedRun> {
    let text = fs::read_to_string(dir.join("config.resolved"))?;
    let config: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| crate::error::LabError::format(&dir.join("config.resolved"), e.to_string()))?;
    let record = read_record_jsonl(&dir.join("record.jsonl"))?;
    let target = config.run.target_domain;
    let seed = config.run.seeds.first().copied().unwrap_or(0);
    Ok(LoadedRun { dir: dir.to_path_buf(), config, record, target, seed })
}

fn is_run_dir(dir: &Path) -> bool {
    dir.join("record.jsonl").is_file() && dir.join("config.resolved").is_file()
}

/// Collect run directories under each path (the path itself or any
/// descendant holding a record).
pub fn discover_run_dirs(paths: &[PathBuf]) -> Vec<PathBuf> {
    fn walk(dir: &Path, found: &mut Vec<PathBuf>, depth: usize) {
        if is_run_dir(dir) {
            found.push(dir.to_path_buf());
            return;
        }
        if depth == 0 {
            return;
        }
        let Ok(entries) = fs::read_dir(dir) else { return };
        let mut children: Vec<PathBuf> =
            entries.flatten().map(|e| e.path()).filter(|p| p.is_dir()).collect();
        children.sort();
        for child in children {
            walk(&child, found, depth - 1);
        }
    }
    let mut found = Vec::new();
    for p in paths {
        walk(p, &mut found, 6);
    }
    found.sort();
    found.dedup();
    found
}

#[derive(Debug)]
pub struct GroupReport {
    pub label: String,
    pub targets: Vec<usize>,
    /// Per target: mean and sample std of final target accuracy over seeds.
    pub acc_mean: Vec<f64>,
    pub acc_std: Vec<f64>,
    pub avg: f64,
    pub gs_sample_std: Option<f64>,
    pub gs_root_sum_squares: Option<f64>,
    pub converged_std_mean: Option<f64>,
    /// Mean negative-cosine pair fraction per iteration, where recorded.
    pub conflict_curve: Vec<f64>,
    pub runs: usize,
}

#[derive(Debug)]
pub struct Report {
    pub groups: Vec<GroupReport>,
    pub skipped: Vec<(PathBuf, String)>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var: f64 =
        values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

pub fn build_report(paths: &[PathBuf]) -> Result<Report> {
    let dirs = discover_run_dirs(paths);
    let mut skipped = Vec::new();
    let mut groups: BTreeMap<String, Vec<LoadedRun>> = BTreeMap::new();
    for dir in dirs {
        match load_run(&dir) {
            Ok(run) => groups.entry(run.group_key()).or_default().push(run),
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", dir.display());
                skipped.push((dir, e.to_string()));
            }
        }
    }

    let mut reports = Vec::new();
    for runs in groups.into_values() {
        let label = runs[0].group_label();
        let mut targets: Vec<usize> = runs.iter().map(|r| r.target).collect();
        targets.sort_unstable();
        targets.dedup();

        let mut acc_mean = Vec::new();
        let mut acc_std = Vec::new();
        for &t in &targets {
            let accs: Vec<f64> = runs
                .iter()
                .filter(|r| r.target == t)
                .filter_map(|r| r.record.final_eval().and_then(|e| e.target_acc))
                .collect();
            acc_mean.push(if accs.is_empty() { f64::NAN } else { mean(&accs) });
            acc_std.push(if accs.is_empty() { f64::NAN } else { sample_std(&accs) });
        }
        let finite: Vec<f64> = acc_mean.iter().copied().filter(|v| v.is_finite()).collect();
        let avg = if finite.is_empty() { f64::NAN } else { mean(&finite) };
        let (gs_sample_std, gs_root_sum_squares) = if finite.len() >= 2 {
            (gs(&finite, GsVariant::SampleStd).ok(), gs(&finite, GsVariant::RootSumSquares).ok())
        } else {
            (None, None)
        };

        let conv: Vec<f64> = runs.iter().filter_map(|r| r.converged_std()).collect();
        let converged_std_mean = (!conv.is_empty()).then(|| mean(&conv));

        let curves: Vec<Vec<f64>> = runs
            .iter()
            .map(|r| {
                r.record
                    .iterations
                    .iter()
                    .map_while(|it| it.negative_fraction)
                    .collect::<Vec<f64>>()
            })
            .filter(|c| !c.is_empty())
            .collect();
        let conflict_curve = match curves.iter().map(Vec::len).min() {
            Some(len) if len > 0 => (0..len)
                .map(|i| mean(&curves.iter().map(|c| c[i]).collect::<Vec<f64>>()))
                .collect(),
            _ => Vec::new(),
        };

        reports.push(GroupReport {
            label,
            targets,
            acc_mean,
            acc_std,
            avg,
            gs_sample_std,
            gs_root_sum_squares,
            converged_std_mean,
            conflict_curve,
            runs: runs.len(),
        });
    }
    Ok(Report { groups: reports, skipped })
}

/// Full-precision cells so downstream consumers can recompute every
/// aggregate (the summary statistics round-trip through the text exactly).
pub fn accuracy_csv(report: &Report) -> String {
    let mut all_targets: Vec<usize> =
        report.groups.iter().flat_map(|g| g.targets.iter().copied()).collect();
    all_targets.sort_unstable();
    all_targets.dedup();

    let mut text = String::from("config,runs");
    for t in &all_targets {
        text.push_str(&format!(",t{t}_mean,t{t}_std"));
    }
    text.push_str(",avg,gs_sample_std,gs_root_sum_squares,converged_loss_std\n");
    for g in &report.groups {
        text.push_str(&format!("\"{}\",{}", g.label, g.runs));
        for t in &all_targets {
            match g.targets.iter().position(|x| x == t) {
                Some(i) if g.acc_mean[i].is_finite() => {
                    text.push_str(&format!(",{},{}", g.acc_mean[i], g.acc_std[i]));
                }
                _ => text.push_str(",,"),
            }
        }
        let cell = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        text.push_str(&format!(
            ",{},{},{},{}\n",
            if g.avg.is_finite() { format!("{}", g.avg) } else { String::new() },
            cell(g.gs_sample_std),
            cell(g.gs_root_sum_squares),
            cell(g.converged_std_mean),
        ));
    }
    text
}

pub fn conflict_csv(report: &Report) -> String {
    let groups: Vec<&GroupReport> =
        report.groups.iter().filter(|g| !g.conflict_curve.is_empty()).collect();
    let mut text = String::from("iter");
    for g in &groups {
        text.push_str(&format!(",\"{}\"", g.label));
    }
    text.push('\n');
    let len = groups.iter().map(|g| g.conflict_curve.len()).max().unwrap_or(0);
    for i in 0..len {
        text.push_str(&format!("{i}"));
        for g in &groups {
            match g.conflict_curve.get(i) {
                Some(v) => text.push_str(&format!(",{v}")),
                None => text.push(','),
            }
        }
        text.push('\n');
    }
    text
}

pub fn report_markdown(report: &Report) -> String {
    let mut text = String::from("# Run comparison\n\n");
    let mut all_targets: Vec<usize> =
        report.groups.iter().flat_map(|g| g.targets.iter().copied()).collect();
    all_targets.sort_unstable();
    all_targets.dedup();

    text.push_str("| config | runs |");
    for t in &all_targets {
        text.push_str(&format!(" t{t} |"));
    }
    text.push_str(" avg | gs (sample std) | gs (root sum squares) | converged loss std |\n");
    text.push_str("|---|---|");
    for _ in &all_targets {
        text.push_str("---|");
    }
    text.push_str("---|---|---|---|\n");
    for g in &report.groups {
        text.push_str(&format!("| {} | {} |", g.label, g.runs));
        for t in &all_targets {
            match g.targets.iter().position(|x| x == t) {
                Some(i) if g.acc_mean[i].is_finite() => {
                    text.push_str(&format!(" {:.4} ± {:.4} |", g.acc_mean[i], g.acc_std[i]));
                }
                _ => text.push_str(" — |"),
            }
        }
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "—".into());
        text.push_str(&format!(
            " {} | {} | {} | {} |\n",
            if g.avg.is_finite() { format!("{:.4}", g.avg) } else { "—".into() },
            cell(g.gs_sample_std),
            cell(g.gs_root_sum_squares),
            cell(g.converged_std_mean),
        ));
    }
    if !report.skipped.is_empty() {
        text.push_str("\nSkipped directories:\n\n");
        for (dir, why) in &report.skipped {
            text.push_str(&format!("- `{}`: {}\n", dir.display(), why));
        }
    }
    text.push_str("\nAccuracies are final-evaluation values on the held-out target domain; ");
    text.push_str("mean ± sample std over seeds. Full-precision columns live in accuracy.csv.\n");
    text
}

/// Aggregate the given run directories into `report.md`, `accuracy.csv`,
/// and `conflict.csv` under `out`.
pub fn cmd_report(paths: &[PathBuf], out: &Path) -> Result<Report> {
    let report = build_report(paths)?;
    if report.groups.is_empty() {
        return Err(crate::error::LabError::Config(format!(
            "no readable run directories under {}",
            paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
        )));
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("report.md"), report_markdown(&report))?;
    fs::write(out.join("accuracy.csv"), accuracy_csv(&report))?;
    fs::write(out.join("conflict.csv"), conflict_csv(&report))?;
    println!(
        "report over {} config group(s) written to {}",
        report.groups.len(),
        out.display()
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn std_of_identical_values_is_zero() {
        assert_eq!(sample_std(&[0.5, 0.5, 0.5]), 0.0);
        assert_eq!(sample_std(&[0.7]), 0.0);
    }

    #[test]
    fn discover_skips_non_run_dirs() {
        let tmp = tempfile::tempdir().unwrap();
        let run = tmp.path().join("nested").join("r0");
        fs::create_dir_all(&run).unwrap();
        fs::write(run.join("record.jsonl"), "").unwrap();
        fs::write(run.join("config.resolved"), "").unwrap();
        fs::create_dir_all(tmp.path().join("empty")).unwrap();
        let found = discover_run_dirs(&[tmp.path().to_path_buf()]);
        assert_eq!(found, vec![run]);
    }

    #[test]
    fn accuracy_csv_full_precision_round_trip() {
        let g = GroupReport {
            label: "erm".into(),
            targets: vec![0, 1],
            acc_mean: vec![0.1 + 0.2, 0.7],
            acc_std: vec![0.0, 0.0],
            avg: (0.1 + 0.2 + 0.7) / 2.0,
            gs_sample_std: Some(0.123456789012345),
            gs_root_sum_squares: None,
            converged_std_mean: None,
            conflict_curve: Vec::new(),
            runs: 2,
        };
        let csv = accuracy_csv(&Report { groups: vec![g], skipped: Vec::new() });
        let line = csv.lines().nth(1).unwrap();
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[2].parse::<f64>().unwrap(), 0.1 + 0.2);
        assert_eq!(cells[7].parse::<f64>().unwrap(), 0.123456789012345);
    }
}
