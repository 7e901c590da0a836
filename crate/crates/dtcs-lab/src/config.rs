//! Experiment configuration: a human-editable TOML file with nested
//! sections, plus command-line overrides that win over file values.

use std::path::Path;

use dtcs_core::{
    KlOrder, Method, MomentumSchedule, OptimConfig, ProphetKind, SyntheticSpec, TrainPlan,
};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub plan: PlanSection,
    pub optim: OptimSection,
    pub prophet: ProphetSection,
    pub run: RunSection,
    pub diagnostics: DiagnosticsSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// "synthetic" or "csv".
    pub source: String,
    pub csv_path: Option<String>,
    pub domains: usize,
    pub classes: usize,
    pub dims: usize,
    pub sigma: f64,
    pub samples_per_domain: usize,
    pub label_noise: f64,
    /// Degrees; one per domain. Empty → evenly spaced steps of 40°.
    pub rotations_deg: Vec<f64>,
    /// One offset vector per domain. Empty → 1.5 units along one third of
    /// each domain's rotation angle.
    pub translations: Vec<Vec<f64>>,
    /// The dataset is fixed across run seeds; vary this to change it.
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        let bench = SyntheticSpec::fig1_bench(0);
        DataSection {
            source: "synthetic".into(),
            csv_path: None,
            domains: bench.domains,
            classes: bench.classes,
            dims: bench.dims,
            sigma: bench.sigma,
            samples_per_domain: bench.samples_per_domain,
            label_noise: bench.label_noise,
            rotations_deg: Vec::new(),
            translations: Vec::new(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    /// "dtcs", "erm", or "agr-sum".
    pub method: String,
    /// "me", "se", "mp", or "mc".
    pub prophet: String,
    pub alpha: f64,
    pub tau: f64,
    /// "teacher-first" or "prediction-first".
    pub kl_order: String,
    pub iterations: usize,
    pub epoch_len: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub dcb: bool,
    pub momentum: f64,
    pub momentum_milestones: Vec<f64>,
    pub momentum_decay: f64,
    pub record_conflict: bool,
    pub record_param_hash: bool,
}

impl Default for PlanSection {
    fn default() -> Self {
        let d = TrainPlan::new(Method::Dtcs);
        PlanSection {
            method: "dtcs".into(),
            prophet: "me".into(),
            alpha: d.alpha,
            tau: d.tau,
            kl_order: "teacher-first".into(),
            iterations: d.iterations,
            epoch_len: d.epoch_len,
            batch_size: d.batch_size,
            hidden: d.hidden,
            dcb: true,
            momentum: d.momentum.initial,
            momentum_milestones: d.momentum.milestones,
            momentum_decay: d.momentum.decay_factor,
            record_conflict: true,
            record_param_hash: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSection {
    pub lr: f64,
    pub weight_decay: f64,
    pub milestones: Vec<f64>,
    pub decay_factor: f64,
}

impl Default for OptimSection {
    fn default() -> Self {
        let d = OptimConfig::default();
        OptimSection {
            lr: d.lr,
            weight_decay: d.weight_decay,
            milestones: d.milestones,
            decay_factor: d.decay_factor,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ProphetSection {
    /// Expert pretraining budget (expert kinds only).
    pub pretrain_epochs: usize,
    /// Defaults to the main learning rate.
    pub pretrain_lr: Option<f64>,
    pub pretrain_milestones: Vec<f64>,
    /// Weight of the per-domain head CE term in the joint objective
    /// (head kind only).
    pub head_loss_weight: f64,
}

impl Default for ProphetSection {
    fn default() -> Self {
        ProphetSection {
            pretrain_epochs: 200,
            pretrain_lr: None,
            pretrain_milestones: vec![0.7, 0.9],
            head_loss_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    /// Held-out domain id; ignored when sweeping all targets.
    pub target_domain: usize,
    /// Leave-one-out over every domain in turn.
    pub sweep_targets: bool,
    pub out: String,
    pub train_fraction: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seeds: vec![0],
            target_domain: 0,
            sweep_targets: false,
            out: "runs".into(),
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Fraction of the budget after which losses count as converged.
    pub converged_fraction: f64,
    /// "sample-std" or "root-sum-squares".
    pub gs_variant: String,
    /// Pairwise domain discrepancies in diag.json (subsampled).
    pub mmd: bool,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            converged_fraction: 0.6,
            gs_variant: "sample-std".into(),
            mmd: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub lr: Vec<f64>,
    pub tau: Vec<f64>,
    pub alpha: Vec<f64>,
    pub momentum: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            lr: vec![5e-3, 3e-3, 1e-3, 5e-4],
            tau: vec![0.5, 1.0, 2.0, 5.0],
            alpha: vec![0.1, 0.2, 0.5],
            momentum: vec![0.9, 1.0],
        }
    }
}

/// Command-line values that win over file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<String>,
    pub prophet: Option<String>,
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub momentum: Option<f64>,
    pub no_dcb: bool,
    pub seeds: Option<Vec<u64>>,
    /// A domain id, or "all" for the full leave-one-out sweep.
    pub target_domain: Option<String>,
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| LabError::Config(format!("{}: {e}", p.display())))?
            }
            None => ExperimentConfig::default(),
        };
        cfg.apply(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(m) = &o.method {
            self.plan.method = m.clone();
            if parse_method(m)? != Method::Dtcs {
                self.plan.dcb = false;
            }
        }
        if let Some(p) = &o.prophet {
            self.plan.prophet = p.clone();
        }
        if let Some(a) = o.alpha {
            self.plan.alpha = a;
        }
        if let Some(t) = o.tau {
            self.plan.tau = t;
        }
        if let Some(m) = o.momentum {
            self.plan.momentum = m;
        }
        if o.no_dcb {
            self.plan.dcb = false;
        }
        if let Some(s) = &o.seeds {
            self.run.seeds = s.clone();
        }
        match o.target_domain.as_deref() {
            Some("all") => self.run.sweep_targets = true,
            Some(t) => {
                self.run.sweep_targets = false;
                self.run.target_domain = t
                    .parse()
                    .map_err(|_| LabError::Config(format!("target domain `{t}` is not an id or `all`")))?;
            }
            None => {}
        }
        if let Some(out) = &o.out {
            self.run.out = out.clone();
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(LabError::Config(msg));
        parse_method(&self.plan.method)?;
        parse_prophet(&self.plan.prophet)?;
        parse_kl_order(&self.plan.kl_order)?;
        parse_gs_variant(&self.diagnostics.gs_variant)?;
        match self.data.source.as_str() {
            "synthetic" => {}
            "csv" => match &self.data.csv_path {
                Some(p) if Path::new(p).exists() => {}
                Some(p) => return err(format!("data.csv_path `{p}` does not exist")),
                None => return err("data.source = \"csv\" needs data.csv_path".into()),
            },
            other => return err(format!("data.source `{other}` is not synthetic|csv")),
        }
        if self.run.seeds.is_empty() {
            return err("run.seeds must be nonempty".into());
        }
        if !(0.0..=1.0).contains(&self.plan.alpha) {
            return err(format!("plan.alpha {} outside [0, 1]", self.plan.alpha));
        }
        if !(self.plan.tau > 0.0) {
            return err(format!("plan.tau {} must be positive", self.plan.tau));
        }
        if !(0.0..=1.0).contains(&self.plan.momentum) {
            return err(format!("plan.momentum {} outside [0, 1]", self.plan.momentum));
        }
        if !(self.run.train_fraction > 0.0 && self.run.train_fraction < 1.0) {
            return err(format!(
                "run.train_fraction {} outside (0, 1)",
                self.run.train_fraction
            ));
        }
        if !(self.diagnostics.converged_fraction > 0.0 && self.diagnostics.converged_fraction < 1.0)
        {
            return err(format!(
                "diagnostics.converged_fraction {} outside (0, 1)",
                self.diagnostics.converged_fraction
            ));
        }
        if self.data.source == "synthetic" {
            if !self.data.rotations_deg.is_empty()
                && self.data.rotations_deg.len() != self.data.domains
            {
                return err("data.rotations_deg length differs from data.domains".into());
            }
            if !self.data.translations.is_empty()
                && self.data.translations.len() != self.data.domains
            {
                return err("data.translations length differs from data.domains".into());
            }
            if !self.run.sweep_targets && self.run.target_domain >= self.data.domains {
                return err(format!(
                    "run.target_domain {} outside 0..{}",
                    self.run.target_domain, self.data.domains
                ));
            }
        }
        if self.sweep.lr.is_empty()
            || self.sweep.tau.is_empty()
            || self.sweep.alpha.is_empty()
            || self.sweep.momentum.is_empty()
        {
            return err("sweep lists must be nonempty".into());
        }
        Ok(())
    }

    pub fn method(&self) -> Method {
        parse_method(&self.plan.method).expect("validated")
    }

    pub fn prophet_kind(&self) -> ProphetKind {
        parse_prophet(&self.plan.prophet).expect("validated")
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        let d = &self.data;
        let mut spec = SyntheticSpec::fig1_bench(d.seed);
        spec.domains = d.domains;
        spec.classes = d.classes;
        spec.dims = d.dims;
        spec.sigma = d.sigma;
        spec.samples_per_domain = d.samples_per_domain;
        spec.label_noise = d.label_noise;
        spec.class_means = circle_class_means(d.classes, d.dims);
        spec.rotations_deg = if d.rotations_deg.is_empty() {
            (0..d.domains).map(|i| 40.0 * i as f64).collect()
        } else {
            d.rotations_deg.clone()
        };
        spec.translations = if d.translations.is_empty() {
            // Mirror the default benchmark: norm-1.5 offsets along one
            // third of each domain's rotation angle (see the geometry
            // rationale on the core spec constructor).
            spec.rotations_deg
                .iter()
                .map(|deg| {
                    let rad = (deg / 3.0) * core::f64::consts::PI / 180.0;
                    let mut t = vec![0.0; d.dims];
                    t[0] = 1.5 * rad.cos();
                    if d.dims > 1 {
                        t[1] = 1.5 * rad.sin();
                    }
                    t
                })
                .collect()
        } else {
            d.translations.clone()
        };
        spec
    }

    pub fn optim_config(&self) -> OptimConfig {
        OptimConfig {
            lr: self.optim.lr,
            weight_decay: self.optim.weight_decay,
            milestones: self.optim.milestones.clone(),
            decay_factor: self.optim.decay_factor,
        }
    }

    pub fn expert_optim_config(&self) -> OptimConfig {
        OptimConfig {
            lr: self.prophet.pretrain_lr.unwrap_or(self.optim.lr),
            milestones: self.prophet.pretrain_milestones.clone(),
            ..self.optim_config()
        }
    }

    /// The training plan minus the prophet, which the runner attaches.
    pub fn train_plan(&self) -> TrainPlan {
        let mut plan = TrainPlan::new(self.method());
        plan.alpha = self.plan.alpha;
        plan.tau = self.plan.tau;
        plan.kl_order = parse_kl_order(&self.plan.kl_order).expect("validated");
        plan.iterations = self.plan.iterations;
        plan.epoch_len = self.plan.epoch_len;
        plan.batch_size = self.plan.batch_size;
        plan.hidden = self.plan.hidden.clone();
        plan.optim = self.optim_config();
        plan.dcb = self.method() == Method::Dtcs && self.plan.dcb;
        plan.momentum = MomentumSchedule {
            initial: self.plan.momentum,
            milestones: self.plan.momentum_milestones.clone(),
            decay_factor: self.plan.momentum_decay,
        };
        plan.record_conflict = self.plan.record_conflict;
        plan.record_param_hash = self.plan.record_param_hash;
        plan
    }

    pub fn gs_variant(&self) -> dtcs_core::GsVariant {
        parse_gs_variant(&self.diagnostics.gs_variant).expect("validated")
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| LabError::Config(e.to_string()))
    }
}

/// Class means on a radius-3 circle in the first two feature dimensions,
/// evenly spaced and offset an eighth-turn off the axes. The radius is
/// deliberately larger than the default translation norm so that domains
/// overlap in input space and per-class modes genuinely conflict.
pub fn circle_class_means(classes: usize, dims: usize) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|c| {
            let angle = core::f64::consts::PI * (2.0 * c as f64 / classes as f64 + 0.25);
            let mut mean = vec![0.0; dims];
            mean[0] = 3.0 * angle.cos();
            if dims > 1 {
                mean[1] = 3.0 * angle.sin();
            }
            mean
        })
        .collect()
}

pub fn parse_method(s: &str) -> Result<Method> {
    match s {
        "dtcs" => Ok(Method::Dtcs),
        "erm" => Ok(Method::Erm),
        "agr-sum" => Ok(Method::AgrSum),
        other => Err(LabError::Config(format!("method `{other}` is not dtcs|erm|agr-sum"))),
    }
}

pub fn parse_prophet(s: &str) -> Result<ProphetKind> {
    match s {
        "me" => Ok(ProphetKind::MultiExpert),
        "se" => Ok(ProphetKind::SingleExpert),
        "mp" => Ok(ProphetKind::PrevEpoch),
        "mc" => Ok(ProphetKind::MultiHead),
        other => Err(LabError::Config(format!("prophet `{other}` is not me|se|mp|mc"))),
    }
}

pub fn parse_kl_order(s: &str) -> Result<KlOrder> {
    match s {
        "teacher-first" => Ok(KlOrder::TeacherFirst),
        "prediction-first" => Ok(KlOrder::PredictionFirst),
        other => Err(LabError::Config(format!(
            "kl_order `{other}` is not teacher-first|prediction-first"
        ))),
    }
}

pub fn parse_gs_variant(s: &str) -> Result<dtcs_core::GsVariant> {
    match s {
        "sample-std" => Ok(dtcs_core::GsVariant::SampleStd),
        "root-sum-squares" => Ok(dtcs_core::GsVariant::RootSumSquares),
        other => Err(LabError::Config(format!(
            "gs_variant `{other}` is not sample-std|root-sum-squares"
        ))),
    }
}
