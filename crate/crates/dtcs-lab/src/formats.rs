//! On-disk formats: model checkpoints (JSON), per-iteration records
//! (JSON-lines with per-epoch eval objects interleaved), and dataset CSV.
//! Floats are serialized shortest-round-trip, so parse-back is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use dtcs_core::{Mat, MlpModel, MultiDomainDataset, RunRecord};
use serde_json::{json, Value};

use crate::error::{LabError, Result};

const CKPT_VERSION: u64 = 1;

pub fn save_checkpoint(path: &Path, model: &MlpModel) -> Result<()> {
    let layers: Vec<Value> = (0..model.layer_count())
        .map(|l| {
            let w = &model.weights[l];
            let rows: Vec<Vec<f64>> = (0..w.rows()).map(|r| w.row(r).to_vec()).collect();
            json!({ "w": rows, "b": model.biases[l].row(0).to_vec() })
        })
        .collect();
    let doc = json!({ "version": CKPT_VERSION, "dims": model.dims, "layers": layers });
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<MlpModel> {
    let doc: Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    let bad = |msg: &str| LabError::format(path, msg);
    if doc["version"].as_u64() != Some(CKPT_VERSION) {
        return Err(bad("unsupported checkpoint version"));
    }
    let dims: Vec<usize> = doc["dims"]
        .as_array()
        .ok_or_else(|| bad("missing dims"))?
        .iter()
        .map(|v| v.as_u64().map(|u| u as usize).ok_or_else(|| bad("bad dim")))
        .collect::<Result<_>>()?;
    if dims.len() < 2 {
        return Err(bad("need at least input and output dims"));
    }
    let layers = doc["layers"].as_array().ok_or_else(|| bad("missing layers"))?;
    if layers.len() != dims.len() - 1 {
        return Err(bad("layer count does not match dims"));
    }
    let mut weights = Vec::with_capacity(layers.len());
    let mut biases = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let (d_in, d_out) = (dims[l], dims[l + 1]);
        let rows = layer["w"].as_array().ok_or_else(|| bad("missing weights"))?;
        if rows.len() != d_in {
            return Err(bad("weight row count mismatch"));
        }
        let mut flat = Vec::with_capacity(d_in * d_out);
        for row in rows {
            let row = row.as_array().ok_or_else(|| bad("weight row not an array"))?;
            if row.len() != d_out {
                return Err(bad("weight column count mismatch"));
            }
            for v in row {
                flat.push(v.as_f64().ok_or_else(|| bad("non-numeric weight"))?);
            }
        }
        weights.push(Mat::from_vec(d_in, d_out, flat)?);
        let b = layer["b"].as_array().ok_or_else(|| bad("missing bias"))?;
        if b.len() != d_out {
            return Err(bad("bias length mismatch"));
        }
        let bias: Vec<f64> = b
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| bad("non-numeric bias")))
            .collect::<Result<_>>()?;
        biases.push(Mat::from_vec(1, d_out, bias)?);
    }
    Ok(MlpModel { dims, weights, biases })
}

/// One line per iteration with keys iter, epoch, domain_losses
/// (ce/kl/composite each), weights, total_loss, lr, m; per-epoch eval
/// objects interleaved under the key "eval". Conflict stats and the
/// parameter fingerprint appear only when they were recorded.
pub fn write_record_jsonl(path: &Path, record: &RunRecord) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut evals = record.evals.iter().peekable();
    for it in &record.iterations {
        let mut obj = json!({
            "iter": it.iter,
            "epoch": it.epoch,
            "domain_losses": it.domain_losses.iter()
                .map(|b| json!({ "ce": b.ce, "kl": b.kl, "composite": b.composite }))
                .collect::<Vec<_>>(),
            "weights": it.weights,
            "total_loss": it.total_loss,
            "lr": it.lr,
            "m": it.m,
        });
        if let Some(c) = &it.conflict {
            obj["conflict"] = json!({
                "cosines": c.cosines,
                "sign_agreement": c.sign_agreement,
                "negative_fraction": c.negative_fraction,
                "zero_norm": c.zero_norm,
            });
        }
        if let Some(h) = it.param_hash {
            obj["param_hash"] = json!(format!("{h:016x}"));
        }
        writeln!(out, "{obj}")?;
        while evals.peek().is_some_and(|e| e.iter == it.iter) {
            let e = evals.next().unwrap();
            let line = json!({ "eval": {
                "epoch": e.epoch,
                "iter": e.iter,
                "source_val_acc": e.source_val_acc,
                "pooled_val_acc": e.pooled_val_acc,
                "target_acc": e.target_acc,
            }});
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

/// What a report needs back from a record file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedRun {
    pub iterations: Vec<ParsedIteration>,
    pub evals: Vec<ParsedEval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedIteration {
    pub iter: usize,
    pub epoch: usize,
    pub ce: Vec<f64>,
    pub kl: Vec<f64>,
    pub composite: Vec<f64>,
    pub weights: Vec<f64>,
    pub total_loss: f64,
    pub lr: f64,
    pub m: f64,
    pub negative_fraction: Option<f64>,
    pub param_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedEval {
    pub epoch: usize,
    pub iter: usize,
    pub source_val_acc: Vec<f64>,
    pub pooled_val_acc: f64,
    pub target_acc: Option<f64>,
}

impl ParsedRun {
    pub fn total_series(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.total_loss).collect()
    }

    pub fn composite_series(&self) -> Vec<Vec<f64>> {
        let Some(first) = self.iterations.first() else { return Vec::new() };
        (0..first.composite.len())
            .map(|d| self.iterations.iter().map(|r| r.composite[d]).collect())
            .collect()
    }

    pub fn final_eval(&self) -> Option<&ParsedEval> {
        self.evals.last()
    }
}

pub fn read_record_jsonl(path: &Path) -> Result<ParsedRun> {
    let mut run = ParsedRun::default();
    for (lineno, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line)
            .map_err(|e| LabError::format(path, format!("line {}: {e}", lineno + 1)))?;
        let bad = |msg: String| LabError::format(path, format!("line {}: {msg}", lineno + 1));
        if let Some(e) = v.get("eval") {
            run.evals.push(ParsedEval {
                epoch: e["epoch"].as_u64().ok_or_else(|| bad("eval.epoch".into()))? as usize,
                iter: e["iter"].as_u64().ok_or_else(|| bad("eval.iter".into()))? as usize,
                source_val_acc: f64_vec(&e["source_val_acc"])
                    .ok_or_else(|| bad("eval.source_val_acc".into()))?,
                pooled_val_acc: e["pooled_val_acc"]
                    .as_f64()
                    .ok_or_else(|| bad("eval.pooled_val_acc".into()))?,
                target_acc: e["target_acc"].as_f64(),
            });
            continue;
        }
        let losses = v["domain_losses"]
            .as_array()
            .ok_or_else(|| bad("domain_losses".into()))?;
        let field = |key: &str| -> Result<Vec<f64>> {
            losses
                .iter()
                .map(|b| b[key].as_f64().ok_or_else(|| bad(format!("domain_losses.{key}"))))
                .collect()
        };
        run.iterations.push(ParsedIteration {
            iter: v["iter"].as_u64().ok_or_else(|| bad("iter".into()))? as usize,
            epoch: v["epoch"].as_u64().ok_or_else(|| bad("epoch".into()))? as usize,
            ce: field("ce")?,
            kl: field("kl")?,
            composite: field("composite")?,
            weights: f64_vec(&v["weights"]).ok_or_else(|| bad("weights".into()))?,
            total_loss: v["total_loss"].as_f64().ok_or_else(|| bad("total_loss".into()))?,
            lr: v["lr"].as_f64().ok_or_else(|| bad("lr".into()))?,
            m: v["m"].as_f64().ok_or_else(|| bad("m".into()))?,
            negative_fraction: v["conflict"]["negative_fraction"].as_f64(),
            param_hash: v["param_hash"].as_str().map(str::to_owned),
        });
    }
    Ok(run)
}

fn f64_vec(v: &Value) -> Option<Vec<f64>> {
    v.as_array()?.iter().map(Value::as_f64).collect()
}

/// `domain,label,f0,f1,...` rows for every sample of every domain.
pub fn write_domain_csv(path: &Path, data: &MultiDomainDataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let header: Vec<String> = (0..data.feature_dim).map(|k| format!("f{k}")).collect();
    writeln!(out, "domain,label,{}", header.join(","))?;
    for d in &data.domains {
        for r in 0..d.len() {
            let feats: Vec<String> = d.xs.row(r).iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{},{},{}", d.id, d.ys[r], feats.join(","))?;
        }
    }
    Ok(())
}
