//! Batch construction and the optimization loop for the combined loss,
//! plus the dropout-pair baseline that replaces virtual samples with a
//! second augmented view.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SclError};
use crate::losses::{
    contrastive_loss, mean_positive_similarity, total_loss, LossBreakdown, LossConfig,
};
use crate::model::{compute_affinity, generate_virtual, project, ModelParams, ParamNodes, Projection};
use crate::tensor::{AdamState, Matrix, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Scl,
    DropoutBaseline,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub loss: LossConfig,
    pub mode: Mode,
    pub dropout_rate: f64,
    pub min_batch: usize,
    pub projection: Projection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            batch_size: 256,
            epochs: 200,
            lr: 5e-5,
            loss: LossConfig::default(),
            mode: Mode::Scl,
            dropout_rate: 0.3,
            min_batch: 8,
            projection: Projection::Identity,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_batch < 2 {
            return Err(SclError::contract("min_batch must be >= 2"));
        }
        if self.batch_size < self.min_batch {
            return Err(SclError::contract(format!(
                "batch_size {} must be >= min_batch {}",
                self.batch_size, self.min_batch
            )));
        }
        if !(self.lr > 0.0) {
            return Err(SclError::contract("lr must be > 0"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(SclError::contract("dropout_rate must be in [0, 1)"));
        }
        self.loss.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text)
            .map_err(|e| SclError::contract(format!("invalid train config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Per-epoch means over batches.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub total_loss: f64,
    pub contrastive: f64,
    pub regularization: f64,
    pub tau: f64,
    pub avg_pos_sim: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub wall_time_secs: f64,
    pub checkpoint_path: Option<PathBuf>,
}

impl TrainReport {
    /// CSV log, one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,total_loss,contrastive,regularization,tau,avg_pos_sim\n");
        for (i, e) in self.epochs.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                i, e.total_loss, e.contrastive, e.regularization, e.tau, e.avg_pos_sim
            ));
        }
        out
    }
}

/// Shuffle 0..n and split into `batch_size` chunks; a trailing chunk
/// smaller than `min_batch` is dropped. Every emitted index appears exactly
/// once.
pub fn make_batches(
    n: usize,
    batch_size: usize,
    min_batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    if min_batch > batch_size {
        return Err(SclError::contract(format!(
            "min_batch {min_batch} must be <= batch_size {batch_size}"
        )));
    }
    if n < min_batch {
        return Err(SclError::contract(format!(
            "need at least min_batch = {min_batch} samples, got {n}"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    Ok(indices
        .chunks(batch_size)
        .filter(|c| c.len() >= min_batch)
        .map(|c| c.to_vec())
        .collect())
}

/// Two inverted-dropout views of the same rows: each coordinate is zeroed
/// with probability `rate` and survivors are scaled by 1/(1-rate).
pub fn dropout_pair(
    u: &Matrix,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Matrix, Matrix)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(SclError::contract("dropout rate must be in [0, 1)"));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mut mask_view = || {
        let data = u
            .data()
            .iter()
            .map(|&v| {
                if rate > 0.0 && rng.gen::<f64>() < rate {
                    0.0
                } else {
                    v * keep_scale
                }
            })
            .collect();
        Matrix::from_vec(u.rows(), u.cols(), data).expect("same shape")
    };
    let v1 = mask_view();
    let v2 = mask_view();
    Ok((v1, v2))
}

/// Optimize the model on frozen input embeddings. Fully deterministic for
/// a given (seed, config, data) triple.
pub fn train(u: &Matrix, cfg: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    if !u.is_finite() {
        return Err(SclError::contract("input embeddings contain non-finite values"));
    }
    if u.rows() < cfg.min_batch {
        return Err(SclError::contract(format!(
            "need at least min_batch = {} samples, got {}",
            cfg.min_batch,
            u.rows()
        )));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(cfg.projection, u.cols(), &mut rng)?;
    let shapes: Vec<(usize, usize)> = params.tensors().iter().map(|(_, t)| t.shape()).collect();
    let mut adam = AdamState::new(cfg.lr, &shapes);

    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batches = make_batches(u.rows(), cfg.batch_size, cfg.min_batch, &mut rng)?;
        let mut sums = [0.0f64; 5];
        for (batch_idx, batch) in batches.iter().enumerate() {
            let u_batch = u.select_rows(batch);
            let bd = match cfg.mode {
                Mode::Scl => scl_step(&mut params, &mut adam, &u_batch, &cfg.loss)?,
                Mode::DropoutBaseline => {
                    baseline_step(&mut params, &mut adam, &u_batch, cfg, &mut rng)?
                }
            };
            if !bd.total.is_finite() {
                return Err(SclError::numeric(format!(
                    "non-finite loss {} at epoch {epoch}, batch {batch_idx}",
                    bd.total
                )));
            }
            sums[0] += bd.total;
            sums[1] += bd.contrastive;
            sums[2] += bd.regularization;
            sums[3] += bd.tau_used;
            sums[4] += bd.avg_pos_sim;
        }
        let inv = 1.0 / batches.len() as f64;
        epochs.push(EpochStats {
            total_loss: sums[0] * inv,
            contrastive: sums[1] * inv,
            regularization: sums[2] * inv,
            tau: sums[3] * inv,
            avg_pos_sim: sums[4] * inv,
        });
    }

    let report = TrainReport {
        epochs,
        wall_time_secs: started.elapsed().as_secs_f64(),
        checkpoint_path: None,
    };
    Ok((params, report))
}

fn scl_step(
    params: &mut ModelParams,
    adam: &mut AdamState,
    u_batch: &Matrix,
    loss_cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let pn = ParamNodes::insert(&mut tape, params);
    let u_id = tape.input(u_batch);
    let z = project(&mut tape, &pn, u_id)?;
    let a = compute_affinity(&mut tape, &pn, z)?;
    let v = generate_virtual(&mut tape, a, z)?;
    let (total, breakdown) = total_loss(&mut tape, loss_cfg, z, a, v)?;
    let grads = tape.backward(total)?;
    let grad_mats: Vec<Matrix> = pn.ids().iter().map(|&id| grads.get(id)).collect();
    let grad_refs: Vec<&Matrix> = grad_mats.iter().collect();
    adam.step(&mut params.tensors_mut(), &grad_refs)?;
    Ok(breakdown)
}

/// SimCSE-style step at the embedding level: two dropout views through the
/// same head, InfoNCE with the second view in place of the virtual samples,
/// no self-expression and no regularizer.
fn baseline_step(
    params: &mut ModelParams,
    adam: &mut AdamState,
    u_batch: &Matrix,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LossBreakdown> {
    let (u1, u2) = dropout_pair(u_batch, cfg.dropout_rate, rng)?;
    let mut tape = Tape::new();
    let pn = ParamNodes::insert(&mut tape, params);
    let u1_id = tape.input(&u1);
    let u2_id = tape.input(&u2);
    let z1 = project(&mut tape, &pn, u1_id)?;
    let z2 = project(&mut tape, &pn, u2_id)?;
    let z1_vals = tape.value(z1);
    let z2_vals = tape.value(z2);
    let avg_pos_sim = mean_positive_similarity(&z1_vals, &z2_vals)?;
    let tau = if cfg.loss.adaptive_tau {
        cfg.loss.t / avg_pos_sim.clamp(cfg.loss.sim_clamp_eps, 1.0)
    } else {
        cfg.loss.t
    };
    let contrast = contrastive_loss(&mut tape, z1, z2, tau)?;
    let total = tape.scale(contrast, cfg.loss.lambda_cl);
    let grads = tape.backward(total)?;
    let grad_mats: Vec<Matrix> = pn.ids().iter().map(|&id| grads.get(id)).collect();
    let grad_refs: Vec<&Matrix> = grad_mats.iter().collect();
    adam.step(&mut params.tensors_mut(), &grad_refs)?;
    Ok(LossBreakdown {
        contrastive: tape.scalar(contrast),
        regularization: 0.0,
        reconstruction: 0.0,
        total: tape.scalar(total),
        tau_used: tau,
        avg_pos_sim,
    })
}
