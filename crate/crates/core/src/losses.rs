//! Objective terms: self-expression regularization, the cluster-wise
//! contrastive loss over real and virtual samples, the adaptive temperature
//! rule, and their weighted combination.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SclError};
use crate::tensor::{cosine, Matrix, NodeId, Tape, COSINE_NORM_EPS};

/// Regularizer applied to the off-diagonal affinity coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Initial temperature t; the effective tau is t / mean positive
    /// similarity when `adaptive_tau` is set.
    pub t: f64,
    pub lambda_cl: f64,
    pub lambda_reg: f64,
    pub gamma_recon: f64,
    pub reg_kind: RegKind,
    /// Lower clamp for the mean positive similarity in the tau rule; keeps
    /// tau finite and positive when virtual samples start out anti-aligned.
    pub sim_clamp_eps: f64,
    pub adaptive_tau: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            t: 0.1,
            lambda_cl: 1.0,
            lambda_reg: 0.01,
            gamma_recon: 0.0,
            reg_kind: RegKind::L2,
            sim_clamp_eps: 0.05,
            adaptive_tau: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) {
            return Err(SclError::contract("initial temperature t must be > 0"));
        }
        if self.lambda_cl < 0.0 || self.lambda_reg < 0.0 || self.gamma_recon < 0.0 {
            return Err(SclError::contract("loss weights must be >= 0"));
        }
        if !(self.sim_clamp_eps > 0.0 && self.sim_clamp_eps <= 1.0) {
            return Err(SclError::contract("sim_clamp_eps must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Per-batch loss components. `total` is exactly
/// `lambda_cl * contrastive + lambda_reg * regularization + gamma * reconstruction`.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub contrastive: f64,
    pub regularization: f64,
    pub reconstruction: f64,
    pub total: f64,
    pub tau_used: f64,
    /// Unclamped mean cosine between each latent and its positive sample.
    pub avg_pos_sim: f64,
}

/// Sum of r(A_ij) over the (already zero-masked) entries: |.| for L1,
/// squares for L2.
pub fn regularization_loss(tape: &mut Tape, a: NodeId, kind: RegKind) -> Result<NodeId> {
    let (n, m) = tape.shape(a);
    if n != m {
        return Err(SclError::shape("regularization_loss", (n, m), (n, n)));
    }
    debug_assert!((0..n).all(|i| tape.values(a)[i * n + i] == 0.0));
    let summand = match kind {
        RegKind::L1 => tape.abs(a),
        RegKind::L2 => tape.mul(a, a)?,
    };
    Ok(tape.sum_all(summand))
}

/// Mean over rows of cos(z_i, v_i); the raw statistic behind the tau rule.
pub fn mean_positive_similarity(z: &Matrix, v: &Matrix) -> Result<f64> {
    if z.shape() != v.shape() {
        return Err(SclError::shape(
            "mean_positive_similarity",
            z.shape(),
            v.shape(),
        ));
    }
    if z.rows() == 0 {
        return Err(SclError::contract("empty batch"));
    }
    let n = z.rows();
    let mean = (0..n)
        .map(|i| cosine(z.row(i), v.row(i), COSINE_NORM_EPS))
        .sum::<f64>()
        / n as f64;
    Ok(mean)
}

/// tau = t / clamp(mean positive similarity, [clamp_eps, 1]). The result is
/// used as a per-batch constant: no gradient flows through it.
pub fn adaptive_tau(z: &Matrix, v: &Matrix, t: f64, clamp_eps: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(SclError::contract("initial temperature t must be > 0"));
    }
    let s = mean_positive_similarity(z, v)?;
    Ok(t / s.clamp(clamp_eps, 1.0))
}

/// Mean over i of `-log(exp(sim(z_i, v_i)/tau) / D_i)` where the
/// denominator `D_i = sum_{j != i} exp(sim(z_i, z_j)/tau) +
/// sum_j exp(sim(z_i, v_j)/tau)` has exactly 2N-1 terms: the positive plus
/// 2N-2 negatives. Computed with a per-row max shift.
pub fn contrastive_loss(tape: &mut Tape, z: NodeId, v: NodeId, tau: f64) -> Result<NodeId> {
    let (n, d) = tape.shape(z);
    if tape.shape(v) != (n, d) {
        return Err(SclError::shape("contrastive_loss", (n, d), tape.shape(v)));
    }
    if n < 2 {
        return Err(SclError::contract(format!(
            "contrastive loss requires a batch of at least 2 samples, got {n}"
        )));
    }
    if !(tau > 0.0) {
        return Err(SclError::contract("tau must be > 0"));
    }
    let s_zz = tape.row_cosine(z, z)?;
    let s_zv = tape.row_cosine(z, v)?;
    let inv_tau = 1.0 / tau;
    let p = tape.scale(s_zz, inv_tau);
    let q = tape.scale(s_zv, inv_tau);

    // Per-row max over the admitted denominator terms, treated as a
    // constant shift (its derivative cancels analytically).
    let shift: Vec<f64> = {
        let pv = tape.values(p);
        let qv = tape.values(q);
        (0..n)
            .map(|i| {
                let mut m = f64::NEG_INFINITY;
                for j in 0..n {
                    if j != i {
                        m = m.max(pv[i * n + j]);
                    }
                    m = m.max(qv[i * n + j]);
                }
                m
            })
            .collect()
    };
    let neg_shift: Vec<f64> = shift.iter().map(|s| -s).collect();

    let p_shifted = tape.add_col_const(p, &neg_shift)?;
    // Push the excluded j = i real-real terms far enough down that exp
    // underflows to exactly zero.
    let p_shifted = tape.set_diag(p_shifted, -1e4)?;
    let q_shifted = tape.add_col_const(q, &neg_shift)?;
    let ep = tape.exp(p_shifted);
    let eq = tape.exp(q_shifted);
    let sp = tape.row_sum(ep);
    let sq = tape.row_sum(eq);
    let denom = tape.add(sp, sq)?;
    let log_denom = tape.log(denom);
    let lse = tape.add_col_const(log_denom, &shift)?;
    let pos = tape.diag_col(q)?;
    let per_sample = tape.sub(lse, pos)?;
    Ok(tape.mean_all(per_sample))
}

/// (1/2) sum_j ||z_j - v_j||^2. The gamma weight is applied in
/// [`total_loss`].
pub fn reconstruction_loss(tape: &mut Tape, z: NodeId, v: NodeId) -> Result<NodeId> {
    if tape.shape(z) != tape.shape(v) {
        return Err(SclError::shape(
            "reconstruction_loss",
            tape.shape(z),
            tape.shape(v),
        ));
    }
    let d = tape.sub(z, v)?;
    let sq = tape.mul(d, d)?;
    let s = tape.sum_all(sq);
    Ok(tape.scale(s, 0.5))
}

/// Combined objective over one forward pass. Computes tau (adaptive or
/// fixed), then `lambda_cl * contrastive + lambda_reg * regularization +
/// gamma * reconstruction`.
pub fn total_loss(
    tape: &mut Tape,
    cfg: &LossConfig,
    z: NodeId,
    a: NodeId,
    v: NodeId,
) -> Result<(NodeId, LossBreakdown)> {
    cfg.validate()?;
    let z_vals = tape.value(z);
    let v_vals = tape.value(v);
    let avg_pos_sim = mean_positive_similarity(&z_vals, &v_vals)?;
    let tau = if cfg.adaptive_tau {
        cfg.t / avg_pos_sim.clamp(cfg.sim_clamp_eps, 1.0)
    } else {
        cfg.t
    };

    let contrast = contrastive_loss(tape, z, v, tau)?;
    let reg = regularization_loss(tape, a, cfg.reg_kind)?;
    let recon = reconstruction_loss(tape, z, v)?;

    let weighted_cl = tape.scale(contrast, cfg.lambda_cl);
    let weighted_reg = tape.scale(reg, cfg.lambda_reg);
    let weighted_recon = tape.scale(recon, cfg.gamma_recon);
    let partial = tape.add(weighted_cl, weighted_reg)?;
    let total = tape.add(partial, weighted_recon)?;

    let breakdown = LossBreakdown {
        contrastive: tape.scalar(contrast),
        regularization: tape.scalar(reg),
        reconstruction: tape.scalar(recon),
        total: tape.scalar(total),
        tau_used: tau,
        avg_pos_sim,
    };
    Ok((total, breakdown))
}
