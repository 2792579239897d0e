//! The trainable stack: a projection head standing in for an upstream
//! sentence encoder, and the self-expressive module that turns a batch of
//! latents into an affinity matrix and virtual positive samples.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SclError};
use crate::tensor::{Matrix, NodeId, Tape};

/// Encoder stand-in selection. `Identity` passes embeddings through
/// untouched (latent dim = input dim); `TwoLayer` is a trainable
/// ReLU MLP `U -> d_hidden -> d_z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Identity,
    TwoLayer { d_hidden: usize, d_z: usize },
}

/// The six trainable tensors. In identity-projection mode the four head
/// tensors are stored empty (zero columns) and only `wq`/`wk` train;
/// checkpoints always carry all six names.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub wq: Matrix,
    pub wk: Matrix,
}

/// Names used in checkpoint files, in canonical order.
pub const PARAM_NAMES: [&str; 6] = ["W1", "b1", "W2", "b2", "Wq", "Wk"];

fn xavier_fill(rng: &mut impl Rng, rows: usize, cols: usize, gain: f64) -> Matrix {
    let limit = gain * (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-limit..=limit))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized to shape")
}

impl ModelParams {
    /// Seed-controlled initialization. The head uses plain Xavier-uniform;
    /// `wq`/`wk` are Xavier-uniform scaled by 0.01 so that initial
    /// affinities (and hence virtual samples) start small and the adaptive
    /// temperature starts high. The small scale also lets the low default
    /// learning rate reshape the query/key maps within a few hundred steps.
    pub fn init(projection: Projection, input_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let (w1, b1, w2, b2, d_z) = match projection {
            Projection::Identity => {
                if input_dim < 2 {
                    return Err(SclError::contract(
                        "identity projection requires input dim >= 2",
                    ));
                }
                (
                    Matrix::zeros(input_dim, 0),
                    Matrix::zeros(1, 0),
                    Matrix::zeros(0, input_dim),
                    Matrix::zeros(1, 0),
                    input_dim,
                )
            }
            Projection::TwoLayer { d_hidden, d_z } => {
                if d_hidden < 1 || d_z < 2 {
                    return Err(SclError::contract(
                        "two-layer projection requires d_hidden >= 1 and d_z >= 2",
                    ));
                }
                (
                    xavier_fill(rng, input_dim, d_hidden, 1.0),
                    Matrix::zeros(1, d_hidden),
                    xavier_fill(rng, d_hidden, d_z, 1.0),
                    Matrix::zeros(1, d_z),
                    d_z,
                )
            }
        };
        // attention dim d_a = d_z
        let wq = xavier_fill(rng, d_z, d_z, 0.01);
        let wk = xavier_fill(rng, d_z, d_z, 0.01);
        Ok(ModelParams {
            w1,
            b1,
            w2,
            b2,
            wq,
            wk,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.w1.cols() == 0
    }

    pub fn input_dim(&self) -> usize {
        if self.is_identity() {
            self.wq.rows()
        } else {
            self.w1.rows()
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.wq.rows()
    }

    pub fn tensors(&self) -> [(&'static str, &Matrix); 6] {
        [
            ("W1", &self.w1),
            ("b1", &self.b1),
            ("W2", &self.w2),
            ("b2", &self.b2),
            ("Wq", &self.wq),
            ("Wk", &self.wk),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.wq,
            &mut self.wk,
        ]
    }

    /// Rebuild from named tensors (checkpoint load). Validates presence of
    /// all six names and mutual dimension consistency.
    pub fn from_named(tensors: Vec<(String, Matrix)>) -> Result<Self> {
        let mut slots: [Option<Matrix>; 6] = Default::default();
        for (name, m) in tensors {
            match PARAM_NAMES.iter().position(|&p| p == name) {
                Some(i) => {
                    if slots[i].is_some() {
                        return Err(SclError::contract(format!("duplicate tensor {name}")));
                    }
                    slots[i] = Some(m);
                }
                None => return Err(SclError::contract(format!("unexpected tensor {name}"))),
            }
        }
        let mut it = slots.into_iter();
        let mut take = |name: &str| {
            it.next()
                .flatten()
                .ok_or_else(|| SclError::contract(format!("missing tensor {name}")))
        };
        let params = ModelParams {
            w1: take("W1")?,
            b1: take("b1")?,
            w2: take("W2")?,
            b2: take("b2")?,
            wq: take("Wq")?,
            wk: take("Wk")?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in self.tensors() {
            if !t.is_finite() {
                return Err(SclError::contract(format!("non-finite values in {name}")));
            }
        }
        if self.wq.shape() != self.wk.shape() {
            return Err(SclError::shape("Wq/Wk", self.wq.shape(), self.wk.shape()));
        }
        let d_z = self.wq.rows();
        if d_z < 2 || self.wq.cols() < 1 {
            return Err(SclError::contract("require d_z >= 2 and d_a >= 1"));
        }
        if self.is_identity() {
            if self.b1.cols() != 0 || self.w2.rows() != 0 || self.b2.cols() != 0 {
                return Err(SclError::contract(
                    "identity-mode checkpoints must store empty head tensors",
                ));
            }
        } else {
            let h = self.w1.cols();
            if self.b1.shape() != (1, h) || self.w2.rows() != h {
                return Err(SclError::shape("W1/b1/W2", self.w1.shape(), self.w2.shape()));
            }
            if self.w2.cols() != d_z || self.b2.shape() != (1, d_z) {
                return Err(SclError::shape("W2/b2/Wq", self.w2.shape(), self.wq.shape()));
            }
        }
        Ok(())
    }
}

/// Tape nodes for the six parameter tensors of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ParamNodes {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
    pub wq: NodeId,
    pub wk: NodeId,
    identity: bool,
}

impl ParamNodes {
    pub fn insert(tape: &mut Tape, params: &ModelParams) -> ParamNodes {
        ParamNodes {
            w1: tape.input(&params.w1),
            b1: tape.input(&params.b1),
            w2: tape.input(&params.w2),
            b2: tape.input(&params.b2),
            wq: tape.input(&params.wq),
            wk: tape.input(&params.wk),
            identity: params.is_identity(),
        }
    }

    /// Wrap existing tape nodes in canonical order
    /// `[W1, b1, W2, b2, Wq, Wk]`.
    pub fn from_ids(ids: [NodeId; 6], identity: bool) -> ParamNodes {
        ParamNodes {
            w1: ids[0],
            b1: ids[1],
            w2: ids[2],
            b2: ids[3],
            wq: ids[4],
            wk: ids[5],
            identity,
        }
    }

    pub fn ids(&self) -> [NodeId; 6] {
        [self.w1, self.b1, self.w2, self.b2, self.wq, self.wk]
    }
}

/// Z = ReLU(U W1 + b1) W2 + b2, or U itself in identity mode.
pub fn project(tape: &mut Tape, pn: &ParamNodes, u: NodeId) -> Result<NodeId> {
    if pn.identity {
        if tape.cols(u) != tape.rows(pn.wq) {
            return Err(SclError::shape(
                "project",
                tape.shape(u),
                tape.shape(pn.wq),
            ));
        }
        return Ok(u);
    }
    let h = tape.matmul(u, pn.w1)?;
    let h = tape.add_row_vec(h, pn.b1)?;
    let h = tape.relu(h);
    let z = tape.matmul(h, pn.w2)?;
    tape.add_row_vec(z, pn.b2)
}

/// A = (Z Wq)(Z Wk)^T with the diagonal hard-masked to zero. The mask is an
/// op on the tape, so masked entries contribute no gradient.
pub fn compute_affinity(tape: &mut Tape, pn: &ParamNodes, z: NodeId) -> Result<NodeId> {
    let n = tape.rows(z);
    if n < 2 {
        return Err(SclError::contract(format!(
            "self-expression requires a batch of at least 2 samples, got {n}"
        )));
    }
    let eq = tape.matmul(z, pn.wq)?;
    let ek = tape.matmul(z, pn.wk)?;
    let ekt = tape.transpose(ek);
    let a_raw = tape.matmul(eq, ekt)?;
    tape.set_diag(a_raw, 0.0)
}

/// V = A Z: row j of V is the self-expressed reconstruction
/// `sum_i A[j][i] * Z_i`. Requires an exactly-zero diagonal.
pub fn generate_virtual(tape: &mut Tape, a: NodeId, z: NodeId) -> Result<NodeId> {
    let (n, m) = tape.shape(a);
    if n != m {
        return Err(SclError::shape("generate_virtual", (n, m), (n, n)));
    }
    let av = tape.values(a);
    for i in 0..n {
        if av[i * n + i] != 0.0 {
            return Err(SclError::contract(format!(
                "affinity diagonal must be zero, found {} at ({i},{i})",
                av[i * n + i]
            )));
        }
    }
    tape.matmul(a, z)
}

/// Latents for a frozen model (inference path of `project`).
pub fn latents(params: &ModelParams, u: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let pn = ParamNodes::insert(&mut tape, params);
    let u_id = tape.input(u);
    let z = project(&mut tape, &pn, u_id)?;
    Ok(tape.value(z))
}

/// Affinity matrix for a frozen model over all rows of `u`.
pub fn affinity(params: &ModelParams, u: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let pn = ParamNodes::insert(&mut tape, params);
    let u_id = tape.input(u);
    let z = project(&mut tape, &pn, u_id)?;
    let a = compute_affinity(&mut tape, &pn, z)?;
    Ok(tape.value(a))
}
