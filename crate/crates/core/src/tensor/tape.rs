use super::matrix::Matrix;
use crate::error::{Result, SclError};

/// Row norms below this threshold make cosine similarity return 0 with a
/// zero gradient through that entry.
pub const COSINE_NORM_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// The closed primitive set recorded on the tape. Every variant's backward
/// rule is local: it reads the upstream gradient plus the stored values of
/// its inputs and output.
#[derive(Debug, Clone)]
enum Op {
    /// Leaf: parameter or batch data. No inputs.
    Input,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// Elementwise product.
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Exp(NodeId),
    Log(NodeId),
    /// |x| with subgradient 0 at 0.
    Abs(NodeId),
    Relu(NodeId),
    /// N x M -> N x 1.
    RowSum(NodeId),
    /// full reduction -> 1 x 1.
    SumAll(NodeId),
    /// Pairwise row cosines: (N x d, M x d) -> N x M.
    RowCosine(NodeId, NodeId),
    /// Square matrix with the diagonal overwritten by a constant; the
    /// diagonal entries pass no gradient.
    SetDiag(NodeId),
    /// Diagonal of a square matrix as an N x 1 column.
    DiagCol(NodeId),
    /// N x d plus a broadcast 1 x d row vector node.
    AddRowVec(NodeId, NodeId),
    /// N x M plus a broadcast constant column (not a node: zero gradient).
    AddColConst(NodeId),
}

struct Node {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    op: Op,
}

/// Append-only record of one forward computation. Node ids index into the
/// construction order, so every node's inputs strictly precede it and a
/// single reverse sweep is a valid reverse-topological visit.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node on the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Matrix {
        let (r, c) = self.shapes[id.0];
        Matrix::from_vec(r, c, self.grads[id.0].clone()).expect("shape recorded at construction")
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn rows(&self, id: NodeId) -> usize {
        self.nodes[id.0].rows
    }

    pub fn cols(&self, id: NodeId) -> usize {
        self.nodes[id.0].cols
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn values(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].values
    }

    pub fn value(&self, id: NodeId) -> Matrix {
        let n = &self.nodes[id.0];
        Matrix::from_vec(n.rows, n.cols, n.values.clone()).expect("node shape is consistent")
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.shape(id), (1, 1));
        self.nodes[id.0].values[0]
    }

    fn push(&mut self, rows: usize, cols: usize, values: Vec<f64>, op: Op) -> NodeId {
        debug_assert_eq!(values.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            values,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, m: &Matrix) -> NodeId {
        self.push(m.rows(), m.cols(), m.data().to_vec(), Op::Input)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        if k != k2 {
            return Err(SclError::shape("matmul", (n, k), (k2, m)));
        }
        let mut out = vec![0.0; n * m];
        {
            let av = &self.nodes[a.0].values;
            let bv = &self.nodes[b.0].values;
            for i in 0..n {
                let a_row = &av[i * k..(i + 1) * k];
                let out_row = &mut out[i * m..(i + 1) * m];
                for (l, &x) in a_row.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    let b_row = &bv[l * m..(l + 1) * m];
                    for (o, &y) in out_row.iter_mut().zip(b_row) {
                        *o += x * y;
                    }
                }
            }
        }
        Ok(self.push(n, m, out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (n, m) = self.shape(a);
        let av = &self.nodes[a.0].values;
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = av[i * m + j];
            }
        }
        self.push(m, n, out, Op::Transpose(a))
    }

    fn zip_same_shape(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(SclError::shape(op_name, self.shape(a), self.shape(b)));
        }
        let (n, m) = self.shape(a);
        let values = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(n, m, values, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_same_shape("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_same_shape("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_same_shape("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let (n, m) = self.shape(a);
        let values = self.nodes[a.0].values.iter().map(|&x| f(x)).collect();
        self.push(n, m, values, op)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.map(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.map(a, f64::exp, Op::Exp(a))
    }

    /// Natural log; caller guarantees positive inputs.
    pub fn log(&mut self, a: NodeId) -> NodeId {
        debug_assert!(self.nodes[a.0].values.iter().all(|&v| v > 0.0));
        self.map(a, f64::ln, Op::Log(a))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.map(a, f64::abs, Op::Abs(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let (n, m) = self.shape(a);
        let av = &self.nodes[a.0].values;
        let values = (0..n)
            .map(|i| av[i * m..(i + 1) * m].iter().sum())
            .collect();
        self.push(n, 1, values, Op::RowSum(a))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s = self.nodes[a.0].values.iter().sum();
        self.push(1, 1, vec![s], Op::SumAll(a))
    }

    /// Mean of all entries, composed as sum / count.
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let (n, m) = self.shape(a);
        let s = self.sum_all(a);
        self.scale(s, 1.0 / (n * m) as f64)
    }

    /// `S[i][j] = cos(a_i, b_j)` with the zero-norm guard of
    /// [`COSINE_NORM_EPS`].
    pub fn row_cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, d) = self.shape(a);
        let (m, d2) = self.shape(b);
        if d != d2 {
            return Err(SclError::shape("row_cosine", (n, d), (m, d2)));
        }
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        let a_norms: Vec<f64> = (0..n)
            .map(|i| av[i * d..(i + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let b_norms: Vec<f64> = (0..m)
            .map(|j| bv[j * d..(j + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            if a_norms[i] < COSINE_NORM_EPS {
                continue;
            }
            let ar = &av[i * d..(i + 1) * d];
            for j in 0..m {
                if b_norms[j] < COSINE_NORM_EPS {
                    continue;
                }
                let br = &bv[j * d..(j + 1) * d];
                let dot: f64 = ar.iter().zip(br).map(|(x, y)| x * y).sum();
                out[i * m + j] = dot / (a_norms[i] * b_norms[j]);
            }
        }
        Ok(self.push(n, m, out, Op::RowCosine(a, b)))
    }

    pub fn set_diag(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let (n, m) = self.shape(a);
        if n != m {
            return Err(SclError::shape("set_diag", (n, m), (n, n)));
        }
        let mut values = self.nodes[a.0].values.clone();
        for i in 0..n {
            values[i * n + i] = c;
        }
        Ok(self.push(n, n, values, Op::SetDiag(a)))
    }

    pub fn diag_col(&mut self, a: NodeId) -> Result<NodeId> {
        let (n, m) = self.shape(a);
        if n != m {
            return Err(SclError::shape("diag_col", (n, m), (n, n)));
        }
        let av = &self.nodes[a.0].values;
        let values = (0..n).map(|i| av[i * n + i]).collect();
        Ok(self.push(n, 1, values, Op::DiagCol(a)))
    }

    pub fn add_row_vec(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, d) = self.shape(a);
        let (one, d2) = self.shape(b);
        if one != 1 || d != d2 {
            return Err(SclError::shape("add_row_vec", (n, d), (one, d2)));
        }
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        let mut values = av.clone();
        for i in 0..n {
            for j in 0..d {
                values[i * d + j] += bv[j];
            }
        }
        Ok(self.push(n, d, values, Op::AddRowVec(a, b)))
    }

    pub fn add_col_const(&mut self, a: NodeId, col: &[f64]) -> Result<NodeId> {
        let (n, m) = self.shape(a);
        if col.len() != n {
            return Err(SclError::shape("add_col_const", (n, m), (col.len(), 1)));
        }
        let av = &self.nodes[a.0].values;
        let mut values = av.clone();
        for i in 0..n {
            for j in 0..m {
                values[i * m + j] += col[i];
            }
        }
        Ok(self.push(n, m, values, Op::AddColConst(a)))
    }

    /// Reverse sweep from a scalar loss node. Returns the gradient of that
    /// scalar w.r.t. every node; nodes the loss does not depend on get zero.
    ///
    /// Takes `&self`: the tape holds no gradient state, so repeated calls
    /// return identical results.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(SclError::contract(format!(
                "backward requires a scalar (1x1) loss node, got {r}x{c}"
            )));
        }
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.rows * n.cols])
            .collect();
        grads[loss.0][0] = 1.0;

        for idx in (0..=loss.0).rev() {
            if grads[idx].iter().all(|&g| g == 0.0) {
                continue;
            }
            // Take the upstream gradient out to appease the borrow checker;
            // an op never reads its own output gradient slot after this.
            let g = std::mem::take(&mut grads[idx]);
            self.accumulate(idx, &g, &mut grads);
            grads[idx] = g;
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| (n.rows, n.cols)).collect(),
        })
    }

    fn accumulate(&self, idx: usize, g: &[f64], grads: &mut [Vec<f64>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Input => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.shape(*a);
                let m = self.cols(*b);
                let av = &self.nodes[a.0].values;
                let bv = &self.nodes[b.0].values;
                // da[i][l] += sum_j g[i][j] * b[l][j]
                {
                    let da = &mut grads[a.0];
                    for i in 0..n {
                        let g_row = &g[i * m..(i + 1) * m];
                        for l in 0..k {
                            let b_row = &bv[l * m..(l + 1) * m];
                            let dot: f64 = g_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
                            da[i * k + l] += dot;
                        }
                    }
                }
                // db[l][j] += sum_i a[i][l] * g[i][j]
                {
                    let db = &mut grads[b.0];
                    for i in 0..n {
                        let g_row = &g[i * m..(i + 1) * m];
                        for l in 0..k {
                            let x = av[i * k + l];
                            if x == 0.0 {
                                continue;
                            }
                            let db_row = &mut db[l * m..(l + 1) * m];
                            for (o, &gv) in db_row.iter_mut().zip(g_row) {
                                *o += x * gv;
                            }
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                let (n, m) = self.shape(*a);
                let da = &mut grads[a.0];
                // g has shape m x n
                for i in 0..n {
                    for j in 0..m {
                        da[i * m + j] += g[j * n + i];
                    }
                }
            }
            Op::Add(a, b) => {
                for (o, &gv) in grads[a.0].iter_mut().zip(g) {
                    *o += gv;
                }
                for (o, &gv) in grads[b.0].iter_mut().zip(g) {
                    *o += gv;
                }
            }
            Op::Sub(a, b) => {
                for (o, &gv) in grads[a.0].iter_mut().zip(g) {
                    *o += gv;
                }
                for (o, &gv) in grads[b.0].iter_mut().zip(g) {
                    *o -= gv;
                }
            }
            Op::Mul(a, b) => {
                let bv = &self.nodes[b.0].values;
                for ((o, &gv), &y) in grads[a.0].iter_mut().zip(g).zip(bv) {
                    *o += gv * y;
                }
                let av = &self.nodes[a.0].values;
                for ((o, &gv), &x) in grads[b.0].iter_mut().zip(g).zip(av) {
                    *o += gv * x;
                }
            }
            Op::Scale(a, c) => {
                for (o, &gv) in grads[a.0].iter_mut().zip(g) {
                    *o += gv * c;
                }
            }
            Op::Exp(a) => {
                // d exp = exp(x) = output values
                for ((o, &gv), &y) in grads[a.0].iter_mut().zip(g).zip(&node.values) {
                    *o += gv * y;
                }
            }
            Op::Log(a) => {
                let av = &self.nodes[a.0].values;
                for ((o, &gv), &x) in grads[a.0].iter_mut().zip(g).zip(av) {
                    *o += gv / x;
                }
            }
            Op::Abs(a) => {
                let av = &self.nodes[a.0].values;
                for ((o, &gv), &x) in grads[a.0].iter_mut().zip(g).zip(av) {
                    *o += gv * if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                }
            }
            Op::Relu(a) => {
                let av = &self.nodes[a.0].values;
                for ((o, &gv), &x) in grads[a.0].iter_mut().zip(g).zip(av) {
                    if x > 0.0 {
                        *o += gv;
                    }
                }
            }
            Op::RowSum(a) => {
                let (n, m) = self.shape(*a);
                let da = &mut grads[a.0];
                for i in 0..n {
                    let gv = g[i];
                    for j in 0..m {
                        da[i * m + j] += gv;
                    }
                }
            }
            Op::SumAll(a) => {
                let gv = g[0];
                for o in grads[a.0].iter_mut() {
                    *o += gv;
                }
            }
            Op::RowCosine(a, b) => {
                self.backward_row_cosine(*a, *b, &node.values, g, grads);
            }
            Op::SetDiag(a) => {
                let n = self.rows(*a);
                let da = &mut grads[a.0];
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            da[i * n + j] += g[i * n + j];
                        }
                    }
                }
            }
            Op::DiagCol(a) => {
                let n = self.rows(*a);
                let da = &mut grads[a.0];
                for i in 0..n {
                    da[i * n + i] += g[i];
                }
            }
            Op::AddRowVec(a, b) => {
                let (n, d) = self.shape(*a);
                for (o, &gv) in grads[a.0].iter_mut().zip(g) {
                    *o += gv;
                }
                let db = &mut grads[b.0];
                for i in 0..n {
                    for j in 0..d {
                        db[j] += g[i * d + j];
                    }
                }
            }
            Op::AddColConst(a) => {
                for (o, &gv) in grads[a.0].iter_mut().zip(g) {
                    *o += gv;
                }
            }
        }
    }

    fn backward_row_cosine(
        &self,
        a: NodeId,
        b: NodeId,
        s: &[f64],
        g: &[f64],
        grads: &mut [Vec<f64>],
    ) {
        let (n, d) = self.shape(a);
        let m = self.rows(b);
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        let a_norms: Vec<f64> = (0..n)
            .map(|i| av[i * d..(i + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let b_norms: Vec<f64> = (0..m)
            .map(|j| bv[j * d..(j + 1) * d].iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();

        // dS/da_i = b_j/(|a_i||b_j|) - S_ij * a_i/|a_i|^2
        // dS/db_j = a_i/(|a_i||b_j|) - S_ij * b_j/|b_j|^2
        // Guarded entries carry zero gradient.
        for i in 0..n {
            if a_norms[i] < COSINE_NORM_EPS {
                continue;
            }
            let ar = &av[i * d..(i + 1) * d];
            let inv_a2 = 1.0 / (a_norms[i] * a_norms[i]);
            for j in 0..m {
                if b_norms[j] < COSINE_NORM_EPS {
                    continue;
                }
                let gv = g[i * m + j];
                if gv == 0.0 {
                    continue;
                }
                let br = &bv[j * d..(j + 1) * d];
                let sij = s[i * m + j];
                let inv_ab = 1.0 / (a_norms[i] * b_norms[j]);
                let inv_b2 = 1.0 / (b_norms[j] * b_norms[j]);
                {
                    let da = &mut grads[a.0][i * d..(i + 1) * d];
                    for l in 0..d {
                        da[l] += gv * (br[l] * inv_ab - sij * ar[l] * inv_a2);
                    }
                }
                {
                    let db = &mut grads[b.0][j * d..(j + 1) * d];
                    for l in 0..d {
                        db[l] += gv * (ar[l] * inv_ab - sij * br[l] * inv_b2);
                    }
                }
            }
        }
    }
}
