//! Minimal reverse-mode differentiation tape over f64 vectors and matrices.
//!
//! Values are computed eagerly as nodes are pushed; `backward` runs the
//! adjoint pass in reverse node order. Matrices only occur as leaves
//! (stored row-major); every derived node is a vector or scalar.

use thiserror::Error;

#[derive(Debug, Error)]
#[error("shape mismatch: {0}")]
pub struct ShapeMismatch(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatVec(NodeId, NodeId),
    VecMat(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Dot(NodeId, NodeId),
    Softmax(NodeId),
    Stack(Vec<NodeId>),
    NegLogPick(NodeId, usize),
    Scale(NodeId, f64),
    SumSquares(NodeId),
}

struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    grad: Vec<f64>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, values: Vec<f64>) -> NodeId {
        debug_assert_eq!(values.len(), rows * cols);
        debug_assert!(values.iter().all(|v| v.is_finite()), "non-finite value");
        let grad = vec![0.0; values.len()];
        self.nodes.push(Node {
            op,
            rows,
            cols,
            values,
            grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn values(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].values
    }

    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].values.len(), 1);
        self.nodes[id.0].values[0]
    }

    fn len(&self, id: NodeId) -> usize {
        self.nodes[id.0].values.len()
    }

    pub fn vector(&mut self, values: Vec<f64>) -> NodeId {
        let n = values.len();
        self.push(Op::Leaf, n, 1, values)
    }

    pub fn matrix(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> NodeId {
        self.push(Op::Leaf, rows, cols, values)
    }

    /// Matrix-vector product `M x`.
    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> Result<NodeId, ShapeMismatch> {
        let (rows, cols) = (self.nodes[m.0].rows, self.nodes[m.0].cols);
        if cols != self.len(x) {
            return Err(ShapeMismatch(format!(
                "matvec [{rows}x{cols}] with vector of {}",
                self.len(x)
            )));
        }
        let mut out = vec![0.0; rows];
        {
            let mv = &self.nodes[m.0].values;
            let xv = &self.nodes[x.0].values;
            for r in 0..rows {
                let row = &mv[r * cols..(r + 1) * cols];
                out[r] = row.iter().zip(xv).map(|(a, b)| a * b).sum();
            }
        }
        Ok(self.push(Op::MatVec(m, x), rows, 1, out))
    }

    /// Vector-matrix product `x^T M`.
    pub fn vecmat(&mut self, x: NodeId, m: NodeId) -> Result<NodeId, ShapeMismatch> {
        let (rows, cols) = (self.nodes[m.0].rows, self.nodes[m.0].cols);
        if rows != self.len(x) {
            return Err(ShapeMismatch(format!(
                "vecmat vector of {} with [{rows}x{cols}]",
                self.len(x)
            )));
        }
        let mut out = vec![0.0; cols];
        {
            let mv = &self.nodes[m.0].values;
            let xv = &self.nodes[x.0].values;
            for r in 0..rows {
                let xr = xv[r];
                for c in 0..cols {
                    out[c] += xr * mv[r * cols + c];
                }
            }
        }
        Ok(self.push(Op::VecMat(x, m), cols, 1, out))
    }

    fn elementwise(
        &mut self,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, ShapeMismatch> {
        if self.len(a) != self.len(b) {
            return Err(ShapeMismatch(format!(
                "elementwise {} vs {}",
                self.len(a),
                self.len(b)
            )));
        }
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| f(*x, *y))
            .collect();
        let n = out.len();
        Ok(self.push(op, n, 1, out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, ShapeMismatch> {
        self.elementwise(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, ShapeMismatch> {
        self.elementwise(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, ShapeMismatch> {
        self.elementwise(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .map(|x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        let n = out.len();
        self.push(Op::Sigmoid(a), n, 1, out)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|x| x.tanh()).collect();
        let n = out.len();
        self.push(Op::Tanh(a), n, 1, out)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, ShapeMismatch> {
        if self.len(a) != self.len(b) {
            return Err(ShapeMismatch(format!(
                "dot {} vs {}",
                self.len(a),
                self.len(b)
            )));
        }
        let out: f64 = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x * y)
            .sum();
        Ok(self.push(Op::Dot(a, b), 1, 1, vec![out]))
    }

    /// Numerically stable softmax over a vector.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let vals = &self.nodes[a.0].values;
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = vals.iter().map(|x| (x - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let out: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        let n = out.len();
        self.push(Op::Softmax(a), n, 1, out)
    }

    /// Stack scalar nodes into a vector.
    pub fn stack(&mut self, parts: Vec<NodeId>) -> NodeId {
        let out: Vec<f64> = parts.iter().map(|p| self.scalar(*p)).collect();
        let n = out.len();
        self.push(Op::Stack(parts), n, 1, out)
    }

    /// Negative log of one probability: `-ln p[idx]`.
    pub fn neg_log_pick(&mut self, p: NodeId, idx: usize) -> NodeId {
        let v = self.nodes[p.0].values[idx].max(1e-300);
        self.push(Op::NegLogPick(p, idx), 1, 1, vec![-v.ln()])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|x| x * c).collect();
        let n = out.len();
        self.push(Op::Scale(a, c), n, 1, out)
    }

    pub fn sum_squares(&mut self, a: NodeId) -> NodeId {
        let out: f64 = self.nodes[a.0].values.iter().map(|x| x * x).sum();
        self.push(Op::SumSquares(a), 1, 1, vec![out])
    }

    /// Reverse pass seeding `d(output)/d(output) = 1`.
    pub fn backward(&mut self, output: NodeId) {
        for node in &mut self.nodes {
            node.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[output.0].grad[0] = 1.0;
        for idx in (0..=output.0).rev() {
            let op = self.nodes[idx].op.clone();
            let grad = self.nodes[idx].grad.clone();
            if grad.iter().all(|g| *g == 0.0) {
                continue;
            }
            match op {
                Op::Leaf => {}
                Op::MatVec(m, x) => {
                    let cols = self.nodes[m.0].cols;
                    let xv = self.nodes[x.0].values.clone();
                    let mv = self.nodes[m.0].values.clone();
                    for (r, g) in grad.iter().enumerate() {
                        if *g == 0.0 {
                            continue;
                        }
                        for c in 0..cols {
                            self.nodes[m.0].grad[r * cols + c] += g * xv[c];
                            self.nodes[x.0].grad[c] += g * mv[r * cols + c];
                        }
                    }
                }
                Op::VecMat(x, m) => {
                    let cols = self.nodes[m.0].cols;
                    let rows = self.nodes[m.0].rows;
                    let xv = self.nodes[x.0].values.clone();
                    let mv = self.nodes[m.0].values.clone();
                    for r in 0..rows {
                        let mut acc = 0.0;
                        for c in 0..cols {
                            let g = grad[c];
                            if g == 0.0 {
                                continue;
                            }
                            acc += g * mv[r * cols + c];
                            self.nodes[m.0].grad[r * cols + c] += xv[r] * g;
                        }
                        self.nodes[x.0].grad[r] += acc;
                    }
                }
                Op::Add(a, b) => {
                    for (k, g) in grad.iter().enumerate() {
                        self.nodes[a.0].grad[k] += g;
                        self.nodes[b.0].grad[k] += g;
                    }
                }
                Op::Sub(a, b) => {
                    for (k, g) in grad.iter().enumerate() {
                        self.nodes[a.0].grad[k] += g;
                        self.nodes[b.0].grad[k] -= g;
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[a.0].values.clone();
                    let bv = self.nodes[b.0].values.clone();
                    for (k, g) in grad.iter().enumerate() {
                        self.nodes[a.0].grad[k] += g * bv[k];
                        self.nodes[b.0].grad[k] += g * av[k];
                    }
                }
                Op::Sigmoid(a) => {
                    let out = self.nodes[idx].values.clone();
                    for (k, g) in grad.iter().enumerate() {
                        self.nodes[a.0].grad[k] += g * out[k] * (1.0 - out[k]);
                    }
                }
                Op::Tanh(a) => {
                    let out = self.nodes[idx].values.clone();
                    for (k, g) in grad.iter().enumerate() {
                        self.nodes[a.0].grad[k] += g * (1.0 - out[k] * out[k]);
                    }
                }
                Op::Dot(a, b) => {
                    let g = grad[0];
                    let av = self.nodes[a.0].values.clone();
                    let bv = self.nodes[b.0].values.clone();
                    for k in 0..av.len() {
                        self.nodes[a.0].grad[k] += g * bv[k];
                        self.nodes[b.0].grad[k] += g * av[k];
                    }
                }
                Op::Softmax(a) => {
                    let p = self.nodes[idx].values.clone();
                    let weighted: f64 = grad.iter().zip(&p).map(|(g, pk)| g * pk).sum();
                    for k in 0..p.len() {
                        self.nodes[a.0].grad[k] += p[k] * (grad[k] - weighted);
                    }
                }
                Op::Stack(parts) => {
                    for (k, part) in parts.iter().enumerate() {
                        self.nodes[part.0].grad[0] += grad[k];
                    }
                }
                Op::NegLogPick(p, target) => {
                    let pv = self.nodes[p.0].values[target].max(1e-300);
                    self.nodes[p.0].grad[target] += -grad[0] / pv;
                }
                Op::Scale(a, c) => {
                    for (k, g) in grad.iter().enumerate() {
                        self.nodes[a.0].grad[k] += g * c;
                    }
                }
                Op::SumSquares(a) => {
                    let av = self.nodes[a.0].values.clone();
                    for (k, v) in av.iter().enumerate() {
                        self.nodes[a.0].grad[k] += 2.0 * v * grad[0];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_forward_and_backward() {
        let mut tape = Tape::new();
        let m = tape.matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let x = tape.vector(vec![5.0, 6.0]);
        let y = tape.matvec(m, x).unwrap();
        assert_eq!(tape.values(y), &[17.0, 39.0]);
        let s = tape.dot(y, y).unwrap();
        tape.backward(s);
        // ds/dx = 2 M^T y
        assert_eq!(tape.grad(x), &[2.0 * (17.0 + 3.0 * 39.0), 2.0 * (2.0 * 17.0 + 4.0 * 39.0)]);
    }

    #[test]
    fn softmax_sums_to_one_and_shift_invariant() {
        let mut tape = Tape::new();
        let a = tape.vector(vec![1.0, 2.0, 3.0]);
        let p = tape.softmax(a);
        let sum: f64 = tape.values(p).iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let b = tape.vector(vec![101.0, 102.0, 103.0]);
        let q = tape.softmax(b);
        for (x, y) in tape.values(p).iter().zip(tape.values(q)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_gradient_matches_finite_difference_exactly() {
        // f(x) = x.x is quadratic so central differences are exact up to
        // round-off
        let xs = vec![0.3, -1.2, 2.0];
        let analytic = {
            let mut tape = Tape::new();
            let x = tape.vector(xs.clone());
            let f = tape.dot(x, x).unwrap();
            tape.backward(f);
            tape.grad(x).to_vec()
        };
        let eps = 1e-4;
        for k in 0..xs.len() {
            let eval = |delta: f64| {
                let mut shifted = xs.clone();
                shifted[k] += delta;
                let mut tape = Tape::new();
                let x = tape.vector(shifted);
                let f = tape.dot(x, x).unwrap();
                tape.scalar(f)
            };
            let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
            assert!((analytic[k] - fd).abs() < 1e-9);
        }
    }

    #[test]
    fn composed_graph_gradient_close_to_finite_difference() {
        let ws = vec![0.1, -0.4, 0.2, 0.3, 0.5, -0.2];
        let xs = vec![0.7, -0.3];
        let run = |ws: &[f64], xs: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
            let mut tape = Tape::new();
            let w = tape.matrix(3, 2, ws.to_vec());
            let x = tape.vector(xs.to_vec());
            let h = tape.matvec(w, x).unwrap();
            let t = tape.tanh(h);
            let s = tape.sigmoid(t);
            let p = tape.softmax(s);
            let loss = tape.neg_log_pick(p, 1);
            tape.backward(loss);
            (
                tape.scalar(loss),
                tape.grad(w).to_vec(),
                tape.grad(x).to_vec(),
            )
        };
        let (_, gw, gx) = run(&ws, &xs);
        let eps = 1e-5;
        for k in 0..ws.len() {
            let mut plus = ws.clone();
            plus[k] += eps;
            let mut minus = ws.clone();
            minus[k] -= eps;
            let fd = (run(&plus, &xs).0 - run(&minus, &xs).0) / (2.0 * eps);
            assert!((gw[k] - fd).abs() < 1e-7, "w[{k}]: {} vs {fd}", gw[k]);
        }
        for k in 0..xs.len() {
            let mut plus = xs.clone();
            plus[k] += eps;
            let mut minus = xs.clone();
            minus[k] -= eps;
            let fd = (run(&ws, &plus).0 - run(&ws, &minus).0) / (2.0 * eps);
            assert!((gx[k] - fd).abs() < 1e-7);
        }
    }

    #[test]
    fn shape_mismatch_reported() {
        let mut tape = Tape::new();
        let m = tape.matrix(2, 3, vec![0.0; 6]);
        let x = tape.vector(vec![1.0, 2.0]);
        assert!(tape.matvec(m, x).is_err());
        let a = tape.vector(vec![1.0]);
        assert!(tape.add(a, x).is_err());
    }
}
