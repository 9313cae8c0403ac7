use std::sync::atomic::{AtomicU32, Ordering};

use super::{Real, Tensor};
use crate::error::{AncError, Result};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Handle to a value recorded on a particular [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    id: u32,
    tape: u32,
}

#[derive(Clone, Copy, Debug)]
enum Op<T> {
    Leaf,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    /// `a + row` with `row` (1×C) broadcast over every row of `a`.
    AddRow(u32, u32),
    /// `a ⊙ row` with `row` (1×C) broadcast over every row of `a`.
    MulRow(u32, u32),
    Scale(u32, T),
    AddScalar(u32, T),
    /// `out[r, i*P + j] = x[r, i] * w[j] + b[j]`.
    Project { x: u32, w: u32, b: u32 },
    /// Sums contiguous groups of `group` columns.
    GroupSum { a: u32, group: usize },
    Tanh(u32),
    Square(u32),
    Mean(u32),
    Sum(u32),
    Sqrt(u32),
}

#[derive(Debug)]
struct Node<T> {
    rows: usize,
    cols: usize,
    value: Vec<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Ordered record of the primitive operations of one forward pass.
///
/// Backward replays the record in exact reverse order. Gradients accumulate
/// additively, so a value consumed twice receives the sum of both
/// contributions.
#[derive(Debug)]
pub struct Tape<T = f32> {
    id: u32,
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    /// Number of recorded operations, leaves included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<T>, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            needs_grad,
        });
        Var { id, tape: self.id }
    }

    fn node(&self, v: Var) -> Result<&Node<T>> {
        if v.tape != self.id {
            return Err(AncError::Usage(format!(
                "value belongs to tape {} but was used on tape {}",
                v.tape, self.id
            )));
        }
        self.nodes
            .get(v.id as usize)
            .ok_or_else(|| AncError::Usage(format!("unknown value id {}", v.id)))
    }

    /// Records a leaf that receives a gradient during backward.
    pub fn variable(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.rows(), t.cols(), t.values().to_vec(), Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.rows(), t.cols(), t.values().to_vec(), Op::Leaf, false)
    }

    pub fn constant_from(&mut self, rows: usize, cols: usize, values: Vec<T>) -> Result<Var> {
        if values.len() != rows * cols {
            return Err(AncError::Shape {
                op: "constant",
                left: (rows, cols),
                right: (1, values.len()),
            });
        }
        Ok(self.push(rows, cols, values, Op::Leaf, false))
    }

    /// Gradient-blocked copy of `v` with `f` applied elementwise.
    pub fn detach_map(&mut self, v: Var, f: impl Fn(T) -> T) -> Result<Var> {
        let n = self.node(v)?;
        let (rows, cols) = (n.rows, n.cols);
        let value = n.value.iter().map(|&x| f(x)).collect();
        Ok(self.push(rows, cols, value, Op::Leaf, false))
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.node(v).expect("var from another tape").value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v).expect("var from another tape");
        (n.rows, n.cols)
    }

    /// Copies the value (and gradient, if any) out as a [`Tensor`].
    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = self.node(v).expect("var from another tape");
        let mut t = Tensor::from_vec(n.rows, n.cols, n.value.clone()).expect("node shape");
        if let Some(Some(g)) = self.grads.get(v.id as usize) {
            t.grad_mut().copy_from_slice(g);
        }
        t
    }

    /// Scalar value of a 1×1 result.
    pub fn item(&self, v: Var) -> T {
        self.value(v)[0]
    }

    /// Gradient accumulated at `v` by the last backward pass. `None` for
    /// values that were unreachable or gradient-blocked.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        if v.tape != self.id {
            return None;
        }
        self.grads.get(v.id as usize).and_then(|g| g.as_deref())
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (na, nb) = (self.node(a)?, self.node(b)?);
        if (na.rows, na.cols) != (nb.rows, nb.cols) {
            return Err(AncError::Shape {
                op,
                left: (na.rows, na.cols),
                right: (nb.rows, nb.cols),
            });
        }
        Ok((na.rows, na.cols))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, rec: Op<T>) -> Result<Var> {
        let (rows, cols) = self.same_shape(op, a, b)?;
        let (na, nb) = (&self.nodes[a.id as usize], &self.nodes[b.id as usize]);
        let value = na.value.iter().zip(&nb.value).map(|(&x, &y)| f(x, y)).collect();
        let ng = na.needs_grad || nb.needs_grad;
        Ok(self.push(rows, cols, value, rec, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a.id, b.id))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a.id, b.id))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a.id, b.id))
    }

    fn row_broadcast(&mut self, op: &'static str, a: Var, row: Var, f: impl Fn(T, T) -> T, rec: Op<T>) -> Result<Var> {
        let (na, nr) = (self.node(a)?, self.node(row)?);
        if nr.rows != 1 || nr.cols != na.cols {
            return Err(AncError::Shape {
                op,
                left: (na.rows, na.cols),
                right: (nr.rows, nr.cols),
            });
        }
        let (rows, cols) = (na.rows, na.cols);
        let mut value = Vec::with_capacity(rows * cols);
        for chunk in na.value.chunks_exact(cols.max(1)) {
            value.extend(chunk.iter().zip(&nr.value).map(|(&x, &w)| f(x, w)));
        }
        let ng = na.needs_grad || nr.needs_grad;
        Ok(self.push(rows, cols, value, rec, ng))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_broadcast("add_row", a, row, |x, w| x + w, Op::AddRow(a.id, row.id))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_broadcast("mul_row", a, row, |x, w| x * w, Op::MulRow(a.id, row.id))
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, rec: Op<T>) -> Result<Var> {
        let n = self.node(a)?;
        let (rows, cols, ng) = (n.rows, n.cols, n.needs_grad);
        let value = n.value.iter().map(|&x| f(x)).collect();
        Ok(self.push(rows, cols, value, rec, ng))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        self.unary(a, |x| x * s, Op::Scale(a.id, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Result<Var> {
        self.unary(a, |x| x + s, Op::AddScalar(a.id, s))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x.tanh(), Op::Tanh(a.id))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x * x, Op::Square(a.id))
    }

    /// Elementwise square root. Its derivative at exactly zero is taken as 0.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x.sqrt(), Op::Sqrt(a.id))
    }

    /// Sum of all entries, as a 1×1 value.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let n = self.node(a)?;
        let (s, ng) = (n.value.iter().copied().sum::<T>(), n.needs_grad);
        Ok(self.push(1, 1, vec![s], Op::Sum(a.id), ng))
    }

    /// Mean of all entries, as a 1×1 value.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.node(a)?;
        if n.value.is_empty() {
            return Err(AncError::Usage("mean of an empty tensor".into()));
        }
        let m = n.value.iter().copied().sum::<T>() / T::from_f64(n.value.len() as f64);
        let ng = n.needs_grad;
        Ok(self.push(1, 1, vec![m], Op::Mean(a.id), ng))
    }

    /// Outer-product projection of every row of `x` (R×N) by the weight row
    /// `w` (1×P) plus bias row `b` (1×P); the result is R×(N·P) with entry
    /// `(r, i*P + j) = x[r,i]·w[j] + b[j]`.
    pub fn project(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        self.same_shape("project", w, b)?;
        let (nx, nw, nb) = (self.node(x)?, self.node(w)?, self.node(b)?);
        if nw.rows != 1 {
            return Err(AncError::Shape {
                op: "project",
                left: (nx.rows, nx.cols),
                right: (nw.rows, nw.cols),
            });
        }
        let (rows, n, p) = (nx.rows, nx.cols, nw.cols);
        let mut value = Vec::with_capacity(rows * n * p);
        for &xi in &nx.value {
            value.extend(nw.value.iter().zip(&nb.value).map(|(&wj, &bj)| xi * wj + bj));
        }
        let ng = nx.needs_grad || nw.needs_grad || nb.needs_grad;
        Ok(self.push(
            rows,
            n * p,
            value,
            Op::Project {
                x: x.id,
                w: w.id,
                b: b.id,
            },
            ng,
        ))
    }

    /// Row-wise reduction summing each run of `group` adjacent columns.
    pub fn group_sum(&mut self, a: Var, group: usize) -> Result<Var> {
        let n = self.node(a)?;
        if group == 0 || n.cols % group != 0 {
            return Err(AncError::Shape {
                op: "group_sum",
                left: (n.rows, n.cols),
                right: (1, group),
            });
        }
        let (rows, cols, ng) = (n.rows, n.cols / group, n.needs_grad);
        let value = n.value.chunks_exact(group).map(|c| c.iter().copied().sum()).collect();
        Ok(self.push(rows, cols, value, Op::GroupSum { a: a.id, group }, ng))
    }

    /// Accumulates `d loss / d v` into every reachable value that needs a
    /// gradient. Replaces the result of any previous backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let n = self.node(loss)?;
        if (n.rows, n.cols) != (1, 1) {
            return Err(AncError::Usage(format!(
                "backward needs a 1x1 loss, got {}x{}",
                n.rows, n.cols
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.id as usize] = Some(vec![T::one()]);

        for id in (0..=loss.id as usize).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        // Constant leaves and blocked branches never report a gradient.
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.needs_grad {
                *g = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let wants = |i: u32| nodes[i as usize].needs_grad;
        match node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if wants(a) {
                    accumulate(grads, a, g.iter().copied());
                }
                if wants(b) {
                    accumulate(grads, b, g.iter().copied());
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    accumulate(grads, a, g.iter().copied());
                }
                if wants(b) {
                    accumulate(grads, b, g.iter().map(|&x| -x));
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&nodes[a as usize].value, &nodes[b as usize].value);
                if wants(a) {
                    accumulate(grads, a, g.iter().zip(vb).map(|(&gi, &y)| gi * y));
                }
                if wants(b) {
                    accumulate(grads, b, g.iter().zip(va).map(|(&gi, &x)| gi * x));
                }
            }
            Op::AddRow(a, row) => {
                if wants(a) {
                    accumulate(grads, a, g.iter().copied());
                }
                if wants(row) {
                    let cols = node.cols;
                    let mut acc = vec![T::zero(); cols];
                    for gr in g.chunks_exact(cols) {
                        acc.iter_mut().zip(gr).for_each(|(s, &x)| *s = *s + x);
                    }
                    accumulate(grads, row, acc.into_iter());
                }
            }
            Op::MulRow(a, row) => {
                let cols = node.cols;
                let (va, vr) = (&nodes[a as usize].value, &nodes[row as usize].value);
                if wants(a) {
                    let it = g
                        .chunks_exact(cols)
                        .flat_map(|gr| gr.iter().zip(vr).map(|(&gi, &w)| gi * w));
                    accumulate(grads, a, it);
                }
                if wants(row) {
                    let mut acc = vec![T::zero(); cols];
                    for (gr, ar) in g.chunks_exact(cols).zip(va.chunks_exact(cols)) {
                        for ((s, &gi), &x) in acc.iter_mut().zip(gr).zip(ar) {
                            *s = *s + gi * x;
                        }
                    }
                    accumulate(grads, row, acc.into_iter());
                }
            }
            Op::Scale(a, s) => {
                if wants(a) {
                    accumulate(grads, a, g.iter().map(|&x| x * s));
                }
            }
            Op::AddScalar(a, _) => {
                if wants(a) {
                    accumulate(grads, a, g.iter().copied());
                }
            }
            Op::Project { x, w, b } => {
                let p = nodes[w as usize].cols;
                let (vx, vw) = (&nodes[x as usize].value, &nodes[w as usize].value);
                if wants(x) {
                    let it = g
                        .chunks_exact(p)
                        .map(|gr| gr.iter().zip(vw).map(|(&gi, &wj)| gi * wj).sum::<T>());
                    accumulate(grads, x, it);
                }
                if wants(w) {
                    let mut acc = vec![T::zero(); p];
                    for (gr, &xi) in g.chunks_exact(p).zip(vx) {
                        acc.iter_mut().zip(gr).for_each(|(s, &gi)| *s = *s + gi * xi);
                    }
                    accumulate(grads, w, acc.into_iter());
                }
                if wants(b) {
                    let mut acc = vec![T::zero(); p];
                    for gr in g.chunks_exact(p) {
                        acc.iter_mut().zip(gr).for_each(|(s, &gi)| *s = *s + gi);
                    }
                    accumulate(grads, b, acc.into_iter());
                }
            }
            Op::GroupSum { a, group } => {
                if wants(a) {
                    let it = g.iter().flat_map(|&gi| std::iter::repeat(gi).take(group));
                    accumulate(grads, a, it);
                }
            }
            Op::Tanh(a) => {
                if wants(a) {
                    let it = g.iter().zip(&node.value).map(|(&gi, &t)| gi * (T::one() - t * t));
                    accumulate(grads, a, it);
                }
            }
            Op::Square(a) => {
                if wants(a) {
                    let two = T::from_f64(2.0);
                    let va = &nodes[a as usize].value;
                    accumulate(grads, a, g.iter().zip(va).map(|(&gi, &x)| gi * two * x));
                }
            }
            Op::Sqrt(a) => {
                if wants(a) {
                    let half = T::from_f64(0.5);
                    let it = g.iter().zip(&node.value).map(|(&gi, &s)| {
                        if s > T::zero() {
                            gi * half / s
                        } else {
                            T::zero()
                        }
                    });
                    accumulate(grads, a, it);
                }
            }
            Op::Sum(a) => {
                if wants(a) {
                    let len = nodes[a as usize].value.len();
                    accumulate(grads, a, std::iter::repeat(g[0]).take(len));
                }
            }
            Op::Mean(a) => {
                if wants(a) {
                    let len = nodes[a as usize].value.len();
                    let gi = g[0] / T::from_f64(len as f64);
                    accumulate(grads, a, std::iter::repeat(gi).take(len));
                }
            }
        }
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Vec<T>>], id: u32, contrib: impl Iterator<Item = T>) {
    match &mut grads[id as usize] {
        Some(g) => g.iter_mut().zip(contrib).for_each(|(s, c)| *s = *s + c),
        slot @ None => *slot = Some(contrib.collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t64(rows: usize, cols: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn tanh_of_zero_is_zero() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(&t64(1, 1, &[0.0]));
        let y = tape.tanh(x).unwrap();
        assert_eq!(tape.item(y), 0.0);
    }

    #[test]
    fn hadamard_product() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(&t64(1, 2, &[1.0, 2.0]));
        let b = tape.constant(&t64(1, 2, &[3.0, 4.0]));
        let c = tape.mul(a, b).unwrap();
        assert_eq!(tape.value(c), &[3.0, 8.0]);
    }

    #[test]
    fn tanh_matches_series_reference() {
        // tanh(x) = (e^{2x} - 1) / (e^{2x} + 1) with e^{2x} from its Taylor series.
        let x = 0.5f64;
        let mut term = 1.0f64;
        let mut e2x = 1.0f64;
        for n in 1..60 {
            term *= 2.0 * x / n as f64;
            e2x += term;
        }
        let reference = (e2x - 1.0) / (e2x + 1.0);
        let mut tape = Tape::<f64>::new();
        let v = tape.constant(&t64(1, 1, &[x]));
        let y = tape.tanh(v).unwrap();
        assert!((tape.item(y) - reference).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::<f32>::new();
        let a = tape.constant(&Tensor::zeros(2, 3));
        let b = tape.constant(&Tensor::zeros(3, 2));
        let err = tape.add(a, b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)") && err.contains("(3, 2)"), "{err}");
    }

    #[test]
    fn linear_gradient_is_input() {
        let mut tape = Tape::<f64>::new();
        let w = tape.variable(&t64(1, 3, &[0.3, -1.0, 2.0]));
        let x = tape.constant(&t64(1, 3, &[4.0, 5.0, -6.0]));
        let p = tape.mul(w, x).unwrap();
        let loss = tape.sum(p).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[4.0, 5.0, -6.0]);
        assert!(tape.grad(x).is_none());
    }

    #[test]
    fn tanh_gradient_at_origin_is_one() {
        let mut tape = Tape::<f64>::new();
        let w = tape.variable(&t64(1, 1, &[0.0]));
        let y = tape.tanh(w).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[1.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut tape = Tape::<f64>::new();
        let w = tape.variable(&t64(1, 1, &[3.0]));
        let y = tape.mul(w, w).unwrap();
        let z = tape.add(y, w).unwrap();
        tape.backward(z).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[7.0]);
    }

    #[test]
    fn backward_rejects_foreign_or_nonscalar_output() {
        let mut a = Tape::<f64>::new();
        let mut b = Tape::<f64>::new();
        let v = b.variable(&t64(1, 1, &[1.0]));
        assert!(matches!(a.backward(v), Err(AncError::Usage(_))));
        let m = b.variable(&t64(1, 2, &[1.0, 2.0]));
        assert!(matches!(b.backward(m), Err(AncError::Usage(_))));
    }

    #[test]
    fn detached_copy_blocks_gradient() {
        let mut tape = Tape::<f64>::new();
        let w = tape.variable(&t64(1, 2, &[0.4, -0.2]));
        let r = tape.detach_map(w, |x| x.signum()).unwrap();
        let d = tape.sub(w, r).unwrap();
        let s = tape.square(d).unwrap();
        let loss = tape.sum(s).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(r).is_none());
        let g = tape.grad(w).unwrap();
        assert!((g[0] - 2.0 * (0.4 - 1.0)).abs() < 1e-12);
        assert!((g[1] - 2.0 * (-0.2 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn project_and_group_sum_shapes() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(&t64(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let w = tape.constant(&t64(1, 2, &[1.0, 10.0]));
        let b = tape.constant(&t64(1, 2, &[0.5, 0.0]));
        let p = tape.project(x, w, b).unwrap();
        assert_eq!(tape.shape(p), (2, 6));
        assert_eq!(&tape.value(p)[..4], &[1.5, 10.0, 2.5, 20.0]);
        let s = tape.group_sum(p, 2).unwrap();
        assert_eq!(tape.shape(s), (2, 3));
        assert_eq!(tape.value(s)[0], 11.5);
        assert!(tape.group_sum(p, 4).is_err());
    }
}
