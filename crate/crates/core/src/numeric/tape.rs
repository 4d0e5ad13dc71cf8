//! Reverse-mode differentiation over a per-example tape.
//!
//! Every operation appends a node holding its forward value and the indices of
//! its inputs. [`Tape::backward`] walks the nodes in reverse insertion order,
//! which is a valid reverse topological order, and accumulates parameter
//! gradients into the [`ParamStore`]. Gradients accumulate across calls until
//! the store is stepped or zeroed.

use super::ops;
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    /// One row of a matrix parameter, as a vector.
    Row(ParamId, usize),
    /// `⟨param.row(r), v⟩` for each listed row.
    RowScores(ParamId, Vec<usize>, Var),
    Concat(Var, Var),
    Affine(Var, Var, Var),
    Relu(Var),
    Sigmoid(Var),
    LogSoftmax(Var),
    Pick(Var, usize),
    Dot(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f32),
    Sum(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f32 {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn row(&mut self, store: &ParamStore, id: ParamId, row: usize) -> Var {
        let v = Tensor::vector(store.value(id).row(row).to_vec());
        self.push(v, Op::Row(id, row))
    }

    /// Scores of the listed rows of a matrix parameter against vector `v`.
    pub fn row_scores(
        &mut self,
        store: &ParamStore,
        id: ParamId,
        rows: &[usize],
        v: Var,
    ) -> Result<Var> {
        let m = store.value(id);
        let vv = self.value(v);
        if vv.rank() != 1 || vv.len() != m.cols() {
            return Err(Error::Shape(format!(
                "row_scores: vector {:?} against rows of {:?}",
                vv.shape(),
                m.shape()
            )));
        }
        let scores = ops::row_scores(m, rows, vv.data());
        Ok(self.push(Tensor::vector(scores), Op::RowScores(id, rows.to_vec(), v)))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 1 || tb.rank() != 1 {
            return Err(Error::Shape("concat expects vectors".into()));
        }
        let mut data = ta.data().to_vec();
        data.extend_from_slice(tb.data());
        Ok(self.push(Tensor::vector(data), Op::Concat(a, b)))
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = ops::affine_forward(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(y, Op::Affine(x, w, b)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = ops::relu(self.value(x));
        self.push(y, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = ops::sigmoid(self.value(x));
        self.push(y, Op::Sigmoid(x))
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        if self.value(x).rank() != 1 {
            return Err(Error::Shape("log_softmax expects a vector".into()));
        }
        let y = ops::softmax_logprobs(self.value(x));
        Ok(self.push(y, Op::LogSoftmax(x)))
    }

    /// Element `index` of a vector, as a scalar.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let t = self.value(x);
        let v = *t
            .data()
            .get(index)
            .ok_or_else(|| Error::Shape(format!("pick {index} from {:?}", t.shape())))?;
        Ok(self.push(Tensor::scalar(v), Op::Pick(x, index)))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "dot")?;
        let v = ops::dot(self.value(a).data(), self.value(b).data());
        Ok(self.push(Tensor::scalar(v), Op::Dot(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b));
        Ok(self.push(y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "sub")?;
        let mut y = self.value(a).clone();
        for (x, z) in y.data_mut().iter_mut().zip(self.value(b).data()) {
            *x -= z;
        }
        Ok(self.push(y, Op::Sub(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: f32) -> Var {
        let mut y = self.value(x).clone();
        y.data_mut().iter_mut().for_each(|v| *v *= factor);
        self.push(y, Op::Scale(x, factor))
    }

    /// Sum of same-shaped terms; an empty list gives scalar zero.
    pub fn sum(&mut self, terms: &[Var]) -> Result<Var> {
        let Some(&first) = terms.first() else {
            return Ok(self.push(Tensor::scalar(0.0), Op::Sum(Vec::new())));
        };
        let mut y = self.value(first).clone();
        for &t in &terms[1..] {
            same_shape(&y, self.value(t), "sum")?;
            y.add_assign(self.value(t));
        }
        Ok(self.push(y, Op::Sum(terms.to_vec())))
    }

    /// Arithmetic mean of same-shaped terms; an empty list gives zero.
    pub fn mean(&mut self, terms: &[Var]) -> Result<Var> {
        let s = self.sum(terms)?;
        if terms.len() <= 1 {
            return Ok(s);
        }
        Ok(self.scale(s, 1.0 / terms.len() as f32))
    }

    /// Accumulates `∂loss/∂θ` into `store` for every parameter reached from
    /// the scalar node `loss`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let Some(node) = self.nodes.get(loss.0) else {
            return Err(Error::Backward(format!(
                "node {} was never recorded (tape holds {})",
                loss.0,
                self.nodes.len()
            )));
        };
        if node.value.len() != 1 {
            return Err(Error::Backward(format!(
                "loss must be scalar, got shape {:?}",
                node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f32>>], v: Var, len: usize) -> &mut [f32] {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    for (a, b) in store.grad_mut(*id).data_mut().iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                Op::Row(id, r) => {
                    for (a, b) in store.grad_mut(*id).row_mut(*r).iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                Op::RowScores(id, rows, v) => {
                    let d = self.value(*v).len();
                    let vval = self.value(*v).data().to_vec();
                    let mut gv = vec![0.0f32; d];
                    {
                        let m = store.value(*id);
                        for (&r, &gk) in rows.iter().zip(&g) {
                            if gk == 0.0 {
                                continue;
                            }
                            for (a, &mv) in gv.iter_mut().zip(m.row(r)) {
                                *a += gk * mv;
                            }
                        }
                    }
                    let gm = store.grad_mut(*id);
                    for (&r, &gk) in rows.iter().zip(&g) {
                        if gk == 0.0 {
                            continue;
                        }
                        for (a, &vv) in gm.row_mut(r).iter_mut().zip(&vval) {
                            *a += gk * vv;
                        }
                    }
                    for (a, b) in acc(&mut grads, *v, d).iter_mut().zip(&gv) {
                        *a += b;
                    }
                }
                Op::Concat(a, b) => {
                    let na = self.value(*a).len();
                    let nb = self.value(*b).len();
                    for (x, y) in acc(&mut grads, *a, na).iter_mut().zip(&g[..na]) {
                        *x += y;
                    }
                    for (x, y) in acc(&mut grads, *b, nb).iter_mut().zip(&g[na..]) {
                        *x += y;
                    }
                }
                Op::Affine(x, w, b) => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (fan_in, fan_out) = (wv.shape()[0], wv.shape()[1]);
                    let n = xv.rows();
                    // dx = g Wᵀ
                    let mut gx = vec![0.0f32; n * fan_in];
                    for r in 0..n {
                        let gr = &g[r * fan_out..(r + 1) * fan_out];
                        for k in 0..fan_in {
                            gx[r * fan_in + k] = ops::dot(gr, wv.row(k));
                        }
                    }
                    // dW = xᵀ g
                    let mut gw = vec![0.0f32; fan_in * fan_out];
                    for r in 0..n {
                        let gr = &g[r * fan_out..(r + 1) * fan_out];
                        for (k, &xk) in xv.row(r).iter().enumerate() {
                            if xk == 0.0 {
                                continue;
                            }
                            for (a, &gj) in gw[k * fan_out..(k + 1) * fan_out].iter_mut().zip(gr) {
                                *a += xk * gj;
                            }
                        }
                    }
                    // db = Σ_rows g
                    let mut gb = vec![0.0f32; fan_out];
                    for r in 0..n {
                        for (a, &gj) in gb.iter_mut().zip(&g[r * fan_out..(r + 1) * fan_out]) {
                            *a += gj;
                        }
                    }
                    for (dst, src) in [(*x, gx), (*w, gw), (*b, gb)] {
                        let len = src.len();
                        for (a, s) in acc(&mut grads, dst, len).iter_mut().zip(&src) {
                            *a += s;
                        }
                    }
                }
                Op::Relu(x) => {
                    let len = g.len();
                    let out = node.value.data();
                    let gx = acc(&mut grads, *x, len);
                    for ((a, &gy), &y) in gx.iter_mut().zip(&g).zip(out) {
                        if y > 0.0 {
                            *a += gy;
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let len = g.len();
                    let out = node.value.data();
                    let gx = acc(&mut grads, *x, len);
                    for ((a, &gy), &s) in gx.iter_mut().zip(&g).zip(out) {
                        *a += gy * s * (1.0 - s);
                    }
                }
                Op::LogSoftmax(x) => {
                    // dx_i = g_i − softmax_i · Σ_j g_j
                    let total: f32 = g.iter().sum();
                    let len = g.len();
                    let out = node.value.data();
                    let gx = acc(&mut grads, *x, len);
                    for ((a, &gy), &lp) in gx.iter_mut().zip(&g).zip(out) {
                        *a += gy - lp.exp() * total;
                    }
                }
                Op::Pick(x, i) => {
                    let len = self.value(*x).len();
                    acc(&mut grads, *x, len)[*i] += g[0];
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    let len = av.len();
                    for (x, &y) in acc(&mut grads, *a, len).iter_mut().zip(bv) {
                        *x += g[0] * y;
                    }
                    for (x, &y) in acc(&mut grads, *b, len).iter_mut().zip(av) {
                        *x += g[0] * y;
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        for (x, y) in acc(&mut grads, v, g.len()).iter_mut().zip(&g) {
                            *x += y;
                        }
                    }
                }
                Op::Sub(a, b) => {
                    for (x, y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g) {
                        *x += y;
                    }
                    for (x, y) in acc(&mut grads, *b, g.len()).iter_mut().zip(&g) {
                        *x -= y;
                    }
                }
                Op::Scale(x, f) => {
                    for (a, y) in acc(&mut grads, *x, g.len()).iter_mut().zip(&g) {
                        *a += f * y;
                    }
                }
                Op::Sum(terms) => {
                    for &t in terms {
                        for (a, y) in acc(&mut grads, t, g.len()).iter_mut().zip(&g) {
                            *a += y;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_sum_gradient_is_input_structure() {
        // loss = Σ_j (x W)_j with x fixed: ∂loss/∂W[k][j] = x_k.
        let mut store = ParamStore::new();
        let w = store
            .add("w", Tensor::matrix(3, 2, vec![0.3; 6]).unwrap())
            .unwrap();
        let b = store.add("b", Tensor::zeros(vec![2])).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, -2.0, 0.5]));
        let (wv, bv) = (tape.param(&store, w), tape.param(&store, b));
        let y = tape.affine(x, wv, bv).unwrap();
        let y0 = tape.pick(y, 0).unwrap();
        let y1 = tape.pick(y, 1).unwrap();
        let loss = tape.sum(&[y0, y1]).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(w).data(), &[1.0, 1.0, -2.0, -2.0, 0.5, 0.5]);
        assert_eq!(store.grad(b).data(), &[1.0, 1.0]);
    }

    #[test]
    fn two_backward_calls_double_gradients() {
        let mut store = ParamStore::new();
        let e = store
            .add(
                "e",
                Tensor::matrix(3, 2, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]).unwrap(),
            )
            .unwrap();
        let mut tape = Tape::new();
        let v = tape.row(&store, e, 0);
        let s = tape.row_scores(&store, e, &[0, 1, 2], v).unwrap();
        let lp = tape.log_softmax(s).unwrap();
        let loss = tape.pick(lp, 2).unwrap();
        tape.backward(loss, &mut store).unwrap();
        let once = store.grad(e).clone();
        tape.backward(loss, &mut store).unwrap();
        for (a, b) in store.grad(e).data().iter().zip(once.data()) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn backward_without_forward_fails() {
        let mut store = ParamStore::new();
        let tape = Tape::new();
        assert!(matches!(
            tape.backward(Var(0), &mut store),
            Err(Error::Backward(_))
        ));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut store = ParamStore::new();
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        assert!(tape.backward(v, &mut store).is_err());
    }

    /// Central differences in f64 on a small composite of every op.
    #[test]
    fn composite_matches_finite_differences() {
        let mut store = ParamStore::new();
        let e = store
            .add(
                "e",
                Tensor::matrix(3, 2, vec![0.1, 0.7, -0.3, 0.4, 0.5, -0.6]).unwrap(),
            )
            .unwrap();
        let w = store
            .add(
                "w",
                Tensor::matrix(4, 2, vec![0.2, -0.1, 0.3, 0.8, -0.5, 0.1, 0.4, 0.2]).unwrap(),
            )
            .unwrap();
        let b = store.add("b", Tensor::vector(vec![0.05, -0.02])).unwrap();

        let forward = |store: &ParamStore, tape: &mut Tape| -> Var {
            let u = tape.row(store, e, 0);
            let p = tape.row(store, e, 1);
            let x = tape.concat(u, p).unwrap();
            let (wv, bv) = (tape.param(store, w), tape.param(store, b));
            let h = tape.affine(x, wv, bv).unwrap();
            let h = tape.relu(h);
            let s = tape.row_scores(store, e, &[0, 1, 2], h).unwrap();
            let lp = tape.log_softmax(s).unwrap();
            let nll = tape.pick(lp, 2).unwrap();
            let nll = tape.scale(nll, -1.0);
            let q = tape.row(store, e, 2);
            let d = tape.dot(h, q).unwrap();
            let d2 = tape.dot(h, p).unwrap();
            let diff = tape.sub(d2, d).unwrap();
            let sg = tape.sigmoid(diff);
            let t = tape.add(nll, sg).unwrap();
            tape.mean(&[t, sg]).unwrap()
        };

        let mut tape = Tape::new();
        let loss = forward(&store, &mut tape);
        tape.backward(loss, &mut store).unwrap();

        let h = 1e-3f32;
        for id in [e, w, b] {
            let analytic = store.grad(id).clone();
            for k in 0..analytic.len() {
                let orig = store.value(id).data()[k];
                let eval = |delta: f32| {
                    let mut s = store.clone();
                    s.value_mut(id).data_mut()[k] = orig + delta;
                    let mut t = Tape::new();
                    let l = forward(&s, &mut t);
                    t.scalar(l) as f64
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h as f64);
                let a = analytic.data()[k] as f64;
                assert!(
                    (a - fd).abs() < 2e-3,
                    "{} [{k}]: {a} vs {fd}",
                    store.name(id)
                );
            }
        }
    }
}
