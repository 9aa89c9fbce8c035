use super::ops::{add_row_bias, attend_outer, sigmoid, softmax_rows};
use super::{Matrix, ParamId, ParamStore};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(usize, usize),
    /// `a * b^T`
    MatMulT(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    Softmax(usize),
    /// Row `i` of `a` scaled by `g[i, 0]`; differentiable in both.
    ScaleRows(usize, usize),
    /// Row `i` of `a` scaled by a recorded constant.
    MaskRows(usize, Vec<f64>),
    Attend {
        q: usize,
        k: usize,
        v: usize,
        weights: Vec<f64>,
    },
    Concat(Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Record of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.param(id).value.clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a.0, b.0)))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(value, Op::MatMulT(a.0, b.0)))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(Error::dim(
                "add_bias",
                format!("bias {:?} for input {:?}", b.shape(), x.shape()),
            ));
        }
        let mut value = x.clone();
        add_row_bias(&mut value, b);
        Ok(self.push(value, Op::AddBias(a.0, bias.0)))
    }

    /// `input * weight + bias`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let h = self.matmul(input, weight)?;
        self.add_bias(h, bias)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b))?;
        Ok(self.push(value, Op::Add(a.0, b.0)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        self.push(value, Op::Relu(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a.0))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        self.push(value, Op::Softmax(a.0))
    }

    /// Multiply row `i` of `a` by `gate[i, 0]`.
    pub fn scale_rows(&mut self, a: Var, gate: Var) -> Result<Var> {
        let (x, g) = (self.value(a), self.value(gate));
        if g.cols() != 1 || g.rows() != x.rows() {
            return Err(Error::dim(
                "scale_rows",
                format!("gate {:?} for input {:?}", g.shape(), x.shape()),
            ));
        }
        let mut value = x.clone();
        for i in 0..value.rows() {
            let s = g[(i, 0)];
            value.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        Ok(self.push(value, Op::ScaleRows(a.0, gate.0)))
    }

    /// Multiply row `i` of `a` by the constant `factors[i]`.
    pub fn mask_rows(&mut self, a: Var, factors: Vec<f64>) -> Result<Var> {
        let x = self.value(a);
        if factors.len() != x.rows() {
            return Err(Error::dim(
                "mask_rows",
                format!("{} factors for {} rows", factors.len(), x.rows()),
            ));
        }
        let mut value = x.clone();
        for (i, &s) in factors.iter().enumerate() {
            value.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        Ok(self.push(value, Op::MaskRows(a.0, factors)))
    }

    /// Per-row outer-product attention, see [`super::attend_outer`].
    pub fn attend(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        let (value, weights) = attend_outer(self.value(q), self.value(k), self.value(v))?;
        Ok(self.push(
            value,
            Op::Attend {
                q: q.0,
                k: k.0,
                v: v.0,
                weights,
            },
        ))
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|p| self.value(*p).rows())
            .ok_or_else(|| Error::dim("concat", "no inputs"))?;
        if parts.iter().any(|p| self.value(*p).rows() != rows) {
            return Err(Error::dim("concat", "row counts differ"));
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut value = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut offset = 0;
            for p in parts {
                let src = self.value(*p).row(i);
                value.row_mut(i)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        Ok(self.push(value, Op::Concat(parts.iter().map(|p| p.0).collect())))
    }

    /// Reverse pass.
    ///
    /// Every `(var, upstream)` seed contributes `upstream` as the gradient of
    /// the scalar loss with respect to `var`; seeds on the same var add up.
    /// Parameter gradients are *added* to `store` (call
    /// [`ParamStore::zero_grads`] between steps).
    pub fn backward(&self, seeds: &[(Var, &Matrix)], store: &mut ParamStore) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward called before any forward pass".into()));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        for (var, upstream) in seeds {
            let node = self
                .nodes
                .get(var.0)
                .ok_or_else(|| Error::State(format!("seed refers to unrecorded value {}", var.0)))?;
            if node.value.shape() != upstream.shape() {
                return Err(Error::dim(
                    "backward",
                    format!("upstream {:?} for value {:?}", upstream.shape(), node.value.shape()),
                ));
            }
            accumulate(&mut grads[var.0], upstream);
        }

        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    store.param_mut(*id).grad.add_assign(&g)?;
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(&self.nodes[*b].value)?;
                    let db = self.nodes[*a].value.t_matmul(&g)?;
                    accumulate(&mut grads[*a], &da);
                    accumulate(&mut grads[*b], &db);
                }
                Op::MatMulT(a, b) => {
                    // out = A B^T: dA = G B, dB = G^T A
                    let da = g.matmul(&self.nodes[*b].value)?;
                    let db = g.t_matmul(&self.nodes[*a].value)?;
                    accumulate(&mut grads[*a], &da);
                    accumulate(&mut grads[*b], &db);
                }
                Op::AddBias(a, bias) => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (d, v) in db.data_mut().iter_mut().zip(g.row(i)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads[*a], &g);
                    accumulate(&mut grads[*bias], &db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[*a], &g);
                    accumulate(&mut grads[*b], &g);
                }
                Op::Relu(a) => {
                    let x = &self.nodes[*a].value;
                    let mut da = g;
                    for (d, &xv) in da.data_mut().iter_mut().zip(x.data()) {
                        if xv <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads[*a], &da);
                }
                Op::Sigmoid(a) => {
                    let mut da = g;
                    for (d, &y) in da.data_mut().iter_mut().zip(node.value.data()) {
                        *d *= y * (1.0 - y);
                    }
                    accumulate(&mut grads[*a], &da);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut da = g;
                    for i in 0..y.rows() {
                        let yr = y.row(i);
                        let dr = da.row_mut(i);
                        let inner: f64 = yr.iter().zip(dr.iter()).map(|(p, d)| p * d).sum();
                        for (d, p) in dr.iter_mut().zip(yr) {
                            *d = p * (*d - inner);
                        }
                    }
                    accumulate(&mut grads[*a], &da);
                }
                Op::ScaleRows(a, gate) => {
                    let x = &self.nodes[*a].value;
                    let s = &self.nodes[*gate].value;
                    let mut da = g.clone();
                    let mut dg = Matrix::zeros(s.rows(), 1);
                    for i in 0..x.rows() {
                        let si = s[(i, 0)];
                        dg[(i, 0)] = g.row(i).iter().zip(x.row(i)).map(|(a, b)| a * b).sum();
                        da.row_mut(i).iter_mut().for_each(|v| *v *= si);
                    }
                    accumulate(&mut grads[*a], &da);
                    accumulate(&mut grads[*gate], &dg);
                }
                Op::MaskRows(a, factors) => {
                    let mut da = g;
                    for (i, &s) in factors.iter().enumerate() {
                        da.row_mut(i).iter_mut().for_each(|v| *v *= s);
                    }
                    accumulate(&mut grads[*a], &da);
                }
                Op::Attend { q, k, v, weights } => {
                    let (dq, dk, dv) = attend_backward(
                        &self.nodes[*q].value,
                        &self.nodes[*k].value,
                        &self.nodes[*v].value,
                        weights,
                        &g,
                    );
                    accumulate(&mut grads[*q], &dq);
                    accumulate(&mut grads[*k], &dk);
                    accumulate(&mut grads[*v], &dv);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.nodes[p].value.cols();
                        let dp = g.slice_cols(offset, w);
                        accumulate(&mut grads[p], &dp);
                        offset += w;
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: &Matrix) {
    match slot {
        Some(acc) => acc.add_assign(g).expect("gradient shapes are fixed by the forward pass"),
        None => *slot = Some(g.clone()),
    }
}

// For one row: S[a][b] = q[a] k[b], A = softmax_rows(S), y[a] = sum_b A[a][b] v[b].
fn attend_backward(q: &Matrix, k: &Matrix, v: &Matrix, weights: &[f64], g: &Matrix) -> (Matrix, Matrix, Matrix) {
    let (n, d) = q.shape();
    let mut dq = Matrix::zeros(n, d);
    let mut dk = Matrix::zeros(n, d);
    let mut dv = Matrix::zeros(n, d);
    let mut ds = vec![0.0; d];
    for i in 0..n {
        let (qi, ki, vi, gi) = (q.row(i), k.row(i), v.row(i), g.row(i));
        let block = &weights[i * d * d..(i + 1) * d * d];
        for a in 0..d {
            let arow = &block[a * d..(a + 1) * d];
            // dA[a][b] = g[a] v[b]; softmax backward gives dS.
            let inner: f64 = arow.iter().zip(vi).map(|(w, vb)| w * gi[a] * vb).sum();
            for b in 0..d {
                ds[b] = arow[b] * (gi[a] * vi[b] - inner);
                dv[(i, b)] += arow[b] * gi[a];
            }
            let mut dqa = 0.0;
            for b in 0..d {
                dqa += ds[b] * ki[b];
                dk[(i, b)] += ds[b] * qi[a];
            }
            dq[(i, a)] += dqa;
        }
    }
    (dq, dk, dv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::ParamKind;

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let tape = Tape::new();
        let mut store = ParamStore::new();
        let g = Matrix::zeros(1, 1);
        let err = tape.backward(&[(Var(0), &g)], &mut store).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn linear_map_gradient_is_outer_product() {
        // loss = sum(x W) with x fixed: dL/dW[k][j] = x[k].
        let mut store = ParamStore::new();
        let w = store
            .insert("w", ParamKind::Weight, Matrix::from_rows(&[[0.3, -1.0, 2.0], [0.7, 0.1, 0.0]]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let x = tape.input(Matrix::from_rows(&[[2.0, -3.0]]).unwrap());
        let wv = tape.param(&store, w);
        let out = tape.matmul(x, wv).unwrap();
        let ones = Matrix::filled(1, 3, 1.0);
        tape.backward(&[(out, &ones)], &mut store).unwrap();
        assert_eq!(store.param(w).grad.data(), &[2.0, 2.0, 2.0, -3.0, -3.0, -3.0]);

        // A second call without zeroing doubles every entry.
        tape.backward(&[(out, &ones)], &mut store).unwrap();
        assert_eq!(store.param(w).grad.data(), &[4.0, 4.0, 4.0, -6.0, -6.0, -6.0]);
    }

    #[test]
    fn seed_shape_must_match() {
        let mut tape = Tape::new();
        let x = tape.input(Matrix::zeros(2, 2));
        let mut store = ParamStore::new();
        let bad = Matrix::zeros(1, 2);
        assert!(matches!(
            tape.backward(&[(x, &bad)], &mut store),
            Err(Error::Dimension { .. })
        ));
    }
}
