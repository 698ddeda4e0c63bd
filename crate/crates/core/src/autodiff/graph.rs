use super::{AutodiffError, Tensor};

/// Lower bound applied to the argument of [`Graph::log`].
pub const LOG_CLAMP: f64 = 1e-12;

/// Handle to a node of one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Sum(Var),
    Mean(Var),
    SumAxis(Var, AxisSplit),
    Exp(Var),
    Log(Var),
    Relu(Var),
    Sigmoid(Var),
    MaxScalar(Var, f64),
    Clamp(Var, f64, f64),
    Square(Var),
    SqNorm(Var),
    Dot(Var, Var),
    Softmax(Var, AxisSplit),
    Mse(Var, Var),
    GatherRows(Var, Vec<usize>),
    Pick(Var, Vec<usize>),
    Reshape(Var),
}

/// Flat index maps from output positions back to each (possibly broadcast) operand.
/// `None` means the operand already has the output shape.
#[derive(Debug)]
struct Broadcast {
    left: Option<Vec<usize>>,
    right: Option<Vec<usize>>,
}

impl Broadcast {
    fn left_index(&self, i: usize) -> usize {
        self.left.as_ref().map_or(i, |m| m[i])
    }

    fn right_index(&self, i: usize) -> usize {
        self.right.as_ref().map_or(i, |m| m[i])
    }
}

/// A tensor viewed as `outer × axis × inner` around one axis.
#[derive(Clone, Copy, Debug)]
struct AxisSplit {
    outer: usize,
    axis: usize,
    inner: usize,
}

impl AxisSplit {
    fn new(shape: &[usize], axis: usize) -> Self {
        AxisSplit {
            outer: shape[..axis].iter().product(),
            axis: shape[axis],
            inner: shape[axis + 1..].iter().product(),
        }
    }

    fn at(&self, o: usize, k: usize, i: usize) -> usize {
        (o * self.axis + k) * self.inner + i
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Tape of tensor operations supporting one reverse-mode sweep.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order. [`Graph::backward`] walks it once in reverse and
/// accumulates gradients additively across fan-out.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    consumed: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a tracked leaf; its gradient is available after `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// Registers an untracked leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` root with respect to `v`.
    ///
    /// Returns `None` before `backward` has run or for untracked nodes.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Discards computed gradients so `backward` may run again.
    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.consumed = false;
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op) -> Result<Var, AutodiffError> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: name });
        }
        let requires_grad = op_inputs(&op).iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: fn(Var, Var, Broadcast) -> Op,
    ) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out_shape = broadcast_shape(&sa, &sb).ok_or_else(|| AutodiffError::ShapeMismatch {
            op: name,
            left: sa.clone(),
            right: sb.clone(),
        })?;
        let bc = Broadcast {
            left: (sa != out_shape).then(|| broadcast_map(&sa, &out_shape)),
            right: (sb != out_shape).then(|| broadcast_map(&sb, &out_shape)),
        };
        let len: usize = out_shape.iter().product();
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let data = (0..len)
            .map(|i| f(da[bc.left_index(i)], db[bc.right_index(i)]))
            .collect();
        let value = Tensor::new(out_shape, data)?;
        self.push(name, value, make(a, b, bc))
    }

    /// Elementwise sum with numpy-style broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        let value = self.value(a).map(|v| v * c);
        self.push("scale", value, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        let value = self.value(a).map(|v| v + c);
        self.push("add_scalar", value, Op::AddScalar(a))
    }

    /// Matrix product of `n × k` and `k × p` operands.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (n, k, p) = (sa[0], sa[1], sb[1]);
        let data = matmul_raw(self.value(a).data(), self.value(b).data(), n, k, p);
        let value = Tensor::new(vec![n, p], data)?;
        self.push("matmul", value, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let shape = self.shape(a);
        if shape.len() != 2 {
            return Err(AutodiffError::InvalidAxis {
                op: "transpose",
                axis: 1,
                shape: shape.to_vec(),
            });
        }
        let (r, c) = (shape[0], shape[1]);
        let value = Tensor::new(vec![c, r], transpose_raw(self.value(a).data(), r, c))?;
        self.push("transpose", value, Op::Transpose(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(AutodiffError::NonFinite { op: "mean" });
        }
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean(a))
    }

    /// Sums along `axis`, keeping it with extent 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var, AutodiffError> {
        let shape = self.checked_axis("sum_axis", a, axis)?;
        let split = AxisSplit::new(&shape, axis);
        let src = self.value(a).data();
        let mut out = vec![0.0; split.outer * split.inner];
        for o in 0..split.outer {
            for k in 0..split.axis {
                for i in 0..split.inner {
                    out[o * split.inner + i] += src[split.at(o, k, i)];
                }
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = 1;
        let value = Tensor::new(out_shape, out)?;
        self.push("sum_axis", value, Op::SumAxis(a, split))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var, AutodiffError> {
        let extent = self.checked_axis("mean_axis", a, axis)?[axis];
        let s = self.sum_axis(a, axis)?;
        self.scale(s, 1.0 / extent as f64)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let value = self.value(a).map(f64::exp);
        self.push("exp", value, Op::Exp(a))
    }

    /// Natural log of `max(x, LOG_CLAMP)`; clamped entries receive zero gradient.
    pub fn log(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let value = self.value(a).map(|v| v.max(LOG_CLAMP).ln());
        self.push("log", value, Op::Log(a))
    }

    /// `max(x, 0)`, with zero gradient at exactly 0.
    pub fn relu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let value = self.value(a).map(|v| v.max(0.0));
        self.push("relu", value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let value = self.value(a).map(sigmoid);
        self.push("sigmoid", value, Op::Sigmoid(a))
    }

    /// `max(x, c)` elementwise; the gradient is 0 at an exact tie.
    pub fn max_scalar(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        let value = self.value(a).map(|v| v.max(c));
        self.push("max_scalar", value, Op::MaxScalar(a, c))
    }

    /// Clamps into `[lo, hi]`; gradient passes only strictly inside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, AutodiffError> {
        let value = self.value(a).map(|v| v.clamp(lo, hi));
        self.push("clamp", value, Op::Clamp(a, lo, hi))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let value = self.value(a).map(|v| v * v);
        self.push("square", value, Op::Square(a))
    }

    /// Squared L2 norm over all entries.
    pub fn sq_norm(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let s = self.value(a).data().iter().map(|v| v * v).sum();
        self.push("sq_norm", Tensor::scalar(s), Op::SqNorm(a))
    }

    /// Inner product of two equal-length vectors.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() || ta.ndim() > 1 {
            return Err(AutodiffError::ShapeMismatch {
                op: "dot",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let s = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
        self.push("dot", Tensor::scalar(s), Op::Dot(a, b))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, AutodiffError> {
        let shape = self.checked_axis("softmax", a, axis)?;
        let split = AxisSplit::new(&shape, axis);
        let src = self.value(a).data();
        let mut out = vec![0.0; src.len()];
        for o in 0..split.outer {
            for i in 0..split.inner {
                let max = (0..split.axis)
                    .map(|k| src[split.at(o, k, i)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for k in 0..split.axis {
                    let e = (src[split.at(o, k, i)] - max).exp();
                    out[split.at(o, k, i)] = e;
                    total += e;
                }
                for k in 0..split.axis {
                    out[split.at(o, k, i)] /= total;
                }
            }
        }
        let value = Tensor::new(shape, out)?;
        self.push("softmax", value, Op::Softmax(a, split))
    }

    /// Mean of squared differences over all entries.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() || ta.is_empty() {
            return Err(AutodiffError::ShapeMismatch {
                op: "mse",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let s = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / ta.len() as f64;
        self.push("mse", Tensor::scalar(s), Op::Mse(a, b))
    }

    /// Stacks rows `a[idx[0]], a[idx[1]], ...` of a matrix.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, AutodiffError> {
        let t = self.value(a);
        if t.ndim() != 2 {
            return Err(AutodiffError::InvalidAxis {
                op: "gather_rows",
                axis: 0,
                shape: t.shape().to_vec(),
            });
        }
        let (rows, cols) = (t.shape()[0], t.shape()[1]);
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &r in idx {
            if r >= rows {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "gather_rows",
                    index: r,
                    extent: rows,
                });
            }
            data.extend_from_slice(t.row(r));
        }
        let value = Tensor::new(vec![idx.len(), cols], data)?;
        self.push("gather_rows", value, Op::GatherRows(a, idx.to_vec()))
    }

    /// Picks `a[b, idx[b]]` from each row of a `B × N` matrix, giving shape `[B]`.
    pub fn pick(&mut self, a: Var, idx: &[usize]) -> Result<Var, AutodiffError> {
        let t = self.value(a);
        if t.ndim() != 2 || t.shape()[0] != idx.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "pick",
                left: t.shape().to_vec(),
                right: vec![idx.len()],
            });
        }
        let cols = t.shape()[1];
        let mut data = Vec::with_capacity(idx.len());
        for (b, &k) in idx.iter().enumerate() {
            if k >= cols {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "pick",
                    index: k,
                    extent: cols,
                });
            }
            data.push(t.get(b, k));
        }
        self.push("pick", Tensor::vector(data), Op::Pick(a, idx.to_vec()))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, AutodiffError> {
        let value = self.value(a).clone().reshaped(shape)?;
        self.push("reshape", value, Op::Reshape(a))
    }

    fn checked_axis(&self, op: &'static str, a: Var, axis: usize) -> Result<Vec<usize>, AutodiffError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(AutodiffError::InvalidAxis { op, axis, shape });
        }
        Ok(shape)
    }

    /// Reverse sweep from a scalar root.
    ///
    /// Afterwards every tracked node holds `d root / d node`; tracked leaves
    /// the root does not depend on receive zeros. A second call without
    /// [`Graph::reset_grads`] fails with [`AutodiffError::GraphConsumed`].
    pub fn backward(&mut self, root: Var) -> Result<(), AutodiffError> {
        if self.consumed {
            return Err(AutodiffError::GraphConsumed);
        }
        let root_shape = self.shape(root).to_vec();
        if self.value(root).len() != 1 {
            return Err(AutodiffError::NotScalar(root_shape));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(&root_shape, 1.0));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        for (idx, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grads[idx].is_none() {
                grads[idx] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let gd = g.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(self.nodes[v.0].value.shape()));
            f(slot.data_mut());
        };
        let val = |v: Var| self.nodes[v.0].value.data();

        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b, bc) | Op::Sub(a, b, bc) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                acc(*a, &mut |ga| {
                    for (i, &gi) in gd.iter().enumerate() {
                        ga[bc.left_index(i)] += gi;
                    }
                });
                acc(*b, &mut |gb| {
                    for (i, &gi) in gd.iter().enumerate() {
                        gb[bc.right_index(i)] += sign * gi;
                    }
                });
            }
            Op::Mul(a, b, bc) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for (i, &gi) in gd.iter().enumerate() {
                        ga[bc.left_index(i)] += gi * vb[bc.right_index(i)];
                    }
                });
                acc(*b, &mut |gb| {
                    for (i, &gi) in gd.iter().enumerate() {
                        gb[bc.right_index(i)] += gi * va[bc.left_index(i)];
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |ga| {
                for (x, &gi) in ga.iter_mut().zip(gd) {
                    *x += c * gi;
                }
            }),
            Op::AddScalar(a) | Op::Reshape(a) => acc(*a, &mut |ga| {
                for (x, &gi) in ga.iter_mut().zip(gd) {
                    *x += gi;
                }
            }),
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
                let (n, k, p) = (sa[0], sa[1], sb[1]);
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    let bt = transpose_raw(vb, k, p);
                    for (x, y) in ga.iter_mut().zip(matmul_raw(gd, &bt, n, p, k)) {
                        *x += y;
                    }
                });
                acc(*b, &mut |gb| {
                    let at = transpose_raw(va, n, k);
                    for (x, y) in gb.iter_mut().zip(matmul_raw(&at, gd, k, n, p)) {
                        *x += y;
                    }
                });
            }
            Op::Transpose(a) => {
                let s = out.shape();
                acc(*a, &mut |ga| {
                    for (x, y) in ga.iter_mut().zip(transpose_raw(gd, s[0], s[1])) {
                        *x += y;
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |ga| ga.iter_mut().for_each(|x| *x += gd[0])),
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.len() as f64;
                acc(*a, &mut |ga| ga.iter_mut().for_each(|x| *x += gd[0] / n));
            }
            Op::SumAxis(a, s) => acc(*a, &mut |ga| {
                for o in 0..s.outer {
                    for k in 0..s.axis {
                        for i in 0..s.inner {
                            ga[s.at(o, k, i)] += gd[o * s.inner + i];
                        }
                    }
                }
            }),
            Op::Exp(a) => acc(*a, &mut |ga| {
                for ((x, &gi), &y) in ga.iter_mut().zip(gd).zip(out.data()) {
                    *x += gi * y;
                }
            }),
            Op::Log(a) => {
                let va = val(*a);
                acc(*a, &mut |ga| {
                    for ((x, &gi), &v) in ga.iter_mut().zip(gd).zip(va) {
                        if v > LOG_CLAMP {
                            *x += gi / v;
                        }
                    }
                });
            }
            Op::Relu(a) => gate(acc, *a, gd, val(*a), |v| v > 0.0),
            Op::MaxScalar(a, c) => gate(acc, *a, gd, val(*a), |v| v > *c),
            Op::Clamp(a, lo, hi) => gate(acc, *a, gd, val(*a), |v| v > *lo && v < *hi),
            Op::Sigmoid(a) => acc(*a, &mut |ga| {
                for ((x, &gi), &y) in ga.iter_mut().zip(gd).zip(out.data()) {
                    *x += gi * y * (1.0 - y);
                }
            }),
            Op::Square(a) => {
                let va = val(*a);
                acc(*a, &mut |ga| {
                    for ((x, &gi), &v) in ga.iter_mut().zip(gd).zip(va) {
                        *x += 2.0 * gi * v;
                    }
                });
            }
            Op::SqNorm(a) => {
                let va = val(*a);
                acc(*a, &mut |ga| {
                    for (x, &v) in ga.iter_mut().zip(va) {
                        *x += 2.0 * gd[0] * v;
                    }
                });
            }
            Op::Dot(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for (x, &v) in ga.iter_mut().zip(vb) {
                        *x += gd[0] * v;
                    }
                });
                acc(*b, &mut |gb| {
                    for (x, &v) in gb.iter_mut().zip(va) {
                        *x += gd[0] * v;
                    }
                });
            }
            Op::Softmax(a, s) => {
                let y = out.data();
                acc(*a, &mut |ga| {
                    for o in 0..s.outer {
                        for i in 0..s.inner {
                            let inner: f64 = (0..s.axis).map(|k| gd[s.at(o, k, i)] * y[s.at(o, k, i)]).sum();
                            for k in 0..s.axis {
                                let j = s.at(o, k, i);
                                ga[j] += y[j] * (gd[j] - inner);
                            }
                        }
                    }
                });
            }
            Op::Mse(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let n = va.len() as f64;
                acc(*a, &mut |ga| {
                    for ((x, &p), &q) in ga.iter_mut().zip(va).zip(vb) {
                        *x += gd[0] * 2.0 * (p - q) / n;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((x, &p), &q) in gb.iter_mut().zip(va).zip(vb) {
                        *x -= gd[0] * 2.0 * (p - q) / n;
                    }
                });
            }
            Op::GatherRows(a, idx) => {
                let cols = out.cols();
                acc(*a, &mut |ga| {
                    for (b, &r) in idx.iter().enumerate() {
                        for j in 0..cols {
                            ga[r * cols + j] += gd[b * cols + j];
                        }
                    }
                });
            }
            Op::Pick(a, idx) => {
                let cols = self.nodes[a.0].value.cols();
                acc(*a, &mut |ga| {
                    for (b, &k) in idx.iter().enumerate() {
                        ga[b * cols + k] += gd[b];
                    }
                });
            }
        }
    }
}

fn gate(
    mut acc: impl FnMut(Var, &mut dyn FnMut(&mut [f64])),
    a: Var,
    gd: &[f64],
    input: &[f64],
    open: impl Fn(f64) -> bool,
) {
    acc(a, &mut |ga| {
        for ((x, &gi), &v) in ga.iter_mut().zip(gd).zip(input) {
            if open(v) {
                *x += gi;
            }
        }
    });
}

fn op_inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::Add(a, b, _) | Op::Sub(a, b, _) | Op::Mul(a, b, _) => vec![*a, *b],
        Op::MatMul(a, b) | Op::Dot(a, b) | Op::Mse(a, b) => vec![*a, *b],
        Op::Scale(a, _)
        | Op::AddScalar(a)
        | Op::Transpose(a)
        | Op::Sum(a)
        | Op::Mean(a)
        | Op::SumAxis(a, _)
        | Op::Exp(a)
        | Op::Log(a)
        | Op::Relu(a)
        | Op::Sigmoid(a)
        | Op::MaxScalar(a, _)
        | Op::Clamp(a, _, _)
        | Op::Square(a)
        | Op::SqNorm(a)
        | Op::Softmax(a, _)
        | Op::GatherRows(a, _)
        | Op::Pick(a, _)
        | Op::Reshape(a) => vec![*a],
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For each flat position of `out`, the flat position in `input` it reads from.
fn broadcast_map(input: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let offset = rank - input.len();
    let mut in_strides = vec![0; rank];
    let mut stride = 1;
    for i in (0..input.len()).rev() {
        in_strides[i + offset] = if input[i] == 1 { 0 } else { stride };
        stride *= input[i];
    }
    let len: usize = out.iter().product();
    let mut map = Vec::with_capacity(len);
    let mut counter = vec![0usize; rank];
    for _ in 0..len {
        map.push(counter.iter().zip(&in_strides).map(|(c, s)| c * s).sum());
        for d in (0..rank).rev() {
            counter[d] += 1;
            if counter[d] < out[d] {
                break;
            }
            counter[d] = 0;
        }
    }
    map
}

fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * p];
    for i in 0..n {
        let row = &mut out[i * p..(i + 1) * p];
        for (l, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[l * p..(l + 1) * p]) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn dot_of_orthogonal_vectors_is_zero() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![1.0, 0.0]));
        let b = g.constant(Tensor::vector(vec![0.0, 1.0]));
        let d = g.dot(a, b).unwrap();
        assert_eq!(g.scalar(d), 0.0);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![0.0, 0.0]));
        let s = g.softmax(a, 0).unwrap();
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn mean_squared_norm_of_three_four() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![3.0, 4.0]));
        let n = g.sq_norm(a).unwrap();
        let m = g.scale(n, 0.5).unwrap();
        assert_eq!(g.scalar(m), 12.5);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, -2.0, 5.0]));
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn self_dot_gradient_is_twice_value() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![3.0]));
        let d = g.dot(x, x).unwrap();
        g.backward(d).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn diamond_accumulates_both_paths() {
        // y = exp(x) * x^2  =>  dy/dx = exp(x) x^2 + 2x exp(x)
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(0.7));
        let e = g.exp(x).unwrap();
        let s = g.square(x).unwrap();
        let y = g.mul(e, s).unwrap();
        g.backward(y).unwrap();
        let v: f64 = 0.7;
        let expected = v.exp() * v * v + 2.0 * v * v.exp();
        assert!(approx(g.grad(x).unwrap().item(), expected));
    }

    #[test]
    fn broadcast_add_reduces_gradient() {
        let mut g = Graph::new();
        let m = g.param(Tensor::zeros(&[3, 2]));
        let row = g.param(Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let col = g.param(Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap());
        let s = g.add(m, row).unwrap();
        let s = g.add(s, col).unwrap();
        assert_eq!(g.value(s).data(), &[2.0, 3.0, 3.0, 4.0, 4.0, 5.0]);
        let t = g.sum(s).unwrap();
        g.backward(t).unwrap();
        assert_eq!(g.grad(row).unwrap().data(), &[3.0, 3.0]);
        assert_eq!(g.grad(col).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn scalar_broadcasts_against_matrix() {
        let mut g = Graph::new();
        let m = g.constant(Tensor::full(&[2, 2], 1.0));
        let r = g.param(Tensor::scalar(0.5));
        let d = g.sub(m, r).unwrap();
        let t = g.mean(d).unwrap();
        g.backward(t).unwrap();
        assert!(approx(g.grad(r).unwrap().item(), -1.0));
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[4, 3]));
        match g.add(a, b) {
            Err(AutodiffError::ShapeMismatch { left, right, .. }) => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![4, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(g.matmul(a, a).is_err());
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::scalar(1000.0));
        assert!(matches!(g.exp(a), Err(AutodiffError::NonFinite { op: "exp" })));
    }

    #[test]
    fn log_clamps_small_inputs() {
        let mut g = Graph::new();
        let a = g.param(Tensor::vector(vec![0.0, 1.0]));
        let l = g.log(a).unwrap();
        assert!(approx(g.value(l).data()[0], LOG_CLAMP.ln()));
        let s = g.sum(l).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn hinge_tie_has_zero_gradient() {
        let mut g = Graph::new();
        let a = g.param(Tensor::vector(vec![0.0, 1.0, -1.0]));
        let h = g.max_scalar(a, 0.0).unwrap();
        let s = g.sum(h).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn backward_requires_scalar_root_and_runs_once() {
        let mut g = Graph::new();
        let a = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(a), Err(AutodiffError::NotScalar(_))));
        let s = g.sum(a).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.backward(s), Err(AutodiffError::GraphConsumed));
        g.reset_grads();
        assert!(g.grad(a).is_none());
        g.backward(s).unwrap();
    }

    #[test]
    fn unreached_leaf_gets_zero_gradient() {
        let mut g = Graph::new();
        let a = g.param(Tensor::vector(vec![1.0, 2.0]));
        let b = g.param(Tensor::vector(vec![3.0]));
        let s = g.sum(a).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(b).unwrap().data(), &[0.0]);
    }

    #[test]
    fn constants_carry_no_gradient() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let s = g.sum(a).unwrap();
        assert!(!g.requires_grad(s));
        g.backward(s).unwrap();
        assert!(g.grad(a).is_none());
    }

    #[test]
    fn matmul_matches_hand_product() {
        let mut g = Graph::new();
        let a = g.param(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let b = g.param(Tensor::from_rows(&[vec![5.0], vec![6.0]]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[17.0, 39.0]);
        let s = g.sum(c).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[5.0, 6.0, 5.0, 6.0]);
        assert_eq!(g.grad(b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn pick_and_gather_validate_indices() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        assert!(g.pick(a, &[0, 3]).is_err());
        assert!(g.gather_rows(a, &[2]).is_err());
        let p = g.pick(a, &[2, 1]).unwrap();
        assert_eq!(g.shape(p), &[2]);
    }
}
