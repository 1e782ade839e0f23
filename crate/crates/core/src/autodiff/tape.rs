//! Reverse-mode automatic differentiation over a linear operation tape.
//!
//! Forward calls record each operation together with the value it produced;
//! [`Tape::backward`] replays the records in reverse, accumulating adjoints.
//! Replaying in reverse record order guarantees every node is visited after
//! all of its consumers.

use super::kernels::{self, GridCoord};
use super::real::Real;
use super::tensor::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a value on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul { a: TensorId, b: TensorId },
    Add { a: TensorId, b: TensorId },
    Sub { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    AddBias { a: TensorId, bias: TensorId },
    Scale { a: TensorId, c: T },
    AddConst { a: TensorId },
    Tanh { a: TensorId },
    Sigmoid { a: TensorId },
    Log { a: TensorId },
    Softmax { a: TensorId },
    LogSoftmax { a: TensorId },
    Embed { table: TensorId, ids: Vec<usize> },
    SumAll { a: TensorId },
    MeanAll { a: TensorId },
    Concat { parts: Vec<TensorId> },
    Reshape { a: TensorId },
    MeanRows { a: TensorId, group: usize },
    Conv2d { input: TensorId, weight: TensorId, kernel: usize, stride: usize, cols: Vec<T> },
    GridSample { input: TensorId, coords: Vec<GridCoord> },
}

struct Node<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
    requires: bool,
    op: Op<T>,
}

/// Records a forward computation and replays it in reverse for gradients.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
    bindings: Vec<(ParamId, TensorId)>,
    bytes: usize,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), bindings: Vec::new(), bytes: 0 }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Total bytes allocated for node values and saved buffers so far.
    /// Used by the benchmark harness as a peak-memory estimate.
    pub fn bytes_allocated(&self) -> usize {
        self.bytes
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn data(&self, id: TensorId) -> &[T] {
        &self.nodes[id.0].data
    }

    pub fn grad(&self, id: TensorId) -> Option<&[T]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn scalar_value(&self, id: TensorId) -> T {
        self.nodes[id.0].data[0]
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, requires: bool, op: Op<T>) -> TensorId {
        self.bytes += data.len() * std::mem::size_of::<T>();
        if let Op::Conv2d { cols, .. } = &op {
            self.bytes += cols.len() * std::mem::size_of::<T>();
        }
        self.nodes.push(Node { shape, data, grad: None, requires, op });
        TensorId(self.nodes.len() - 1)
    }

    fn check_finite(&self, id: TensorId, op: &'static str) -> Result<TensorId> {
        if self.nodes[id.0].data.iter().all(|v| v.is_finite()) {
            Ok(id)
        } else {
            Err(Error::NumericFault { op })
        }
    }

    fn requires(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires
    }

    // ── Leaves ───────────────────────────────────────────────────────

    /// Non-differentiable leaf (model inputs, constant masks, ...).
    pub fn input(&mut self, shape: Vec<usize>, data: Vec<T>) -> TensorId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.push(shape, data, false, Op::Leaf)
    }

    pub fn input_f32(&mut self, shape: Vec<usize>, data: &[f32]) -> TensorId {
        let lifted = data.iter().map(|&v| T::from_f32(v)).collect();
        self.input(shape, lifted)
    }

    pub fn fill(&mut self, shape: Vec<usize>, value: f64) -> TensorId {
        let numel = shape.iter().product();
        self.input(shape, vec![T::from_f64(value); numel])
    }

    /// Leaf bound to a stored parameter; its gradient flows back to the store
    /// through [`Tape::accumulate_param_grads`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> TensorId {
        let t = store.get(id);
        let data = t.data.iter().map(|&v| T::from_f32(v)).collect();
        let tid = self.push(t.shape.clone(), data, true, Op::Param(id));
        self.bindings.push((id, tid));
        tid
    }

    // ── Elementwise and linear algebra ───────────────────────────────

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch { op: "matmul", lhs: sa.to_vec(), rhs: sb.to_vec() });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = kernels::matmul(&self.nodes[a.0].data, &self.nodes[b.0].data, m, k, n);
        let req = self.requires(a) || self.requires(b);
        let id = self.push(vec![m, n], data, req, Op::MatMul { a, b });
        self.check_finite(id, "matmul")
    }

    fn binary_same_shape(
        &mut self,
        a: TensorId,
        b: TensorId,
        op_name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: op_name,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let req = self.requires(a) || self.requires(b);
        let shape = self.shape(a).to_vec();
        let id = self.push(shape, data, req, op);
        self.check_finite(id, op_name)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "add", |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "sub", |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "mul", |x, y| x * y, Op::Mul { a, b })
    }

    /// Broadcast-add a vector over the last axis: [..., c] + [c].
    pub fn add_bias(&mut self, a: TensorId, bias: TensorId) -> Result<TensorId> {
        let c = *self.shape(a).last().unwrap_or(&0);
        if self.nodes[bias.0].data.len() != c {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(bias).to_vec(),
            });
        }
        let bdata = &self.nodes[bias.0].data;
        let data = self.nodes[a.0]
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bdata[i % c])
            .collect();
        let req = self.requires(a) || self.requires(bias);
        let shape = self.shape(a).to_vec();
        let id = self.push(shape, data, req, Op::AddBias { a, bias });
        self.check_finite(id, "add_bias")
    }

    fn unary(
        &mut self,
        a: TensorId,
        op_name: &'static str,
        f: impl Fn(T) -> T,
        op: Op<T>,
    ) -> Result<TensorId> {
        let data = self.nodes[a.0].data.iter().map(|&x| f(x)).collect();
        let req = self.requires(a);
        let shape = self.shape(a).to_vec();
        let id = self.push(shape, data, req, op);
        self.check_finite(id, op_name)
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let cv = T::from_f64(c);
        self.unary(a, "scale", |x| x * cv, Op::Scale { a, c: cv })
    }

    pub fn add_const(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let cv = T::from_f64(c);
        self.unary(a, "add_const", |x| x + cv, Op::AddConst { a })
    }

    pub fn tanh(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(a, "tanh", |x| x.tanh(), Op::Tanh { a })
    }

    pub fn sigmoid(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(
            a,
            "sigmoid",
            |x| T::one() / (T::one() + (-x).exp()),
            Op::Sigmoid { a },
        )
    }

    pub fn log(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(a, "log", |x| x.ln(), Op::Log { a })
    }

    // ── Softmax family (last axis, max-subtracted) ───────────────────

    fn last_axis(&self, id: TensorId, op: &'static str) -> Result<(usize, usize)> {
        let shape = self.shape(id);
        let c = *shape.last().ok_or(Error::ShapeMismatch {
            op,
            lhs: shape.to_vec(),
            rhs: vec![],
        })?;
        Ok((self.nodes[id.0].data.len() / c, c))
    }

    pub fn softmax(&mut self, a: TensorId) -> Result<TensorId> {
        if !self.nodes[a.0].data.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericFault { op: "softmax(input)" });
        }
        let (rows, c) = self.last_axis(a, "softmax")?;
        let mut data = vec![T::zero(); rows * c];
        for r in 0..rows {
            let x = &self.nodes[a.0].data[r * c..(r + 1) * c];
            let m = x.iter().cloned().fold(T::neg_infinity(), T::max);
            let out = &mut data[r * c..(r + 1) * c];
            let mut s = T::zero();
            for (o, &v) in out.iter_mut().zip(x) {
                *o = (v - m).exp();
                s += *o;
            }
            for o in out.iter_mut() {
                *o = *o / s;
            }
        }
        let req = self.requires(a);
        let shape = self.shape(a).to_vec();
        let id = self.push(shape, data, req, Op::Softmax { a });
        self.check_finite(id, "softmax")
    }

    pub fn log_softmax(&mut self, a: TensorId) -> Result<TensorId> {
        if !self.nodes[a.0].data.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericFault { op: "log_softmax(input)" });
        }
        let (rows, c) = self.last_axis(a, "log_softmax")?;
        let mut data = vec![T::zero(); rows * c];
        for r in 0..rows {
            let x = &self.nodes[a.0].data[r * c..(r + 1) * c];
            let m = x.iter().cloned().fold(T::neg_infinity(), T::max);
            let logsum = x.iter().map(|&v| (v - m).exp()).sum::<T>().ln() + m;
            for (o, &v) in data[r * c..(r + 1) * c].iter_mut().zip(x) {
                *o = v - logsum;
            }
        }
        let req = self.requires(a);
        let shape = self.shape(a).to_vec();
        let id = self.push(shape, data, req, Op::LogSoftmax { a });
        self.check_finite(id, "log_softmax")
    }

    // ── Lookup, reductions, shaping ──────────────────────────────────

    /// Row lookup: table [v, e] gathered at `ids` -> [ids.len(), e].
    pub fn embed(&mut self, table: TensorId, ids: &[usize]) -> Result<TensorId> {
        let shape = self.shape(table).to_vec();
        if shape.len() != 2 {
            return Err(Error::ShapeMismatch { op: "embed", lhs: shape, rhs: vec![] });
        }
        let (v, e) = (shape[0], shape[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::InvalidArg(format!("embed id {bad} out of range {v}")));
        }
        let mut data = Vec::with_capacity(ids.len() * e);
        for &i in ids {
            data.extend_from_slice(&self.nodes[table.0].data[i * e..(i + 1) * e]);
        }
        let req = self.requires(table);
        let id = self.push(
            vec![ids.len(), e],
            data,
            req,
            Op::Embed { table, ids: ids.to_vec() },
        );
        self.check_finite(id, "embed")
    }

    pub fn sum_all(&mut self, a: TensorId) -> Result<TensorId> {
        let s: T = self.nodes[a.0].data.iter().cloned().sum();
        let req = self.requires(a);
        let id = self.push(vec![1], vec![s], req, Op::SumAll { a });
        self.check_finite(id, "sum_all")
    }

    pub fn mean_all(&mut self, a: TensorId) -> Result<TensorId> {
        let n = self.nodes[a.0].data.len();
        if n == 0 {
            return Err(Error::InvalidArg("mean_all over empty tensor".into()));
        }
        let s: T = self.nodes[a.0].data.iter().cloned().sum();
        let mean = s / T::from_f64(n as f64);
        let req = self.requires(a);
        let id = self.push(vec![1], vec![mean], req, Op::MeanAll { a });
        self.check_finite(id, "mean_all")
    }

    /// Concatenate along the last axis; all leading extents must agree.
    pub fn concat(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        let first = parts.first().ok_or(Error::InvalidArg("concat of nothing".into()))?;
        let lead = self.shape(*first)[..self.shape(*first).len() - 1].to_vec();
        let rows: usize = lead.iter().product();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: self.shape(*first).to_vec(),
                    rhs: s.to_vec(),
                });
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &wd) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.nodes[p.0].data[r * wd..(r + 1) * wd]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let req = parts.iter().any(|&p| self.requires(p));
        let id = self.push(shape, data, req, Op::Concat { parts: parts.to_vec() });
        self.check_finite(id, "concat")
    }

    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        if shape.iter().product::<usize>() != self.nodes[a.0].data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(a).to_vec(),
                rhs: shape,
            });
        }
        let data = self.nodes[a.0].data.clone();
        let req = self.requires(a);
        Ok(self.push(shape, data, req, Op::Reshape { a }))
    }

    /// Mean over consecutive groups of `group` rows: [n*group, d] -> [n, d].
    pub fn mean_rows(&mut self, a: TensorId, group: usize) -> Result<TensorId> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 || group == 0 || s[0] % group != 0 {
            return Err(Error::ShapeMismatch { op: "mean_rows", lhs: s, rhs: vec![group] });
        }
        let (rows, d) = (s[0] / group, s[1]);
        let inv = T::from_f64(1.0 / group as f64);
        let mut data = vec![T::zero(); rows * d];
        for r in 0..rows {
            let out = &mut data[r * d..(r + 1) * d];
            for g in 0..group {
                let src = &self.nodes[a.0].data[(r * group + g) * d..(r * group + g + 1) * d];
                for (o, &v) in out.iter_mut().zip(src) {
                    *o += v;
                }
            }
            for o in out.iter_mut() {
                *o = *o * inv;
            }
        }
        let req = self.requires(a);
        let id = self.push(vec![rows, d], data, req, Op::MeanRows { a, group });
        self.check_finite(id, "mean_rows")
    }

    /// Strided 2-D convolution over an equirect tensor [h, w, cin]:
    /// circular padding along width, zero padding of kernel/2 along height.
    /// Weight layout is [kernel*kernel*cin, cout]; output is [oh, ow, cout].
    pub fn conv2d(&mut self, input: TensorId, weight: TensorId, kernel: usize, stride: usize) -> Result<TensorId> {
        let si = self.shape(input).to_vec();
        let sw = self.shape(weight).to_vec();
        if si.len() != 3 || sw.len() != 2 || sw[0] != kernel * kernel * si[2] {
            return Err(Error::ShapeMismatch { op: "conv2d", lhs: si, rhs: sw });
        }
        let (h, w, cin) = (si[0], si[1], si[2]);
        let cout = sw[1];
        let (oh, ow) = kernels::conv_out_dims(h, w, kernel, stride);
        let cols = kernels::im2col(&self.nodes[input.0].data, h, w, cin, kernel, stride);
        let data = kernels::matmul(&cols, &self.nodes[weight.0].data, oh * ow, sw[0], cout);
        let req = self.requires(input) || self.requires(weight);
        let id = self.push(
            vec![oh, ow, cout],
            data,
            req,
            Op::Conv2d { input, weight, kernel, stride, cols },
        );
        self.check_finite(id, "conv2d")
    }

    /// Bilinear lookup of channel vectors at fractional (u, v) coordinates:
    /// input [h, w, c] sampled at `coords` -> [coords.len(), c]. Longitude
    /// (u) wraps around, latitude (v) clamps at the poles. Differentiable in
    /// the input only; coordinates are fixed.
    pub fn grid_sample(&mut self, input: TensorId, coords: &[GridCoord]) -> Result<TensorId> {
        let s = self.shape(input).to_vec();
        if s.len() != 3 {
            return Err(Error::ShapeMismatch { op: "grid_sample", lhs: s, rhs: vec![] });
        }
        let (h, w, c) = (s[0], s[1], s[2]);
        let src = &self.nodes[input.0].data;
        let mut data = vec![T::zero(); coords.len() * c];
        for (i, &coord) in coords.iter().enumerate() {
            let out = &mut data[i * c..(i + 1) * c];
            for (row, col, wt) in kernels::bilinear_taps(coord, h, w) {
                let wt = T::from_f64(wt);
                if wt == T::zero() {
                    continue;
                }
                let base = (row * w + col) * c;
                for (o, &x) in out.iter_mut().zip(&src[base..base + c]) {
                    *o += wt * x;
                }
            }
        }
        let req = self.requires(input);
        let id = self.push(
            vec![coords.len(), c],
            data,
            req,
            Op::GridSample { input, coords: coords.to_vec() },
        );
        self.check_finite(id, "grid_sample")
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Fills per-node gradients for every
    /// tensor that (transitively) requires grad; fan-out accumulates.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::NonScalarLoss { shape: self.shape(loss).to_vec() });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let gout = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.adjoint(i, &gout, &mut grads);
            grads[i] = Some(gout);
        }

        for (i, g) in grads.into_iter().enumerate() {
            if let Some(g) = &g {
                if !g.iter().all(|v| v.is_finite()) {
                    return Err(Error::NumericFault { op: "backward" });
                }
            }
            self.nodes[i].grad = g;
        }
        Ok(())
    }

    fn accum(&self, grads: &mut [Option<Vec<T>>], id: TensorId, contrib: impl FnOnce(&mut [T])) {
        if !self.requires(id) {
            return;
        }
        let slot = grads[id.0].get_or_insert_with(|| vec![T::zero(); self.nodes[id.0].data.len()]);
        contrib(slot);
    }

    fn adjoint(&self, i: usize, gout: &[T], grads: &mut [Option<Vec<T>>]) {
        match &self.nodes[i].op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul { a, b } => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                self.accum(grads, *a, |ga| {
                    let da = kernels::matmul_a_bt(gout, &self.nodes[b.0].data, m, n, k);
                    for (g, d) in ga.iter_mut().zip(da) {
                        *g += d;
                    }
                });
                self.accum(grads, *b, |gb| {
                    let db = kernels::matmul_at_b(&self.nodes[a.0].data, gout, m, k, n);
                    for (g, d) in gb.iter_mut().zip(db) {
                        *g += d;
                    }
                });
            }
            Op::Add { a, b } => {
                self.accum(grads, *a, |g| {
                    for (gi, &d) in g.iter_mut().zip(gout) {
                        *gi += d;
                    }
                });
                self.accum(grads, *b, |g| {
                    for (gi, &d) in g.iter_mut().zip(gout) {
                        *gi += d;
                    }
                });
            }
            Op::Sub { a, b } => {
                self.accum(grads, *a, |g| {
                    for (gi, &d) in g.iter_mut().zip(gout) {
                        *gi += d;
                    }
                });
                self.accum(grads, *b, |g| {
                    for (gi, &d) in g.iter_mut().zip(gout) {
                        *gi -= d;
                    }
                });
            }
            Op::Mul { a, b } => {
                self.accum(grads, *a, |g| {
                    for ((gi, &d), &bv) in g.iter_mut().zip(gout).zip(&self.nodes[b.0].data) {
                        *gi += d * bv;
                    }
                });
                self.accum(grads, *b, |g| {
                    for ((gi, &d), &av) in g.iter_mut().zip(gout).zip(&self.nodes[a.0].data) {
                        *gi += d * av;
                    }
                });
            }
            Op::AddBias { a, bias } => {
                self.accum(grads, *a, |g| {
                    for (gi, &d) in g.iter_mut().zip(gout) {
                        *gi += d;
                    }
                });
                let c = self.nodes[bias.0].data.len();
                self.accum(grads, *bias, |g| {
                    for (j, &d) in gout.iter().enumerate() {
                        g[j % c] += d;
                    }
                });
            }
            Op::Scale { a, c } => {
                let c = *c;
                self.accum(grads, *a, |g| {
                    for (gi, &d) in g.iter_mut().zip(gout) {
                        *gi += c * d;
                    }
                });
            }
            Op::AddConst { a } => {
                self.accum(grads, *a, |g| {
                    for (gi, &d) in g.iter_mut().zip(gout) {
                        *gi += d;
                    }
                });
            }
            Op::Tanh { a } => {
                let y = &self.nodes[i].data;
                self.accum(grads, *a, |g| {
                    for ((gi, &d), &yv) in g.iter_mut().zip(gout).zip(y) {
                        *gi += d * (T::one() - yv * yv);
                    }
                });
            }
            Op::Sigmoid { a } => {
                let y = &self.nodes[i].data;
                self.accum(grads, *a, |g| {
                    for ((gi, &d), &yv) in g.iter_mut().zip(gout).zip(y) {
                        *gi += d * yv * (T::one() - yv);
                    }
                });
            }
            Op::Log { a } => {
                let x = &self.nodes[a.0].data;
                self.accum(grads, *a, |g| {
                    for ((gi, &d), &xv) in g.iter_mut().zip(gout).zip(x) {
                        *gi += d / xv;
                    }
                });
            }
            Op::Softmax { a } => {
                let y = &self.nodes[i].data;
                let c = *self.nodes[i].shape.last().unwrap();
                self.accum(grads, *a, |g| {
                    for r in 0..y.len() / c {
                        let yr = &y[r * c..(r + 1) * c];
                        let dr = &gout[r * c..(r + 1) * c];
                        let dot: T = yr.iter().zip(dr).map(|(&yv, &dv)| yv * dv).sum();
                        for ((gi, &yv), &dv) in
                            g[r * c..(r + 1) * c].iter_mut().zip(yr).zip(dr)
                        {
                            *gi += yv * (dv - dot);
                        }
                    }
                });
            }
            Op::LogSoftmax { a } => {
                let y = &self.nodes[i].data;
                let c = *self.nodes[i].shape.last().unwrap();
                self.accum(grads, *a, |g| {
                    for r in 0..y.len() / c {
                        let yr = &y[r * c..(r + 1) * c];
                        let dr = &gout[r * c..(r + 1) * c];
                        let dsum: T = dr.iter().cloned().sum();
                        for ((gi, &yv), &dv) in
                            g[r * c..(r + 1) * c].iter_mut().zip(yr).zip(dr)
                        {
                            *gi += dv - yv.exp() * dsum;
                        }
                    }
                });
            }
            Op::Embed { table, ids } => {
                let e = self.shape(*table)[1];
                self.accum(grads, *table, |g| {
                    for (row, &id) in ids.iter().enumerate() {
                        for j in 0..e {
                            g[id * e + j] += gout[row * e + j];
                        }
                    }
                });
            }
            Op::SumAll { a } => {
                let d = gout[0];
                self.accum(grads, *a, |g| {
                    for gi in g.iter_mut() {
                        *gi += d;
                    }
                });
            }
            Op::MeanAll { a } => {
                let n = self.nodes[a.0].data.len();
                let d = gout[0] / T::from_f64(n as f64);
                self.accum(grads, *a, |g| {
                    for gi in g.iter_mut() {
                        *gi += d;
                    }
                });
            }
            Op::Concat { parts } => {
                let widths: Vec<usize> =
                    parts.iter().map(|&p| *self.shape(p).last().unwrap()).collect();
                let total: usize = widths.iter().sum();
                let rows = gout.len() / total;
                let mut offset = 0;
                for (&p, &wd) in parts.iter().zip(&widths) {
                    self.accum(grads, p, |g| {
                        for r in 0..rows {
                            let src = &gout[r * total + offset..r * total + offset + wd];
                            for (gi, &d) in g[r * wd..(r + 1) * wd].iter_mut().zip(src) {
                                *gi += d;
                            }
                        }
                    });
                    offset += wd;
                }
            }
            Op::Reshape { a } => {
                self.accum(grads, *a, |g| {
                    for (gi, &d) in g.iter_mut().zip(gout) {
                        *gi += d;
                    }
                });
            }
            Op::MeanRows { a, group } => {
                let d = self.nodes[i].shape[1];
                let inv = T::from_f64(1.0 / *group as f64);
                self.accum(grads, *a, |g| {
                    for (r, grow) in g.chunks_mut(d).enumerate() {
                        let o = r / group;
                        for (gi, &dv) in grow.iter_mut().zip(&gout[o * d..(o + 1) * d]) {
                            *gi += dv * inv;
                        }
                    }
                });
            }
            Op::Conv2d { input, weight, kernel, stride, cols } => {
                let si = self.shape(*input);
                let (h, w, cin) = (si[0], si[1], si[2]);
                let cout = self.shape(*weight)[1];
                let (oh, ow) = kernels::conv_out_dims(h, w, *kernel, *stride);
                let rows = oh * ow;
                let patch = kernel * kernel * cin;
                self.accum(grads, *weight, |g| {
                    let dw = kernels::matmul_at_b(cols, gout, rows, patch, cout);
                    for (gi, d) in g.iter_mut().zip(dw) {
                        *gi += d;
                    }
                });
                self.accum(grads, *input, |g| {
                    let dcols =
                        kernels::matmul_a_bt(gout, &self.nodes[weight.0].data, rows, cout, patch);
                    kernels::col2im_add(&dcols, g, h, w, cin, *kernel, *stride);
                });
            }
            Op::GridSample { input, coords } => {
                let s = self.shape(*input);
                let (h, w, c) = (s[0], s[1], s[2]);
                self.accum(grads, *input, |g| {
                    for (i, &coord) in coords.iter().enumerate() {
                        let dout = &gout[i * c..(i + 1) * c];
                        for (row, col, wt) in kernels::bilinear_taps(coord, h, w) {
                            let wt = T::from_f64(wt);
                            if wt == T::zero() {
                                continue;
                            }
                            let base = (row * w + col) * c;
                            for (j, &d) in dout.iter().enumerate() {
                                g[base + j] += wt * d;
                            }
                        }
                    }
                });
            }
        }
    }

    /// Fold gradients of parameter leaves back into the store (additively).
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) -> Result<()> {
        for &(pid, tid) in &self.bindings {
            if let Some(g) = &self.nodes[tid.0].grad {
                let g32: Vec<f32> = g.iter().map(|&v| v.to_f32()).collect();
                store.accumulate_grad(pid, &g32)?;
            }
        }
        Ok(())
    }
}
