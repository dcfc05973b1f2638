use rand::Rng;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Embed { table: Var, ids: Vec<usize> },
    Conv1d { x: Var, k: Var, b: Var, dilation: usize },
    Conv2d { x: Var, k: Var, b: Var },
    MaxPool1d { x: Var, argmax: Vec<usize> },
    Affine { x: Var, w: Var, b: Var },
    Matmul { a: Var, b: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: T },
    Relu { x: Var },
    Softmax { x: Var, axis: usize },
    CrossEntropy { probs: Var, targets: Vec<usize>, weights: Vec<f64>, total: f64 },
    ScaleShift { x: Var, gamma: Var, beta: Var },
    SeqNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    Dropout { x: Var, mask: Vec<T> },
    Concat { parts: Vec<Var> },
    RepeatRows { x: Var },
    SpanOuter { s: Var, e: Var },
    Reshape { x: Var },
    Sum { x: Var },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// A tape of tensor operations supporting one reverse pass.
///
/// Nodes are appended in evaluation order, so reverse iteration is a valid
/// topological order for backpropagation. In eval mode dropout is the identity.
#[derive(Clone, Debug)]
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    training: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn last_dim(shape: &[usize]) -> usize {
    shape.last().copied().unwrap_or(1)
}

fn rows_of(shape: &[usize]) -> usize {
    if shape.is_empty() {
        1
    } else {
        shape[..shape.len() - 1].iter().product()
    }
}

impl<T: Scalar> Graph<T> {
    /// Graph in eval mode.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            training: false,
        }
    }

    /// Graph in training mode (dropout active).
    pub fn training() -> Self {
        Graph {
            nodes: Vec::new(),
            training: true,
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated by [`Graph::backward`], if the node received one.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Row lookup: `ids[i]` selects row `i` of the `[V×k]` table.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let shape = self.shape(table);
        if shape.len() != 2 {
            return Err(Error::shape("embed", format!("table must be 2-D, got {:?}", shape)));
        }
        let (vocab, dim) = (shape[0], shape[1]);
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(Error::Index {
                    op: "embed",
                    index: id,
                    bound: vocab,
                });
            }
            out.extend_from_slice(&src[id * dim..(id + 1) * dim]);
        }
        let value = Tensor::new(vec![ids.len(), dim], out)?;
        Ok(self.push(
            value,
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    /// Same-padded 1D convolution over `[n×c_in]` with `[w×c_in×c_out]` kernels.
    pub fn conv1d(&mut self, x: Var, k: Var, b: Var, dilation: usize) -> Result<Var> {
        let xs = self.shape(x);
        let ks = self.shape(k);
        let bs = self.shape(b);
        if xs.len() != 2 || ks.len() != 3 || bs.len() != 1 {
            return Err(Error::shape(
                "conv1d",
                format!("expected x[n×c], k[w×c×o], b[o]; got {:?} {:?} {:?}", xs, ks, bs),
            ));
        }
        let (n, cin) = (xs[0], xs[1]);
        let (w, kcin, cout) = (ks[0], ks[1], ks[2]);
        if kcin != cin || bs[0] != cout {
            return Err(Error::shape(
                "conv1d",
                format!("channel mismatch: x has {} channels, kernel {:?}, bias {:?}", cin, ks, bs),
            ));
        }
        if w % 2 == 0 {
            return Err(Error::argument("conv1d", format!("kernel width {} must be odd", w)));
        }
        if dilation == 0 {
            return Err(Error::argument("conv1d", "dilation must be >= 1"));
        }
        let half = (w / 2) as isize;
        let xd = self.value(x).data();
        let kd = self.value(k).data();
        let bd = self.value(b).data();
        let mut out = vec![T::zero(); n * cout];
        for t in 0..n {
            let orow = &mut out[t * cout..(t + 1) * cout];
            orow.copy_from_slice(bd);
            for kk in 0..w {
                let src = t as isize + (kk as isize - half) * dilation as isize;
                if src < 0 || src >= n as isize {
                    continue;
                }
                let src = src as usize;
                let xrow = &xd[src * cin..(src + 1) * cin];
                let kslab = &kd[kk * cin * cout..(kk + 1) * cin * cout];
                for (ci, &a) in xrow.iter().enumerate() {
                    if a == T::zero() {
                        continue;
                    }
                    let krow = &kslab[ci * cout..(ci + 1) * cout];
                    for (o, &kv) in orow.iter_mut().zip(krow) {
                        *o += a * kv;
                    }
                }
            }
        }
        let value = Tensor::new(vec![n, cout], out)?;
        Ok(self.push(value, Op::Conv1d { x, k, b, dilation }, &[x, k, b]))
    }

    /// Same-padded 2D convolution over `[h×w×d_in]` with `[kh×kw×d_in×d_out]` kernels.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x);
        let ks = self.shape(k);
        let bs = self.shape(b);
        if xs.len() != 3 || ks.len() != 4 || bs.len() != 1 {
            return Err(Error::shape(
                "conv2d",
                format!("expected x[h×w×c], k[kh×kw×c×o], b[o]; got {:?} {:?} {:?}", xs, ks, bs),
            ));
        }
        let (h, wd, cin) = (xs[0], xs[1], xs[2]);
        let (kh, kw, kcin, cout) = (ks[0], ks[1], ks[2], ks[3]);
        if kcin != cin || bs[0] != cout {
            return Err(Error::shape(
                "conv2d",
                format!("depth mismatch: x has depth {}, kernel {:?}, bias {:?}", cin, ks, bs),
            ));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::argument("conv2d", format!("kernel {}×{} must be odd", kh, kw)));
        }
        let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
        let xd = self.value(x).data();
        let kd = self.value(k).data();
        let bd = self.value(b).data();
        let mut out = vec![T::zero(); h * wd * cout];
        let slab = cin * cout;
        for yy in 0..h {
            for xx in 0..wd {
                let base = (yy * wd + xx) * cout;
                let opx = &mut out[base..base + cout];
                opx.copy_from_slice(bd);
                for ky in 0..kh {
                    let iy = yy as isize + ky as isize - ph;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = xx as isize + kx as isize - pw;
                        if ix < 0 || ix >= wd as isize {
                            continue;
                        }
                        let ip = (iy as usize * wd + ix as usize) * cin;
                        let ipx = &xd[ip..ip + cin];
                        let kslab = &kd[(ky * kw + kx) * slab..(ky * kw + kx + 1) * slab];
                        for (ci, &a) in ipx.iter().enumerate() {
                            if a == T::zero() {
                                continue;
                            }
                            let krow = &kslab[ci * cout..(ci + 1) * cout];
                            for (o, &kv) in opx.iter_mut().zip(krow) {
                                *o += a * kv;
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![h, wd, cout], out)?;
        Ok(self.push(value, Op::Conv2d { x, k, b }, &[x, k, b]))
    }

    /// Max over non-overlapping windows along the first axis of `[n×c]`.
    ///
    /// The last window may be partial. Ties resolve to the first maximal index.
    pub fn maxpool1d(&mut self, x: Var, window: usize) -> Result<Var> {
        if window == 0 {
            return Err(Error::argument("maxpool1d", "window must be >= 1"));
        }
        let xs = self.shape(x);
        if xs.len() != 2 {
            return Err(Error::shape("maxpool1d", format!("expected [n×c], got {:?}", xs)));
        }
        let (n, c) = (xs[0], xs[1]);
        let m = n.div_ceil(window);
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); m * c];
        let mut argmax = vec![0usize; m * c];
        for o in 0..m {
            let lo = o * window;
            let hi = (lo + window).min(n);
            for ch in 0..c {
                let mut best = lo * c + ch;
                for t in lo + 1..hi {
                    let idx = t * c + ch;
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                out[o * c + ch] = xd[best];
                argmax[o * c + ch] = best;
            }
        }
        let value = Tensor::new(vec![m, c], out)?;
        Ok(self.push(value, Op::MaxPool1d { x, argmax }, &[x]))
    }

    /// `x W + b` applied to every row of `x[..×a]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w);
        let bs = self.shape(b);
        if ws.len() != 2 || bs.len() != 1 || xs.is_empty() {
            return Err(Error::shape(
                "affine",
                format!("expected x[..×a], W[a×b], b[b]; got {:?} {:?} {:?}", xs, ws, bs),
            ));
        }
        let (a, bdim) = (ws[0], ws[1]);
        if last_dim(&xs) != a || bs[0] != bdim {
            return Err(Error::shape(
                "affine",
                format!("inner dims differ: x {:?}, W {:?}, b {:?}", xs, ws, bs),
            ));
        }
        let rows = rows_of(&xs);
        let xd = self.value(x).data();
        let wdat = self.value(w).data();
        let bd = self.value(b).data();
        let mut out = vec![T::zero(); rows * bdim];
        for r in 0..rows {
            let orow = &mut out[r * bdim..(r + 1) * bdim];
            orow.copy_from_slice(bd);
            for (i, &xv) in xd[r * a..(r + 1) * a].iter().enumerate() {
                if xv == T::zero() {
                    continue;
                }
                for (o, &wv) in orow.iter_mut().zip(&wdat[i * bdim..(i + 1) * bdim]) {
                    *o += xv * wv;
                }
            }
        }
        let mut shape = xs;
        *shape.last_mut().unwrap() = bdim;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Affine { x, w, b }, &[x, w, b]))
    }

    /// Matrix product of `[m×k]` and `[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let as_ = self.shape(a);
        let bs = self.shape(b);
        if as_.len() != 2 || bs.len() != 2 || as_[1] != bs[0] {
            return Err(Error::shape("matmul", format!("cannot multiply {:?} by {:?}", as_, bs)));
        }
        let (m, kdim, n) = (as_[0], as_[1], bs[1]);
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..kdim {
                let av = ad[i * kdim + p];
                for (o, &bv) in orow.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                    *o += av * bv;
                }
            }
        }
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::Matmul { a, b }, &[a, b]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Mul { a, b }, &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let f = T::of(factor);
        let data = self.value(x).data().iter().map(|&v| v * f).collect();
        let value = Tensor {
            shape: self.shape(x).to_vec(),
            data,
        };
        self.push(value, Op::Scale { x, factor: f }, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let value = Tensor {
            shape: self.shape(x).to_vec(),
            data,
        };
        self.push(value, Op::Relu { x }, &[x])
    }

    /// Numerically stable softmax along `axis` (max subtracted, f64 sums).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::argument(
                "softmax",
                format!("axis {} invalid for shape {:?}", axis, shape),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); xd.len()];
        let mut buf = vec![0f64; len];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let mut mx = f64::NEG_INFINITY;
                for k in 0..len {
                    mx = mx.max(xd[at(k)].as_f64());
                }
                let mut sum = 0f64;
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = (xd[at(k)].as_f64() - mx).exp();
                    sum += *b;
                }
                for (k, b) in buf.iter().enumerate() {
                    out[at(k)] = T::of(b / sum);
                }
            }
        }
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Softmax { x, axis }, &[x]))
    }

    /// Weighted mean negative log-likelihood.
    ///
    /// `probs` holds class probabilities on its last axis; every leading
    /// position is one row with a target class. Rows with weight 0 are
    /// ignored; `weights = None` weighs every row equally. Log arguments are
    /// clamped at `1e-12`.
    pub fn cross_entropy(
        &mut self,
        probs: Var,
        targets: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<Var> {
        let shape = self.shape(probs).to_vec();
        let classes = last_dim(&shape);
        let rows = rows_of(&shape);
        if targets.len() != rows {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} targets for {} rows", targets.len(), rows),
            ));
        }
        let weights: Vec<f64> = match weights {
            Some(w) if w.len() != rows => {
                return Err(Error::shape(
                    "cross_entropy",
                    format!("{} weights for {} rows", w.len(), rows),
                ))
            }
            Some(w) => w.to_vec(),
            None => vec![1.0; rows],
        };
        let pd = self.value(probs).data();
        let mut total = 0f64;
        let mut loss = 0f64;
        for (r, (&t, &w)) in targets.iter().zip(&weights).enumerate() {
            if t >= classes {
                return Err(Error::Index {
                    op: "cross_entropy",
                    index: t,
                    bound: classes,
                });
            }
            if w == 0.0 {
                continue;
            }
            let p = pd[r * classes + t].as_f64().max(1e-12);
            loss -= w * p.ln();
            total += w;
        }
        let value = if total > 0.0 { loss / total } else { 0.0 };
        Ok(self.push(
            Tensor::scalar(T::of(value)),
            Op::CrossEntropy {
                probs,
                targets: targets.to_vec(),
                weights,
                total,
            },
            &[probs],
        ))
    }

    /// Learned per-channel `gamma * x + beta` over the last axis.
    pub fn scale_shift(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let c = last_dim(&shape);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape(
                "scale_shift",
                format!("{} channels vs gamma {:?} beta {:?}", c, self.shape(gamma), self.shape(beta)),
            ));
        }
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let data = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| gd[i % c] * v + bd[i % c])
            .collect();
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::ScaleShift { x, gamma, beta }, &[x, gamma, beta]))
    }

    /// Per-channel normalization of `[n×c]` with statistics over the `n` positions,
    /// followed by a learned scale and shift.
    pub fn seq_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(Error::shape("seq_norm", format!("expected [n×c], got {:?}", shape)));
        }
        let (n, c) = (shape[0], shape[1]);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape("seq_norm", "gamma/beta must match channel count"));
        }
        let xd = self.value(x).data();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut xhat = vec![T::zero(); n * c];
        let mut inv_std = vec![T::zero(); c];
        let mut out = vec![T::zero(); n * c];
        for ch in 0..c {
            let mut mean = 0f64;
            for t in 0..n {
                mean += xd[t * c + ch].as_f64();
            }
            mean /= n.max(1) as f64;
            let mut var = 0f64;
            for t in 0..n {
                let d = xd[t * c + ch].as_f64() - mean;
                var += d * d;
            }
            var /= n.max(1) as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[ch] = T::of(is);
            for t in 0..n {
                let h = (xd[t * c + ch].as_f64() - mean) * is;
                xhat[t * c + ch] = T::of(h);
                out[t * c + ch] = gd[ch] * T::of(h) + bd[ch];
            }
        }
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::SeqNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    /// Inverted dropout; identity in eval mode or at rate 0.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::argument("dropout", format!("rate {} not in [0,1)", rate)));
        }
        if !self.training || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(x).numel())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        Ok(self.dropout_with_mask(x, mask))
    }

    pub(crate) fn dropout_with_mask(&mut self, x: Var, mask: Vec<T>) -> Var {
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let value = Tensor {
            shape: self.shape(x).to_vec(),
            data,
        };
        self.push(value, Op::Dropout { x, mask }, &[x])
    }

    /// Concatenation along the last axis. All parts share their leading shape;
    /// 1-D parts concatenate into a longer vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::argument("concat", "no parts"));
        }
        let lead = self.shape(parts[0]);
        let lead = lead[..lead.len().saturating_sub(1)].to_vec();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(Error::shape(
                    "concat",
                    format!("leading shape {:?} vs {:?}", lead, s),
                ));
            }
            widths.push(last_dim(s));
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
            },
            parts,
        ))
    }

    /// Tiles a vector `[c]` into `[n×c]`.
    pub fn repeat_rows(&mut self, x: Var, n: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 1 {
            return Err(Error::shape("repeat_rows", format!("expected [c], got {:?}", s)));
        }
        let c = s[0];
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(n * c);
        for _ in 0..n {
            out.extend_from_slice(src);
        }
        let value = Tensor::new(vec![n, c], out)?;
        Ok(self.push(value, Op::RepeatRows { x }, &[x]))
    }

    /// Span image: `out[i, j, :] = s[i, :] * e[j, :]` (row = start, column = end).
    pub fn span_outer(&mut self, s: Var, e: Var) -> Result<Var> {
        let ss = self.shape(s);
        let es = self.shape(e);
        if ss.len() != 2 || ss != es {
            return Err(Error::shape(
                "span_outer",
                format!("s {:?} and e {:?} must both be [n×d]", ss, es),
            ));
        }
        let (n, d) = (ss[0], ss[1]);
        let sd = self.value(s).data();
        let ed = self.value(e).data();
        let mut out = vec![T::zero(); n * n * d];
        for i in 0..n {
            let srow = &sd[i * d..(i + 1) * d];
            for j in 0..n {
                let erow = &ed[j * d..(j + 1) * d];
                let px = &mut out[(i * n + j) * d..(i * n + j + 1) * d];
                for ((o, &a), &b) in px.iter_mut().zip(srow).zip(erow) {
                    *o = a * b;
                }
            }
        }
        let value = Tensor::new(vec![n, n, d], out)?;
        Ok(self.push(value, Op::SpanOuter { s, e }, &[s, e]))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {:?}", self.shape(x), shape),
            ));
        }
        let value = Tensor::new(shape, self.value(x).data().to_vec())?;
        Ok(self.push(value, Op::Reshape { x }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().map(|v| v.as_f64()).sum();
        self.push(Tensor::scalar(T::of(s)), Op::Sum { x }, &[x])
    }

    /// Reverse pass from a scalar output. Gradients accumulate on every node
    /// that (transitively) depends on a trainable leaf.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.value(output).numel() != 1 {
            return Err(Error::argument(
                "backward",
                format!("output must be scalar, got shape {:?}", self.shape(output)),
            ));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.nodes[output.0].requires_grad {
            return Ok(());
        }
        self.nodes[output.0].grad = Some(vec![T::one()]);
        for i in (0..=output.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            let Some(g) = node.grad.as_ref() else {
                continue;
            };
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let contribs = local_grads(before, node, g)?;
            for (v, c) in contribs {
                let target = &mut before[v.0];
                if !target.requires_grad {
                    continue;
                }
                match target.grad.as_mut() {
                    Some(acc) => {
                        for (a, &d) in acc.iter_mut().zip(&c) {
                            *a += d;
                        }
                    }
                    None => target.grad = Some(c),
                }
            }
        }
        Ok(())
    }
}

fn needs<T>(nodes: &[Node<T>], v: Var) -> bool {
    nodes[v.0].requires_grad
}

/// Vector-Jacobian products of one node with respect to its inputs.
fn local_grads<T: Scalar>(
    nodes: &[Node<T>],
    node: &Node<T>,
    g: &[T],
) -> Result<Vec<(Var, Vec<T>)>> {
    let val = |v: Var| nodes[v.0].value.data();
    let shp = |v: Var| nodes[v.0].value.shape();
    let mut out = Vec::new();
    match &node.op {
        Op::Leaf => {}
        Op::Embed { table, ids } => {
            if needs(nodes, *table) {
                let dim = shp(*table)[1];
                let mut d = vec![T::zero(); val(*table).len()];
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..dim {
                        d[id * dim + c] += g[r * dim + c];
                    }
                }
                out.push((*table, d));
            }
        }
        Op::Conv1d { x, k, b, dilation } => {
            let (n, cin) = (shp(*x)[0], shp(*x)[1]);
            let (w, cout) = (shp(*k)[0], shp(*k)[2]);
            let half = (w / 2) as isize;
            let xd = val(*x);
            let kd = val(*k);
            let (nx, nk, nb) = (needs(nodes, *x), needs(nodes, *k), needs(nodes, *b));
            let mut dx = if nx { vec![T::zero(); xd.len()] } else { Vec::new() };
            let mut dk = if nk { vec![T::zero(); kd.len()] } else { Vec::new() };
            let mut db = vec![T::zero(); cout];
            for t in 0..n {
                let grow = &g[t * cout..(t + 1) * cout];
                if grow.iter().all(|&v| v == T::zero()) {
                    continue;
                }
                for (o, &gv) in db.iter_mut().zip(grow) {
                    *o += gv;
                }
                for kk in 0..w {
                    let src = t as isize + (kk as isize - half) * *dilation as isize;
                    if src < 0 || src >= n as isize {
                        continue;
                    }
                    let src = src as usize;
                    let base = kk * cin * cout;
                    for ci in 0..cin {
                        let krow = &kd[base + ci * cout..base + (ci + 1) * cout];
                        if nx {
                            let mut acc = T::zero();
                            for (&kv, &gv) in krow.iter().zip(grow) {
                                acc += kv * gv;
                            }
                            dx[src * cin + ci] += acc;
                        }
                        if nk {
                            let a = xd[src * cin + ci];
                            if a != T::zero() {
                                let drow = &mut dk[base + ci * cout..base + (ci + 1) * cout];
                                for (d, &gv) in drow.iter_mut().zip(grow) {
                                    *d += a * gv;
                                }
                            }
                        }
                    }
                }
            }
            if nx {
                out.push((*x, dx));
            }
            if nk {
                out.push((*k, dk));
            }
            if nb {
                out.push((*b, db));
            }
        }
        Op::Conv2d { x, k, b } => {
            let xs = shp(*x);
            let (h, wd, cin) = (xs[0], xs[1], xs[2]);
            let ks = shp(*k);
            let (kh, kw, cout) = (ks[0], ks[1], ks[3]);
            let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
            let xd = val(*x);
            let kd = val(*k);
            let slab = cin * cout;
            let (nx, nk, nb) = (needs(nodes, *x), needs(nodes, *k), needs(nodes, *b));
            let mut dx = if nx { vec![T::zero(); xd.len()] } else { Vec::new() };
            let mut dk = if nk { vec![T::zero(); kd.len()] } else { Vec::new() };
            let mut db = vec![T::zero(); cout];
            for yy in 0..h {
                for xx in 0..wd {
                    let base = (yy * wd + xx) * cout;
                    let gpx = &g[base..base + cout];
                    if gpx.iter().all(|&v| v == T::zero()) {
                        continue;
                    }
                    for (o, &gv) in db.iter_mut().zip(gpx) {
                        *o += gv;
                    }
                    for ky in 0..kh {
                        let iy = yy as isize + ky as isize - ph;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = xx as isize + kx as isize - pw;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            let ip = (iy as usize * wd + ix as usize) * cin;
                            let koff = (ky * kw + kx) * slab;
                            for ci in 0..cin {
                                let krow = &kd[koff + ci * cout..koff + (ci + 1) * cout];
                                if nx {
                                    let mut acc = T::zero();
                                    for (&kv, &gv) in krow.iter().zip(gpx) {
                                        acc += kv * gv;
                                    }
                                    dx[ip + ci] += acc;
                                }
                                if nk {
                                    let a = xd[ip + ci];
                                    if a != T::zero() {
                                        let drow =
                                            &mut dk[koff + ci * cout..koff + (ci + 1) * cout];
                                        for (d, &gv) in drow.iter_mut().zip(gpx) {
                                            *d += a * gv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if nx {
                out.push((*x, dx));
            }
            if nk {
                out.push((*k, dk));
            }
            if nb {
                out.push((*b, db));
            }
        }
        Op::MaxPool1d { x, argmax } => {
            if needs(nodes, *x) {
                let mut dx = vec![T::zero(); val(*x).len()];
                for (o, &src) in argmax.iter().enumerate() {
                    dx[src] += g[o];
                }
                out.push((*x, dx));
            }
        }
        Op::Affine { x, w, b } => {
            let ws = shp(*w);
            let (a, bdim) = (ws[0], ws[1]);
            let xd = val(*x);
            let wdat = val(*w);
            let rows = xd.len() / a.max(1);
            if needs(nodes, *x) {
                let mut dx = vec![T::zero(); xd.len()];
                for r in 0..rows {
                    let grow = &g[r * bdim..(r + 1) * bdim];
                    for i in 0..a {
                        let mut acc = T::zero();
                        for (&wv, &gv) in wdat[i * bdim..(i + 1) * bdim].iter().zip(grow) {
                            acc += wv * gv;
                        }
                        dx[r * a + i] = acc;
                    }
                }
                out.push((*x, dx));
            }
            if needs(nodes, *w) {
                let mut dw = vec![T::zero(); wdat.len()];
                for r in 0..rows {
                    let grow = &g[r * bdim..(r + 1) * bdim];
                    for i in 0..a {
                        let xv = xd[r * a + i];
                        if xv == T::zero() {
                            continue;
                        }
                        for (d, &gv) in dw[i * bdim..(i + 1) * bdim].iter_mut().zip(grow) {
                            *d += xv * gv;
                        }
                    }
                }
                out.push((*w, dw));
            }
            if needs(nodes, *b) {
                let mut db = vec![T::zero(); bdim];
                for r in 0..rows {
                    for (d, &gv) in db.iter_mut().zip(&g[r * bdim..(r + 1) * bdim]) {
                        *d += gv;
                    }
                }
                out.push((*b, db));
            }
        }
        Op::Matmul { a, b } => {
            let (m, kdim) = (shp(*a)[0], shp(*a)[1]);
            let n = shp(*b)[1];
            let ad = val(*a);
            let bd = val(*b);
            if needs(nodes, *a) {
                let mut da = vec![T::zero(); ad.len()];
                for i in 0..m {
                    for p in 0..kdim {
                        let mut acc = T::zero();
                        for j in 0..n {
                            acc += g[i * n + j] * bd[p * n + j];
                        }
                        da[i * kdim + p] = acc;
                    }
                }
                out.push((*a, da));
            }
            if needs(nodes, *b) {
                let mut dbm = vec![T::zero(); bd.len()];
                for i in 0..m {
                    for p in 0..kdim {
                        let av = ad[i * kdim + p];
                        for j in 0..n {
                            dbm[p * n + j] += av * g[i * n + j];
                        }
                    }
                }
                out.push((*b, dbm));
            }
        }
        Op::Add { a, b } => {
            if needs(nodes, *a) {
                out.push((*a, g.to_vec()));
            }
            if needs(nodes, *b) {
                out.push((*b, g.to_vec()));
            }
        }
        Op::Mul { a, b } => {
            if needs(nodes, *a) {
                out.push((*a, g.iter().zip(val(*b)).map(|(&gv, &bv)| gv * bv).collect()));
            }
            if needs(nodes, *b) {
                out.push((*b, g.iter().zip(val(*a)).map(|(&gv, &av)| gv * av).collect()));
            }
        }
        Op::Scale { x, factor } => {
            if needs(nodes, *x) {
                out.push((*x, g.iter().map(|&gv| gv * *factor).collect()));
            }
        }
        Op::Relu { x } => {
            if needs(nodes, *x) {
                let dx = g
                    .iter()
                    .zip(val(*x))
                    .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
                    .collect();
                out.push((*x, dx));
            }
        }
        Op::Softmax { x, axis } => {
            if needs(nodes, *x) {
                let shape = shp(*x);
                let outer: usize = shape[..*axis].iter().product();
                let len = shape[*axis];
                let inner: usize = shape[*axis + 1..].iter().product();
                let y = node.value.data();
                let mut dx = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * len + k) * inner + i;
                        let mut dot = 0f64;
                        for k in 0..len {
                            dot += g[at(k)].as_f64() * y[at(k)].as_f64();
                        }
                        for k in 0..len {
                            dx[at(k)] = T::of(y[at(k)].as_f64() * (g[at(k)].as_f64() - dot));
                        }
                    }
                }
                out.push((*x, dx));
            }
        }
        Op::CrossEntropy {
            probs,
            targets,
            weights,
            total,
        } => {
            if needs(nodes, *probs) {
                let pd = val(*probs);
                let classes = last_dim(shp(*probs));
                let mut dp = vec![T::zero(); pd.len()];
                if *total > 0.0 {
                    let g0 = g[0].as_f64();
                    for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                        let p = pd[r * classes + t].as_f64();
                        if w == 0.0 || p <= 1e-12 {
                            continue;
                        }
                        dp[r * classes + t] = T::of(-g0 * w / (total * p));
                    }
                }
                out.push((*probs, dp));
            }
        }
        Op::ScaleShift { x, gamma, beta } => {
            let c = shp(*gamma)[0];
            let xd = val(*x);
            let gd = val(*gamma);
            if needs(nodes, *x) {
                out.push((
                    *x,
                    g.iter().enumerate().map(|(i, &gv)| gv * gd[i % c]).collect(),
                ));
            }
            if needs(nodes, *gamma) {
                let mut dg = vec![T::zero(); c];
                for (i, &gv) in g.iter().enumerate() {
                    dg[i % c] += gv * xd[i];
                }
                out.push((*gamma, dg));
            }
            if needs(nodes, *beta) {
                let mut dbt = vec![T::zero(); c];
                for (i, &gv) in g.iter().enumerate() {
                    dbt[i % c] += gv;
                }
                out.push((*beta, dbt));
            }
        }
        Op::SeqNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        } => {
            let (n, c) = (shp(*x)[0], shp(*x)[1]);
            let gd = val(*gamma);
            if needs(nodes, *x) {
                let mut dx = vec![T::zero(); n * c];
                for ch in 0..c {
                    let mut sum_d = 0f64;
                    let mut sum_dx = 0f64;
                    for t in 0..n {
                        let d = (g[t * c + ch] * gd[ch]).as_f64();
                        sum_d += d;
                        sum_dx += d * xhat[t * c + ch].as_f64();
                    }
                    let is = inv_std[ch].as_f64();
                    let nf = n as f64;
                    for t in 0..n {
                        let d = (g[t * c + ch] * gd[ch]).as_f64();
                        let h = xhat[t * c + ch].as_f64();
                        dx[t * c + ch] = T::of(is / nf * (nf * d - sum_d - h * sum_dx));
                    }
                }
                out.push((*x, dx));
            }
            if needs(nodes, *gamma) {
                let mut dg = vec![T::zero(); c];
                for (i, &gv) in g.iter().enumerate() {
                    dg[i % c] += gv * xhat[i];
                }
                out.push((*gamma, dg));
            }
            if needs(nodes, *beta) {
                let mut dbt = vec![T::zero(); c];
                for (i, &gv) in g.iter().enumerate() {
                    dbt[i % c] += gv;
                }
                out.push((*beta, dbt));
            }
        }
        Op::Dropout { x, mask } => {
            if needs(nodes, *x) {
                out.push((*x, g.iter().zip(mask).map(|(&gv, &m)| gv * m).collect()));
            }
        }
        Op::Concat { parts } => {
            let widths: Vec<usize> = parts.iter().map(|&p| last_dim(shp(p))).collect();
            let total: usize = widths.iter().sum();
            let rows = g.len() / total.max(1);
            let mut offset = 0;
            for (&p, &w) in parts.iter().zip(&widths) {
                if needs(nodes, p) {
                    let mut d = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        d.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    out.push((p, d));
                }
                offset += w;
            }
        }
        Op::RepeatRows { x } => {
            if needs(nodes, *x) {
                let c = shp(*x)[0];
                let mut d = vec![T::zero(); c];
                for row in g.chunks_exact(c.max(1)) {
                    for (a, &gv) in d.iter_mut().zip(row) {
                        *a += gv;
                    }
                }
                out.push((*x, d));
            }
        }
        Op::SpanOuter { s, e } => {
            let (n, d) = (shp(*s)[0], shp(*s)[1]);
            let sd = val(*s);
            let ed = val(*e);
            let (ns, ne) = (needs(nodes, *s), needs(nodes, *e));
            let mut ds = if ns { vec![T::zero(); sd.len()] } else { Vec::new() };
            let mut de = if ne { vec![T::zero(); ed.len()] } else { Vec::new() };
            for i in 0..n {
                for j in 0..n {
                    let gpx = &g[(i * n + j) * d..(i * n + j + 1) * d];
                    if gpx.iter().all(|&v| v == T::zero()) {
                        continue;
                    }
                    for c in 0..d {
                        if ns {
                            ds[i * d + c] += gpx[c] * ed[j * d + c];
                        }
                        if ne {
                            de[j * d + c] += gpx[c] * sd[i * d + c];
                        }
                    }
                }
            }
            if ns {
                out.push((*s, ds));
            }
            if ne {
                out.push((*e, de));
            }
        }
        Op::Reshape { x } => {
            if needs(nodes, *x) {
                out.push((*x, g.to_vec()));
            }
        }
        Op::Sum { x } => {
            if needs(nodes, *x) {
                out.push((*x, vec![g[0]; val(*x).len()]));
            }
        }
    }
    Ok(out)
}
