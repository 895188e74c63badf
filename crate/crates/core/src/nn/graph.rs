//! Define-by-run reverse-mode differentiation over batched volume tensors.

use rand::Rng;

use super::kernels::{self, ConvScratch, Dims, StridedConv};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input { grad: bool },
    Conv3 { x: Var, w: ParamId, b: ParamId },
    Conv1 { x: Var, w: ParamId, b: ParamId },
    ConvT2 { x: Var, w: ParamId, b: ParamId },
    Strided { x: Var, w: ParamId, b: ParamId, geom: StridedConv },
    InstanceNorm { x: Var, gamma: ParamId, beta: ParamId, xhat: Vec<f32>, rstd: Vec<f32> },
    LeakyRelu { x: Var, slope: f32 },
    MaxPool2 { x: Var, arg: Vec<u32> },
    Upsample2 { x: Var },
    Concat { a: Var, b: Var },
    Dropout { x: Var, mask: Vec<f32> },
    Softmax { x: Var },
    Tanh { x: Var },
    GlobalAvgPool { x: Var },
    Linear { x: Var, w: ParamId, b: ParamId },
}

struct Node {
    value: Tensor,
    op: Op,
    /// Whether any gradient needs to flow into this node.
    needs_grad: bool,
}

/// Parameter gradients plus gradients of inputs created with `input_with_grad`.
pub struct Gradients {
    pub params: Vec<Vec<f32>>,
    inputs: Vec<(Var, Vec<f32>)>,
}

impl Gradients {
    pub fn input(&self, v: Var) -> Option<&[f32]> {
        self.inputs.iter().find(|(k, _)| *k == v).map(|(_, g)| g.as_slice())
    }

    pub fn global_norm(&self) -> f64 {
        self.params.iter().flatten().map(|g| (*g as f64).powi(2)).sum::<f64>().sqrt()
    }
}

const IN_EPS: f32 = 1e-5;

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    conv: ConvScratch,
    buf: Vec<f32>,
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph { store, nodes: Vec::new(), conv: ConvScratch::default(), buf: Vec::new() }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Input { grad } => *grad,
            _ => true,
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn w(&self, id: ParamId) -> &'p [f32] {
        self.store.get(id)
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input { grad: false })
    }

    /// An input whose gradient is reported by `backward`.
    pub fn input_with_grad(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input { grad: true })
    }

    pub fn conv3(&mut self, x: Var, w: ParamId, b: ParamId) -> Var {
        let xv = &self.nodes[x.0].value;
        let (n, cin, dims) = (xv.batch(), xv.channels(), Dims::new(xv.spatial()));
        let cout = self.store.shapes[w.0][0];
        let mut out = Tensor::zeros(vec![n, cout, dims.d, dims.h, dims.w]);
        let ol = out.item_len();
        for s in 0..n {
            let xs = self.nodes[x.0].value.item(s);
            kernels::conv3_forward(xs, cin, dims, self.w(w), self.w(b), cout, &mut out.data[s * ol..(s + 1) * ol], &mut self.conv);
        }
        self.push(out, Op::Conv3 { x, w, b })
    }

    pub fn conv1(&mut self, x: Var, w: ParamId, b: ParamId) -> Var {
        let xv = &self.nodes[x.0].value;
        let (n, cin, sp) = (xv.batch(), xv.channels(), xv.spatial());
        let v = sp.iter().product::<usize>();
        let cout = self.store.shapes[w.0][0];
        let mut out = Tensor::zeros(vec![n, cout, sp[0], sp[1], sp[2]]);
        let ol = out.item_len();
        for s in 0..n {
            kernels::conv1_forward(xv.item(s), cin, v, self.w(w), self.w(b), cout, &mut out.data[s * ol..(s + 1) * ol]);
        }
        self.push(out, Op::Conv1 { x, w, b })
    }

    pub fn conv_transpose2(&mut self, x: Var, w: ParamId, b: ParamId) -> Var {
        let xv = &self.nodes[x.0].value;
        let (n, cin, dims) = (xv.batch(), xv.channels(), Dims::new(xv.spatial()));
        let cout = self.store.shapes[w.0][1];
        let o = dims.doubled();
        let mut out = Tensor::zeros(vec![n, cout, o.d, o.h, o.w]);
        let ol = out.item_len();
        for s in 0..n {
            kernels::convt2_forward(xv.item(s), cin, dims, self.w(w), self.w(b), cout, &mut out.data[s * ol..(s + 1) * ol], &mut self.buf);
        }
        self.push(out, Op::ConvT2 { x, w, b })
    }

    pub fn strided_conv(&mut self, x: Var, w: ParamId, b: ParamId, geom: StridedConv) -> Var {
        let xv = &self.nodes[x.0].value;
        let (n, cin, dims) = (xv.batch(), xv.channels(), Dims::new(xv.spatial()));
        let cout = self.store.shapes[w.0][0];
        let o = geom.out_dims(dims);
        let mut out = Tensor::zeros(vec![n, cout, o.d, o.h, o.w]);
        let ol = out.item_len();
        for s in 0..n {
            geom.forward(xv.item(s), cin, dims, self.w(w), self.w(b), cout, &mut out.data[s * ol..(s + 1) * ol], &mut self.buf);
        }
        self.push(out, Op::Strided { x, w, b, geom })
    }

    /// Per-item, per-channel normalization over space with affine rescaling.
    pub fn instance_norm(&mut self, x: Var, gamma: ParamId, beta: ParamId) -> Var {
        let xv = &self.nodes[x.0].value;
        let (n, c) = (xv.batch(), xv.channels());
        let v = xv.item_len() / c;
        let (g, bt) = (self.w(gamma), self.w(beta));
        let mut out = Tensor::zeros(xv.shape.clone());
        let mut xhat = vec![0f32; xv.data.len()];
        let mut rstd = vec![0f32; n * c];
        for s in 0..n {
            for ch in 0..c {
                let off = (s * c + ch) * v;
                let row = &xv.data[off..off + v];
                let mean = row.iter().map(|&a| a as f64).sum::<f64>() / v as f64;
                let var = row.iter().map(|&a| (a as f64 - mean).powi(2)).sum::<f64>() / v as f64;
                let r = (1.0 / (var + IN_EPS as f64).sqrt()) as f32;
                let m = mean as f32;
                rstd[s * c + ch] = r;
                for i in 0..v {
                    let h = (row[i] - m) * r;
                    xhat[off + i] = h;
                    out.data[off + i] = g[ch] * h + bt[ch];
                }
            }
        }
        self.push(out, Op::InstanceNorm { x, gamma, beta, xhat, rstd })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Var {
        let xv = &self.nodes[x.0].value;
        let out = Tensor { shape: xv.shape.clone(), data: xv.data.iter().map(|&a| if a > 0.0 { a } else { slope * a }).collect() };
        self.push(out, Op::LeakyRelu { x, slope })
    }

    pub fn maxpool2(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let (n, c, dims) = (xv.batch(), xv.channels(), Dims::new(xv.spatial()));
        let o = dims.halved();
        let mut out = Tensor::zeros(vec![n, c, o.d, o.h, o.w]);
        let mut arg = vec![0u32; out.data.len()];
        let ol = out.item_len();
        for s in 0..n {
            kernels::maxpool2_forward(xv.item(s), c, dims, &mut out.data[s * ol..(s + 1) * ol], &mut arg[s * ol..(s + 1) * ol]);
        }
        self.push(out, Op::MaxPool2 { x, arg })
    }

    /// Trilinear x2 upsampling, applied one axis at a time.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let (n, c, [d, h, w]) = (xv.batch(), xv.channels(), xv.spatial());
        let nc = n * c;
        let mut a = vec![0f32; nc * d * h * w * 2];
        kernels::upsample_axis(&xv.data, nc * d * h, w, 1, &mut a);
        let mut b = vec![0f32; a.len() * 2];
        kernels::upsample_axis(&a, nc * d, h, 2 * w, &mut b);
        let mut y = vec![0f32; b.len() * 2];
        kernels::upsample_axis(&b, nc, d, 4 * h * w, &mut y);
        self.push(Tensor { shape: vec![n, c, 2 * d, 2 * h, 2 * w], data: y }, Op::Upsample2 { x })
    }

    /// Channel concatenation of two volume tensors.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.batch(), bv.batch());
        assert_eq!(av.spatial(), bv.spatial());
        let n = av.batch();
        let mut data = Vec::with_capacity(av.data.len() + bv.data.len());
        for s in 0..n {
            data.extend_from_slice(av.item(s));
            data.extend_from_slice(bv.item(s));
        }
        let mut shape = av.shape.clone();
        shape[1] += bv.channels();
        self.push(Tensor { shape, data }, Op::Concat { a, b })
    }

    /// Elementwise dropout with rescaling by `1/(1-p)`.
    pub fn dropout(&mut self, x: Var, p: f32, rng: &mut impl Rng) -> Var {
        if p <= 0.0 {
            return x;
        }
        let xv = &self.nodes[x.0].value;
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f32> = (0..xv.data.len()).map(|_| if rng.gen::<f32>() < p { 0.0 } else { keep }).collect();
        let out = Tensor { shape: xv.shape.clone(), data: xv.data.iter().zip(&mask).map(|(a, m)| a * m).collect() };
        self.push(out, Op::Dropout { x, mask })
    }

    /// Softmax over the channel axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let (n, c) = (xv.batch(), xv.channels());
        let v = xv.item_len() / c;
        let mut out = Tensor::zeros(xv.shape.clone());
        for s in 0..n {
            let base = s * c * v;
            for i in 0..v {
                let m = (0..c).map(|ch| xv.data[base + ch * v + i]).fold(f32::NEG_INFINITY, f32::max);
                let mut z = 0.0;
                for ch in 0..c {
                    let e = (xv.data[base + ch * v + i] - m).exp();
                    out.data[base + ch * v + i] = e;
                    z += e;
                }
                for ch in 0..c {
                    out.data[base + ch * v + i] /= z;
                }
            }
        }
        self.push(out, Op::Softmax { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let out = Tensor { shape: xv.shape.clone(), data: xv.data.iter().map(|a| a.tanh()).collect() };
        self.push(out, Op::Tanh { x })
    }

    /// Mean over space: `[n, c, ...] -> [n, c]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let (n, c) = (xv.batch(), xv.channels());
        let v = xv.item_len() / c;
        let data = xv.data.chunks(v).map(|r| r.iter().sum::<f32>() / v as f32).collect();
        self.push(Tensor { shape: vec![n, c], data }, Op::GlobalAvgPool { x })
    }

    /// `[n, fin] -> [n, fout]` with `w` shaped `[fout, fin]`.
    pub fn linear(&mut self, x: Var, w: ParamId, b: ParamId) -> Var {
        let xv = &self.nodes[x.0].value;
        let (n, fin) = (xv.shape[0], xv.shape[1]);
        let fout = self.store.shapes[w.0][0];
        let (wv, bv) = (self.w(w), self.w(b));
        let mut data = vec![0f32; n * fout];
        for s in 0..n {
            for o in 0..fout {
                data[s * fout + o] = bv[o] + (0..fin).map(|i| wv[o * fin + i] * xv.data[s * fin + i]).sum::<f32>();
            }
        }
        self.push(Tensor { shape: vec![n, fout], data }, Op::Linear { x, w, b })
    }

    /// Propagates the given output gradients back through the tape.
    pub fn backward(&mut self, seeds: &[(Var, &[f32])]) -> Gradients {
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            assert_eq!(g.len(), self.nodes[v.0].value.data.len(), "seed gradient size");
            accumulate(&mut grads[v.0], g);
        }
        let mut pg = self.store.zeros_like();
        let mut inputs = Vec::new();
        let last = seeds.iter().map(|(v, _)| v.0).max().unwrap_or(0);
        for i in (0..=last).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let wants = |v: &Var| self.nodes[v.0].needs_grad;
            match &node.op {
                Op::Input { grad } => {
                    if *grad {
                        inputs.push((Var(i), dy));
                    }
                }
                Op::Conv3 { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    let (n, cin, dims) = (xv.batch(), xv.channels(), Dims::new(xv.spatial()));
                    let cout = node.value.channels();
                    let mut dx = wants(x).then(|| vec![0f32; xv.data.len()]);
                    let (ol, il) = (node.value.item_len(), xv.item_len());
                    let (mut dw, mut db) = (std::mem::take(&mut pg[w.0]), std::mem::take(&mut pg[b.0]));
                    for s in 0..n {
                        kernels::conv3_backward(
                            xv.item(s), cin, dims, self.store.get(*w), cout, &dy[s * ol..(s + 1) * ol],
                            dx.as_mut().map(|d| &mut d[s * il..(s + 1) * il]), &mut dw, &mut db, &mut self.conv,
                        );
                    }
                    (pg[w.0], pg[b.0]) = (dw, db);
                    if let Some(dx) = dx {
                        accumulate(&mut grads[x.0], &dx);
                    }
                }
                Op::Conv1 { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    let (n, cin) = (xv.batch(), xv.channels());
                    let v = xv.item_len() / cin;
                    let cout = node.value.channels();
                    let mut dx = wants(x).then(|| vec![0f32; xv.data.len()]);
                    let (ol, il) = (node.value.item_len(), xv.item_len());
                    let (mut dw, mut db) = (std::mem::take(&mut pg[w.0]), std::mem::take(&mut pg[b.0]));
                    for s in 0..n {
                        kernels::conv1_backward(
                            xv.item(s), cin, v, self.store.get(*w), cout, &dy[s * ol..(s + 1) * ol],
                            dx.as_mut().map(|d| &mut d[s * il..(s + 1) * il]), &mut dw, &mut db,
                        );
                    }
                    (pg[w.0], pg[b.0]) = (dw, db);
                    if let Some(dx) = dx {
                        accumulate(&mut grads[x.0], &dx);
                    }
                }
                Op::ConvT2 { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    let (n, cin, dims) = (xv.batch(), xv.channels(), Dims::new(xv.spatial()));
                    let cout = node.value.channels();
                    let mut dx = wants(x).then(|| vec![0f32; xv.data.len()]);
                    let (ol, il) = (node.value.item_len(), xv.item_len());
                    let (mut dw, mut db) = (std::mem::take(&mut pg[w.0]), std::mem::take(&mut pg[b.0]));
                    for s in 0..n {
                        kernels::convt2_backward(
                            xv.item(s), cin, dims, self.store.get(*w), cout, &dy[s * ol..(s + 1) * ol],
                            dx.as_mut().map(|d| &mut d[s * il..(s + 1) * il]), &mut dw, &mut db, &mut self.buf,
                        );
                    }
                    (pg[w.0], pg[b.0]) = (dw, db);
                    if let Some(dx) = dx {
                        accumulate(&mut grads[x.0], &dx);
                    }
                }
                Op::Strided { x, w, b, geom } => {
                    let xv = &self.nodes[x.0].value;
                    let (n, cin, dims) = (xv.batch(), xv.channels(), Dims::new(xv.spatial()));
                    let cout = node.value.channels();
                    let mut dx = wants(x).then(|| vec![0f32; xv.data.len()]);
                    let (ol, il) = (node.value.item_len(), xv.item_len());
                    let (mut dw, mut db) = (std::mem::take(&mut pg[w.0]), std::mem::take(&mut pg[b.0]));
                    for s in 0..n {
                        geom.backward(
                            xv.item(s), cin, dims, self.store.get(*w), cout, &dy[s * ol..(s + 1) * ol],
                            dx.as_mut().map(|d| &mut d[s * il..(s + 1) * il]), &mut dw, &mut db, &mut self.buf,
                        );
                    }
                    (pg[w.0], pg[b.0]) = (dw, db);
                    if let Some(dx) = dx {
                        accumulate(&mut grads[x.0], &dx);
                    }
                }
                Op::InstanceNorm { x, gamma, beta, xhat, rstd } => {
                    let (n, c) = (node.value.batch(), node.value.channels());
                    let v = node.value.item_len() / c;
                    let g = self.store.get(*gamma);
                    let mut dx = vec![0f32; dy.len()];
                    for s in 0..n {
                        for ch in 0..c {
                            let off = (s * c + ch) * v;
                            let (dyr, xh) = (&dy[off..off + v], &xhat[off..off + v]);
                            let sum_dy: f64 = dyr.iter().map(|&a| a as f64).sum();
                            let sum_dyx: f64 = dyr.iter().zip(xh).map(|(&a, &b)| a as f64 * b as f64).sum();
                            pg[gamma.0][ch] += sum_dyx as f32;
                            pg[beta.0][ch] += sum_dy as f32;
                            let k = g[ch] * rstd[s * c + ch];
                            let (m1, m2) = ((sum_dy / v as f64) as f32, (sum_dyx / v as f64) as f32);
                            for i in 0..v {
                                dx[off + i] = k * (dyr[i] - m1 - xh[i] * m2);
                            }
                        }
                    }
                    if wants(x) {
                        accumulate(&mut grads[x.0], &dx);
                    }
                }
                Op::LeakyRelu { x, slope } => {
                    let xv = &self.nodes[x.0].value;
                    let dx: Vec<f32> = xv.data.iter().zip(&dy).map(|(&a, &g)| if a > 0.0 { g } else { slope * g }).collect();
                    if wants(x) {
                        accumulate(&mut grads[x.0], &dx);
                    }
                }
                Op::MaxPool2 { x, arg } => {
                    let xv = &self.nodes[x.0].value;
                    let (il, ol) = (xv.item_len(), node.value.item_len());
                    let mut dx = vec![0f32; xv.data.len()];
                    for s in 0..xv.batch() {
                        for o in 0..ol {
                            dx[s * il + arg[s * ol + o] as usize] += dy[s * ol + o];
                        }
                    }
                    if wants(x) {
                        accumulate(&mut grads[x.0], &dx);
                    }
                }
                Op::Upsample2 { x } => {
                    let xv = &self.nodes[x.0].value;
                    let (nc, [d, h, w]) = (xv.batch() * xv.channels(), xv.spatial());
                    let mut b = vec![0f32; nc * 4 * d * h * w];
                    kernels::upsample_axis_backward(&dy, nc, d, 4 * h * w, &mut b);
                    let mut a = vec![0f32; nc * 2 * d * h * w];
                    kernels::upsample_axis_backward(&b, nc * d, h, 2 * w, &mut a);
                    let mut dx = vec![0f32; xv.data.len()];
                    kernels::upsample_axis_backward(&a, nc * d * h, w, 1, &mut dx);
                    if wants(x) {
                        accumulate(&mut grads[x.0], &dx);
                    }
                }
                Op::Concat { a, b } => {
                    let (al, bl) = (self.nodes[a.0].value.item_len(), self.nodes[b.0].value.item_len());
                    let n = node.value.batch();
                    let mut da = Vec::with_capacity(n * al);
                    let mut db = Vec::with_capacity(n * bl);
                    for s in 0..n {
                        let item = &dy[s * (al + bl)..(s + 1) * (al + bl)];
                        da.extend_from_slice(&item[..al]);
                        db.extend_from_slice(&item[al..]);
                    }
                    if wants(a) {
                        accumulate(&mut grads[a.0], &da);
                    }
                    if wants(b) {
                        accumulate(&mut grads[b.0], &db);
                    }
                }
                Op::Dropout { x, mask } => {
                    let dx: Vec<f32> = dy.iter().zip(mask).map(|(g, m)| g * m).collect();
                    if wants(x) {
                        accumulate(&mut grads[x.0], &dx);
                    }
                }
                Op::Softmax { x } => {
                    let y = &node.value;
                    let (n, c) = (y.batch(), y.channels());
                    let v = y.item_len() / c;
                    let mut dx = vec![0f32; dy.len()];
                    for s in 0..n {
                        let base = s * c * v;
                        for i in 0..v {
                            let dot: f32 = (0..c).map(|ch| y.data[base + ch * v + i] * dy[base + ch * v + i]).sum();
                            for ch in 0..c {
                                let k = base + ch * v + i;
                                dx[k] = y.data[k] * (dy[k] - dot);
                            }
                        }
                    }
                    if wants(x) {
                        accumulate(&mut grads[x.0], &dx);
                    }
                }
                Op::Tanh { x } => {
                    let dx: Vec<f32> = node.value.data.iter().zip(&dy).map(|(t, g)| g * (1.0 - t * t)).collect();
                    if wants(x) {
                        accumulate(&mut grads[x.0], &dx);
                    }
                }
                Op::GlobalAvgPool { x } => {
                    let xv = &self.nodes[x.0].value;
                    let v = xv.item_len() / xv.channels();
                    let dx: Vec<f32> = (0..xv.data.len()).map(|i| dy[i / v] / v as f32).collect();
                    if wants(x) {
                        accumulate(&mut grads[x.0], &dx);
                    }
                }
                Op::Linear { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    let (n, fin) = (xv.shape[0], xv.shape[1]);
                    let fout = node.value.shape[1];
                    let wv = self.store.get(*w);
                    let mut dx = vec![0f32; xv.data.len()];
                    for s in 0..n {
                        for o in 0..fout {
                            let g = dy[s * fout + o];
                            pg[b.0][o] += g;
                            for i in 0..fin {
                                pg[w.0][o * fin + i] += g * xv.data[s * fin + i];
                                dx[s * fin + i] += g * wv[o * fin + i];
                            }
                        }
                    }
                    if wants(x) {
                        accumulate(&mut grads[x.0], &dx);
                    }
                }
            }
        }
        Gradients { params: pg, inputs }
    }
}

fn accumulate(slot: &mut Option<Vec<f32>>, g: &[f32]) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{Init, ParamStore};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor { shape, data: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() }
    }

    /// Builds a graph from `input` with `f`, reduces it with fixed random
    /// weights `r`, and compares the analytic directional derivative of the
    /// input and of every parameter with a central difference.
    fn check(store: &ParamStore, input: Tensor, f: impl Fn(&mut Graph, Var) -> Var) {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let eval = |store: &ParamStore, x: &Tensor, r: Option<&[f32]>| -> (f64, Vec<f32>) {
            let mut g = Graph::new(store);
            let xv = g.input_with_grad(x.clone());
            let out = f(&mut g, xv);
            let val = g.value(out).data.clone();
            let loss = r.map(|r| val.iter().zip(r).map(|(a, b)| *a as f64 * *b as f64).sum()).unwrap_or(0.0);
            (loss, val)
        };
        let (_, out) = eval(store, &input, None);
        let r: Vec<f32> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut g = Graph::new(store);
        let xv = g.input_with_grad(input.clone());
        let o = f(&mut g, xv);
        let grads = g.backward(&[(o, &r)]);

        let h = 1e-2f32;
        // Input direction.
        let u: Vec<f32> = (0..input.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let shift = |s: f32| Tensor { shape: input.shape.clone(), data: input.data.iter().zip(&u).map(|(a, b)| a + s * b).collect() };
        let fd = (eval(store, &shift(h), Some(&r)).0 - eval(store, &shift(-h), Some(&r)).0) / (2.0 * h as f64);
        let an: f64 = grads.input(xv).unwrap().iter().zip(&u).map(|(a, b)| *a as f64 * *b as f64).sum();
        assert!((fd - an).abs() <= 2e-2 * fd.abs().max(an.abs()).max(1e-2), "input: fd {fd} analytic {an}");
        // Each parameter tensor.
        for p in 0..store.len() {
            let u: Vec<f32> = (0..store.values[p].len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let moved = |s: f32| {
                let mut st = store.clone();
                st.values[p].iter_mut().zip(&u).for_each(|(a, b)| *a += s * b);
                st
            };
            let fd = (eval(&moved(h), &input, Some(&r)).0 - eval(&moved(-h), &input, Some(&r)).0) / (2.0 * h as f64);
            let an: f64 = grads.params[p].iter().zip(&u).map(|(a, b)| *a as f64 * *b as f64).sum();
            assert!((fd - an).abs() <= 2e-2 * fd.abs().max(an.abs()).max(1e-2), "param {}: fd {fd} analytic {an}", store.names[p]);
        }
    }

    fn store_with(rng: &mut ChaCha8Rng, specs: &[(&str, &[usize])]) -> (ParamStore, Vec<ParamId>) {
        let mut s = ParamStore::default();
        let ids = specs
            .iter()
            .map(|(n, sh)| {
                let id = s.add(*n, sh, Init::Zeros, rng);
                let len = s.values[id.0].len();
                s.values[id.0] = (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect();
                id
            })
            .collect();
        (s, ids)
    }

    #[test]
    fn conv_ops_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (s, ids) = store_with(&mut rng, &[("w", &[3, 2, 27]), ("b", &[3]), ("w1", &[2, 3]), ("b1", &[2])]);
        let x = rand_tensor(&mut rng, vec![2, 2, 4, 3, 5]);
        check(&s, x, |g, x| {
            let y = g.conv3(x, ids[0], ids[1]);
            g.conv1(y, ids[2], ids[3])
        });
    }

    #[test]
    fn transposed_and_strided_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (s, ids) = store_with(&mut rng, &[("wt", &[2, 3, 8]), ("bt", &[3]), ("ws", &[2, 3, 27]), ("bs", &[2])]);
        let x = rand_tensor(&mut rng, vec![2, 2, 2, 3, 2]);
        let geom = StridedConv { kernel: 3, stride: 2, pad: 1 };
        check(&s, x, |g, x| {
            let y = g.conv_transpose2(x, ids[0], ids[1]);
            g.strided_conv(y, ids[2], ids[3], geom)
        });
    }

    #[test]
    fn norm_activation_pool_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (s, ids) = store_with(&mut rng, &[("g", &[2]), ("b", &[2])]);
        let x = rand_tensor(&mut rng, vec![2, 2, 4, 4, 2]);
        check(&s, x, |g, x| {
            let y = g.instance_norm(x, ids[0], ids[1]);
            let y = g.leaky_relu(y, 0.1);
            let p = g.maxpool2(y);
            g.upsample2(p)
        });
    }

    #[test]
    fn head_ops_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (s, ids) = store_with(&mut rng, &[("w", &[3, 4]), ("b", &[3])]);
        let x = rand_tensor(&mut rng, vec![2, 2, 2, 3, 2]);
        check(&s, x.clone(), |g, x| {
            let t = g.tanh(x);
            let c = g.concat(x, t);
            let sm = g.softmax(c);
            let mut drop_rng = ChaCha8Rng::seed_from_u64(5);
            let d = g.dropout(sm, 0.3, &mut drop_rng);
            let p = g.global_avg_pool(d);
            g.linear(p, ids[0], ids[1])
        });
    }

    #[test]
    fn softmax_rows_sum_to_one_and_dropout_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = ParamStore::default();
        let mut g = Graph::new(&s);
        let x = g.input(rand_tensor(&mut rng, vec![1, 3, 2, 2, 2]));
        let y = g.softmax(x);
        let yv = g.value(y);
        for i in 0..8 {
            let t: f32 = (0..3).map(|c| yv.data[c * 8 + i]).sum();
            assert!((t - 1.0).abs() < 1e-6);
        }
        let ones = g.input(Tensor { shape: vec![1, 1, 10, 10, 10], data: vec![1.0; 1000] });
        let d = g.dropout(ones, 0.5, &mut rng);
        let dv = g.value(d);
        assert!(dv.data.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = dv.data.iter().filter(|&&v| v > 0.0).count();
        assert!((400..600).contains(&kept));
        assert_eq!(g.dropout(ones, 0.0, &mut rng), ones);
    }
}
