//! Raw single-sample kernels on channel-major `[c, d, h, w]` buffers.

use matrixmultiply::sgemm;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub d: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn new(s: [usize; 3]) -> Self {
        Dims { d: s[0], h: s[1], w: s[2] }
    }
    pub fn len(&self) -> usize {
        self.d * self.h * self.w
    }
    pub fn padded(&self) -> Dims {
        Dims { d: self.d + 2, h: self.h + 2, w: self.w + 2 }
    }
    pub fn halved(&self) -> Dims {
        Dims { d: self.d / 2, h: self.h / 2, w: self.w / 2 }
    }
    pub fn doubled(&self) -> Dims {
        Dims { d: self.d * 2, h: self.h * 2, w: self.w * 2 }
    }
    pub fn arr(&self) -> [usize; 3] {
        [self.d, self.h, self.w]
    }
}

/// `C = alpha * A B + beta * C` on row/column-strided f32 views.
#[allow(clippy::too_many_arguments)]
#[inline]
unsafe fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: *const f32,
    rsa: usize,
    csa: usize,
    b: *const f32,
    rsb: usize,
    csb: usize,
    beta: f32,
    c: *mut f32,
    rsc: usize,
    csc: usize,
) {
    sgemm(
        m, k, n, 1.0, a, rsa as isize, csa as isize, b, rsb as isize, csb as isize, beta, c, rsc as isize,
        csc as isize,
    );
}

/// Copies `x` (`[c, dims]`) into the interior of a zero-padded `[c, dims+2]` buffer.
pub fn pad1(x: &[f32], c: usize, dims: Dims, out: &mut Vec<f32>) {
    let p = dims.padded();
    let plane = p.h * p.w;
    // Only the border is zeroed; the interior is overwritten below.
    out.resize(c * p.len(), 0.0);
    for (ch, vol) in out.chunks_exact_mut(p.len()).enumerate() {
        vol[..plane + p.w].fill(0.0);
        vol[p.len() - plane - p.w..].fill(0.0);
        for i in 0..dims.d {
            let slab = &mut vol[(i + 1) * plane..(i + 2) * plane];
            slab[..p.w].fill(0.0);
            slab[plane - p.w..].fill(0.0);
            for j in 0..dims.h {
                let src = ch * dims.len() + (i * dims.h + j) * dims.w;
                let row = &mut slab[(j + 1) * p.w..(j + 2) * p.w];
                row[0] = 0.0;
                row[1..=dims.w].copy_from_slice(&x[src..src + dims.w]);
                row[p.w - 1] = 0.0;
            }
        }
    }
}

/// Reads the interior of a padded buffer back into `[c, dims]`, adding `to`.
fn unpad1_add(xp: &[f32], c: usize, dims: Dims, to: &mut [f32]) {
    let p = dims.padded();
    for ch in 0..c {
        for i in 0..dims.d {
            for j in 0..dims.h {
                let dst = ch * dims.len() + (i * dims.h + j) * dims.w;
                let src = ch * p.len() + ((i + 1) * p.h + j + 1) * p.w + 1;
                for (a, b) in to[dst..dst + dims.w].iter_mut().zip(&xp[src..src + dims.w]) {
                    *a += *b;
                }
            }
        }
    }
}

/// Offsets of the 27 taps inside a padded volume, in weight order (a, b, c).
fn tap_shifts(p: Dims) -> [isize; 27] {
    let mut s = [0isize; 27];
    for (t, v) in s.iter_mut().enumerate() {
        let (a, b, c) = ((t / 9) as isize, ((t / 3) % 3) as isize, (t % 3) as isize);
        *v = (a - 1) * (p.h * p.w) as isize + (b - 1) * p.w as isize + (c - 1);
    }
    s
}

/// Output channels and positions handled per register block.
const LANES: usize = 8;
/// Positions per cache block of the weight-gradient reduction.
const DW_BLOCK: usize = 256;

trait MulAdd {
    fn mul_add(a: f32, b: f32, c: f32) -> f32;
}

/// Hardware fused multiply-add; only used inside FMA-enabled functions.
struct Fused;
/// Separate multiply and add, for targets without FMA.
struct Plain;

impl MulAdd for Fused {
    #[inline(always)]
    fn mul_add(a: f32, b: f32, c: f32) -> f32 {
        a.mul_add(b, c)
    }
}

impl MulAdd for Plain {
    #[inline(always)]
    fn mul_add(a: f32, b: f32, c: f32) -> f32 {
        a * b + c
    }
}

#[cfg(target_arch = "x86_64")]
fn has_fma() -> bool {
    std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma")
}

/// Geometry of one flat pass over a padded volume.
#[derive(Clone, Copy)]
struct Pass<'a> {
    vp: usize,
    shifts: &'a [isize; 27],
    start: usize,
    /// Multiple of `LANES`.
    n: usize,
}

/// `dst[o, j] = sum_{i, t} wt[ob][i][t][o % 8] * src[i, j + shift_t]` for the
/// positions `j` of `pass`; `wt` is blocked by eight output channels.
#[inline(always)]
unsafe fn shifted_sum<M: MulAdd>(src: &[f32], cin: usize, wt: &[f32], cout: usize, pass: Pass, dst: &mut [f32]) {
    let sp = src.as_ptr();
    for ob in 0..cout.div_ceil(LANES) {
        let wb = &wt[ob * cin * 27 * LANES..(ob + 1) * cin * 27 * LANES];
        let valid = (cout - ob * LANES).min(LANES);
        let mut j = pass.start;
        while j < pass.start + pass.n {
            let mut acc = [[0f32; LANES]; LANES];
            for i in 0..cin {
                let base = sp.add(i * pass.vp + j);
                for (t, &sh) in pass.shifts.iter().enumerate() {
                    let x = &*(base.offset(sh) as *const [f32; LANES]);
                    let w = &*(wb.as_ptr().add((i * 27 + t) * LANES) as *const [f32; LANES]);
                    for o in 0..LANES {
                        for l in 0..LANES {
                            acc[o][l] = M::mul_add(w[o], x[l], acc[o][l]);
                        }
                    }
                }
            }
            for (o, row) in acc.iter().enumerate().take(valid) {
                let d = (ob * LANES + o) * pass.vp + j;
                dst[d..d + LANES].copy_from_slice(row);
            }
            j += LANES;
        }
    }
}

/// `dw[o, i, t] += sum_j dy[o, j] * x[i, j + shift_t]`; `dy` holds a
/// multiple of eight channels (extra ones zero).
#[inline(always)]
unsafe fn shifted_dots<M: MulAdd>(dy: &[f32], cout: usize, x: &[f32], cin: usize, pass: Pass, dw: &mut [f32]) {
    let (dp, xp) = (dy.as_ptr(), x.as_ptr());
    let blocks = cout.div_ceil(LANES);
    let mut sums = vec![[[0f32; LANES]; LANES]; blocks * cin * 27];
    let mut j0 = pass.start;
    while j0 < pass.start + pass.n {
        let jn = (j0 + DW_BLOCK).min(pass.start + pass.n);
        for ob in 0..blocks {
            for i in 0..cin {
                for (t, &sh) in pass.shifts.iter().enumerate() {
                    let mut acc = [[0f32; LANES]; LANES];
                    let mut j = j0;
                    while j < jn {
                        let xv = &*(xp.add(i * pass.vp + j).offset(sh) as *const [f32; LANES]);
                        for o in 0..LANES {
                            let g = &*(dp.add((ob * LANES + o) * pass.vp + j) as *const [f32; LANES]);
                            for l in 0..LANES {
                                acc[o][l] = M::mul_add(g[l], xv[l], acc[o][l]);
                            }
                        }
                        j += LANES;
                    }
                    let s = &mut sums[(ob * cin + i) * 27 + t];
                    for o in 0..LANES {
                        for l in 0..LANES {
                            s[o][l] += acc[o][l];
                        }
                    }
                }
            }
        }
        j0 = jn;
    }
    for ob in 0..blocks {
        for o in 0..(cout - ob * LANES).min(LANES) {
            for i in 0..cin {
                for t in 0..27 {
                    let s = &sums[(ob * cin + i) * 27 + t][o];
                    dw[((ob * LANES + o) * cin + i) * 27 + t] += s.iter().sum::<f32>();
                }
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn shifted_sum_fma(src: &[f32], cin: usize, wt: &[f32], cout: usize, pass: Pass, dst: &mut [f32]) {
    shifted_sum::<Fused>(src, cin, wt, cout, pass, dst)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn shifted_dots_fma(dy: &[f32], cout: usize, x: &[f32], cin: usize, pass: Pass, dw: &mut [f32]) {
    shifted_dots::<Fused>(dy, cout, x, cin, pass, dw)
}

/// Bounds every raw read of the flat passes stays within.
fn check_pass(src_len: usize, channels: usize, pass: &Pass) {
    let max_shift = pass.shifts[26];
    assert!(pass.n % LANES == 0 && pass.start as isize >= max_shift);
    assert!(src_len as isize >= ((channels - 1) * pass.vp + pass.start + pass.n) as isize + max_shift);
}

fn run_shifted_sum(src: &[f32], cin: usize, wt: &[f32], cout: usize, pass: Pass, dst: &mut [f32]) {
    check_pass(src.len(), cin, &pass);
    assert!(dst.len() >= (cout - 1) * pass.vp + pass.start + pass.n);
    assert!(wt.len() >= cout.div_ceil(LANES) * cin * 27 * LANES);
    #[cfg(target_arch = "x86_64")]
    if has_fma() {
        // SAFETY: bounds checked above; CPU features detected at runtime.
        return unsafe { shifted_sum_fma(src, cin, wt, cout, pass, dst) };
    }
    // SAFETY: bounds checked above.
    unsafe { shifted_sum::<Plain>(src, cin, wt, cout, pass, dst) }
}

fn run_shifted_dots(dy: &[f32], cout: usize, x: &[f32], cin: usize, pass: Pass, dw: &mut [f32]) {
    check_pass(x.len(), cin, &pass);
    assert!(dy.len() >= (cout.div_ceil(LANES) * LANES - 1) * pass.vp + pass.start + pass.n);
    #[cfg(target_arch = "x86_64")]
    if has_fma() {
        // SAFETY: bounds checked above; CPU features detected at runtime.
        return unsafe { shifted_dots_fma(dy, cout, x, cin, pass, dw) };
    }
    // SAFETY: bounds checked above.
    unsafe { shifted_dots::<Plain>(dy, cout, x, cin, pass, dw) }
}

/// Rearranges `[o, i, 27]` weights into blocks of eight outputs, `[ob][i][t][8]`,
/// optionally swapping the roles of `o` and `i` and mirroring the taps.
fn block_weights(w: &[f32], cout: usize, cin: usize, transpose: bool, out: &mut Vec<f32>) {
    let (no, ni) = if transpose { (cin, cout) } else { (cout, cin) };
    out.clear();
    out.resize(no.div_ceil(LANES) * ni * 27 * LANES, 0.0);
    for o in 0..no {
        for i in 0..ni {
            for t in 0..27 {
                let v = if transpose { w[(i * cin + o) * 27 + 26 - t] } else { w[(o * cin + i) * 27 + t] };
                out[(((o / LANES) * ni + i) * 27 + t) * LANES + o % LANES] = v;
            }
        }
    }
}

/// Scratch buffers reused across convolution calls.
#[derive(Default)]
pub struct ConvScratch {
    xp: Vec<f32>,
    yp: Vec<f32>,
    wt: Vec<f32>,
}

/// Flat positions covering every interior voxel of a padded volume,
/// rounded up to whole register blocks.
fn interior_pass(p: Dims, shifts: &[isize; 27]) -> Pass<'_> {
    let q0 = p.h * p.w + p.w + 1;
    let nq = p.len() - 2 * q0;
    Pass { vp: p.len(), shifts, start: q0, n: nq.div_ceil(LANES) * LANES }
}

/// Pads `x` and appends zero slack so rounded-up passes stay in bounds.
fn pad_with_slack(x: &[f32], c: usize, c_total: usize, dims: Dims, out: &mut Vec<f32>) {
    pad1(x, c, dims, out);
    out.resize(c_total * dims.padded().len() + 2 * LANES, 0.0);
}

/// 3x3x3 convolution with zero "same" padding. `w` is `[cout, cin, 27]`.
/// Works on the flattened padded volume: positions that straddle the
/// border compute garbage that is never read back.
#[allow(clippy::too_many_arguments)]
pub fn conv3_forward(
    x: &[f32],
    cin: usize,
    dims: Dims,
    w: &[f32],
    bias: &[f32],
    cout: usize,
    y: &mut [f32],
    s: &mut ConvScratch,
) {
    let p = dims.padded();
    let shifts = tap_shifts(p);
    let pass = interior_pass(p, &shifts);
    pad_with_slack(x, cin, cin, dims, &mut s.xp);
    // Every interior position is written by the pass; no zeroing needed.
    s.yp.resize(cout * p.len(), 0.0);
    block_weights(w, cout, cin, false, &mut s.wt);
    run_shifted_sum(&s.xp, cin, &s.wt, cout, pass, &mut s.yp);
    let v = dims.len();
    for co in 0..cout {
        y[co * v..(co + 1) * v].fill(bias[co]);
    }
    unpad1_add(&s.yp, cout, dims, y);
}

/// Gradients of `conv3_forward`: accumulates into `dx` (if given), `dw` and `db`.
/// The input gradient is the same flat pass with mirrored, transposed weights.
#[allow(clippy::too_many_arguments)]
pub fn conv3_backward(
    x: &[f32],
    cin: usize,
    dims: Dims,
    w: &[f32],
    cout: usize,
    dy: &[f32],
    dx: Option<&mut [f32]>,
    dw: &mut [f32],
    db: &mut [f32],
    s: &mut ConvScratch,
) {
    let p = dims.padded();
    let shifts = tap_shifts(p);
    let pass = interior_pass(p, &shifts);
    let v = dims.len();
    for co in 0..cout {
        db[co] += dy[co * v..(co + 1) * v].iter().sum::<f32>();
    }
    pad_with_slack(dy, cout, cout.div_ceil(LANES) * LANES, dims, &mut s.yp);
    pad_with_slack(x, cin, cin, dims, &mut s.xp);
    run_shifted_dots(&s.yp, cout, &s.xp, cin, pass, dw);
    if let Some(dx) = dx {
        block_weights(w, cout, cin, true, &mut s.wt);
        // The padded input is no longer needed; reuse it for its gradient.
        s.xp.resize(cin * p.len(), 0.0);
        run_shifted_sum(&s.yp, cout, &s.wt, cin, pass, &mut s.xp);
        unpad1_add(&s.xp, cin, dims, dx);
    }
}

/// Pointwise (1x1x1) convolution: `y = W x + b`, `W` is `[cout, cin]`.
pub fn conv1_forward(x: &[f32], cin: usize, v: usize, w: &[f32], bias: &[f32], cout: usize, y: &mut [f32]) {
    for co in 0..cout {
        y[co * v..(co + 1) * v].fill(bias[co]);
    }
    unsafe { gemm(cout, cin, v, w.as_ptr(), cin, 1, x.as_ptr(), v, 1, 1.0, y.as_mut_ptr(), v, 1) };
}

#[allow(clippy::too_many_arguments)]
pub fn conv1_backward(
    x: &[f32],
    cin: usize,
    v: usize,
    w: &[f32],
    cout: usize,
    dy: &[f32],
    dx: Option<&mut [f32]>,
    dw: &mut [f32],
    db: &mut [f32],
) {
    for co in 0..cout {
        db[co] += dy[co * v..(co + 1) * v].iter().sum::<f32>();
    }
    unsafe { gemm(cout, v, cin, dy.as_ptr(), v, 1, x.as_ptr(), 1, v, 1.0, dw.as_mut_ptr(), cin, 1) };
    if let Some(dx) = dx {
        unsafe { gemm(cin, cout, v, w.as_ptr(), 1, cin, dy.as_ptr(), v, 1, 1.0, dx.as_mut_ptr(), v, 1) };
    }
}

/// Transposed convolution with kernel 2 and stride 2. `w` is `[cin, cout, 8]`.
#[allow(clippy::too_many_arguments)]
pub fn convt2_forward(
    x: &[f32],
    cin: usize,
    dims: Dims,
    w: &[f32],
    bias: &[f32],
    cout: usize,
    y: &mut [f32],
    z: &mut Vec<f32>,
) {
    let v = dims.len();
    z.clear();
    z.resize(cout * 8 * v, 0.0);
    // z[(co, tap), voxel] = sum_ci w[ci, co, tap] x[ci, voxel]
    unsafe { gemm(cout * 8, cin, v, w.as_ptr(), 1, cout * 8, x.as_ptr(), v, 1, 0.0, z.as_mut_ptr(), v, 1) };
    let o = dims.doubled();
    for co in 0..cout {
        for tap in 0..8 {
            let (a, b, c) = (tap / 4, (tap / 2) % 2, tap % 2);
            let zr = &z[(co * 8 + tap) * v..][..v];
            for i in 0..dims.d {
                for j in 0..dims.h {
                    let row = co * o.len() + ((2 * i + a) * o.h + 2 * j + b) * o.w + c;
                    let src = (i * dims.h + j) * dims.w;
                    for k in 0..dims.w {
                        y[row + 2 * k] = zr[src + k] + bias[co];
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn convt2_backward(
    x: &[f32],
    cin: usize,
    dims: Dims,
    w: &[f32],
    cout: usize,
    dy: &[f32],
    dx: Option<&mut [f32]>,
    dw: &mut [f32],
    db: &mut [f32],
    z: &mut Vec<f32>,
) {
    let v = dims.len();
    let o = dims.doubled();
    z.clear();
    z.resize(cout * 8 * v, 0.0);
    for co in 0..cout {
        db[co] += dy[co * o.len()..(co + 1) * o.len()].iter().sum::<f32>();
        for tap in 0..8 {
            let (a, b, c) = (tap / 4, (tap / 2) % 2, tap % 2);
            let zr = &mut z[(co * 8 + tap) * v..][..v];
            for i in 0..dims.d {
                for j in 0..dims.h {
                    let row = co * o.len() + ((2 * i + a) * o.h + 2 * j + b) * o.w + c;
                    let dst = (i * dims.h + j) * dims.w;
                    for k in 0..dims.w {
                        zr[dst + k] = dy[row + 2 * k];
                    }
                }
            }
        }
    }
    // dw[ci, (co,tap)] += sum_v x[ci, v] z[(co,tap), v]
    unsafe { gemm(cin, v, cout * 8, x.as_ptr(), v, 1, z.as_ptr(), 1, v, 1.0, dw.as_mut_ptr(), cout * 8, 1) };
    if let Some(dx) = dx {
        unsafe { gemm(cin, cout * 8, v, w.as_ptr(), cout * 8, 1, z.as_ptr(), v, 1, 1.0, dx.as_mut_ptr(), v, 1) };
    }
}

/// Geometry of a strided cube-kernel convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StridedConv {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl StridedConv {
    pub fn out_dims(&self, d: Dims) -> Dims {
        let f = |n: usize| (n + 2 * self.pad - self.kernel) / self.stride + 1;
        Dims { d: f(d.d), h: f(d.h), w: f(d.w) }
    }

    fn taps(&self) -> usize {
        self.kernel.pow(3)
    }

    /// Column matrix `[cin * taps, out voxels]`.
    fn im2col(&self, x: &[f32], cin: usize, dims: Dims, col: &mut Vec<f32>) {
        let o = self.out_dims(dims);
        let (kk, taps, ov) = (self.kernel, self.taps(), o.len());
        col.clear();
        col.resize(cin * taps * ov, 0.0);
        for ci in 0..cin {
            for t in 0..taps {
                let (a, b, c) = (t / (kk * kk), (t / kk) % kk, t % kk);
                let row = &mut col[(ci * taps + t) * ov..][..ov];
                for i in 0..o.d {
                    let zi = (i * self.stride + a) as isize - self.pad as isize;
                    if zi < 0 || zi >= dims.d as isize {
                        continue;
                    }
                    for j in 0..o.h {
                        let yj = (j * self.stride + b) as isize - self.pad as isize;
                        if yj < 0 || yj >= dims.h as isize {
                            continue;
                        }
                        for k in 0..o.w {
                            let xk = (k * self.stride + c) as isize - self.pad as isize;
                            if xk >= 0 && xk < dims.w as isize {
                                row[(i * o.h + j) * o.w + k] =
                                    x[ci * dims.len() + (zi as usize * dims.h + yj as usize) * dims.w + xk as usize];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im_add(&self, col: &[f32], cin: usize, dims: Dims, dx: &mut [f32]) {
        let o = self.out_dims(dims);
        let (kk, taps, ov) = (self.kernel, self.taps(), o.len());
        for ci in 0..cin {
            for t in 0..taps {
                let (a, b, c) = (t / (kk * kk), (t / kk) % kk, t % kk);
                let row = &col[(ci * taps + t) * ov..][..ov];
                for i in 0..o.d {
                    let zi = (i * self.stride + a) as isize - self.pad as isize;
                    if zi < 0 || zi >= dims.d as isize {
                        continue;
                    }
                    for j in 0..o.h {
                        let yj = (j * self.stride + b) as isize - self.pad as isize;
                        if yj < 0 || yj >= dims.h as isize {
                            continue;
                        }
                        for k in 0..o.w {
                            let xk = (k * self.stride + c) as isize - self.pad as isize;
                            if xk >= 0 && xk < dims.w as isize {
                                dx[ci * dims.len() + (zi as usize * dims.h + yj as usize) * dims.w + xk as usize] +=
                                    row[(i * o.h + j) * o.w + k];
                            }
                        }
                    }
                }
            }
        }
    }

    /// `w` is `[cout, cin, kernel^3]`.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(&self, x: &[f32], cin: usize, dims: Dims, w: &[f32], bias: &[f32], cout: usize, y: &mut [f32], col: &mut Vec<f32>) {
        let ov = self.out_dims(dims).len();
        self.im2col(x, cin, dims, col);
        for co in 0..cout {
            y[co * ov..(co + 1) * ov].fill(bias[co]);
        }
        let k = cin * self.taps();
        unsafe { gemm(cout, k, ov, w.as_ptr(), k, 1, col.as_ptr(), ov, 1, 1.0, y.as_mut_ptr(), ov, 1) };
    }

    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        x: &[f32],
        cin: usize,
        dims: Dims,
        w: &[f32],
        cout: usize,
        dy: &[f32],
        dx: Option<&mut [f32]>,
        dw: &mut [f32],
        db: &mut [f32],
        col: &mut Vec<f32>,
    ) {
        let ov = self.out_dims(dims).len();
        let k = cin * self.taps();
        for co in 0..cout {
            db[co] += dy[co * ov..(co + 1) * ov].iter().sum::<f32>();
        }
        self.im2col(x, cin, dims, col);
        unsafe { gemm(cout, ov, k, dy.as_ptr(), ov, 1, col.as_ptr(), 1, ov, 1.0, dw.as_mut_ptr(), k, 1) };
        if let Some(dx) = dx {
            col.iter_mut().for_each(|z| *z = 0.0);
            unsafe { gemm(k, cout, ov, w.as_ptr(), 1, k, dy.as_ptr(), ov, 1, 0.0, col.as_mut_ptr(), ov, 1) };
            self.col2im_add(col, cin, dims, dx);
        }
    }
}

/// 2x2x2 max pooling; records the flat input index of each maximum.
pub fn maxpool2_forward(x: &[f32], c: usize, dims: Dims, y: &mut [f32], arg: &mut [u32]) {
    let o = dims.halved();
    for ch in 0..c {
        for i in 0..o.d {
            for j in 0..o.h {
                for k in 0..o.w {
                    let mut best = f32::NEG_INFINITY;
                    let mut at = 0usize;
                    for t in 0..8 {
                        let (a, b, cc) = (t / 4, (t / 2) % 2, t % 2);
                        let idx = ch * dims.len() + ((2 * i + a) * dims.h + 2 * j + b) * dims.w + 2 * k + cc;
                        if x[idx] > best {
                            best = x[idx];
                            at = idx;
                        }
                    }
                    let oi = ch * o.len() + (i * o.h + j) * o.w + k;
                    y[oi] = best;
                    arg[oi] = at as u32;
                }
            }
        }
    }
}

/// One axis of linear x2 upsampling (half-pixel centres, clamped edges):
/// `out[2i] = 0.75 x[i] + 0.25 x[i-1]`, `out[2i+1] = 0.75 x[i] + 0.25 x[i+1]`.
/// `outer` independent lines of length `n` with element stride `inner`.
pub fn upsample_axis(x: &[f32], outer: usize, n: usize, inner: usize, y: &mut [f32]) {
    for o in 0..outer {
        let xb = &x[o * n * inner..][..n * inner];
        let yb = &mut y[o * 2 * n * inner..][..2 * n * inner];
        for i in 0..n {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            for q in 0..inner {
                let c = xb[i * inner + q];
                yb[(2 * i) * inner + q] = 0.75 * c + 0.25 * xb[lo * inner + q];
                yb[(2 * i + 1) * inner + q] = 0.75 * c + 0.25 * xb[hi * inner + q];
            }
        }
    }
}

/// Transpose of `upsample_axis`: accumulates into `dx`.
pub fn upsample_axis_backward(dy: &[f32], outer: usize, n: usize, inner: usize, dx: &mut [f32]) {
    for o in 0..outer {
        let gb = &dy[o * 2 * n * inner..][..2 * n * inner];
        let db = &mut dx[o * n * inner..][..n * inner];
        for i in 0..n {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            for q in 0..inner {
                let (e, f) = (gb[(2 * i) * inner + q], gb[(2 * i + 1) * inner + q]);
                db[i * inner + q] += 0.75 * (e + f);
                db[lo * inner + q] += 0.25 * e;
                db[hi * inner + q] += 0.25 * f;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn dot(a: &[f32], b: &[f32]) -> f64 {
        a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
    }

    fn naive_conv(x: &[f32], cin: usize, d: Dims, w: &[f32], b: &[f32], cout: usize, sc: StridedConv) -> Vec<f32> {
        let o = sc.out_dims(d);
        let kk = sc.kernel;
        let mut y = vec![0f32; cout * o.len()];
        for co in 0..cout {
            for i in 0..o.d {
                for j in 0..o.h {
                    for k in 0..o.w {
                        let mut acc = b[co] as f64;
                        for ci in 0..cin {
                            for t in 0..kk * kk * kk {
                                let (a, bb, c) = (t / (kk * kk), (t / kk) % kk, t % kk);
                                let zi = (i * sc.stride + a) as isize - sc.pad as isize;
                                let yj = (j * sc.stride + bb) as isize - sc.pad as isize;
                                let xk = (k * sc.stride + c) as isize - sc.pad as isize;
                                if zi >= 0 && yj >= 0 && xk >= 0 && (zi as usize) < d.d && (yj as usize) < d.h && (xk as usize) < d.w {
                                    let xi = ci * d.len() + (zi as usize * d.h + yj as usize) * d.w + xk as usize;
                                    acc += w[(co * cin + ci) * kk * kk * kk + t] as f64 * x[xi] as f64;
                                }
                            }
                        }
                        y[co * o.len() + (i * o.h + j) * o.w + k] = acc as f32;
                    }
                }
            }
        }
        y
    }

    fn close(a: &[f32], b: &[f32], tol: f32) {
        assert_eq!(a.len(), b.len());
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            assert!((x - y).abs() <= tol * (1.0 + y.abs()), "at {i}: {x} vs {y}");
        }
    }

    #[test]
    fn conv3_matches_naive_and_its_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dims = Dims::new([5, 4, 6]);
        let (cin, cout) = (3, 2);
        let x = rand_vec(&mut rng, cin * dims.len());
        let w = rand_vec(&mut rng, cout * cin * 27);
        let b = rand_vec(&mut rng, cout);
        let mut y = vec![0f32; cout * dims.len()];
        let mut s = ConvScratch::default();
        conv3_forward(&x, cin, dims, &w, &b, cout, &mut y, &mut s);
        let sc = StridedConv { kernel: 3, stride: 1, pad: 1 };
        close(&y, &naive_conv(&x, cin, dims, &w, &b, cout, sc), 1e-5);

        // <conv(x) - b, g> = <x, conv^T g> and = <w, dW(g)>
        let g = rand_vec(&mut rng, y.len());
        let mut dx = vec![0f32; x.len()];
        let mut dw = vec![0f32; w.len()];
        let mut db = vec![0f32; cout];
        conv3_backward(&x, cin, dims, &w, cout, &g, Some(&mut dx), &mut dw, &mut db, &mut s);
        let zero_b = vec![0f32; cout];
        let mut y0 = vec![0f32; y.len()];
        conv3_forward(&x, cin, dims, &w, &zero_b, cout, &mut y0, &mut s);
        let lhs = dot(&y0, &g);
        assert!((lhs - dot(&x, &dx)).abs() < 1e-3 * lhs.abs().max(1.0));
        assert!((lhs - dot(&w, &dw)).abs() < 1e-3 * lhs.abs().max(1.0));
        let gsum: Vec<f32> = (0..cout).map(|c| g[c * dims.len()..(c + 1) * dims.len()].iter().sum()).collect();
        close(&db, &gsum, 1e-5);
    }

    #[test]
    fn strided_conv_matches_naive_and_its_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dims = Dims::new([6, 5, 4]);
        let (cin, cout) = (2, 3);
        let sc = StridedConv { kernel: 3, stride: 2, pad: 1 };
        let x = rand_vec(&mut rng, cin * dims.len());
        let w = rand_vec(&mut rng, cout * cin * 27);
        let b = vec![0f32; cout];
        let ov = sc.out_dims(dims).len();
        let mut y = vec![0f32; cout * ov];
        let mut col = Vec::new();
        sc.forward(&x, cin, dims, &w, &b, cout, &mut y, &mut col);
        close(&y, &naive_conv(&x, cin, dims, &w, &b, cout, sc), 1e-5);
        let g = rand_vec(&mut rng, y.len());
        let mut dx = vec![0f32; x.len()];
        let mut dw = vec![0f32; w.len()];
        let mut db = vec![0f32; cout];
        sc.backward(&x, cin, dims, &w, cout, &g, Some(&mut dx), &mut dw, &mut db, &mut col);
        let lhs = dot(&y, &g);
        assert!((lhs - dot(&x, &dx)).abs() < 1e-4 * lhs.abs().max(1.0));
        assert!((lhs - dot(&w, &dw)).abs() < 1e-4 * lhs.abs().max(1.0));
    }

    #[test]
    fn conv1_and_convt2_adjoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = Dims::new([2, 3, 2]);
        let (cin, cout, v) = (3, 4, dims.len());
        let x = rand_vec(&mut rng, cin * v);
        let zb = vec![0f32; cout];

        let w1 = rand_vec(&mut rng, cout * cin);
        let mut y1 = vec![0f32; cout * v];
        conv1_forward(&x, cin, v, &w1, &zb, cout, &mut y1);
        for co in 0..cout {
            for q in 0..v {
                let e: f32 = (0..cin).map(|ci| w1[co * cin + ci] * x[ci * v + q]).sum();
                assert!((y1[co * v + q] - e).abs() < 1e-5);
            }
        }
        let g1 = rand_vec(&mut rng, y1.len());
        let (mut dx, mut dw, mut db) = (vec![0f32; x.len()], vec![0f32; w1.len()], vec![0f32; cout]);
        conv1_backward(&x, cin, v, &w1, cout, &g1, Some(&mut dx), &mut dw, &mut db);
        let lhs = dot(&y1, &g1);
        assert!((lhs - dot(&x, &dx)).abs() < 1e-4 && (lhs - dot(&w1, &dw)).abs() < 1e-4);

        let wt = rand_vec(&mut rng, cin * cout * 8);
        let o = dims.doubled();
        let mut yt = vec![0f32; cout * o.len()];
        let mut z = Vec::new();
        convt2_forward(&x, cin, dims, &wt, &zb, cout, &mut yt, &mut z);
        // Every output voxel receives exactly one input voxel per channel.
        for co in 0..cout {
            for i in 0..o.d {
                for j in 0..o.h {
                    for k in 0..o.w {
                        let tap = (i % 2) * 4 + (j % 2) * 2 + k % 2;
                        let src = (i / 2 * dims.h + j / 2) * dims.w + k / 2;
                        let e: f32 = (0..cin).map(|ci| wt[(ci * cout + co) * 8 + tap] * x[ci * v + src]).sum();
                        assert!((yt[co * o.len() + (i * o.h + j) * o.w + k] - e).abs() < 1e-5);
                    }
                }
            }
        }
        let gt = rand_vec(&mut rng, yt.len());
        let (mut dx, mut dw, mut db) = (vec![0f32; x.len()], vec![0f32; wt.len()], vec![0f32; cout]);
        convt2_backward(&x, cin, dims, &wt, cout, &gt, Some(&mut dx), &mut dw, &mut db, &mut z);
        let lhs = dot(&yt, &gt);
        assert!((lhs - dot(&x, &dx)).abs() < 1e-4 && (lhs - dot(&wt, &dw)).abs() < 1e-4);
    }

    #[test]
    fn upsample_axis_values_and_adjoint() {
        let x = [1.0f32, 3.0];
        let mut y = [0f32; 4];
        upsample_axis(&x, 1, 2, 1, &mut y);
        assert_eq!(y, [1.0, 1.5, 2.5, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (outer, n, inner) = (3, 5, 2);
        let x = rand_vec(&mut rng, outer * n * inner);
        let mut y = vec![0f32; 2 * x.len()];
        upsample_axis(&x, outer, n, inner, &mut y);
        let g = rand_vec(&mut rng, y.len());
        let mut dx = vec![0f32; x.len()];
        upsample_axis_backward(&g, outer, n, inner, &mut dx);
        assert!((dot(&y, &g) - dot(&x, &dx)).abs() < 1e-5);
    }

    #[test]
    fn maxpool_picks_window_maximum() {
        let dims = Dims::new([2, 2, 4]);
        let x: Vec<f32> = (0..16).map(|i| ((i * 7) % 16) as f32).collect();
        let (mut y, mut arg) = (vec![0f32; 2], vec![0u32; 2]);
        maxpool2_forward(&x, 1, dims, &mut y, &mut arg);
        for o in 0..2 {
            let window: Vec<f32> = (0..16).filter(|i| (i % 4) / 2 == o).map(|i| x[i]).collect();
            assert_eq!(y[o], window.iter().cloned().fold(f32::MIN, f32::max));
            assert_eq!(x[arg[o] as usize], y[o]);
        }
    }
}
