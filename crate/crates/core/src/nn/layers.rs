//! Forward and backward passes of the individual layers.
//!
//! Activations are channel-major (`C x H x W`) flat slices. Backward functions
//! add parameter gradients into caller-provided buffers and return the
//! gradient with respect to the layer input.

use crate::error::{Error, Result};
use crate::nn::real::{gemm, Real};

/// Channel-major activation with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor3<T> {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if c == 0 || h == 0 || w == 0 || data.len() != c * h * w {
            return Err(Error::ShapeMismatch(format!("{} values for shape {c}x{h}x{w}", data.len())));
        }
        Ok(Tensor3 { c, h, w, data })
    }

    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor3 { c, h, w, data: vec![T::zero(); c * h * w] }
    }

    /// From channel-last (`H x W x C`) storage.
    pub fn from_hwc(h: usize, w: usize, c: usize, hwc: &[f32]) -> Result<Self> {
        if hwc.len() != h * w * c {
            return Err(Error::ShapeMismatch(format!("{} values for shape {h}x{w}x{c}", hwc.len())));
        }
        let mut data = vec![T::zero(); h * w * c];
        for (p, px) in hwc.chunks_exact(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                data[ch * h * w + p] = T::from_f64(v as f64);
            }
        }
        Ok(Tensor3 { c, h, w, data })
    }

    /// `(height, width, channels)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }

    pub fn hw(&self) -> usize {
        self.h * self.w
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zero `dy` wherever the ReLU output `y` was clipped.
pub fn relu_backward<T: Real>(dy: &mut [T], y: &[T]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= T::zero() {
            *d = T::zero();
        }
    }
}

/// Geometry of a stride-1 square-kernel convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub h: usize,
    pub w: usize,
    pub out_c: usize,
    pub k: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(in_c: usize, h: usize, w: usize, out_c: usize, k: usize, pad: usize) -> Result<Self> {
        if h + 2 * pad < k || w + 2 * pad < k || k == 0 {
            return Err(Error::ShapeMismatch(format!("{k}x{k} kernel on {h}x{w} input with padding {pad}")));
        }
        Ok(ConvGeom { in_c, h, w, out_c, k, pad, oh: h + 2 * pad - k + 1, ow: w + 2 * pad - k + 1 })
    }

    pub fn patch_len(&self) -> usize {
        self.in_c * self.k * self.k
    }

    pub fn out_len(&self) -> usize {
        self.oh * self.ow
    }

    /// Output columns `[lo, hi)` whose input column `ox + kx - pad` is inside.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kx);
        let hi = (self.w + self.pad).saturating_sub(kx).min(self.ow);
        (lo, hi.max(lo))
    }
}

/// Patch matrix `(in_c * k * k) x (oh * ow)`.
fn im2col<T: Real>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.out_len();
    let mut cols = vec![T::zero(); g.patch_len() * p];
    for ci in 0..g.in_c {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = &mut cols[((ci * g.k + ky) * g.k + kx) * p..][..p];
                let (lo, hi) = g.valid_cols(kx);
                for oy in 0..g.oh {
                    let iy = oy + ky;
                    if iy < g.pad || iy - g.pad >= g.h || lo >= hi {
                        continue;
                    }
                    let src = &plane[(iy - g.pad) * g.w + lo + kx - g.pad..][..hi - lo];
                    row[oy * g.ow + lo..oy * g.ow + hi].copy_from_slice(src);
                }
            }
        }
    }
    cols
}

/// Scatter-add of a patch-matrix gradient back onto the input.
fn col2im<T: Real>(cols: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.out_len();
    let mut x = vec![T::zero(); g.in_c * g.h * g.w];
    for ci in 0..g.in_c {
        let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = &cols[((ci * g.k + ky) * g.k + kx) * p..][..p];
                let (lo, hi) = g.valid_cols(kx);
                for oy in 0..g.oh {
                    let iy = oy + ky;
                    if iy < g.pad || iy - g.pad >= g.h || lo >= hi {
                        continue;
                    }
                    let dst = &mut plane[(iy - g.pad) * g.w + lo + kx - g.pad..][..hi - lo];
                    for (d, &s) in dst.iter_mut().zip(&row[oy * g.ow + lo..oy * g.ow + hi]) {
                        *d = *d + s;
                    }
                }
            }
        }
    }
    x
}

/// Calls `f(ci, ky, kx, input row offset, output row offset, run length)`
/// for every in-bounds contiguous run of a stride-1 convolution.
fn for_each_run(g: &ConvGeom, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
    for ci in 0..g.in_c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let (lo, hi) = g.valid_cols(kx);
                if lo >= hi {
                    continue;
                }
                for oy in 0..g.oh {
                    let iy = oy + ky;
                    if iy < g.pad || iy - g.pad >= g.h {
                        continue;
                    }
                    let src = ci * g.h * g.w + (iy - g.pad) * g.w + lo + kx - g.pad;
                    f(ci, ky, kx, src, oy * g.ow + lo, hi - lo);
                }
            }
        }
    }
}

/// Direct convolution onto one output map; avoids the patch matrix, which
/// dominates the cost when there is a single filter.
fn single_map_conv_forward<T: Real>(x: &[T], g: &ConvGeom, weight: &[T], bias: T) -> Vec<T> {
    let mut y = vec![bias; g.out_len()];
    for_each_run(g, |ci, ky, kx, src, dst, n| {
        let wv = weight[(ci * g.k + ky) * g.k + kx];
        for (o, &v) in y[dst..dst + n].iter_mut().zip(&x[src..src + n]) {
            *o = *o + wv * v;
        }
    });
    y
}

fn single_map_conv_backward<T: Real>(
    dy: &[T],
    x: &[T],
    g: &ConvGeom,
    weight: &[T],
    dw: &mut [T],
    db: &mut [T],
) -> Vec<T> {
    db[0] = db[0] + dy.iter().copied().sum::<T>();
    let mut dx = vec![T::zero(); x.len()];
    for_each_run(g, |ci, ky, kx, src, dst, n| {
        let idx = (ci * g.k + ky) * g.k + kx;
        let wv = weight[idx];
        let mut acc = T::zero();
        for ((d, &v), gx) in dy[dst..dst + n].iter().zip(&x[src..src + n]).zip(&mut dx[src..src + n]) {
            acc = acc + *d * v;
            *gx = *gx + wv * *d;
        }
        dw[idx] = dw[idx] + acc;
    });
    dx
}

/// Cross-correlation with `weight` (`out_c x in_c x k x k`) and `bias`.
/// Returns the output and the patch matrix needed by the backward pass.
pub fn conv_forward<T: Real>(x: &[T], g: &ConvGeom, weight: &[T], bias: &[T]) -> (Vec<T>, Vec<T>) {
    let p = g.out_len();
    let cols = im2col(x, g);
    let mut y = vec![T::zero(); g.out_c * p];
    for (o, row) in y.chunks_exact_mut(p).enumerate() {
        row.fill(bias[o]);
    }
    gemm(g.out_c, g.patch_len(), p, weight, false, &cols, false, &mut y, true);
    (y, cols)
}

/// Accumulates `dw`, `db`; returns the input gradient when `need_dx`.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Real>(
    dy: &[T],
    cols: &[T],
    g: &ConvGeom,
    weight: &[T],
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
) -> Option<Vec<T>> {
    let p = g.out_len();
    gemm(g.out_c, p, g.patch_len(), dy, false, cols, true, dw, true);
    for (o, row) in dy.chunks_exact(p).enumerate() {
        db[o] = db[o] + row.iter().copied().sum::<T>();
    }
    if !need_dx {
        return None;
    }
    let mut dcols = vec![T::zero(); g.patch_len() * p];
    gemm(g.patch_len(), g.out_c, p, weight, true, dy, false, &mut dcols, false);
    Some(col2im(&dcols, g))
}

/// `y = W x + b` with `W` stored `out x in`.
pub fn dense_forward<T: Real>(x: &[T], weight: &[T], bias: &[T]) -> Vec<T> {
    let n_in = x.len();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| weight[o * n_in..(o + 1) * n_in].iter().zip(x).fold(b, |acc, (&w, &v)| acc + w * v))
        .collect()
}

pub fn dense_backward<T: Real>(
    dy: &[T],
    x: &[T],
    weight: &[T],
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
) -> Option<Vec<T>> {
    let n_in = x.len();
    for (o, &d) in dy.iter().enumerate() {
        db[o] = db[o] + d;
        if d != T::zero() {
            for (g, &v) in dw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                *g = *g + d * v;
            }
        }
    }
    if !need_dx {
        return None;
    }
    let mut dx = vec![T::zero(); n_in];
    for (o, &d) in dy.iter().enumerate() {
        if d != T::zero() {
            for (g, &w) in dx.iter_mut().zip(&weight[o * n_in..(o + 1) * n_in]) {
                *g = *g + d * w;
            }
        }
    }
    Some(dx)
}

pub fn global_avg_pool<T: Real>(x: &[T], c: usize) -> Vec<T> {
    let hw = x.len() / c;
    let scale = T::from_f64(1.0 / hw as f64);
    x.chunks_exact(hw).map(|ch| ch.iter().copied().sum::<T>() * scale).collect()
}

pub fn global_avg_pool_backward<T: Real>(dy: &[T], hw: usize) -> Vec<T> {
    let scale = T::from_f64(1.0 / hw as f64);
    dy.iter().flat_map(|&d| std::iter::repeat_n(d * scale, hw)).collect()
}

/// Parameters of the shared two-layer channel-attention MLP.
#[derive(Debug, Clone, Copy)]
pub struct CamParams<'a, T> {
    /// `hidden x C`
    pub w1: &'a [T],
    pub b1: &'a [T],
    /// `C x hidden`
    pub w2: &'a [T],
    pub b2: &'a [T],
}

pub struct CamGrads<'a, T> {
    pub w1: &'a mut [T],
    pub b1: &'a mut [T],
    pub w2: &'a mut [T],
    pub b2: &'a mut [T],
}

/// Saved state of one MLP branch.
#[derive(Debug, Clone)]
struct MlpBranch<T> {
    input: Vec<T>,
    hidden: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct CamCache<T> {
    avg: MlpBranch<T>,
    max: MlpBranch<T>,
    argmax: Vec<usize>,
    /// Channel weights in `(0, 1)`.
    pub weights: Vec<T>,
}

fn mlp_forward<T: Real>(v: Vec<T>, p: &CamParams<T>) -> (MlpBranch<T>, Vec<T>) {
    let mut hidden = dense_forward(&v, p.w1, p.b1);
    relu_inplace(&mut hidden);
    let out = dense_forward(&hidden, p.w2, p.b2);
    (MlpBranch { input: v, hidden }, out)
}

fn mlp_backward<T: Real>(d_out: &[T], br: &MlpBranch<T>, p: &CamParams<T>, g: &mut CamGrads<T>) -> Vec<T> {
    let mut dh = dense_backward(d_out, &br.hidden, p.w2, g.w2, g.b2, true).expect("dx requested");
    relu_backward(&mut dh, &br.hidden);
    dense_backward(&dh, &br.input, p.w1, g.w1, g.b1, true).expect("dx requested")
}

/// Channel attention weights `sigmoid(MLP(avg) + MLP(max))` of `x` (`c x hw`).
pub fn cam_forward<T: Real>(x: &[T], c: usize, p: &CamParams<T>) -> CamCache<T> {
    let hw = x.len() / c;
    let avg = global_avg_pool(x, c);
    let mut max = Vec::with_capacity(c);
    let mut argmax = Vec::with_capacity(c);
    for ch in x.chunks_exact(hw) {
        let (k, m) = ch.iter().enumerate().fold((0, ch[0]), |(bk, bm), (k, &v)| if v > bm { (k, v) } else { (bk, bm) });
        max.push(m);
        argmax.push(k);
    }
    let (avg, oa) = mlp_forward(avg, p);
    let (max, om) = mlp_forward(max, p);
    let weights = oa.iter().zip(&om).map(|(&a, &b)| sigmoid(a + b)).collect();
    CamCache { avg, max, argmax, weights }
}

/// Gradient of the input given the gradient of the channel weights.
pub fn cam_backward<T: Real>(
    d_weights: &[T],
    cache: &CamCache<T>,
    hw: usize,
    p: &CamParams<T>,
    g: &mut CamGrads<T>,
) -> Vec<T> {
    let dz: Vec<T> = d_weights.iter().zip(&cache.weights).map(|(&d, &a)| d * a * (T::one() - a)).collect();
    let d_avg = mlp_backward(&dz, &cache.avg, p, g);
    let d_max = mlp_backward(&dz, &cache.max, p, g);
    let mut dx = global_avg_pool_backward(&d_avg, hw);
    for (ch, (&k, &d)) in cache.argmax.iter().zip(&d_max).enumerate() {
        dx[ch * hw + k] = dx[ch * hw + k] + d;
    }
    dx
}

#[derive(Debug, Clone)]
pub struct SamCache<T> {
    pooled: Vec<T>,
    argmax: Vec<usize>,
    /// Spatial weights in `(0, 1)`.
    pub weights: Vec<T>,
}

/// Spatial attention weights `sigmoid(conv([mean_c; max_c]))` of `x` (`c x h x w`).
pub fn sam_forward<T: Real>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    g: &ConvGeom,
    weight: &[T],
    bias: &[T],
) -> SamCache<T> {
    let hw = h * w;
    let inv_c = T::from_f64(1.0 / c as f64);
    let mut pooled = vec![T::zero(); 2 * hw];
    let mut argmax = vec![0; hw];
    for p in 0..hw {
        let (mut sum, mut best, mut arg) = (T::zero(), x[p], 0);
        for ch in 0..c {
            let v = x[ch * hw + p];
            sum = sum + v;
            if v > best {
                best = v;
                arg = ch;
            }
        }
        pooled[p] = sum * inv_c;
        pooled[hw + p] = best;
        argmax[p] = arg;
    }
    let s = single_map_conv_forward(&pooled, g, weight, bias[0]);
    SamCache { pooled, argmax, weights: s.into_iter().map(sigmoid).collect() }
}

pub fn sam_backward<T: Real>(
    d_weights: &[T],
    cache: &SamCache<T>,
    c: usize,
    g: &ConvGeom,
    weight: &[T],
    dw: &mut [T],
    db: &mut [T],
) -> Vec<T> {
    let hw = g.h * g.w;
    let ds: Vec<T> = d_weights.iter().zip(&cache.weights).map(|(&d, &b)| d * b * (T::one() - b)).collect();
    let dpooled = single_map_conv_backward(&ds, &cache.pooled, g, weight, dw, db);
    let inv_c = T::from_f64(1.0 / c as f64);
    let mut dx = vec![T::zero(); c * hw];
    for p in 0..hw {
        let da = dpooled[p] * inv_c;
        for ch in 0..c {
            dx[ch * hw + p] = da;
        }
        let k = cache.argmax[p] * hw + p;
        dx[k] = dx[k] + dpooled[hw + p];
    }
    dx
}

/// Refined features and both attention caches of one CBAM block.
#[derive(Debug, Clone)]
pub struct CbamCache<T> {
    pub cam: CamCache<T>,
    /// Channel-refined features `F'`.
    pub refined: Vec<T>,
    pub sam: SamCache<T>,
}

/// `F' = cam(F) * F`, `F'' = sam(F') * F'`.
pub fn cbam_forward<T: Real>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    cam: &CamParams<T>,
    sam_geom: &ConvGeom,
    sam_w: &[T],
    sam_b: &[T],
) -> (Vec<T>, CbamCache<T>) {
    let hw = h * w;
    let cam_cache = cam_forward(x, c, cam);
    let mut refined = x.to_vec();
    for (ch, &a) in refined.chunks_exact_mut(hw).zip(&cam_cache.weights) {
        for v in ch {
            *v = *v * a;
        }
    }
    let sam_cache = sam_forward(&refined, c, h, w, sam_geom, sam_w, sam_b);
    let mut out = refined.clone();
    for ch in out.chunks_exact_mut(hw) {
        for (v, &b) in ch.iter_mut().zip(&sam_cache.weights) {
            *v = *v * b;
        }
    }
    (out, CbamCache { cam: cam_cache, refined, sam: sam_cache })
}

#[allow(clippy::too_many_arguments)]
pub fn cbam_backward<T: Real>(
    dy: &[T],
    x: &[T],
    c: usize,
    cache: &CbamCache<T>,
    cam: &CamParams<T>,
    cam_grads: &mut CamGrads<T>,
    sam_geom: &ConvGeom,
    sam_w: &[T],
    sam_dw: &mut [T],
    sam_db: &mut [T],
) -> Vec<T> {
    let hw = dy.len() / c;
    let b = &cache.sam.weights;
    // Through F'' = b * F'.
    let mut d_refined = vec![T::zero(); dy.len()];
    let mut d_b = vec![T::zero(); hw];
    for ch in 0..c {
        for p in 0..hw {
            let k = ch * hw + p;
            d_refined[k] = dy[k] * b[p];
            d_b[p] = d_b[p] + dy[k] * cache.refined[k];
        }
    }
    let via_sam = sam_backward(&d_b, &cache.sam, c, sam_geom, sam_w, sam_dw, sam_db);
    for (d, s) in d_refined.iter_mut().zip(&via_sam) {
        *d = *d + *s;
    }
    // Through F' = a * F.
    let a = &cache.cam.weights;
    let mut dx = vec![T::zero(); dy.len()];
    let mut d_a = vec![T::zero(); c];
    for ch in 0..c {
        let mut acc = T::zero();
        for p in 0..hw {
            let k = ch * hw + p;
            dx[k] = d_refined[k] * a[ch];
            acc = acc + d_refined[k] * x[k];
        }
        d_a[ch] = acc;
    }
    let via_cam = cam_backward(&d_a, &cache.cam, hw, cam, cam_grads);
    for (d, s) in dx.iter_mut().zip(&via_cam) {
        *d = *d + *s;
    }
    dx
}

/// Numerically stable softmax.
pub fn softmax<T: Real>(z: &[T]) -> Vec<T> {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
    let s = e.iter().copied().sum::<T>();
    e.into_iter().map(|v| v / s).collect()
}
