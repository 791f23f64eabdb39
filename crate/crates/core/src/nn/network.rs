//! Network assembly for the three architectures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{
    cbam_backward, cbam_forward, conv_backward, conv_forward, dense_backward, dense_forward, global_avg_pool,
    global_avg_pool_backward, relu_backward, relu_inplace, softmax, CamGrads, CamParams, CbamCache, ConvGeom, Tensor3,
};
use crate::nn::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    /// Two conv blocks, each followed by channel and spatial attention.
    CbamCnn,
    /// The same stack without attention.
    MultilayerCnn,
    /// Fully connected baseline on the flattened input.
    Ann,
}

impl Architecture {
    pub fn tag(self) -> u8 {
        match self {
            Architecture::CbamCnn => 1,
            Architecture::MultilayerCnn => 2,
            Architecture::Ann => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        [Architecture::CbamCnn, Architecture::MultilayerCnn, Architecture::Ann].into_iter().find(|a| a.tag() == tag)
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::CbamCnn => "CbamCnn",
            Architecture::MultilayerCnn => "MultilayerCnn",
            Architecture::Ann => "Ann",
        })
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "cbamcnn" | "cnncbam" => Ok(Architecture::CbamCnn),
            "multilayercnn" | "cnn" => Ok(Architecture::MultilayerCnn),
            "ann" => Ok(Architecture::Ann),
            _ => Err(Error::InvalidParameter(format!("unknown architecture `{s}`"))),
        }
    }
}

pub const CONV_FILTERS: [usize; 3] = [8, 32, 64];
pub const DENSE_HIDDEN: usize = 16;
pub const ANN_HIDDEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub architecture: Architecture,
    pub n_classes: usize,
    pub in_channels: usize,
    /// Side length of the square input.
    pub input_size: usize,
    pub cam_reduction: usize,
    pub sam_kernel: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            architecture: Architecture::CbamCnn,
            n_classes: 9,
            in_channels: 2,
            input_size: 50,
            cam_reduction: 8,
            sam_kernel: 7,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(format!("network config: {m}")));
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.in_channels == 0 {
            return bad("in_channels must be >= 1".into());
        }
        if self.sam_kernel % 2 == 0 {
            return bad(format!("sam_kernel must be odd, got {}", self.sam_kernel));
        }
        if self.cam_reduction == 0 || CONV_FILTERS[1..].iter().any(|c| c % self.cam_reduction != 0) {
            return bad(format!("cam_reduction {} must divide 32 and 64", self.cam_reduction));
        }
        if self.architecture != Architecture::Ann && self.input_size < 7 {
            return bad(format!("input_size {} too small for three 3x3 convolutions", self.input_size));
        }
        if self.input_size == 0 {
            return bad("input_size must be >= 1".into());
        }
        Ok(())
    }
}

/// A named parameter block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamTensor {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    /// `U(-sqrt(6 / fan_in), +)`, for layers followed by ReLU.
    He(usize),
    /// `U(-sqrt(3 / fan_in), +)`.
    Lecun(usize),
    Zero,
}

#[derive(Debug, Clone)]
enum Op {
    Conv { geom: ConvGeom, start: usize, relu: bool },
    Cbam { c: usize, h: usize, w: usize, hidden: usize, sam: ConvGeom, start: usize },
    GlobalAvgPool { c: usize, hw: usize },
    Dense { n_in: usize, n_out: usize, start: usize, relu: bool },
}

/// Output, per-op caches and per-op output shapes of one forward pass.
type Pass<T> = (Vec<T>, Vec<Cache<T>>, Vec<(usize, usize, usize)>);

// One cache per op and pass, so boxing the large variant saves nothing.
#[allow(clippy::large_enum_variant)]
enum Cache<T> {
    Conv { cols: Vec<T>, out: Vec<T> },
    Cbam { input: Vec<T>, cache: CbamCache<T> },
    GlobalAvgPool,
    Dense { input: Vec<T>, out: Vec<T> },
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    pub config: NetworkConfig,
    pub params: Vec<T>,
    tensors: Vec<ParamTensor>,
    inits: Vec<Init>,
    ops: Vec<Op>,
}

struct Builder {
    tensors: Vec<ParamTensor>,
    inits: Vec<Init>,
    ops: Vec<Op>,
    len: usize,
}

impl Builder {
    fn alloc(&mut self, name: String, shape: Vec<usize>, init: Init) {
        let t = ParamTensor { name, shape, offset: self.len };
        self.len += t.len();
        self.tensors.push(t);
        self.inits.push(init);
    }

    fn conv(
        &mut self,
        name: &str,
        c: usize,
        h: usize,
        w: usize,
        out_c: usize,
        k: usize,
        pad: usize,
        relu: bool,
    ) -> Result<ConvGeom> {
        let geom = ConvGeom::new(c, h, w, out_c, k, pad)?;
        let start = self.len;
        let fan_in = geom.patch_len();
        let init = if relu { Init::He(fan_in) } else { Init::Lecun(fan_in) };
        self.alloc(format!("{name}.weight"), vec![out_c, c, k, k], init);
        self.alloc(format!("{name}.bias"), vec![out_c], Init::Zero);
        self.ops.push(Op::Conv { geom, start, relu });
        Ok(geom)
    }

    fn cbam(&mut self, name: &str, c: usize, h: usize, w: usize, reduction: usize, k: usize) -> Result<()> {
        let hidden = c / reduction;
        let start = self.len;
        self.alloc(format!("{name}.cam.fc1.weight"), vec![hidden, c], Init::He(c));
        self.alloc(format!("{name}.cam.fc1.bias"), vec![hidden], Init::Zero);
        self.alloc(format!("{name}.cam.fc2.weight"), vec![c, hidden], Init::Lecun(hidden));
        self.alloc(format!("{name}.cam.fc2.bias"), vec![c], Init::Zero);
        let sam = ConvGeom::new(2, h, w, 1, k, k / 2)?;
        self.alloc(format!("{name}.sam.weight"), vec![1, 2, k, k], Init::Lecun(2 * k * k));
        self.alloc(format!("{name}.sam.bias"), vec![1], Init::Zero);
        self.ops.push(Op::Cbam { c, h, w, hidden, sam, start });
        Ok(())
    }

    fn dense(&mut self, name: &str, n_in: usize, n_out: usize, relu: bool) {
        let start = self.len;
        let init = if relu { Init::He(n_in) } else { Init::Lecun(n_in) };
        self.alloc(format!("{name}.weight"), vec![n_out, n_in], init);
        self.alloc(format!("{name}.bias"), vec![n_out], Init::Zero);
        self.ops.push(Op::Dense { n_in, n_out, start, relu });
    }
}

/// Splits `buf` into consecutive blocks of the given lengths.
fn split_blocks<'a, S>(mut buf: &'a mut [S], lens: &[usize]) -> Vec<&'a mut [S]> {
    let mut out = Vec::with_capacity(lens.len());
    for &n in lens {
        let (head, tail) = buf.split_at_mut(n);
        out.push(head);
        buf = tail;
    }
    out
}

impl<T: Real> Network<T> {
    /// Builds the architecture and draws initial weights from `config.seed`.
    pub fn new(config: NetworkConfig) -> Result<Self> {
        let mut net = Self::uninitialized(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for (t, init) in net.tensors.iter().zip(&net.inits) {
            let bound = match *init {
                Init::He(fan_in) => (6.0 / fan_in as f64).sqrt(),
                Init::Lecun(fan_in) => (3.0 / fan_in as f64).sqrt(),
                Init::Zero => continue,
            };
            for p in &mut net.params[t.offset..t.offset + t.len()] {
                *p = T::from_f64(rng.random_range(-bound..bound));
            }
        }
        Ok(net)
    }

    /// Architecture with all parameters zero.
    pub fn uninitialized(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut b = Builder { tensors: Vec::new(), inits: Vec::new(), ops: Vec::new(), len: 0 };
        let (c0, s) = (config.in_channels, config.input_size);
        match config.architecture {
            Architecture::CbamCnn | Architecture::MultilayerCnn => {
                let attention = config.architecture == Architecture::CbamCnn;
                let [f1, f2, f3] = CONV_FILTERS;
                let g1 = b.conv("conv1", c0, s, s, f1, 3, 0, true)?;
                let g2 = b.conv("conv2", f1, g1.oh, g1.ow, f2, 3, 0, true)?;
                if attention {
                    b.cbam("cbam1", f2, g2.oh, g2.ow, config.cam_reduction, config.sam_kernel)?;
                }
                let g3 = b.conv("conv3", f2, g2.oh, g2.ow, f3, 3, 0, true)?;
                if attention {
                    b.cbam("cbam2", f3, g3.oh, g3.ow, config.cam_reduction, config.sam_kernel)?;
                }
                b.ops.push(Op::GlobalAvgPool { c: f3, hw: g3.out_len() });
                b.dense("fc1", f3, DENSE_HIDDEN, true);
                b.dense("fc2", DENSE_HIDDEN, config.n_classes, false);
            }
            Architecture::Ann => {
                b.dense("fc1", c0 * s * s, ANN_HIDDEN, true);
                b.dense("fc2", ANN_HIDDEN, config.n_classes, false);
            }
        }
        Ok(Network { config, params: vec![T::zero(); b.len], tensors: b.tensors, inits: b.inits, ops: b.ops })
    }

    pub fn tensors(&self) -> &[ParamTensor] {
        &self.tensors
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Same architecture and weights in another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            config: self.config,
            params: self.params.iter().map(|&p| U::from_f64(p.to_f64())).collect(),
            tensors: self.tensors.clone(),
            inits: self.inits.clone(),
            ops: self.ops.clone(),
        }
    }

    fn check_input(&self, x: &Tensor3<T>) -> Result<()> {
        let s = self.config.input_size;
        if (x.c, x.h, x.w) != (self.config.in_channels, s, s) {
            return Err(Error::ShapeMismatch(format!(
                "input {}x{}x{} (HxWxC), network expects {s}x{s}x{}",
                x.h, x.w, x.c, self.config.in_channels
            )));
        }
        Ok(())
    }

    fn cam_params<'a>(p: &'a [T], c: usize, hidden: usize) -> (CamParams<'a, T>, &'a [T], &'a [T]) {
        let (w1, rest) = p.split_at(hidden * c);
        let (b1, rest) = rest.split_at(hidden);
        let (w2, rest) = rest.split_at(c * hidden);
        let (b2, rest) = rest.split_at(c);
        let (sw, sb) = rest.split_at(rest.len() - 1);
        (CamParams { w1, b1, w2, b2 }, sw, sb)
    }

    /// Runs every op; caches are kept only when `keep`.
    fn run(&self, x: &Tensor3<T>, keep: bool) -> Result<Pass<T>> {
        self.check_input(x)?;
        let mut a = x.data.clone();
        let mut caches = Vec::new();
        let mut shapes = Vec::with_capacity(self.ops.len());
        let p = &self.params;
        for op in &self.ops {
            match *op {
                Op::Conv { geom, start, relu } => {
                    let wl = geom.out_c * geom.patch_len();
                    let (mut y, cols) =
                        conv_forward(&a, &geom, &p[start..start + wl], &p[start + wl..start + wl + geom.out_c]);
                    if relu {
                        relu_inplace(&mut y);
                    }
                    shapes.push((geom.oh, geom.ow, geom.out_c));
                    if keep {
                        caches.push(Cache::Conv { cols, out: y.clone() });
                    }
                    a = y;
                }
                Op::Cbam { c, h, w, hidden, sam, start } => {
                    let (cam, sw, sb) = Self::cam_params(&p[start..start + cbam_len(c, hidden, &sam)], c, hidden);
                    let (y, cache) = cbam_forward(&a, c, h, w, &cam, &sam, sw, sb);
                    shapes.push((h, w, c));
                    if keep {
                        caches.push(Cache::Cbam { input: std::mem::take(&mut a), cache });
                    }
                    a = y;
                }
                Op::GlobalAvgPool { c, .. } => {
                    a = global_avg_pool(&a, c);
                    shapes.push((1, 1, c));
                    if keep {
                        caches.push(Cache::GlobalAvgPool);
                    }
                }
                Op::Dense { n_in, n_out, start, relu } => {
                    let wl = n_in * n_out;
                    let mut y = dense_forward(&a, &p[start..start + wl], &p[start + wl..start + wl + n_out]);
                    if relu {
                        relu_inplace(&mut y);
                    }
                    shapes.push((1, 1, n_out));
                    if keep {
                        caches.push(Cache::Dense { input: std::mem::take(&mut a), out: y.clone() });
                    }
                    a = y;
                }
            }
        }
        Ok((a, caches, shapes))
    }

    pub fn logits(&self, x: &Tensor3<T>) -> Result<Vec<T>> {
        self.run(x, false).map(|r| r.0)
    }

    /// Class probabilities.
    pub fn forward(&self, x: &Tensor3<T>) -> Result<Vec<T>> {
        self.logits(x).map(|z| softmax(&z))
    }

    /// Output shape `(h, w, c)` of every layer for input `x`.
    pub fn layer_shapes(&self, x: &Tensor3<T>) -> Result<Vec<(usize, usize, usize)>> {
        self.run(x, false).map(|r| r.2)
    }

    pub fn predict(&self, x: &Tensor3<T>) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Cross-entropy loss of one sample; adds its parameter gradient to
    /// `grad`. Returns the loss and the predicted class.
    pub fn loss_and_grad(&self, x: &Tensor3<T>, label: usize, grad: &mut [T]) -> Result<(T, usize)> {
        if label >= self.config.n_classes {
            return Err(Error::InvalidParameter(format!("label {label} >= n_classes {}", self.config.n_classes)));
        }
        if grad.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient buffer {} != {} params",
                grad.len(),
                self.params.len()
            )));
        }
        let (z, caches, _) = self.run(x, true)?;
        let probs = softmax(&z);
        let p_label = probs[label];
        let loss = if p_label.is_nan() { p_label } else { -(p_label.max(T::min_positive_value())).ln() };
        let mut d: Vec<T> = probs;
        d[label] = d[label] - T::one();
        let p = &self.params;
        for (k, (op, cache)) in self.ops.iter().zip(caches).enumerate().rev() {
            let need_dx = k > 0;
            match (op, cache) {
                (&Op::Conv { geom, start, relu }, Cache::Conv { cols, out }) => {
                    if relu {
                        relu_backward(&mut d, &out);
                    }
                    let wl = geom.out_c * geom.patch_len();
                    let g = split_blocks(&mut grad[start..start + wl + geom.out_c], &[wl, geom.out_c]);
                    let [dw, db]: [&mut [T]; 2] = g.try_into().expect("two blocks");
                    match conv_backward(&d, &cols, &geom, &p[start..start + wl], dw, db, need_dx) {
                        Some(dx) => d = dx,
                        None => break,
                    }
                }
                (&Op::Cbam { c, hidden, sam, start, .. }, Cache::Cbam { input, cache }) => {
                    let n = cbam_len(c, hidden, &sam);
                    let (cam, sw, _) = Self::cam_params(&p[start..start + n], c, hidden);
                    let sl = sw.len();
                    let g = split_blocks(&mut grad[start..start + n], &[hidden * c, hidden, c * hidden, c, sl, 1]);
                    let [w1, b1, w2, b2, gsw, gsb]: [&mut [T]; 6] = g.try_into().expect("six blocks");
                    let mut cam_grads = CamGrads { w1, b1, w2, b2 };
                    d = cbam_backward(&d, &input, c, &cache, &cam, &mut cam_grads, &sam, sw, gsw, gsb);
                }
                (&Op::GlobalAvgPool { hw, .. }, Cache::GlobalAvgPool) => {
                    d = global_avg_pool_backward(&d, hw);
                }
                (&Op::Dense { n_in, n_out, start, relu }, Cache::Dense { input, out }) => {
                    if relu {
                        relu_backward(&mut d, &out);
                    }
                    let wl = n_in * n_out;
                    let g = split_blocks(&mut grad[start..start + wl + n_out], &[wl, n_out]);
                    let [dw, db]: [&mut [T]; 2] = g.try_into().expect("two blocks");
                    match dense_backward(&d, &input, &p[start..start + wl], dw, db, need_dx) {
                        Some(dx) => d = dx,
                        None => break,
                    }
                }
                _ => unreachable!("cache kind follows op kind"),
            }
        }
        Ok((loss, argmax(&z)))
    }
}

fn cbam_len(c: usize, hidden: usize, sam: &ConvGeom) -> usize {
    2 * c * hidden + hidden + c + sam.patch_len() + 1
}

/// Index of the largest value; the first one on ties.
pub fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input<T: Real>(c: usize, s: usize, seed: u64) -> Tensor3<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor3::new(c, s, s, (0..c * s * s).map(|_| T::from_f64(rng.random_range(-1.0..1.0))).collect()).unwrap()
    }

    #[test]
    fn cbam_cnn_layer_shapes() {
        let net = Network::<f32>::new(NetworkConfig::default()).unwrap();
        let shapes = net.layer_shapes(&input(2, 50, 1)).unwrap();
        assert_eq!(
            shapes,
            vec![
                (48, 48, 8),
                (46, 46, 32),
                (46, 46, 32),
                (44, 44, 64),
                (44, 44, 64),
                (1, 1, 64),
                (1, 1, 16),
                (1, 1, 9)
            ]
        );
    }

    #[test]
    fn probabilities_sum_to_one() {
        for arch in [Architecture::CbamCnn, Architecture::MultilayerCnn, Architecture::Ann] {
            let cfg = NetworkConfig { architecture: arch, n_classes: 14, seed: 3, ..Default::default() };
            let net = Network::<f32>::new(cfg).unwrap();
            for s in 0..3 {
                let p = net.forward(&input(2, 50, s)).unwrap();
                assert_eq!(p.len(), 14);
                assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
                assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let net = Network::<f32>::new(NetworkConfig { seed: 9, ..Default::default() }).unwrap();
        let x = input(2, 50, 4);
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
        let again = Network::<f32>::new(NetworkConfig { seed: 9, ..Default::default() }).unwrap();
        assert_eq!(net.params, again.params);
    }

    #[test]
    fn adapts_to_input_channels_and_rejects_wrong_shape() {
        let cfg = NetworkConfig { in_channels: 1, ..Default::default() };
        let net = Network::<f32>::new(cfg).unwrap();
        assert!(net.forward(&input(1, 50, 0)).is_ok());
        assert!(matches!(net.forward(&input(2, 50, 0)), Err(Error::ShapeMismatch(_))));
        assert!(Network::<f32>::new(NetworkConfig { sam_kernel: 6, ..Default::default() }).is_err());
        assert!(Network::<f32>::new(NetworkConfig { cam_reduction: 5, ..Default::default() }).is_err());
    }

    #[test]
    fn parameter_counts() {
        let n = |arch| {
            Network::<f32>::uninitialized(NetworkConfig { architecture: arch, ..Default::default() })
                .unwrap()
                .n_params()
        };
        let convs = (2 * 9 * 8 + 8) + (8 * 9 * 32 + 32) + (32 * 9 * 64 + 64);
        let head = (64 * 16 + 16) + (16 * 9 + 9);
        let cbam = |c: usize| 2 * c * (c / 8) + c / 8 + c + 2 * 49 + 1;
        assert_eq!(n(Architecture::MultilayerCnn), convs + head);
        assert_eq!(n(Architecture::CbamCnn), convs + head + cbam(32) + cbam(64));
        assert_eq!(n(Architecture::Ann), 5000 * 128 + 128 + 128 * 9 + 9);
    }
}
