use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{gemm, Scalar, Tensor, View};

/// Trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<S> {
    pub value: Tensor<S>,
    pub grad: Vec<S>,
    pub trainable: bool,
}

impl<S: Scalar> Param<S> {
    fn new(value: Tensor<S>) -> Self {
        let grad = vec![S::zero(); value.len()];
        Self {
            value,
            grad,
            trainable: true,
        }
    }

    fn uniform(shape: &[usize], limit: f64, rng: &mut ChaCha8Rng) -> Self {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| S::of(rng.gen_range(-limit..limit)))
            .collect();
        Self::new(Tensor::new(shape.to_vec(), data).expect("valid shape"))
    }

    fn zeros(shape: &[usize]) -> Self {
        Self::new(Tensor::zeros(shape))
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = S::zero());
    }
}

pub enum Mode<'r> {
    Infer,
    Train(&'r mut ChaCha8Rng),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// Per-layer state saved by a training-mode forward pass.
#[derive(Clone, Debug)]
pub enum Cache<S> {
    None,
    Inputs(Vec<Tensor<S>>),
    Matrix(Vec<S>),
    Argmax {
        indices: Vec<Vec<usize>>,
        shapes: Vec<Vec<usize>>,
    },
    Masks(Vec<Vec<S>>),
    Shapes(Vec<Vec<usize>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding<S> {
    pub rows: usize,
    pub dim: usize,
    pub weight: Param<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d<S> {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: usize,
    pub weight: Param<S>,
    pub bias: Param<S>,
}

/// Stride-1 convolution with zero "same" padding over HWC input.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<S> {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: usize,
    pub weight: Param<S>,
    pub bias: Param<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<S> {
    pub inputs: usize,
    pub outputs: usize,
    /// Coefficient of Σw² added to the loss.
    pub l2: f64,
    pub weight: Param<S>,
    pub bias: Param<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<S> {
    /// Token ids (stored as exact integers) to rows of a table. Row 0 is
    /// the padding row; it stays zero and receives no gradient.
    Embedding(Embedding<S>),
    /// Valid 1-D convolution over `[len, channels]`.
    Conv1d(Conv1d<S>),
    GlobalMaxPool1d,
    Conv2d(Conv2d<S>),
    /// 2×2 window, stride 2.
    MaxPool2d,
    Flatten,
    Dense(Dense<S>),
    Relu,
    /// Inverted dropout; identity at inference.
    Dropout { rate: f64 },
}

impl<S: Scalar> Layer<S> {
    pub fn embedding(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut weight = Param::uniform(&[rows, dim], 0.05, rng);
        weight.value.data_mut()[..dim]
            .iter_mut()
            .for_each(|v| *v = S::zero());
        Layer::Embedding(Embedding { rows, dim, weight })
    }

    pub fn conv1d(in_channels: usize, filters: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = kernel * in_channels;
        Layer::Conv1d(Conv1d {
            in_channels,
            filters,
            kernel,
            weight: Param::uniform(&[fan_in, filters], he_limit(fan_in), rng),
            bias: Param::zeros(&[filters]),
        })
    }

    pub fn conv2d(in_channels: usize, filters: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = kernel * kernel * in_channels;
        Layer::Conv2d(Conv2d {
            in_channels,
            filters,
            kernel,
            weight: Param::uniform(&[fan_in, filters], he_limit(fan_in), rng),
            bias: Param::zeros(&[filters]),
        })
    }

    pub fn dense(inputs: usize, outputs: usize, l2: f64, rng: &mut ChaCha8Rng) -> Self {
        Layer::Dense(Dense {
            inputs,
            outputs,
            l2,
            weight: Param::uniform(&[inputs, outputs], he_limit(inputs), rng),
            bias: Param::zeros(&[outputs]),
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Embedding(_) => "embedding",
            Layer::Conv1d(_) => "conv1d",
            Layer::GlobalMaxPool1d => "global_max_pool1d",
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2d => "max_pool2d",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Relu => "relu",
            Layer::Dropout { .. } => "dropout",
        }
    }

    pub fn params(&self) -> Vec<&Param<S>> {
        match self {
            Layer::Embedding(l) => vec![&l.weight],
            Layer::Conv1d(l) => vec![&l.weight, &l.bias],
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        match self {
            Layer::Embedding(l) => vec![&mut l.weight],
            Layer::Conv1d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    pub fn is_trainable(&self) -> bool {
        self.params().iter().any(|p| p.trainable)
    }

    /// L2 contribution to the loss.
    pub fn penalty(&self) -> f64 {
        match self {
            Layer::Dense(d) if d.l2 != 0.0 && d.weight.trainable => {
                d.l2 * d
                    .weight
                    .value
                    .data()
                    .iter()
                    .map(|w| w.to_f64().unwrap().powi(2))
                    .sum::<f64>()
            }
            _ => 0.0,
        }
    }

    /// Output shape for one example, or a description of the mismatch.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match self {
            Layer::Embedding(l) => match input {
                [n] => Ok(vec![*n, l.dim]),
                _ => Err(format!("expected [len], got {input:?}")),
            },
            Layer::Conv1d(l) => match input {
                [n, c] if *c == l.in_channels && *n >= l.kernel => Ok(vec![n - l.kernel + 1, l.filters]),
                _ => Err(format!(
                    "expected [len >= {}, {}], got {input:?}",
                    l.kernel, l.in_channels
                )),
            },
            Layer::GlobalMaxPool1d => match input {
                [n, c] if *n > 0 => Ok(vec![*c]),
                _ => Err(format!("expected non-empty [len, channels], got {input:?}")),
            },
            Layer::Conv2d(l) => match input {
                [h, w, c] if *c == l.in_channels && *h > 0 && *w > 0 => Ok(vec![*h, *w, l.filters]),
                _ => Err(format!("expected [h, w, {}], got {input:?}", l.in_channels)),
            },
            Layer::MaxPool2d => match input {
                [h, w, c] if *h >= 2 && *w >= 2 => Ok(vec![h / 2, w / 2, *c]),
                _ => Err(format!("expected [h >= 2, w >= 2, c], got {input:?}")),
            },
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Dense(l) => match input {
                [n] if *n == l.inputs => Ok(vec![l.outputs]),
                _ => Err(format!("expected [{}], got {input:?}", l.inputs)),
            },
            Layer::Relu | Layer::Dropout { .. } => Ok(input.to_vec()),
        }
    }

    pub fn forward(
        &self,
        xs: &[Tensor<S>],
        mode: &mut Mode<'_>,
    ) -> Result<(Vec<Tensor<S>>, Cache<S>), String> {
        for x in xs {
            self.output_shape(x.shape())?;
        }
        let train = mode.is_train();
        let keep_inputs = |xs: &[Tensor<S>]| {
            if train {
                Cache::Inputs(xs.to_vec())
            } else {
                Cache::None
            }
        };
        Ok(match self {
            Layer::Embedding(l) => {
                let table = l.weight.value.data();
                let mut out = Vec::with_capacity(xs.len());
                for x in xs {
                    let mut data = Vec::with_capacity(x.len() * l.dim);
                    for &id in x.data() {
                        let row = token_row(id, l.rows)?;
                        data.extend_from_slice(&table[row * l.dim..(row + 1) * l.dim]);
                    }
                    out.push(Tensor::new(vec![x.len(), l.dim], data).unwrap());
                }
                (out, keep_inputs(xs))
            }
            Layer::Conv1d(l) => {
                let out = xs.iter().map(|x| conv1d_forward(l, x)).collect();
                (out, keep_inputs(xs))
            }
            Layer::GlobalMaxPool1d => {
                let mut out = Vec::with_capacity(xs.len());
                let mut indices = Vec::with_capacity(xs.len());
                for x in xs {
                    let (n, c) = (x.shape()[0], x.shape()[1]);
                    let d = x.data();
                    let mut idx = vec![0usize; c];
                    let mut best: Vec<S> = d[..c].to_vec();
                    for t in 1..n {
                        for ch in 0..c {
                            let v = d[t * c + ch];
                            if v > best[ch] {
                                best[ch] = v;
                                idx[ch] = t;
                            }
                        }
                    }
                    let flat = idx.iter().enumerate().map(|(ch, &t)| t * c + ch).collect();
                    indices.push(flat);
                    out.push(Tensor::from_vec(best));
                }
                let shapes = xs.iter().map(|x| x.shape().to_vec()).collect();
                (out, argmax_cache(train, indices, shapes))
            }
            Layer::Conv2d(l) => {
                let out = xs.iter().map(|x| conv2d_forward(l, x)).collect();
                (out, keep_inputs(xs))
            }
            Layer::MaxPool2d => {
                let mut out = Vec::with_capacity(xs.len());
                let mut indices = Vec::with_capacity(xs.len());
                for x in xs {
                    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                    let (oh, ow) = (h / 2, w / 2);
                    let d = x.data();
                    let mut vals = Vec::with_capacity(oh * ow * c);
                    let mut idx = Vec::with_capacity(oh * ow * c);
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for ch in 0..c {
                                let mut bi = ((2 * oy) * w + 2 * ox) * c + ch;
                                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                                    let i = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                                    if d[i] > d[bi] {
                                        bi = i;
                                    }
                                }
                                vals.push(d[bi]);
                                idx.push(bi);
                            }
                        }
                    }
                    out.push(Tensor::new(vec![oh, ow, c], vals).unwrap());
                    indices.push(idx);
                }
                let shapes = xs.iter().map(|x| x.shape().to_vec()).collect();
                (out, argmax_cache(train, indices, shapes))
            }
            Layer::Flatten => {
                let shapes = xs.iter().map(|x| x.shape().to_vec()).collect();
                let out = xs.iter().map(|x| Tensor::from_vec(x.data().to_vec())).collect();
                (out, if train { Cache::Shapes(shapes) } else { Cache::None })
            }
            Layer::Dense(l) => {
                let b = xs.len();
                let mut stacked = Vec::with_capacity(b * l.inputs);
                for x in xs {
                    stacked.extend_from_slice(x.data());
                }
                let mut y = Vec::with_capacity(b * l.outputs);
                for _ in 0..b {
                    y.extend_from_slice(l.bias.value.data());
                }
                gemm(
                    S::one(),
                    View::row_major(&stacked, b, l.inputs),
                    View::row_major(l.weight.value.data(), l.inputs, l.outputs),
                    S::one(),
                    &mut y,
                );
                let out = y
                    .chunks(l.outputs.max(1))
                    .take(b)
                    .map(|c| Tensor::from_vec(c.to_vec()))
                    .collect();
                (out, if train { Cache::Matrix(stacked) } else { Cache::None })
            }
            Layer::Relu => {
                let mut masks = Vec::new();
                let out = xs
                    .iter()
                    .map(|x| {
                        let mut y = x.clone();
                        if train {
                            masks.push(
                                x.data()
                                    .iter()
                                    .map(|&v| if v > S::zero() { S::one() } else { S::zero() })
                                    .collect(),
                            );
                        }
                        y.data_mut().iter_mut().for_each(|v| *v = v.max(S::zero()));
                        y
                    })
                    .collect();
                (out, if train { Cache::Masks(masks) } else { Cache::None })
            }
            Layer::Dropout { rate } => match mode {
                Mode::Train(rng) if *rate > 0.0 => {
                    let scale = S::of(1.0 / (1.0 - rate));
                    let mut masks = Vec::with_capacity(xs.len());
                    let out = xs
                        .iter()
                        .map(|x| {
                            let mask: Vec<S> = (0..x.len())
                                .map(|_| {
                                    if rng.gen::<f64>() < *rate {
                                        S::zero()
                                    } else {
                                        scale
                                    }
                                })
                                .collect();
                            let mut y = x.clone();
                            y.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= *m);
                            masks.push(mask);
                            y
                        })
                        .collect();
                    (out, Cache::Masks(masks))
                }
                Mode::Train(_) => {
                    let masks = xs.iter().map(|x| vec![S::one(); x.len()]).collect();
                    (xs.to_vec(), Cache::Masks(masks))
                }
                Mode::Infer => (xs.to_vec(), Cache::None),
            },
        })
    }

    /// Accumulates parameter gradients (for trainable parameters) and
    /// returns the gradient with respect to the input when requested.
    pub fn backward(
        &mut self,
        cache: &Cache<S>,
        grads: &[Tensor<S>],
        need_input: bool,
    ) -> Option<Vec<Tensor<S>>> {
        match (self, cache) {
            (Layer::Embedding(l), Cache::Inputs(xs)) => {
                if l.weight.trainable {
                    let dim = l.dim;
                    for (x, g) in xs.iter().zip(grads) {
                        for (t, &id) in x.data().iter().enumerate() {
                            let row = id.to_usize().unwrap();
                            if row == 0 {
                                continue;
                            }
                            let dst = &mut l.weight.grad[row * dim..(row + 1) * dim];
                            for (d, &s) in dst.iter_mut().zip(&g.data()[t * dim..(t + 1) * dim]) {
                                *d += s;
                            }
                        }
                    }
                }
                None
            }
            (Layer::Conv1d(l), Cache::Inputs(xs)) => {
                let mut out = Vec::new();
                for (x, g) in xs.iter().zip(grads) {
                    let dx = conv1d_backward(l, x, g, need_input);
                    if let Some(dx) = dx {
                        out.push(dx);
                    }
                }
                need_input.then_some(out)
            }
            (Layer::Conv2d(l), Cache::Inputs(xs)) => {
                let mut out = Vec::new();
                for (x, g) in xs.iter().zip(grads) {
                    if let Some(dx) = conv2d_backward(l, x, g, need_input) {
                        out.push(dx);
                    }
                }
                need_input.then_some(out)
            }
            (Layer::GlobalMaxPool1d | Layer::MaxPool2d, Cache::Argmax { indices, shapes }) => {
                if !need_input {
                    return None;
                }
                Some(
                    indices
                        .iter()
                        .zip(shapes)
                        .zip(grads)
                        .map(|((idx, shape), g)| {
                            let mut dx = Tensor::zeros(shape);
                            for (&i, &gv) in idx.iter().zip(g.data()) {
                                dx.data_mut()[i] += gv;
                            }
                            dx
                        })
                        .collect(),
                )
            }
            (Layer::Flatten, Cache::Shapes(shapes)) => need_input.then(|| {
                shapes
                    .iter()
                    .zip(grads)
                    .map(|(s, g)| g.clone().reshape(s.clone()).expect("same size"))
                    .collect()
            }),
            (Layer::Dense(l), Cache::Matrix(stacked)) => {
                let b = grads.len();
                let mut g = Vec::with_capacity(b * l.outputs);
                for gr in grads {
                    g.extend_from_slice(gr.data());
                }
                if l.weight.trainable {
                    gemm(
                        S::one(),
                        View::row_major(stacked, b, l.inputs).t(),
                        View::row_major(&g, b, l.outputs),
                        S::one(),
                        &mut l.weight.grad,
                    );
                    if l.l2 != 0.0 {
                        let two_l2 = S::of(2.0 * l.l2);
                        for (dw, &w) in l.weight.grad.iter_mut().zip(l.weight.value.data()) {
                            *dw += two_l2 * w;
                        }
                    }
                }
                if l.bias.trainable {
                    for row in g.chunks(l.outputs) {
                        for (db, &v) in l.bias.grad.iter_mut().zip(row) {
                            *db += v;
                        }
                    }
                }
                if !need_input {
                    return None;
                }
                let mut dx = vec![S::zero(); b * l.inputs];
                gemm(
                    S::one(),
                    View::row_major(&g, b, l.outputs),
                    View::row_major(l.weight.value.data(), l.inputs, l.outputs).t(),
                    S::zero(),
                    &mut dx,
                );
                Some(
                    dx.chunks(l.inputs.max(1))
                        .take(b)
                        .map(|c| Tensor::from_vec(c.to_vec()))
                        .collect(),
                )
            }
            (Layer::Relu | Layer::Dropout { .. }, Cache::Masks(masks)) => need_input.then(|| {
                masks
                    .iter()
                    .zip(grads)
                    .map(|(m, g)| {
                        let mut dx = g.clone();
                        dx.data_mut().iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
                        dx
                    })
                    .collect()
            }),
            (layer, _) => panic!(
                "backward through {} without a training-mode forward pass",
                layer.kind()
            ),
        }
    }
}

fn he_limit(fan_in: usize) -> f64 {
    (6.0 / fan_in.max(1) as f64).sqrt()
}

fn token_row<S: Scalar>(id: S, rows: usize) -> Result<usize, String> {
    match id.to_usize() {
        Some(r) if r < rows && S::of(r as f64) == id => Ok(r),
        _ => Err(format!("token id {id} outside table of {rows} rows")),
    }
}

fn argmax_cache<S>(train: bool, indices: Vec<Vec<usize>>, shapes: Vec<Vec<usize>>) -> Cache<S> {
    if train {
        Cache::Argmax { indices, shapes }
    } else {
        Cache::None
    }
}

fn with_bias<S: Scalar>(rows: usize, bias: &[S]) -> Vec<S> {
    let mut out = Vec::with_capacity(rows * bias.len());
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    out
}

/// Overlapping windows of a `[len, c]` buffer as a `[len-k+1, k·c]` view.
fn windows<S>(x: &[S], len: usize, c: usize, k: usize) -> View<'_, S> {
    View {
        data: x,
        rows: len + 1 - k,
        cols: k * c,
        rs: c,
        cs: 1,
    }
}

fn conv1d_forward<S: Scalar>(l: &Conv1d<S>, x: &Tensor<S>) -> Tensor<S> {
    let (n, c) = (x.shape()[0], x.shape()[1]);
    let t = n + 1 - l.kernel;
    let mut y = with_bias(t, l.bias.value.data());
    gemm(
        S::one(),
        windows(x.data(), n, c, l.kernel),
        View::row_major(l.weight.value.data(), l.kernel * c, l.filters),
        S::one(),
        &mut y,
    );
    Tensor::new(vec![t, l.filters], y).unwrap()
}

fn conv1d_backward<S: Scalar>(
    l: &mut Conv1d<S>,
    x: &Tensor<S>,
    g: &Tensor<S>,
    need_input: bool,
) -> Option<Tensor<S>> {
    let (n, c) = (x.shape()[0], x.shape()[1]);
    let t = n + 1 - l.kernel;
    let kc = l.kernel * c;
    let gv = View::row_major(g.data(), t, l.filters);
    if l.weight.trainable {
        gemm(
            S::one(),
            windows(x.data(), n, c, l.kernel).t(),
            gv,
            S::one(),
            &mut l.weight.grad,
        );
    }
    if l.bias.trainable {
        accumulate_columns(&mut l.bias.grad, g.data());
    }
    if !need_input {
        return None;
    }
    let mut dwin = vec![S::zero(); t * kc];
    gemm(
        S::one(),
        gv,
        View::row_major(l.weight.value.data(), kc, l.filters).t(),
        S::zero(),
        &mut dwin,
    );
    let mut dx = Tensor::zeros(&[n, c]);
    let d = dx.data_mut();
    for (row, src) in dwin.chunks(kc).enumerate() {
        for (dst, &v) in d[row * c..row * c + kc].iter_mut().zip(src) {
            *dst += v;
        }
    }
    Some(dx)
}

fn accumulate_columns<S: Scalar>(acc: &mut [S], rows: &[S]) {
    for row in rows.chunks(acc.len()) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}

fn im2col<S: Scalar>(x: &Tensor<S>, k: usize) -> Vec<S> {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let pad = (k / 2) as isize;
    let d = x.data();
    let mut cols = vec![S::zero(); h * w * k * k * c];
    let mut i = 0;
    for y in 0..h as isize {
        for xx in 0..w as isize {
            for dy in 0..k as isize {
                let sy = y + dy - pad;
                for dx in 0..k as isize {
                    let sx = xx + dx - pad;
                    if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                        let src = ((sy as usize) * w + sx as usize) * c;
                        cols[i..i + c].copy_from_slice(&d[src..src + c]);
                    }
                    i += c;
                }
            }
        }
    }
    cols
}

fn col2im<S: Scalar>(cols: &[S], shape: &[usize], k: usize) -> Tensor<S> {
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let pad = (k / 2) as isize;
    let mut dx = Tensor::zeros(shape);
    let d = dx.data_mut();
    let mut i = 0;
    for y in 0..h as isize {
        for xx in 0..w as isize {
            for dy in 0..k as isize {
                let sy = y + dy - pad;
                for ddx in 0..k as isize {
                    let sx = xx + ddx - pad;
                    if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                        let dst = ((sy as usize) * w + sx as usize) * c;
                        for (a, &v) in d[dst..dst + c].iter_mut().zip(&cols[i..i + c]) {
                            *a += v;
                        }
                    }
                    i += c;
                }
            }
        }
    }
    dx
}

fn conv2d_forward<S: Scalar>(l: &Conv2d<S>, x: &Tensor<S>) -> Tensor<S> {
    let (h, w) = (x.shape()[0], x.shape()[1]);
    let kkc = l.kernel * l.kernel * l.in_channels;
    let cols = im2col(x, l.kernel);
    let mut y = with_bias(h * w, l.bias.value.data());
    gemm(
        S::one(),
        View::row_major(&cols, h * w, kkc),
        View::row_major(l.weight.value.data(), kkc, l.filters),
        S::one(),
        &mut y,
    );
    Tensor::new(vec![h, w, l.filters], y).unwrap()
}

fn conv2d_backward<S: Scalar>(
    l: &mut Conv2d<S>,
    x: &Tensor<S>,
    g: &Tensor<S>,
    need_input: bool,
) -> Option<Tensor<S>> {
    let (h, w) = (x.shape()[0], x.shape()[1]);
    let kkc = l.kernel * l.kernel * l.in_channels;
    let gv = View::row_major(g.data(), h * w, l.filters);
    if l.weight.trainable {
        let cols = im2col(x, l.kernel);
        gemm(
            S::one(),
            View::row_major(&cols, h * w, kkc).t(),
            gv,
            S::one(),
            &mut l.weight.grad,
        );
    }
    if l.bias.trainable {
        accumulate_columns(&mut l.bias.grad, g.data());
    }
    if !need_input {
        return None;
    }
    let mut dcols = vec![S::zero(); h * w * kkc];
    gemm(
        S::one(),
        gv,
        View::row_major(l.weight.value.data(), kkc, l.filters).t(),
        S::zero(),
        &mut dcols,
    );
    Some(col2im(&dcols, x.shape(), l.kernel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn global_max_pool_picks_spikes() {
        let mut x = Tensor::<f64>::zeros(&[5, 3]);
        x.data_mut()[3 * 3] = 7.0;
        x.data_mut()[3 + 1] = 2.5;
        x.data_mut()[4 * 3 + 2] = 0.5;
        let (y, _) = Layer::GlobalMaxPool1d.forward(&[x], &mut Mode::Infer).unwrap();
        assert_eq!(y[0].data(), &[7.0, 2.5, 0.5]);
    }

    #[test]
    fn conv2d_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = Layer::<f64>::conv2d(2, 3, 3, &mut rng);
        let data: Vec<f64> = (0..4 * 5 * 2).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let x = Tensor::new(vec![4, 5, 2], data).unwrap();
        let (y, _) = layer.forward(std::slice::from_ref(&x), &mut Mode::Infer).unwrap();
        let Layer::Conv2d(l) = &layer else { unreachable!() };
        let w = l.weight.value.data();
        for oy in 0..4i32 {
            for ox in 0..5i32 {
                for f in 0..3 {
                    let mut acc = l.bias.value.data()[f];
                    for dy in 0..3i32 {
                        for dx in 0..3i32 {
                            let (sy, sx) = (oy + dy - 1, ox + dx - 1);
                            if !(0..4).contains(&sy) || !(0..5).contains(&sx) {
                                continue;
                            }
                            for c in 0..2 {
                                let xi = ((sy * 5 + sx) * 2 + c) as usize;
                                let wi = (((dy * 3 + dx) * 2 + c) as usize) * 3 + f;
                                acc += x.data()[xi] * w[wi];
                            }
                        }
                    }
                    let yi = ((oy * 5 + ox) * 3) as usize + f;
                    assert!((y[0].data()[yi] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn embedding_pad_row_is_zero_and_rejects_bad_ids() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = Layer::<f32>::embedding(4, 3, &mut rng);
        let x = Tensor::from_vec(vec![0.0, 2.0]);
        let (y, _) = layer.forward(&[x], &mut Mode::Infer).unwrap();
        assert_eq!(&y[0].data()[..3], &[0.0; 3]);
        assert!(layer
            .forward(&[Tensor::from_vec(vec![4.0])], &mut Mode::Infer)
            .is_err());
        assert!(layer
            .forward(&[Tensor::from_vec(vec![1.5])], &mut Mode::Infer)
            .is_err());
    }

    #[test]
    fn zero_dense_zero_input_gives_zero_weight_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Layer::<f64>::dense(4, 2, 0.0, &mut rng);
        if let Layer::Dense(d) = &mut layer {
            d.weight.value.data_mut().iter_mut().for_each(|w| *w = 0.0);
        }
        let x = Tensor::zeros(&[4]);
        let (_, cache) = layer.forward(&[x], &mut Mode::Train(&mut rng)).unwrap();
        layer.backward(&cache, &[Tensor::from_vec(vec![1.0, -2.0])], true);
        let Layer::Dense(d) = &layer else { unreachable!() };
        assert!(d.weight.grad.iter().all(|&g| g == 0.0));
        assert_eq!(d.bias.grad, vec![1.0, -2.0]);
    }

    #[test]
    fn pooling_shape_arithmetic() {
        let mut shape = vec![224, 224, 1];
        for _ in 0..4 {
            shape = Layer::<f32>::MaxPool2d.output_shape(&shape).unwrap();
        }
        assert_eq!(shape, vec![14, 14, 1]);
        assert_eq!(Layer::<f32>::MaxPool2d.output_shape(&[5, 5, 2]).unwrap(), vec![2, 2, 2]);
    }
}
