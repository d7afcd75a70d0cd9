use std::fs;
use std::path::Path;

use crate::binio::{put_f64, put_u32, Reader};
use crate::error::{Error, Result};

use super::layers::{Cache, Conv1d, Conv2d, Dense, Embedding, Layer, Mode, Param};
use super::tensor::{Scalar, Tensor};

const MAGIC: &[u8; 7] = b"PSSNN01";
pub const LOGIT_CLAMP: f64 = 15.0;

/// Ordered layer stack with a nominal per-example input shape.
#[derive(Clone, Debug)]
pub struct Network<S> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<S>>,
    caches: Vec<Cache<S>>,
    cached: Option<(usize, usize)>,
}

impl<S: Scalar> Network<S> {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer<S>>) -> Result<Self> {
        let mut shape = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(&shape).map_err(|message| Error::Shape {
                layer: i,
                kind: layer.kind(),
                message,
            })?;
        }
        let caches = layers.iter().map(|_| Cache::None).collect();
        Ok(Self {
            input_shape,
            layers,
            caches,
            cached: None,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Nominal shape entering layer `index` (`index == len` gives the output).
    pub fn shape_before(&self, index: usize) -> Vec<usize> {
        let mut shape = self.input_shape.clone();
        for layer in &self.layers[..index] {
            shape = layer.output_shape(&shape).expect("validated at construction");
        }
        shape
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn params(&self) -> Vec<&Param<S>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn layer_mut(&mut self, index: usize) -> &mut Layer<S> {
        &mut self.layers[index]
    }

    pub fn set_trainable(&mut self, layers: std::ops::Range<usize>, trainable: bool) {
        for layer in &mut self.layers[layers] {
            for p in layer.params_mut() {
                p.trainable = trainable;
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Sum of L2 terms over all penalized layers.
    pub fn penalty(&self) -> f64 {
        self.layers.iter().map(|l| l.penalty()).sum()
    }

    /// Inference through layers `from..to`.
    pub fn infer(&self, xs: &[Tensor<S>], from: usize, to: usize) -> Result<Vec<Tensor<S>>> {
        let mut cur = xs.to_vec();
        for i in from..to {
            let (next, _) = self.layers[i]
                .forward(&cur, &mut Mode::Infer)
                .map_err(|m| self.shape_error(i, m))?;
            cur = next;
        }
        Ok(cur)
    }

    /// Forward through layers `from..to`, keeping caches for `backward`
    /// when in training mode.
    pub fn forward(
        &mut self,
        xs: &[Tensor<S>],
        from: usize,
        to: usize,
        mode: &mut Mode<'_>,
    ) -> Result<Vec<Tensor<S>>> {
        let train = mode.is_train();
        let mut cur = xs.to_vec();
        for i in from..to {
            let (next, cache) = self.layers[i]
                .forward(&cur, mode)
                .map_err(|m| self.shape_error(i, m))?;
            if train {
                self.caches[i] = cache;
            }
            cur = next;
        }
        self.cached = train.then_some((from, to));
        Ok(cur)
    }

    /// Backpropagates the gradient of the loss with respect to the output
    /// of the last training-mode forward pass. Layers below the lowest
    /// trainable one in that range are skipped.
    pub fn backward(&mut self, grads: Vec<Tensor<S>>) {
        let (from, to) = self
            .cached
            .expect("backward requires a training-mode forward pass");
        let Some(lowest) = (from..to).find(|&i| self.layers[i].is_trainable()) else {
            return;
        };
        let mut cur = grads;
        for i in (lowest..to).rev() {
            let cache = std::mem::replace(&mut self.caches[i], Cache::None);
            match self.layers[i].backward(&cache, &cur, i > lowest) {
                Some(g) => cur = g,
                None => break,
            }
        }
        self.cached = None;
    }

    fn shape_error(&self, layer: usize, message: String) -> Error {
        Error::Shape {
            layer,
            kind: self.layers[layer].kind(),
            message,
        }
    }

    /// `PSSNN01`, element width tag (u8), input rank and dims (u32), layer
    /// count (u32), then per layer a kind tag, its configuration and, for
    /// each parameter tensor, a trainable flag followed by raw values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(S::TAG);
        put_u32(&mut out, self.input_shape.len() as u32);
        for &d in &self.input_shape {
            put_u32(&mut out, d as u32);
        }
        put_u32(&mut out, self.layers.len() as u32);
        for layer in &self.layers {
            match layer {
                Layer::Embedding(l) => {
                    out.push(1);
                    put_u32(&mut out, l.rows as u32);
                    put_u32(&mut out, l.dim as u32);
                }
                Layer::Conv1d(l) => {
                    out.push(2);
                    put_u32(&mut out, l.in_channels as u32);
                    put_u32(&mut out, l.filters as u32);
                    put_u32(&mut out, l.kernel as u32);
                }
                Layer::GlobalMaxPool1d => out.push(3),
                Layer::Conv2d(l) => {
                    out.push(4);
                    put_u32(&mut out, l.in_channels as u32);
                    put_u32(&mut out, l.filters as u32);
                    put_u32(&mut out, l.kernel as u32);
                }
                Layer::MaxPool2d => out.push(5),
                Layer::Flatten => out.push(6),
                Layer::Dense(l) => {
                    out.push(7);
                    put_u32(&mut out, l.inputs as u32);
                    put_u32(&mut out, l.outputs as u32);
                    put_f64(&mut out, l.l2);
                }
                Layer::Relu => out.push(8),
                Layer::Dropout { rate } => {
                    out.push(9);
                    put_f64(&mut out, *rate);
                }
            }
            for p in layer.params() {
                out.push(p.trainable as u8);
                for &v in p.value.data() {
                    v.write_le(&mut out);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "PSSNN01");
        r.expect_magic(MAGIC)?;
        if r.u8()? != S::TAG {
            return Err(Error::format("PSSNN01", "element width differs"));
        }
        let rank = r.u32()? as usize;
        let input_shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let tag = r.u8()?;
            let mut layer = match tag {
                1 => {
                    let rows = r.u32()? as usize;
                    let dim = r.u32()? as usize;
                    Layer::Embedding(Embedding {
                        rows,
                        dim,
                        weight: placeholder(&[rows, dim]),
                    })
                }
                2 | 4 => {
                    let in_channels = r.u32()? as usize;
                    let filters = r.u32()? as usize;
                    let kernel = r.u32()? as usize;
                    if tag == 2 {
                        Layer::Conv1d(Conv1d {
                            in_channels,
                            filters,
                            kernel,
                            weight: placeholder(&[kernel * in_channels, filters]),
                            bias: placeholder(&[filters]),
                        })
                    } else {
                        Layer::Conv2d(Conv2d {
                            in_channels,
                            filters,
                            kernel,
                            weight: placeholder(&[kernel * kernel * in_channels, filters]),
                            bias: placeholder(&[filters]),
                        })
                    }
                }
                3 => Layer::GlobalMaxPool1d,
                5 => Layer::MaxPool2d,
                6 => Layer::Flatten,
                7 => {
                    let inputs = r.u32()? as usize;
                    let outputs = r.u32()? as usize;
                    let l2 = r.f64()?;
                    Layer::Dense(Dense {
                        inputs,
                        outputs,
                        l2,
                        weight: placeholder(&[inputs, outputs]),
                        bias: placeholder(&[outputs]),
                    })
                }
                8 => Layer::Relu,
                9 => Layer::Dropout { rate: r.f64()? },
                other => return Err(Error::format("PSSNN01", format!("unknown layer tag {other}"))),
            };
            for p in layer.params_mut() {
                p.trainable = r.u8()? != 0;
                for v in p.value.data_mut() {
                    *v = S::read_le(r.take(S::BYTES)?);
                }
                if !p.value.is_finite() {
                    return Err(Error::format("PSSNN01", "non-finite parameter"));
                }
            }
            layers.push(layer);
        }
        r.finish()?;
        Self::new(input_shape, layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

fn placeholder<S: Scalar>(shape: &[usize]) -> Param<S> {
    Param {
        value: Tensor::zeros(shape),
        grad: vec![S::zero(); shape.iter().product()],
        trainable: true,
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets, and
/// its gradient with respect to the logits. Logits are clamped to ±15 for
/// the loss; the gradient is σ(clamped) − y per example, divided by the
/// batch size.
pub fn bce_with_logits<S: Scalar>(logits: &[S], targets: &[f64]) -> (f64, Vec<S>) {
    assert_eq!(logits.len(), targets.len());
    let n = logits.len().max(1) as f64;
    let mut loss = 0.0;
    let grads = logits
        .iter()
        .zip(targets)
        .map(|(&z, &y)| {
            let z = z.to_f64().unwrap().clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
            loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
            S::of((sigmoid(z) - y) / n)
        })
        .collect();
    (loss / n, grads)
}
