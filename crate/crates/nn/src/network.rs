use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::arch::{ConvGeom, HeadGeom};
use crate::gemm::{matmul, matmul_at, matmul_bt_acc};
use crate::{Architecture, NnError, Result};

/// A conv stack with global average pooling and a linear output layer.
#[derive(Clone, Debug)]
pub struct Network {
    arch: Architecture,
    convs: Vec<ConvGeom>,
    head: HeadGeom,
    params: Vec<f64>,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Clone, Debug)]
pub struct Trace {
    pooled: Vec<f64>,
    cols: Vec<Vec<f64>>,
    activations: Vec<Vec<f64>>,
    features: Vec<f64>,
    outputs: Vec<f64>,
}

impl Trace {
    /// Raw (pre-activation) values of the output layer.
    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    /// Globally pooled activations of the last block.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Post-ReLU activations of the last block, channel-major.
    pub fn last_activation(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&self.pooled)
    }
}

/// Side products of [`Network::backward`].
#[derive(Clone, Debug)]
pub struct Backward {
    /// Gradient with respect to the network input, when requested.
    pub input: Option<Vec<f64>>,
    /// Gradient with respect to [`Trace::last_activation`].
    pub last_activation: Vec<f64>,
}

impl Network {
    /// He-normal conv weights, `N(0, 1/fan_in)` output weights, zero biases.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let (convs, head) = arch.geometry()?;
        let mut params = vec![0.0; head.bias_offset + head.outputs];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for g in &convs {
            let std = (2.0 / g.patch_len() as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for w in &mut params[g.weight_offset..g.bias_offset] {
                *w = normal.sample(&mut rng);
            }
        }
        let normal = Normal::new(0.0, (1.0 / head.inputs as f64).sqrt()).expect("positive std");
        for w in &mut params[head.weight_offset..head.bias_offset] {
            *w = normal.sample(&mut rng);
        }
        Ok(Self {
            arch,
            convs,
            head,
            params,
        })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        let (convs, head) = arch.geometry()?;
        let expected = head.bias_offset + head.outputs;
        if params.len() != expected {
            return Err(NnError::ParamCount {
                expected,
                actual: params.len(),
            });
        }
        Ok(Self {
            arch,
            convs,
            head,
            params,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Multiplies the output-layer weights by `factor`.
    pub fn scale_output_layer(&mut self, factor: f64) {
        for w in &mut self.params[self.head.weight_offset..self.head.bias_offset] {
            *w *= factor;
        }
    }

    /// Sets the output-layer biases.
    pub fn set_output_bias(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.head.outputs {
            return Err(NnError::OutputGradient {
                expected: self.head.outputs,
                actual: bias.len(),
            });
        }
        let start = self.head.bias_offset;
        self.params[start..start + bias.len()].copy_from_slice(bias);
        Ok(())
    }

    /// Shape `(channels, height, width)` of [`Trace::last_activation`].
    pub fn last_activation_shape(&self) -> (usize, usize, usize) {
        match self.convs.last() {
            Some(g) => (g.out_c, g.out_h, g.out_w),
            None => (
                self.arch.channels,
                self.arch.height / self.arch.input_pool,
                self.arch.width / self.arch.input_pool,
            ),
        }
    }

    /// SHA-256 over the little-endian parameter bytes, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for p in &self.params {
            hasher.update(p.to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Trace> {
        let expected = self.arch.input_len();
        if input.len() != expected {
            return Err(NnError::InputLength {
                expected,
                actual: input.len(),
            });
        }
        let pooled = avg_pool(
            input,
            self.arch.channels,
            self.arch.height,
            self.arch.width,
            self.arch.input_pool,
        );

        let mut cols = Vec::with_capacity(self.convs.len());
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.convs.len());
        for g in &self.convs {
            let x = activations.last().unwrap_or(&pooled);
            let c = im2col(x, g);
            let mut z = vec![0.0; g.out_c * g.out_pixels()];
            let w = &self.params[g.weight_offset..g.bias_offset];
            matmul(g.out_c, g.patch_len(), g.out_pixels(), w, &c, &mut z, false);
            let b = &self.params[g.bias_offset..g.bias_offset + g.out_c];
            for (row, bias) in z.chunks_mut(g.out_pixels()).zip(b) {
                for v in row {
                    *v = (*v + bias).max(0.0);
                }
            }
            cols.push(c);
            activations.push(z);
        }

        let (c, h, w) = self.last_activation_shape();
        let last = activations.last().unwrap_or(&pooled);
        let features: Vec<f64> = last
            .chunks(h * w)
            .take(c)
            .map(|ch| ch.iter().sum::<f64>() / (h * w) as f64)
            .collect();

        let hd = self.head;
        let weights = &self.params[hd.weight_offset..hd.bias_offset];
        let outputs = (0..hd.outputs)
            .map(|o| {
                let row = &weights[o * hd.inputs..(o + 1) * hd.inputs];
                let dot: f64 = row.iter().zip(&features).map(|(a, b)| a * b).sum();
                dot + self.params[hd.bias_offset + o]
            })
            .collect();

        Ok(Trace {
            pooled,
            cols,
            activations,
            features,
            outputs,
        })
    }

    /// Accumulates `∂(d_out · outputs)/∂params` into `grads`.
    pub fn backward(
        &self,
        trace: &Trace,
        d_out: &[f64],
        grads: &mut [f64],
        want_input: bool,
    ) -> Result<Backward> {
        let hd = self.head;
        if d_out.len() != hd.outputs {
            return Err(NnError::OutputGradient {
                expected: hd.outputs,
                actual: d_out.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(NnError::ParamCount {
                expected: self.params.len(),
                actual: grads.len(),
            });
        }

        let weights = &self.params[hd.weight_offset..hd.bias_offset];
        let mut d_features = vec![0.0; hd.inputs];
        for (o, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = o * hd.inputs;
            for i in 0..hd.inputs {
                grads[hd.weight_offset + row + i] += g * trace.features[i];
                d_features[i] += g * weights[row + i];
            }
            grads[hd.bias_offset + o] += g;
        }

        let (c, h, w) = self.last_activation_shape();
        let pixels = h * w;
        let mut d_act: Vec<f64> = (0..c)
            .flat_map(|ch| std::iter::repeat(d_features[ch] / pixels as f64).take(pixels))
            .collect();
        let last_activation = d_act.clone();

        for (li, g) in self.convs.iter().enumerate().rev() {
            let act = &trace.activations[li];
            for (d, a) in d_act.iter_mut().zip(act) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            let p = g.out_pixels();
            let k = g.patch_len();
            matmul_bt_acc(
                g.out_c,
                p,
                k,
                &d_act,
                &trace.cols[li],
                &mut grads[g.weight_offset..g.bias_offset],
            );
            for (o, row) in d_act.chunks(p).enumerate() {
                grads[g.bias_offset + o] += row.iter().sum::<f64>();
            }
            if li == 0 && !want_input {
                break;
            }
            let mut d_cols = vec![0.0; k * p];
            matmul_at(
                k,
                g.out_c,
                p,
                &self.params[g.weight_offset..g.bias_offset],
                &d_act,
                &mut d_cols,
            );
            d_act = col2im(&d_cols, g);
        }

        let input = if want_input {
            Some(avg_pool_backward(
                &d_act,
                self.arch.channels,
                self.arch.height,
                self.arch.width,
                self.arch.input_pool,
            ))
        } else {
            None
        };

        Ok(Backward {
            input,
            last_activation,
        })
    }
}

fn avg_pool(x: &[f64], c: usize, h: usize, w: usize, f: usize) -> Vec<f64> {
    if f == 1 {
        return x.to_vec();
    }
    let (oh, ow) = (h / f, w / f);
    let norm = 1.0 / (f * f) as f64;
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                out[(ch * oh + y / f) * ow + xx / f] += x[(ch * h + y) * w + xx] * norm;
            }
        }
    }
    out
}

fn avg_pool_backward(d: &[f64], c: usize, h: usize, w: usize, f: usize) -> Vec<f64> {
    if f == 1 {
        return d.to_vec();
    }
    let (oh, ow) = (h / f, w / f);
    let norm = 1.0 / (f * f) as f64;
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                out[(ch * h + y) * w + xx] = d[(ch * oh + y / f) * ow + xx / f] * norm;
            }
        }
    }
    out
}

fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let p = g.out_pixels();
    let mut cols = vec![0.0; g.patch_len() * p];
    for ci in 0..g.in_c {
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = ((ci * g.kernel + ky) * g.kernel + kx) * p;
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let src = (ci * g.in_h + iy as usize) * g.in_w;
                    let dst = row + oy * g.out_w;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            cols[dst + ox] = x[src + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], g: &ConvGeom) -> Vec<f64> {
    let p = g.out_pixels();
    let mut x = vec![0.0; g.in_c * g.in_h * g.in_w];
    for ci in 0..g.in_c {
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = ((ci * g.kernel + ky) * g.kernel + kx) * p;
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst = (ci * g.in_h + iy as usize) * g.in_w;
                    let src = row + oy * g.out_w;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            x[dst + ix as usize] += cols[src + ox];
                        }
                    }
                }
            }
        }
    }
    x
}
