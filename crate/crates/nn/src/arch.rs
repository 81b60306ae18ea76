use serde::{Deserialize, Serialize};

use crate::{NnError, Result};

/// One `conv → ReLU` block. Padding is always `kernel / 2`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn new(out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            out_channels,
            kernel,
            stride,
        }
    }
}

/// Static description of a network. Two networks with equal architectures
/// have interchangeable parameter vectors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Identifier stored in checkpoints, e.g. `"desk-cnn-v1"`.
    pub name: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Average-pooling factor applied to the input before the first block.
    pub input_pool: usize,
    pub convs: Vec<ConvSpec>,
    pub outputs: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl ConvGeom {
    pub fn patch_len(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct HeadGeom {
    pub inputs: usize,
    pub outputs: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl Architecture {
    pub fn input_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Width of the pooled feature vector feeding the output layer.
    pub fn feature_dim(&self) -> usize {
        self.convs
            .last()
            .map(|c| c.out_channels)
            .unwrap_or(self.channels)
    }

    pub fn param_count(&self) -> usize {
        self.geometry()
            .map(|(_, head)| head.bias_offset + head.outputs)
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry().map(|_| ())
    }

    pub(crate) fn geometry(&self) -> Result<(Vec<ConvGeom>, HeadGeom)> {
        let bad = |msg: String| Err(NnError::Architecture(msg));
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return bad("input dimensions must be positive".into());
        }
        if self.outputs == 0 {
            return bad("at least one output is required".into());
        }
        if self.input_pool == 0
            || self.height % self.input_pool != 0
            || self.width % self.input_pool != 0
        {
            return bad(format!(
                "input pool {} must divide {}x{}",
                self.input_pool, self.height, self.width
            ));
        }
        let (mut c, mut h, mut w) = (
            self.channels,
            self.height / self.input_pool,
            self.width / self.input_pool,
        );
        let mut offset = 0;
        let mut convs = Vec::with_capacity(self.convs.len());
        for (i, spec) in self.convs.iter().enumerate() {
            if spec.kernel % 2 == 0 || spec.stride == 0 || spec.out_channels == 0 {
                return bad(format!("block {i}: kernel must be odd, stride and width positive"));
            }
            let pad = spec.kernel / 2;
            let out_h = (h + 2 * pad - spec.kernel) / spec.stride + 1;
            let out_w = (w + 2 * pad - spec.kernel) / spec.stride + 1;
            let weight_offset = offset;
            offset += spec.out_channels * c * spec.kernel * spec.kernel;
            let bias_offset = offset;
            offset += spec.out_channels;
            convs.push(ConvGeom {
                in_c: c,
                in_h: h,
                in_w: w,
                out_c: spec.out_channels,
                out_h,
                out_w,
                kernel: spec.kernel,
                stride: spec.stride,
                pad,
                weight_offset,
                bias_offset,
            });
            c = spec.out_channels;
            h = out_h;
            w = out_w;
        }
        let head = HeadGeom {
            inputs: c,
            outputs: self.outputs,
            weight_offset: offset,
            bias_offset: offset + c * self.outputs,
        };
        Ok((convs, head))
    }
}
