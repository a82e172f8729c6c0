use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Shape;

/// Fully connected layer, `out = W x + b` with `W` stored `outputs x inputs`
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Valid (unpadded, stride 1) 2-D convolution over an `(h, w, c)` tensor.
/// Kernel weights are stored `[out_channel][ky][kx][in_channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub input: Shape,
    pub out_channels: usize,
    pub kernel: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv(Conv2d),
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    /// He-normal initialisation, zero bias.
    pub fn random(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let std = (2.0 / inputs as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| std * rng.normal()).collect();
        Dense { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    fn backward_input(&self, grad_out: &[f64]) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.inputs];
        for (row, g) in self.weights.chunks_exact(self.inputs).zip(grad_out) {
            for (gi, w) in grad_in.iter_mut().zip(row) {
                *gi += g * w;
            }
        }
        grad_in
    }

    fn accumulate(&self, x: &[f64], grad_out: &[f64], gw: &mut [f64], gb: &mut [f64]) {
        for ((row, g), b) in gw.chunks_exact_mut(self.inputs).zip(grad_out).zip(gb.iter_mut()) {
            *b += g;
            for (w, v) in row.iter_mut().zip(x) {
                *w += g * v;
            }
        }
    }
}

impl Conv2d {
    pub fn output_shape(&self) -> Shape {
        Shape::new(self.input.width + 1 - self.kernel, self.input.height + 1 - self.kernel, self.out_channels)
    }

    pub fn random(input: Shape, out_channels: usize, kernel: usize, rng: &mut Rng) -> Self {
        let fan_in = kernel * kernel * input.channels;
        let std = (2.0 / fan_in as f64).sqrt();
        let weights = (0..out_channels * fan_in).map(|_| std * rng.normal()).collect();
        Conv2d { input, out_channels, kernel, weights, bias: vec![0.0; out_channels] }
    }

    fn fan_in(&self) -> usize {
        self.kernel * self.kernel * self.input.channels
    }

    #[inline]
    fn in_index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.input.width + x) * self.input.channels + c
    }

    #[inline]
    fn w_index(&self, oc: usize, ky: usize, kx: usize, ic: usize) -> usize {
        ((oc * self.kernel + ky) * self.kernel + kx) * self.input.channels + ic
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let out = self.output_shape();
        let mut y = vec![0.0; out.len()];
        for oy in 0..out.height {
            for ox in 0..out.width {
                for oc in 0..self.out_channels {
                    let mut acc = self.bias[oc];
                    for ky in 0..self.kernel {
                        for kx in 0..self.kernel {
                            for ic in 0..self.input.channels {
                                acc +=
                                    self.weights[self.w_index(oc, ky, kx, ic)] * x[self.in_index(oy + ky, ox + kx, ic)];
                            }
                        }
                    }
                    y[(oy * out.width + ox) * self.out_channels + oc] = acc;
                }
            }
        }
        y
    }

    fn backward_input(&self, grad_out: &[f64]) -> Vec<f64> {
        let out = self.output_shape();
        let mut grad_in = vec![0.0; self.input.len()];
        for oy in 0..out.height {
            for ox in 0..out.width {
                for oc in 0..self.out_channels {
                    let g = grad_out[(oy * out.width + ox) * self.out_channels + oc];
                    if g == 0.0 {
                        continue;
                    }
                    for ky in 0..self.kernel {
                        for kx in 0..self.kernel {
                            for ic in 0..self.input.channels {
                                grad_in[self.in_index(oy + ky, ox + kx, ic)] +=
                                    g * self.weights[self.w_index(oc, ky, kx, ic)];
                            }
                        }
                    }
                }
            }
        }
        grad_in
    }

    fn accumulate(&self, x: &[f64], grad_out: &[f64], gw: &mut [f64], gb: &mut [f64]) {
        let out = self.output_shape();
        for oy in 0..out.height {
            for ox in 0..out.width {
                for oc in 0..self.out_channels {
                    let g = grad_out[(oy * out.width + ox) * self.out_channels + oc];
                    gb[oc] += g;
                    if g == 0.0 {
                        continue;
                    }
                    for ky in 0..self.kernel {
                        for kx in 0..self.kernel {
                            for ic in 0..self.input.channels {
                                gw[self.w_index(oc, ky, kx, ic)] += g * x[self.in_index(oy + ky, ox + kx, ic)];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl Layer {
    pub fn input_len(&self) -> usize {
        match self {
            Layer::Dense(d) => d.inputs,
            Layer::Conv(c) => c.input.len(),
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            Layer::Dense(d) => d.outputs,
            Layer::Conv(c) => c.output_shape().len(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        match self {
            Layer::Dense(d) => &d.weights,
            Layer::Conv(c) => &c.weights,
        }
    }

    pub fn bias(&self) -> &[f64] {
        match self {
            Layer::Dense(d) => &d.bias,
            Layer::Conv(c) => &c.bias,
        }
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        match self {
            Layer::Dense(d) => (&mut d.weights, &mut d.bias),
            Layer::Conv(c) => (&mut c.weights, &mut c.bias),
        }
    }

    pub(crate) fn forward(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Layer::Dense(d) => d.forward(x),
            Layer::Conv(c) => c.forward(x),
        }
    }

    pub(crate) fn backward_input(&self, grad_out: &[f64]) -> Vec<f64> {
        match self {
            Layer::Dense(d) => d.backward_input(grad_out),
            Layer::Conv(c) => c.backward_input(grad_out),
        }
    }

    pub(crate) fn accumulate(&self, x: &[f64], grad_out: &[f64], gw: &mut [f64], gb: &mut [f64]) {
        match self {
            Layer::Dense(d) => d.accumulate(x, grad_out, gw, gb),
            Layer::Conv(c) => c.accumulate(x, grad_out, gw, gb),
        }
    }

    /// Checks that stored parameter counts agree with the declared dims.
    pub(crate) fn validate(&self, index: usize) -> Result<()> {
        let (expected_w, expected_b) = match self {
            Layer::Dense(d) => (d.inputs * d.outputs, d.outputs),
            Layer::Conv(c) => {
                if c.kernel == 0 || c.kernel > c.input.width || c.kernel > c.input.height {
                    return Err(Error::CorruptLayer {
                        layer: index,
                        reason: format!("kernel {} does not fit input {}", c.kernel, c.input),
                    });
                }
                (c.out_channels * c.fan_in(), c.out_channels)
            }
        };
        if self.weights().len() != expected_w || self.bias().len() != expected_b {
            return Err(Error::CorruptLayer {
                layer: index,
                reason: format!(
                    "expected {expected_w} weights and {expected_b} biases, found {} and {}",
                    self.weights().len(),
                    self.bias().len()
                ),
            });
        }
        Ok(())
    }
}
