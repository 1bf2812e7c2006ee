//! Dense and strided local-receptive-field layers with hand-written
//! backpropagation, plus the adaptive first/second-moment optimizer driving
//! the training loop.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    pub fn deriv_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Fully connected layer, row-major `output x input`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        debug_assert_eq!(y.len(), self.outputs);
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.bias[o];
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            *yo = acc;
        }
    }

    /// Accumulate parameter gradients and the input gradient.
    pub fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        dx: Option<&mut [f64]>,
        gw: &mut [f64],
        gb: &mut [f64],
    ) {
        for (o, &g) in dy.iter().enumerate() {
            gb[o] += g;
            let grow = &mut gw[o * self.inputs..(o + 1) * self.inputs];
            for (gwi, xv) in grow.iter_mut().zip(x) {
                *gwi += g * xv;
            }
        }
        if let Some(dx) = dx {
            for v in dx.iter_mut() {
                *v = 0.0;
            }
            for (o, &g) in dy.iter().enumerate() {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                for (dxi, w) in dx.iter_mut().zip(row) {
                    *dxi += g * w;
                }
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Strided square convolution (local receptive field), `channels_out x
/// channels_in x k x k` weights, no padding.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Conv2d {
    pub channels_in: usize,
    pub channels_out: usize,
    pub side_in: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(
        channels_in: usize,
        channels_out: usize,
        side_in: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        Self {
            channels_in,
            channels_out,
            side_in,
            kernel,
            stride,
            weights: vec![0.0; channels_out * channels_in * kernel * kernel],
            bias: vec![0.0; channels_out],
        }
    }

    pub fn side_out(&self) -> usize {
        (self.side_in - self.kernel) / self.stride + 1
    }

    pub fn output_len(&self) -> usize {
        self.channels_out * self.side_out() * self.side_out()
    }

    pub fn input_len(&self) -> usize {
        self.channels_in * self.side_in * self.side_in
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        let so = self.side_out();
        let si = self.side_in;
        let k = self.kernel;
        for co in 0..self.channels_out {
            for oy in 0..so {
                for ox in 0..so {
                    let mut acc = self.bias[co];
                    for ci in 0..self.channels_in {
                        let wbase = ((co * self.channels_in + ci) * k) * k;
                        let xbase = ci * si * si;
                        for ky in 0..k {
                            let iy = oy * self.stride + ky;
                            let xrow = xbase + iy * si + ox * self.stride;
                            let wrow = wbase + ky * k;
                            for kx in 0..k {
                                acc += self.weights[wrow + kx] * x[xrow + kx];
                            }
                        }
                    }
                    y[(co * so + oy) * so + ox] = acc;
                }
            }
        }
    }

    pub fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        dx: Option<&mut [f64]>,
        gw: &mut [f64],
        gb: &mut [f64],
    ) {
        let so = self.side_out();
        let si = self.side_in;
        let k = self.kernel;
        if let Some(dx) = &dx {
            debug_assert_eq!(dx.len(), self.input_len());
        }
        let mut dx = dx;
        if let Some(dx) = dx.as_deref_mut() {
            for v in dx.iter_mut() {
                *v = 0.0;
            }
        }
        for co in 0..self.channels_out {
            for oy in 0..so {
                for ox in 0..so {
                    let g = dy[(co * so + oy) * so + ox];
                    gb[co] += g;
                    for ci in 0..self.channels_in {
                        let wbase = ((co * self.channels_in + ci) * k) * k;
                        let xbase = ci * si * si;
                        for ky in 0..k {
                            let iy = oy * self.stride + ky;
                            let xrow = xbase + iy * si + ox * self.stride;
                            let wrow = wbase + ky * k;
                            for kx in 0..k {
                                gw[wrow + kx] += g * x[xrow + kx];
                                if let Some(dx) = dx.as_deref_mut() {
                                    dx[xrow + kx] += g * self.weights[wrow + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Smooth L1 loss with transition point `beta`: quadratic inside, linear
/// outside.
pub fn smooth_l1(error: f64, beta: f64) -> f64 {
    let a = error.abs();
    if a < beta {
        0.5 * error * error / beta
    } else {
        a - 0.5 * beta
    }
}

pub fn smooth_l1_grad(error: f64, beta: f64) -> f64 {
    if error.abs() < beta {
        error / beta
    } else {
        error.signum()
    }
}

/// Adaptive per-parameter step sizes from running first/second moment
/// estimates with bias correction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentOptimizer {
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl MomentOptimizer {
    pub fn new(parameters: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: vec![0.0; parameters],
            second: vec![0.0; parameters],
        }
    }

    /// One update over the flattened parameter/gradient views.
    pub fn apply(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        self.step += 1;
        let correction1 = 1.0 - self.beta1.powi(self.step as i32);
        let correction2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut offset = 0;
        for (block, gblock) in params.iter_mut().zip(grads) {
            for (p, &g) in block.iter_mut().zip(gblock.iter()) {
                let m = &mut self.first[offset];
                let v = &mut self.second[offset];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                offset += 1;
            }
        }
        debug_assert_eq!(offset, self.first.len());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut layer = Dense::zeros(3, 2);
        for (i, w) in layer.weights.iter_mut().enumerate() {
            *w = 0.1 * (i as f64 + 1.0);
        }
        layer.bias = vec![0.05, -0.02];
        let x = [0.3, -0.7, 1.1];
        let dy = [1.0, -2.0];
        let mut gw = vec![0.0; 6];
        let mut gb = vec![0.0; 2];
        let mut dx = vec![0.0; 3];
        layer.backward(&x, &dy, Some(&mut dx), &mut gw, &mut gb);

        let loss = |l: &Dense| {
            let mut y = [0.0; 2];
            l.forward(&x, &mut y);
            y[0] * dy[0] + y[1] * dy[1]
        };
        let eps = 1e-6;
        for i in 0..6 {
            let mut plus = layer.clone();
            plus.weights[i] += eps;
            let mut minus = layer.clone();
            minus.weights[i] -= eps;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            assert!((fd - gw[i]).abs() < 1e-8, "weight {i}");
        }
    }

    #[test]
    fn conv_output_geometry_matches_the_reference_shape() {
        // 21 -> 9 -> 3 under kernel 5, stride 2; 128 channels give the
        // 1152-wide flattened feature.
        let c1 = Conv2d::zeros(3, 32, 21, 5, 2);
        assert_eq!(c1.side_out(), 9);
        let c2 = Conv2d::zeros(32, 128, 9, 5, 2);
        assert_eq!(c2.side_out(), 3);
        assert_eq!(c2.output_len(), 1152);
    }

    #[test]
    fn smooth_l1_is_continuous_at_the_transition() {
        let beta = 1.0;
        let inside = smooth_l1(beta - 1e-12, beta);
        let outside = smooth_l1(beta + 1e-12, beta);
        assert!((inside - outside).abs() < 1e-9);
        assert_eq!(smooth_l1(0.0, beta), 0.0);
        assert!((smooth_l1(3.0, beta) - 2.5).abs() < 1e-12);
    }
}

/// Bias-free linear map, row-major `output x input`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
        }
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            *yo = acc;
        }
    }

    pub fn backward(&self, x: &[f64], dy: &[f64], gw: &mut [f64]) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let grow = &mut gw[o * self.inputs..(o + 1) * self.inputs];
            for (gwi, xv) in grow.iter_mut().zip(x) {
                *gwi += g * xv;
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len()
    }
}
