use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::sigmoid;
use crate::rng::seeded;
use crate::{Error, Result};

/// Hidden layer widths (sigmoid) and the width of the linear output layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl Arch {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.hidden.len()) {
            return Err(Error::invalid(format!(
                "{} hidden layers; between 1 and 3 are supported",
                self.hidden.len()
            )));
        }
        if self.output == 0 || self.hidden.contains(&0) {
            return Err(Error::invalid("layer widths must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Layer {
    fn xavier(input: usize, output: usize, rng: &mut impl Rng) -> Layer {
        let bound = (6.0 / (input + output) as f64).sqrt();
        Layer {
            w: DMatrix::from_fn(output, input, |_, _| rng.random_range(-bound..bound)),
            b: DVector::zeros(output),
        }
    }

    fn affine(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * self.w.transpose();
        for mut row in z.row_iter_mut() {
            row += self.b.transpose();
        }
        z
    }
}

/// Feed-forward network: sigmoid hidden layers, linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(input: usize, arch: &Arch, seed: u64) -> Result<Network> {
        arch.validate()?;
        if input == 0 {
            return Err(Error::invalid("input width must be at least 1"));
        }
        let mut rng = seeded(seed);
        let mut widths = vec![input];
        widths.extend(&arch.hidden);
        widths.push(arch.output);
        let layers = widths.windows(2).map(|w| Layer::xavier(w[0], w[1], &mut rng)).collect();
        Ok(Network { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("network has layers").w.nrows()
    }

    fn is_output(&self, l: usize) -> bool {
        l + 1 == self.layers.len()
    }

    /// Activations of every layer, input first.
    fn activations(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = vec![x.clone()];
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(acts.last().expect("non-empty"));
            acts.push(if self.is_output(l) { z } else { z.map(sigmoid) });
        }
        acts
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.activations(x).pop().expect("non-empty")
    }

    /// Gradients of a scalar objective with respect to every layer, given
    /// its gradient `d_out` with respect to the output.
    pub(crate) fn backward(&self, x: &DMatrix<f64>, d_out: &DMatrix<f64>) -> Vec<Layer> {
        let acts = self.activations(x);
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut dz = d_out.clone();
        for l in (0..self.layers.len()).rev() {
            let input = &acts[l];
            grads.push(Layer {
                w: dz.transpose() * input,
                b: DVector::from_fn(dz.ncols(), |j, _| dz.column(j).sum()),
            });
            if l > 0 {
                let da = &dz * &self.layers[l].w;
                dz = da.component_mul(&input.map(|a| a * (1.0 - a)));
            }
        }
        grads.reverse();
        grads
    }

    pub(crate) fn step(&mut self, grads: &[Layer], rate: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            layer.w += &g.w * rate;
            layer.b += &g.b * rate;
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All weights then biases of each layer, layer by layer, column-major.
    pub fn parameters(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for a network with {}",
                p.len(),
                self.parameter_count()
            )));
        }
        let mut off = 0;
        for layer in &mut self.layers {
            let n = layer.w.len();
            layer.w.as_mut_slice().copy_from_slice(&p[off..off + n]);
            off += n;
            let n = layer.b.len();
            layer.b.as_mut_slice().copy_from_slice(&p[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Flattened [`Network::backward`], in [`Network::parameters`] order.
    pub fn parameter_gradient(&self, x: &DMatrix<f64>, d_out: &DMatrix<f64>) -> Vec<f64> {
        flatten(&self.backward(x, d_out))
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
        .collect()
}
