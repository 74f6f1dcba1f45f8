use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{shape_err, Result};

/// One-hidden-layer MLP: `σ(tanh(x W1 + b1) W2 + b2)`, input and hidden width `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams {
    tensors: Vec<Tensor>,
}

impl DiscriminatorParams {
    pub const NAMES: [&'static str; 4] = ["w1", "b1", "w2", "b2"];

    pub fn init<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        Self {
            tensors: vec![
                Tensor::glorot(d, d, rng),
                Tensor::zeros(1, d),
                Tensor::glorot(d, 1, rng),
                Tensor::zeros(1, 1),
            ],
        }
    }

    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        let ok = tensors.len() == 4 && {
            let d = tensors[0].rows();
            tensors[0].cols() == d
                && tensors[1].shape() == [1, d]
                && tensors[2].shape() == [d, 1]
                && tensors[3].shape() == [1, 1]
        };
        if !ok {
            return Err(shape_err("discriminator params", "unexpected tensor shapes"));
        }
        Ok(Self { tensors })
    }

    pub fn input_width(&self) -> usize {
        self.tensors[0].rows()
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> Discriminator<'t> {
        Discriminator {
            vars: self.tensors.iter().map(|t| tape.param(t)).collect(),
        }
    }

    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Discriminator<'t> {
        Discriminator {
            vars: self.tensors.iter().map(|t| tape.constant(t.clone())).collect(),
        }
    }

    /// Probabilities for each row of `x`, off the tape.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let out = self.bind_frozen(&tape).forward(tape.constant(x.clone()))?;
        Ok(out.value().data().to_vec())
    }
}

pub struct Discriminator<'t> {
    vars: Vec<Var<'t>>,
}

impl<'t> Discriminator<'t> {
    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }

    /// `[n, d] → [n, 1]` in (0, 1).
    pub fn forward(&self, x: Var<'t>) -> Result<Var<'t>> {
        let v = &self.vars;
        let h = x.matmul(v[0])?.add_row(v[1])?.tanh();
        Ok(h.matmul(v[2])?.add_row(v[3])?.sigmoid())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn outputs_are_probabilities() {
        let p = DiscriminatorParams::init(4, &mut ChaCha8Rng::seed_from_u64(0));
        let x = Tensor::from_rows(3, 4, (0..12).map(|i| i as f64 - 6.0).collect());
        for y in p.predict(&x).unwrap() {
            assert!(y > 0.0 && y < 1.0);
        }
    }

    #[test]
    fn zero_weights_give_one_half() {
        let p = DiscriminatorParams::from_tensors(vec![
            Tensor::zeros(2, 2),
            Tensor::zeros(1, 2),
            Tensor::zeros(2, 1),
            Tensor::zeros(1, 1),
        ])
        .unwrap();
        assert_eq!(p.predict(&Tensor::filled(2, 2, 3.0)).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn wrong_width_is_a_shape_error() {
        let p = DiscriminatorParams::init(4, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(p.predict(&Tensor::zeros(1, 3)).is_err());
    }
}
