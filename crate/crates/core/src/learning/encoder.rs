//! Per-location linear encoder standing in for a convolutional backbone.

use rand::Rng;

use crate::error::{Error, Result};
use crate::smtf::Tensor;
use crate::tensor::FeatureMap;

/// `out = x W + b` at every spatial location. `W` is `c_in x c_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    c_in: usize,
    c_out: usize,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl ToyEncoder {
    pub fn new(c_in: usize, c_out: usize, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if c_in == 0 || c_out == 0 {
            return Err(Error::InvalidArgument(
                "encoder dims must be positive".into(),
            ));
        }
        if weight.len() != c_in * c_out {
            return Err(Error::LengthMismatch(weight.len(), c_in * c_out));
        }
        if bias.len() != c_out {
            return Err(Error::LengthMismatch(bias.len(), c_out));
        }
        if weight.iter().chain(&bias).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            c_in,
            c_out,
            weight,
            bias,
        })
    }

    pub fn identity(c: usize) -> Self {
        let mut weight = vec![0.0; c * c];
        for i in 0..c {
            weight[i * c + i] = 1.0;
        }
        Self {
            c_in: c,
            c_out: c,
            weight,
            bias: vec![0.0; c],
        }
    }

    /// Gaussian-free uniform init with variance-preserving scale.
    pub fn random<R: Rng>(c_in: usize, c_out: usize, rng: &mut R) -> Self {
        let a = (3.0 / c_in as f32).sqrt();
        let weight = (0..c_in * c_out)
            .map(|_| rng.random_range(-a..=a))
            .collect();
        Self {
            c_in,
            c_out,
            weight,
            bias: vec![0.0; c_out],
        }
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn n_params(&self) -> usize {
        self.c_in * self.c_out + self.c_out
    }

    /// Flat parameters: `W | b`.
    pub fn to_params(&self) -> Vec<f32> {
        [self.weight.as_slice(), self.bias.as_slice()].concat()
    }

    pub fn from_params(c_in: usize, c_out: usize, params: &[f32]) -> Result<Self> {
        if params.len() != c_in * c_out + c_out {
            return Err(Error::LengthMismatch(params.len(), c_in * c_out + c_out));
        }
        let (w, b) = params.split_at(c_in * c_out);
        Self::new(c_in, c_out, w.to_vec(), b.to_vec())
    }

    /// Stored as a `[c_in + 1, c_out]` tensor whose last row is the bias.
    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            dims: vec![self.c_in + 1, self.c_out],
            data: self.to_params(),
        }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.dims[..] {
            [rows, c_out] if rows >= 2 => Self::from_params(rows - 1, c_out, &t.data),
            _ => Err(Error::Format(format!(
                "encoder tensor must be [c_in + 1, c_out], got {:?}",
                t.dims
            ))),
        }
    }

    pub fn apply(&self, input: &FeatureMap) -> Result<FeatureMap> {
        if input.channels() != self.c_in {
            return Err(Error::Dimension(format!(
                "encoder expects {} channels, map has {}",
                self.c_in,
                input.channels()
            )));
        }
        let mut data = Vec::with_capacity(input.cells() * self.c_out);
        for idx in 0..input.cells() {
            let x = input.cell_flat(idx);
            for o in 0..self.c_out {
                let mut acc = self.bias[o];
                for (i, &xi) in x.iter().enumerate() {
                    acc += xi * self.weight[i * self.c_out + o];
                }
                data.push(acc);
            }
        }
        FeatureMap::new(input.height(), input.width(), self.c_out, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_is_identity() {
        let m = FeatureMap::from_fn(2, 3, 4, |i, j, o| {
            o.iter_mut()
                .enumerate()
                .for_each(|(c, x)| *x = (i * 7 + j * 3 + c) as f32)
        })
        .unwrap();
        assert_eq!(ToyEncoder::identity(4).apply(&m).unwrap(), m);
    }

    #[test]
    fn linear_map_by_hand() {
        let enc = ToyEncoder::new(2, 1, vec![2.0, -1.0], vec![0.5]).unwrap();
        let m = FeatureMap::new(1, 1, 2, vec![3.0, 4.0]).unwrap();
        assert_eq!(enc.apply(&m).unwrap().data(), &[2.5]);
        assert!(enc.apply(&FeatureMap::zeros(1, 1, 3)).is_err());
    }

    #[test]
    fn tensor_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = ToyEncoder::random(5, 4, &mut rng);
        assert_eq!(enc.n_params(), 24);
        assert_eq!(ToyEncoder::from_tensor(&enc.to_tensor()).unwrap(), enc);
        assert!(ToyEncoder::from_tensor(&Tensor::new(vec![24], vec![0.0; 24]).unwrap()).is_err());
    }
}
