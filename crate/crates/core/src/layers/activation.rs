use crate::tensor::{Real, Tensor4};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Linear,
    Tanh,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Linear),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

pub fn tanh_forward<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    let mut y = x.clone();
    crate::simd::tanh_into(x.as_slice(), y.as_mut_slice());
    y
}

/// `gy ⊙ (1 - y²)` where `y` is the tanh output.
pub fn tanh_backward<T: Real>(y: &Tensor4<T>, gy: &Tensor4<T>) -> Result<Tensor4<T>> {
    if !y.same_shape(gy) {
        return Err(Error::invalid(format!(
            "tanh backward: activation {:?} vs gradient {:?}",
            y.shape(),
            gy.shape()
        )));
    }
    let data = y
        .as_slice()
        .iter()
        .zip(gy.as_slice())
        .map(|(&yv, &g)| g * (T::one() - yv * yv))
        .collect();
    Tensor4::from_vec(y.batch(), y.channels(), y.height(), y.width(), data)
}

/// Backward closure state returned by [`tanh_activation`].
pub struct TanhBackward<T> {
    y: Tensor4<T>,
}

impl<T: Real> TanhBackward<T> {
    pub fn apply(&self, gy: &Tensor4<T>) -> Result<Tensor4<T>> {
        tanh_backward(&self.y, gy)
    }
}

pub fn tanh_activation<T: Real>(x: &Tensor4<T>) -> (Tensor4<T>, TanhBackward<T>) {
    let y = tanh_forward(x);
    (y.clone(), TanhBackward { y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn origin_and_saturation() {
        let x = Tensor4::from_vec(1, 1, 1, 2, vec![0.0f64, 20.0]).unwrap();
        let (y, back) = tanh_activation(&x);
        assert_eq!(y.as_slice()[0], 0.0);
        assert!((y.as_slice()[1] - 1.0).abs() < 1e-9);
        let g = back.apply(&Tensor4::filled(1, 1, 1, 2, 1.0)).unwrap();
        assert_eq!(g.as_slice()[0], 1.0);
    }

    #[test]
    fn derivative_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor4::from_fn(1, 2, 3, 3, |_| rng.random_range(-2.0f64..2.0));
        let (_, back) = tanh_activation(&x);
        let g = back.apply(&Tensor4::filled(1, 2, 3, 3, 1.0)).unwrap();
        let h = 1e-4;
        for (i, &v) in x.as_slice().iter().enumerate() {
            let fd = ((v + h).tanh() - (v - h).tanh()) / (2.0 * h);
            let a = g.as_slice()[i];
            assert!((a - fd).abs() / a.abs().max(1e-12) < 1e-6, "{a} vs {fd}");
        }
    }

    #[test]
    fn activation_codes_round_trip() {
        for a in [Activation::Linear, Activation::Tanh] {
            assert_eq!(Activation::from_code(a.code()), Some(a));
        }
        assert_eq!(Activation::from_code(7), None);
    }
}
