use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Scalar, Tensor};

/// Mixes a base seed with a stream tag (splitmix64 finaliser), giving
/// independent RNG streams for init, dropout, sampling and masking.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Xavier/Glorot uniform: entries in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`
/// with `fan_in = rows`, `fan_out = cols`.
pub fn xavier_uniform<T: Scalar>(shape: &[usize], seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    xavier_uniform_with(shape, &mut rng)
}

pub fn xavier_uniform_with<T: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    assert_eq!(shape.len(), 2, "xavier init needs a 2-D shape");
    let (fan_in, fan_out) = (shape[0], shape[1]);
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    // Draw in f64 so f32 and f64 models start from the same point.
    let data = (0..fan_in * fan_out)
        .map(|_| T::of_f64(rng.gen_range(-a..=a)))
        .collect();
    Tensor::from_vec(shape, data).expect("shape matches")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_tensor() {
        let a: Tensor<f32> = xavier_uniform(&[4, 7], 11);
        let b: Tensor<f32> = xavier_uniform(&[4, 7], 11);
        assert_eq!(a, b);
        let c: Tensor<f32> = xavier_uniform(&[4, 7], 12);
        assert_ne!(a, c);
    }

    #[test]
    fn square_three_bound_is_one() {
        let t: Tensor<f64> = xavier_uniform(&[3, 3], 5);
        assert!(t.data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn empirical_mean_near_zero() {
        // 100_000 draws from a (250 x 400) matrix
        let t: Tensor<f64> = xavier_uniform(&[250, 400], 99);
        let a = (6.0f64 / 650.0).sqrt();
        let mean = t.data().iter().sum::<f64>() / t.len() as f64;
        assert!(mean.abs() < 0.01 * a, "mean {mean}");
        assert!(t.data().iter().all(|v| v.abs() <= a));
    }

    #[test]
    fn f32_and_f64_agree() {
        let a: Tensor<f32> = xavier_uniform(&[5, 3], 3);
        let b: Tensor<f64> = xavier_uniform(&[5, 3], 3);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(*x, *y as f32);
        }
    }
}
