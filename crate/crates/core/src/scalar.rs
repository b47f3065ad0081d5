//! Floating-point abstraction.
//!
//! Every numerical routine in this crate is generic over [`Real`], which is
//! implemented for `f32` and `f64`. The trait bundles the `num-traits`
//! arithmetic surface together with the few sampling and special-function
//! hooks the samplers need, so the rest of the crate never mentions a
//! concrete float type.

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use std::fmt;
use std::iter::Sum;

/// Scalar type for all numerical work: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum<Self>
    + ScalarOperand
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// One standard-normal draw.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One uniform draw on the open interval (0, 1).
    fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Complementary error function.
    fn erfc(self) -> Self;
}

impl Real for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Open01.sample(rng)
    }

    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Real for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Open01.sample(rng)
    }

    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

/// Pull an `f64` constant into the working scalar type.
pub(crate) fn cast<S: Real>(v: f64) -> S {
    S::from_f64(v).expect("constant not representable in scalar type")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn open_unit_stays_in_open_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let u: f64 = Real::open_unit(&mut rng);
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn erfc_anchors() {
        assert!((<f64 as Real>::erfc(0.0) - 1.0).abs() < 1e-15);
        // erfc(1) = 0.157299207050285...
        assert!((<f64 as Real>::erfc(1.0) - 0.157_299_207_050_285_13).abs() < 1e-15);
        assert!(<f64 as Real>::erfc(30.0) >= 0.0);
    }
}
