//! Scalar abstraction shared by every probability computation in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type used for probabilities, concentrations and log joints.
///
/// Configuration documents are always `f64`; model state converts into `Self`
/// when a hierarchy is built and back to `f64` when it is serialized.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts a configuration value. Every finite `f64` is representable
    /// (possibly rounded) in both supported widths.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to scalar")
    }

    fn of_count(n: u64) -> Self {
        Self::from_u64(n).expect("count converts to scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `ln Γ(n)` for a positive integer `n`, summed term by term.
pub(crate) fn ln_factorial_minus_one<T: Scalar>(n: u32) -> T {
    (1..n).map(|i| T::of_count(u64::from(i)).ln()).sum()
}

/// `ln (α)_n = Σ_{i<n} ln(α + i)`, the rising factorial of the concentration.
pub(crate) fn ln_rising<T: Scalar>(alpha: T, n: u32) -> T {
    (0..n).map(|i| (alpha + T::of_count(u64::from(i))).ln()).sum()
}

/// Draws a uniform in `[0, 1)` as `T`. Always consumes exactly one `f64` from
/// the generator so that f32 and f64 runs share the random stream.
pub(crate) fn uniform<T: Scalar, R: rand::Rng + ?Sized>(rng: &mut R) -> T {
    T::of(rng.gen::<f64>())
}

/// Picks an index from non-negative weights with one uniform and a
/// cumulative scan. Returns `None` when every weight is zero.
pub(crate) fn categorical<T: Scalar, R: rand::Rng + ?Sized>(
    weights: &[T],
    rng: &mut R,
) -> Option<usize> {
    let total: T = weights.iter().copied().sum();
    let u = uniform::<T, R>(rng);
    if total <= T::zero() {
        return None;
    }
    let target = u * total;
    let mut acc = T::zero();
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= T::zero() {
            continue;
        }
        acc = acc + w;
        last_positive = Some(i);
        if target < acc {
            return Some(i);
        }
    }
    // rounding left the target past the final cumulative sum
    last_positive
}
