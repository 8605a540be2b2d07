use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the estimator math is written against: f32 or f64.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Never fails for the primitive floats.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Wraps an angle into `[-pi, pi]`.
pub fn wrap_angle<S: Scalar>(theta: S) -> S {
    let two_pi = S::PI() + S::PI();
    let mut t = theta % two_pi;
    if t > S::PI() {
        t = t - two_pi;
    } else if t < -S::PI() {
        t = t + two_pi;
    }
    t
}

/// Scales a non-negative vector to unit L1 norm. Returns `false` when the sum is zero.
pub fn normalize_l1<S: Scalar>(values: &mut [S]) -> bool {
    let sum = values.iter().fold(S::zero(), |acc, &v| acc + v);
    if sum <= S::zero() || !sum.is_finite() {
        return false;
    }
    for v in values.iter_mut() {
        *v = *v / sum;
    }
    true
}

/// Index of the largest element; first index wins ties.
pub fn argmax<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
