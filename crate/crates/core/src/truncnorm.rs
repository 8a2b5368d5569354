//! Sampling from univariate normals truncated to an interval.
//!
//! Regions around the mode use plain normal or uniform rejection; tails use
//! Robert's (1995) translated-exponential proposal with the optimal rate.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

/// Draws `X ~ N(mean, sd^2)` conditioned on `lower < X <= upper`.
/// Either bound may be infinite.
pub fn sample<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lower: f64, upper: f64) -> f64 {
    debug_assert!(lower < upper, "empty interval ({lower}, {upper}]");
    debug_assert!(sd > 0.0);
    let a = (lower - mean) / sd;
    let b = (upper - mean) / sd;
    let z = standard(rng, a, b);
    // guard against rounding pushing the draw onto a bound
    (mean + sd * z).clamp(next_up(lower), upper)
}

fn next_up(x: f64) -> f64 {
    if x.is_infinite() {
        x
    } else {
        let next = x + x.abs().max(f64::MIN_POSITIVE) * f64::EPSILON;
        if next > x { next } else { x + f64::MIN_POSITIVE }
    }
}

/// Standard normal truncated to `(a, b)`.
pub fn standard<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return rng.sample(StandardNormal);
    }
    if a >= 0.0 {
        right_tail(rng, a, b)
    } else if b <= 0.0 {
        -right_tail(rng, -b, -a)
    } else if b - a < 2.5 {
        // the interval straddles 0: uniform proposal, density bounded by its value at 0
        loop {
            let x = rng.random_range(a..b);
            if rng.random::<f64>() < (-0.5 * x * x).exp() {
                return x;
            }
        }
    } else {
        loop {
            let x: f64 = rng.sample(StandardNormal);
            if x > a && x < b {
                return x;
            }
        }
    }
}

/// Standard normal truncated to `(a, b)` with `0 <= a < b`.
fn right_tail<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let root = (a * a + 4.0).sqrt();
    let alpha = 0.5 * (a + root);
    // Robert's switch between uniform and exponential proposals
    let uniform_width = 2.0 * std::f64::consts::E.sqrt() / (a + root) * ((a * a - a * root) / 4.0).exp();
    if b - a <= uniform_width {
        loop {
            let x = rng.random_range(a..b);
            if rng.random::<f64>() < (0.5 * (a * a - x * x)).exp() {
                return x;
            }
        }
    }
    loop {
        let e: f64 = rng.sample(Exp1);
        let x = a + e / alpha;
        if x >= b {
            continue;
        }
        if rng.random::<f64>() < (-0.5 * (x - alpha).powi(2)).exp() {
            return x;
        }
    }
}
