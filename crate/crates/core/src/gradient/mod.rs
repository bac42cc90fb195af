//! Gradients of filter chains, their numerical verification, and
//! parameter fitting.

mod adam;
mod check;
mod fit;
mod reparam;

pub use adam::{adam_step, AdamError, AdamState};
pub use check::{full_suite, gradcheck, input_gradcheck, random_chain, random_image, GradReport, GradRow, GradcheckConfig};
pub use fit::{fit_params, FitError, FitOptions, FitResult};
pub use reparam::{
    chain_from_unconstrained, chain_to_unconstrained, from_unconstrained, logistic, logit,
    to_unconstrained, to_unconstrained_gradient, Transform,
};

use crate::filters::{ChainTape, DefogIntermediates, FilterChain};
use crate::image::ImageF;

/// Gradient of `<cotangent, chain(img)>` with respect to the chain's values,
/// flattened in [`FilterChain::values`] order.
pub fn chain_backward(chain: &FilterChain, img: &ImageF, cotangent: &ImageF) -> Vec<f64> {
    let tape = ChainTape::forward(chain, img, None);
    tape.backward(chain, cotangent).concat()
}

/// Central difference `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_difference<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    crate::par::map_range(x.len(), |i| {
        let mut probe = x.to_vec();
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        (up - down) / (2.0 * h)
    })
}

/// Numerical gradient of `<cotangent, chain(img)>` in the chain's
/// unconstrained coordinates.
pub fn finite_diff(
    chain: &FilterChain,
    img: &ImageF,
    cotangent: &ImageF,
    h: f64,
    defog: Option<&DefogIntermediates>,
) -> Vec<f64> {
    let u = chain_to_unconstrained(chain);
    central_difference(
        |x| {
            let probe = chain_from_unconstrained(chain, x);
            ChainTape::forward(&probe, img, defog).output().dot(cotangent)
        },
        &u,
        h,
    )
}

/// Mean squared error and its cotangent `2 (out - target) / n`, where `n`
/// counts channel values.
pub fn mse_with_cotangent(out: &ImageF, target: &ImageF) -> (f64, ImageF) {
    assert_eq!(out.dims(), target.dims(), "image shape mismatch");
    let n = (out.len() * 3) as f64;
    let cot = out.zip_map(target, |a, b| std::array::from_fn(|c| 2.0 * (a[c] - b[c]) / n));
    (out.mse(target), cot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_a_cubic() {
        let g = central_difference(|x| x[0].powi(3) + 2.0 * x[1], &[2.0, 5.0], 1e-5);
        assert!((g[0] - 12.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn mse_cotangent_matches_finite_difference() {
        let out = ImageF::from_fn(3, 4, |y, x| [0.1 * y as f64, 0.2 * x as f64, 0.3]);
        let target = ImageF::filled(3, 4, [0.25; 3]);
        let (loss, cot) = mse_with_cotangent(&out, &target);
        assert!((loss - out.mse(&target)).abs() < 1e-15);
        let mut bumped = out.clone();
        let h = 1e-6;
        bumped.pixels_mut()[5][1] += h;
        let fd = (bumped.mse(&target) - loss) / h;
        assert!((fd - cot.pixels()[5][1]).abs() < 1e-6);
    }
}
