//! Unsharp masking: `F(I) = I + lambda * (I - Gau(I))`.

use crate::image::{gaussian_blur, ImageF};
use crate::par;

use super::Vjp;

/// Default blur width in pixels at the resolution the filter is applied.
pub const DEFAULT_SIGMA: f64 = 1.0;

fn pre_clamp(img: &ImageF, blurred: &ImageF, lambda: f64) -> ImageF {
    img.zip_map(blurred, |p, b| std::array::from_fn(|c| p[c] + lambda * (p[c] - b[c])))
}

pub fn apply_sharpen(img: &ImageF, lambda: f64, sigma: f64) -> ImageF {
    sharpen_keep_blur(img, lambda, sigma).0
}

/// Output together with the blurred input, which the VJP reuses.
pub(crate) fn sharpen_keep_blur(img: &ImageF, lambda: f64, sigma: f64) -> (ImageF, ImageF) {
    let blurred = gaussian_blur(img, sigma);
    (pre_clamp(img, &blurred, lambda).clamp01(), blurred)
}

pub fn sharpen_vjp(input: &ImageF, lambda: f64, sigma: f64, upstream: &ImageF) -> Vjp {
    sharpen_vjp_blurred(input, &gaussian_blur(input, sigma), lambda, sigma, upstream)
}

/// [`sharpen_vjp`] given `blurred = Gau(input)`.
pub(crate) fn sharpen_vjp_blurred(
    input: &ImageF,
    blurred: &ImageF,
    lambda: f64,
    sigma: f64,
    upstream: &ImageF,
) -> Vjp {
    assert_eq!(input.dims(), upstream.dims(), "cotangent shape mismatch");
    let out = pre_clamp(input, blurred, lambda);
    let gated = upstream.zip_map(&out, |g, v| {
        std::array::from_fn(|c| if (0.0..=1.0).contains(&v[c]) { g[c] } else { 0.0 })
    });
    let detail = input.zip_map(blurred, |p, b| std::array::from_fn(|c| p[c] - b[c]));
    let d_lambda = gated.dot(&detail);
    // The blur matrix is symmetric, so its adjoint is the blur itself.
    let back = gaussian_blur(&gated, sigma);
    let input_grad =
        gated.zip_map(&back, |g, b| std::array::from_fn(|c| (1.0 + lambda) * g[c] - lambda * b[c]));
    Vjp {
        params: vec![d_lambda],
        input: input_grad,
    }
}

pub fn sharpen_kinks(input: &ImageF, lambda: f64, sigma: f64, margin: f64) -> Vec<bool> {
    let out = pre_clamp(input, &gaussian_blur(input, sigma), lambda);
    par::map_slice(out.pixels(), |p| {
        p.iter().any(|&v| v.abs() < margin || (v - 1.0).abs() < margin)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{gaussian_kernel, reflect_index};

    #[test]
    fn neutral_and_constant() {
        let img = ImageF::from_fn(5, 6, |y, x| [0.1 * y as f64, 0.05 * x as f64, 0.5]);
        assert_eq!(apply_sharpen(&img, 0.0, 1.0), img);
        let c = ImageF::filled(6, 6, [0.4, 0.6, 0.8]);
        assert!(apply_sharpen(&c, 3.0, 1.0).max_abs_diff(&c) < 1e-15);
    }

    #[test]
    fn step_edge_matches_direct_convolution() {
        // Columns 0..4 dark, 4..8 bright.
        let img = ImageF::from_fn(8, 8, |_, x| if x < 4 { [0.2; 3] } else { [0.7; 3] });
        let out = apply_sharpen(&img, 1.0, 1.0);
        let k = gaussian_kernel(1.0);
        let r = (k.len() / 2) as isize;
        for y in 0..8 {
            for x in 0..8 {
                let mut blur = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let v = img.get(reflect_index(y as isize + dy, 8), reflect_index(x as isize + dx, 8))[0];
                        blur += k[(dy + r) as usize] * k[(dx + r) as usize] * v;
                    }
                }
                let p = img.get(y, x)[0];
                let expect = (p + (p - blur)).clamp(0.0, 1.0);
                assert!((out.get(y, x)[0] - expect).abs() < 1e-12);
            }
        }
        // Overshoot on the bright side of the edge, undershoot on the dark side.
        assert!(out.get(3, 4)[0] > 0.7);
        assert!(out.get(3, 3)[0] < 0.2);
    }

    #[test]
    fn lambda_gradient_is_detail_inner_product() {
        let img = ImageF::from_fn(6, 6, |y, x| [0.3 + 0.05 * ((x + y) % 3) as f64, 0.5, 0.4]);
        let up = ImageF::from_fn(6, 6, |y, x| [1.0, (x as f64 - y as f64) * 0.1, 0.5]);
        let v = sharpen_vjp(&img, 0.5, 1.0, &up);
        let blurred = gaussian_blur(&img, 1.0);
        let detail = img.zip_map(&blurred, |p, b| std::array::from_fn(|c| p[c] - b[c]));
        assert!((v.params[0] - up.dot(&detail)).abs() < 1e-12);
    }
}
