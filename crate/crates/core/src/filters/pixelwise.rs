//! White balance, gamma, contrast and tone: filters that map each pixel
//! independently of its neighbours.

use std::f64::consts::PI;

use crate::image::{ImageF, LUMA_WEIGHTS};
use crate::par;

use super::Vjp;

/// Clamp derivative: 1 on the closed interval, 0 outside.
#[inline]
fn pass(v: f64) -> f64 {
    if (0.0..=1.0).contains(&v) {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn near_clamp(v: f64, margin: f64) -> bool {
    v.abs() < margin || (v - 1.0).abs() < margin
}

fn per_pixel_vjp<F>(input: &ImageF, upstream: &ImageF, n_params: usize, f: F) -> Vjp
where
    F: Fn([f64; 3], [f64; 3], &mut [f64]) -> [f64; 3] + Sync + Send,
{
    assert_eq!(input.dims(), upstream.dims(), "cotangent shape mismatch");
    let (h, w) = input.dims();
    let rows = par::map_range(h, |y| {
        let mut acc = vec![0.0; n_params];
        let grads: Vec<[f64; 3]> = input
            .row(y)
            .iter()
            .zip(upstream.row(y))
            .map(|(p, g)| f(*p, *g, &mut acc))
            .collect();
        (acc, grads)
    });
    let mut params = vec![0.0; n_params];
    let mut data = Vec::with_capacity(h * w);
    for (acc, grads) in rows {
        for (a, v) in params.iter_mut().zip(acc) {
            *a += v;
        }
        data.extend(grads);
    }
    Vjp {
        params,
        input: ImageF::new(h, w, data),
    }
}

fn per_pixel_kinks<F>(input: &ImageF, f: F) -> Vec<bool>
where
    F: Fn([f64; 3]) -> bool + Sync + Send,
{
    par::map_slice(input.pixels(), |p| f(*p))
}

// ---- white balance ----

pub fn apply_wb(img: &ImageF, gains: [f64; 3]) -> ImageF {
    img.map(|p| std::array::from_fn(|c| (gains[c] * p[c]).clamp(0.0, 1.0)))
}

pub fn wb_vjp(input: &ImageF, gains: [f64; 3], upstream: &ImageF) -> Vjp {
    per_pixel_vjp(input, upstream, 3, |p, g, acc| {
        std::array::from_fn(|c| {
            let gc = g[c] * pass(gains[c] * p[c]);
            acc[c] += gc * p[c];
            gc * gains[c]
        })
    })
}

pub fn wb_kinks(input: &ImageF, gains: [f64; 3], margin: f64) -> Vec<bool> {
    per_pixel_kinks(input, |p| (0..3).any(|c| near_clamp(gains[c] * p[c], margin)))
}

// ---- gamma ----

#[inline]
fn pow_or_zero(v: f64, g: f64) -> f64 {
    if v > 0.0 {
        v.powf(g)
    } else {
        0.0
    }
}

/// `P^G` per channel, with `0^G = 0`.
pub fn apply_gamma(img: &ImageF, gamma: f64) -> ImageF {
    img.map(|p| p.map(|v| pow_or_zero(v, gamma)))
}

pub fn gamma_vjp(input: &ImageF, gamma: f64, upstream: &ImageF) -> Vjp {
    per_pixel_vjp(input, upstream, 1, |p, g, acc| {
        std::array::from_fn(|c| {
            let v = p[c];
            if v > 0.0 {
                let ln = v.ln();
                let out = (gamma * ln).exp();
                acc[0] += g[c] * out * ln;
                g[c] * gamma * out / v
            } else {
                0.0
            }
        })
    })
}

pub fn gamma_kinks(input: &ImageF, margin: f64) -> Vec<bool> {
    per_pixel_kinks(input, |p| p.iter().any(|&v| v < margin))
}

// ---- contrast ----

/// Returns `EnLum(L) / L` and its derivative in `L`. At `L = 0` the ratio
/// takes its limit 0.
#[inline]
fn enhance_ratio(lum: f64) -> (f64, f64) {
    if lum <= 1e-8 {
        let k = PI * PI / 4.0;
        (k * lum.max(0.0), k)
    } else {
        let half = 0.5 * PI * lum;
        let s = half.sin();
        let en = s * s;
        let den = 0.5 * PI * (PI * lum).sin();
        (en / lum, (den * lum - en) / (lum * lum))
    }
}

#[inline]
fn lum_of(p: [f64; 3]) -> f64 {
    LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2]
}

#[inline]
fn contrast_pre_clamp(p: [f64; 3], alpha: f64) -> [f64; 3] {
    let (ratio, _) = enhance_ratio(lum_of(p));
    p.map(|v| alpha * (v * ratio) + (1.0 - alpha) * v)
}

/// Blends each pixel with its luminance-enhanced version
/// `En(P) = P * EnLum(Lum(P)) / Lum(P)`, `EnLum(l) = (1 - cos(pi l)) / 2`.
pub fn apply_contrast(img: &ImageF, alpha: f64) -> ImageF {
    img.map(|p| contrast_pre_clamp(p, alpha).map(|v| v.clamp(0.0, 1.0)))
}

pub fn contrast_vjp(input: &ImageF, alpha: f64, upstream: &ImageF) -> Vjp {
    per_pixel_vjp(input, upstream, 1, |p, g, acc| {
        let (ratio, dratio) = enhance_ratio(lum_of(p));
        let mut gp = 0.0;
        let mut gated = [0.0; 3];
        for c in 0..3 {
            let en = p[c] * ratio;
            let v = alpha * en + (1.0 - alpha) * p[c];
            gated[c] = g[c] * pass(v);
            acc[0] += gated[c] * (en - p[c]);
            gp += gated[c] * p[c];
        }
        let direct = alpha * ratio + 1.0 - alpha;
        std::array::from_fn(|k| gated[k] * direct + alpha * dratio * LUMA_WEIGHTS[k] * gp)
    })
}

pub fn contrast_kinks(input: &ImageF, alpha: f64, margin: f64) -> Vec<bool> {
    per_pixel_kinks(input, |p| {
        lum_of(p) < margin
            || contrast_pre_clamp(p, alpha)
                .iter()
                .any(|&v| near_clamp(v, margin))
    })
}

// ---- tone ----

/// Monotone piecewise-linear curve through `(k/L, T_k/T_L)` where `T_k` is
/// the sum of the first `k` knots.
#[derive(Debug, Clone)]
pub struct ToneCurve {
    knots: Vec<f64>,
    prefix: Vec<f64>,
}

impl ToneCurve {
    pub fn new(knots: &[f64]) -> Self {
        assert!(!knots.is_empty(), "tone curve needs at least one knot");
        let mut prefix = Vec::with_capacity(knots.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &t in knots {
            acc += t;
            prefix.push(acc);
        }
        Self {
            knots: knots.to_vec(),
            prefix,
        }
    }

    pub fn segments(&self) -> usize {
        self.knots.len()
    }

    pub fn total(&self) -> f64 {
        self.prefix[self.knots.len()]
    }

    /// Segment index and position inside it for an input value.
    #[inline]
    fn locate(&self, v: f64) -> (usize, f64) {
        let n = self.knots.len();
        let scaled = n as f64 * v.clamp(0.0, 1.0);
        let seg = (scaled.floor() as usize).min(n - 1);
        (seg, scaled - seg as f64)
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        let (seg, frac) = self.locate(v);
        (self.prefix[seg] + frac * self.knots[seg]) / self.total()
    }

    /// Slope of the curve at `v` (the right-hand slope at segment joints).
    #[inline]
    pub fn slope(&self, v: f64) -> f64 {
        let (seg, _) = self.locate(v);
        self.knots.len() as f64 * self.knots[seg] / self.total()
    }
}

pub fn apply_tone(img: &ImageF, knots: &[f64]) -> ImageF {
    let curve = ToneCurve::new(knots);
    img.map(|p| p.map(|v| curve.eval(v)))
}

pub fn tone_vjp(input: &ImageF, knots: &[f64], upstream: &ImageF) -> Vjp {
    let curve = ToneCurve::new(knots);
    let total = curve.total();
    let n = knots.len();
    // d out / d t_k = (clip(L v - k, 0, 1) - out) / T_L. Per pixel only the
    // segment index, fractional position and output matter, so accumulate
    // [cotangent mass per segment | fraction-weighted mass per segment |
    // output-weighted mass] and expand to knot gradients afterwards.
    let mut vjp = per_pixel_vjp(input, upstream, 2 * n + 1, |p, g, acc| {
        std::array::from_fn(|c| {
            let v = p[c];
            let (seg, frac) = curve.locate(v);
            let gt = g[c] / total;
            acc[seg] += gt;
            acc[n + seg] += gt * frac;
            acc[2 * n] += gt * curve.eval(v);
            if (0.0..=1.0).contains(&v) {
                g[c] * n as f64 * knots[seg] / total
            } else {
                0.0
            }
        })
    });
    let acc = std::mem::take(&mut vjp.params);
    let mut above = 0.0;
    let mut grads = vec![0.0; n];
    for k in (0..n).rev() {
        grads[k] = above + acc[n + k] - acc[2 * n];
        above += acc[k];
    }
    vjp.params = grads;
    vjp
}

pub fn tone_kinks(input: &ImageF, segments: usize, margin: f64) -> Vec<bool> {
    let l = segments as f64;
    per_pixel_kinks(input, |p| {
        p.iter().any(|&v| {
            let s = v * l;
            (s - s.round()).abs() < margin * l
        })
    })
}
