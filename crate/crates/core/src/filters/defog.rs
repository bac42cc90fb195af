//! Dark-channel defogging with an adjustable strength `omega`.
//!
//! Haze is modelled as `I = J t + A (1 - t)`. The atmospheric light `A` is
//! the mean colour of the pixels with the brightest dark channel, and the
//! transmission is `t = 1 - omega * D` where `D` is the dark channel of the
//! image normalized by `A`. The clean image is recovered as
//! `J = (I - A) / max(t, T_FLOOR) + A`.

use crate::image::{channel_min, patch_min, GrayF, ImageF};
use crate::par;

use super::Vjp;

/// Number of dark-channel pixels averaged into the atmospheric light.
pub const ATMOSPHERE_SAMPLES: usize = 1000;
/// Lower bound on the transmission used in the recovery.
pub const T_FLOOR: f64 = 0.1;
/// Lower bound on each atmospheric-light channel.
pub const ATMOSPHERE_FLOOR: f64 = 1e-6;
/// Patch radius at full resolution (15x15 window).
pub const DEFAULT_RADIUS: usize = 7;

/// Everything in the defog filter that does not depend on `omega`.
#[derive(Debug, Clone, PartialEq)]
pub struct DefogIntermediates {
    /// Dark channel of the input.
    pub dark: GrayF,
    /// Atmospheric light per channel.
    pub atmosphere: [f64; 3],
    /// Dark channel of the input normalized by the atmospheric light.
    pub normalized_dark: GrayF,
}

impl DefogIntermediates {
    pub fn new(img: &ImageF, radius: usize) -> Self {
        let dark = dark_channel(img, radius);
        let atmosphere = estimate_atmospheric_light(img, &dark);
        let normalized_dark = normalized_dark_channel(img, atmosphere, radius);
        Self {
            dark,
            atmosphere,
            normalized_dark,
        }
    }

    pub fn transmission(&self, omega: f64) -> GrayF {
        self.normalized_dark.map(|d| transmission_value(d, omega))
    }

    /// Recovers the defogged image for a given `omega`.
    pub fn recover(&self, img: &ImageF, omega: f64) -> ImageF {
        assert_eq!(img.dims(), self.dark.dims(), "intermediates belong to another image");
        let a = self.atmosphere;
        let (h, w) = img.dims();
        ImageF::from_fn(h, w, |y, x| {
            let t = transmission_value(self.normalized_dark.get(y, x), omega);
            let p = img.get(y, x);
            std::array::from_fn(|c| recover_value(p[c], a[c], t).clamp(0.0, 1.0))
        })
    }

    pub fn vjp(&self, img: &ImageF, omega: f64, upstream: &ImageF) -> Vjp {
        assert_eq!(img.dims(), upstream.dims(), "cotangent shape mismatch");
        let a = self.atmosphere;
        let (h, w) = img.dims();
        let d_omega = par::sum_rows(h, |y| {
            let mut acc = 0.0;
            for x in 0..w {
                let d = self.normalized_dark.get(y, x);
                let raw = 1.0 - omega * d;
                if raw < T_FLOOR {
                    continue;
                }
                let p = img.get(y, x);
                let g = upstream.get(y, x);
                for c in 0..3 {
                    if (0.0..=1.0).contains(&recover_value(p[c], a[c], raw)) {
                        // dJ/dt = -(I - A) / t^2 and dt/domega = -D
                        acc += g[c] * (p[c] - a[c]) * d / (raw * raw);
                    }
                }
            }
            acc
        });
        Vjp {
            params: vec![d_omega],
            input: ImageF::filled(h, w, [0.0; 3]),
        }
    }

    pub fn kinks(&self, img: &ImageF, omega: f64, margin: f64) -> Vec<bool> {
        let a = self.atmosphere;
        let (h, w) = img.dims();
        let rows = par::map_range(h, |y| {
            (0..w)
                .map(|x| {
                    let raw = 1.0 - omega * self.normalized_dark.get(y, x);
                    let t = raw.max(T_FLOOR);
                    let p = img.get(y, x);
                    (raw - T_FLOOR).abs() < margin
                        || (0..3).any(|c| {
                            let v = recover_value(p[c], a[c], t);
                            v.abs() < margin || (v - 1.0).abs() < margin
                        })
                })
                .collect::<Vec<_>>()
        });
        rows.concat()
    }
}

#[inline]
fn transmission_value(normalized_dark: f64, omega: f64) -> f64 {
    (1.0 - omega * normalized_dark).clamp(T_FLOOR, 1.0)
}

/// `(I - A) / t + A`, arranged so that `t = 1` returns `I` exactly.
#[inline]
fn recover_value(i: f64, a: f64, t: f64) -> f64 {
    i + (i - a) * ((1.0 - t) / t)
}

/// Channel minimum followed by a patch minimum.
pub fn dark_channel(img: &ImageF, radius: usize) -> GrayF {
    patch_min(&channel_min(img), radius)
}

/// Mean colour of the `min(1000, H*W)` pixels with the largest dark-channel
/// value. Ties go to the earlier pixel in row-major order.
pub fn estimate_atmospheric_light(img: &ImageF, dark: &GrayF) -> [f64; 3] {
    assert_eq!(img.dims(), dark.dims(), "dark channel has different dimensions");
    let values = dark.values();
    let mut order: Vec<usize> = (0..values.len()).collect();
    let count = ATMOSPHERE_SAMPLES.min(values.len());
    let by_brightness = |a: &usize, b: &usize| values[*b].total_cmp(&values[*a]).then(a.cmp(b));
    if count < order.len() {
        order.select_nth_unstable_by(count - 1, by_brightness);
        order.truncate(count);
    }
    order.sort_unstable();
    let pixels = img.pixels();
    let mut sum = [0.0; 3];
    for &i in &order {
        for c in 0..3 {
            sum[c] += pixels[i][c];
        }
    }
    sum.map(|s| (s / count as f64).max(ATMOSPHERE_FLOOR))
}

/// Dark channel of the image with each channel divided by `A`.
pub fn normalized_dark_channel(img: &ImageF, atmosphere: [f64; 3], radius: usize) -> GrayF {
    let normalized = img.map(|p| std::array::from_fn(|c| p[c] / atmosphere[c]));
    dark_channel(&normalized, radius)
}

/// `t(x) = 1 - omega * min_C min_Omega I^C / A^C`, clamped to `[T_FLOOR, 1]`.
pub fn transmission(img: &ImageF, atmosphere: [f64; 3], omega: f64, radius: usize) -> GrayF {
    normalized_dark_channel(img, atmosphere, radius).map(|d| transmission_value(d, omega))
}

/// Defogs `img` and returns the `omega`-independent intermediates.
pub fn apply_defog(img: &ImageF, omega: f64, radius: usize) -> (ImageF, DefogIntermediates) {
    let inter = DefogIntermediates::new(img, radius);
    (inter.recover(img, omega), inter)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_image(h: usize, w: usize, seed: u64) -> ImageF {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let data = (0..h * w).map(|_| [next(), next(), next()]).collect();
        ImageF::new(h, w, data)
    }

    #[test]
    fn dark_channel_examples() {
        let c = ImageF::filled(5, 5, [0.4; 3]);
        assert!(dark_channel(&c, 2).values().iter().all(|&v| v == 0.4));
        let red = ImageF::filled(4, 3, [1.0, 0.0, 0.0]);
        assert!(dark_channel(&red, 1).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dark_channel_matches_double_loop() {
        let img = lcg_image(5, 5, 9);
        let fast = dark_channel(&img, 1);
        for y in 0..5usize {
            for x in 0..5usize {
                let mut m = f64::INFINITY;
                for yy in y.saturating_sub(1)..=(y + 1).min(4) {
                    for xx in x.saturating_sub(1)..=(x + 1).min(4) {
                        for c in 0..3 {
                            m = m.min(img.get(yy, xx)[c]);
                        }
                    }
                }
                assert_eq!(fast.get(y, x), m);
            }
        }
    }

    #[test]
    fn atmosphere_of_constant_image() {
        let img = ImageF::filled(50, 50, [0.3, 0.6, 0.9]);
        let a = estimate_atmospheric_light(&img, &dark_channel(&img, 7));
        for (got, want) in a.iter().zip([0.3, 0.6, 0.9]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn small_images_average_every_pixel() {
        let img = lcg_image(10, 10, 4);
        let a = estimate_atmospheric_light(&img, &dark_channel(&img, 1));
        let n = img.len() as f64;
        for c in 0..3 {
            let mean = img.pixels().iter().map(|p| p[c]).sum::<f64>() / n;
            assert!((a[c] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn bright_quadrant_dominates_selection() {
        // A 40x40 image whose top-left 20x20 block (400 px) is bright and
        // whose top-right block is medium; the remaining pixels are dark.
        let img = ImageF::from_fn(40, 40, |y, x| match (y < 20, x < 20) {
            (true, true) => [0.9, 0.85, 0.95],
            (true, false) => [0.6, 0.55, 0.65],
            _ => [0.05 + 0.001 * x as f64, 0.1, 0.2],
        });
        let dark = dark_channel(&img, 0);
        // Brute-force selection: full sort, then the first 1000.
        let mut idx: Vec<usize> = (0..1600).collect();
        idx.sort_by(|a, b| dark.values()[*b].partial_cmp(&dark.values()[*a]).unwrap().then(a.cmp(b)));
        let mut sum = [0.0; 3];
        for &i in &idx[..1000] {
            for c in 0..3 {
                sum[c] += img.pixels()[i][c];
            }
        }
        let a = estimate_atmospheric_light(&img, &dark);
        for c in 0..3 {
            assert!((a[c] - sum[c] / 1000.0).abs() < 1e-12);
        }
        // 400 bright + 400 medium + 200 of the brightest dark-region pixels.
        assert!((a[1] - (400.0 * 0.85 + 400.0 * 0.55 + 200.0 * 0.1) / 1000.0).abs() < 1e-12);
    }

    #[test]
    fn ties_break_in_row_major_order() {
        let img = ImageF::from_fn(40, 40, |y, _| if y < 30 { [0.5; 3] } else { [0.2; 3] });
        let mut tagged = img.clone();
        // Same dark channel everywhere in the top block, but distinct red values.
        for y in 0..30 {
            for x in 0..40 {
                tagged.set(y, x, [0.5 + 0.001 * y as f64, 0.5, 0.5]);
            }
        }
        let dark = dark_channel(&tagged, 0);
        let a = estimate_atmospheric_light(&tagged, &dark);
        // The first 1000 row-major pixels are rows 0..25.
        let expect = (0..25).map(|y| 40.0 * (0.5 + 0.001 * y as f64)).sum::<f64>() / 1000.0;
        assert!((a[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn transmission_examples() {
        let img = lcg_image(12, 9, 2);
        let a = [0.7, 0.8, 0.9];
        assert!(transmission(&img, a, 0.0, 2).values().iter().all(|&t| t == 1.0));

        let c = ImageF::filled(6, 6, [0.6, 0.5, 0.4]);
        let t = transmission(&c, [0.6, 0.5, 0.4], 1.0, 1);
        assert!(t.values().iter().all(|&v| v == T_FLOOR));

        let t = transmission(&img, a, 0.6, 2);
        let scaled = img.map(|p| [p[0] / a[0], p[1] / a[1], p[2] / a[2]]);
        let d = dark_channel(&scaled, 2);
        for (tv, dv) in t.values().iter().zip(d.values()) {
            assert!((tv - (1.0 - 0.6 * dv).max(T_FLOOR)).abs() < 1e-15);
        }
    }

    #[test]
    fn defog_neutral_and_constant() {
        let img = lcg_image(20, 16, 8);
        let (out, _) = apply_defog(&img, 0.0, 3);
        assert_eq!(out, img);
        let c = ImageF::filled(30, 30, [0.35, 0.52, 0.61]);
        for omega in [0.2, 0.7, 1.0] {
            let (out, _) = apply_defog(&c, omega, 7);
            assert!(out.max_abs_diff(&c) < 1e-12);
        }
    }

    #[test]
    fn defog_inverts_synthetic_haze() {
        // Scene on the left with a dark pixel in every 15x15 window, a sky
        // band on the right; hazed with constant transmission towards a
        // bright airlight.
        let airlight = [0.95, 0.95, 0.95];
        let t_true = 0.6;
        let clean = ImageF::from_fn(48, 64, |y, x| {
            if x >= 32 {
                airlight
            } else if y % 6 == 0 && x % 6 == 0 {
                [0.0, 0.3, 0.5]
            } else {
                [0.2 + 0.01 * (x % 7) as f64, 0.4 + 0.01 * (y % 5) as f64, 0.3]
            }
        });
        let hazy = clean.map(|p| std::array::from_fn(|c| p[c] * t_true + airlight[c] * (1.0 - t_true)));
        let inter = DefogIntermediates::new(&hazy, 7);
        for c in 0..3 {
            assert!((inter.atmosphere[c] - 0.95).abs() < 1e-12);
        }
        // D = 1 - t on the scene, so omega = 1 recovers the transmission.
        let out = inter.recover(&hazy, 1.0);
        for y in 0..48 {
            for x in 0..=24 {
                for c in 0..3 {
                    assert!((out.get(y, x)[c] - clean.get(y, x)[c]).abs() <= 2.0 / 255.0);
                }
            }
        }
    }
}
