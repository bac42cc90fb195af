//! Synthetic fog and low-light degradations.
//!
//! Fog follows the scattering model `I = J t + A (1 - t)` with airlight
//! `A = 0.5`, transmission `t = exp(-beta d)`, `beta = 0.01 k + 0.05` for
//! fog level `k` in `0..=9`, and the pseudo-depth
//! `d = -0.04 rho + sqrt(max(rows, cols))` where `rho` is the distance to the
//! central pixel. Low light is the power law `x^gamma`.
//!
//! Random draws use ChaCha8 (`rand_chacha`), seeded from a `u64`; integer
//! draws go through `rand`'s unbiased range sampling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::image::{GrayF, ImageF};

/// Airlight used by the fog synthesizer.
pub const FOG_AIRLIGHT: f64 = 0.5;
/// Range of the low-light exponent.
pub const LOWLIGHT_GAMMA_RANGE: (f64, f64) = (1.5, 5.0);

/// Fog density level `0..=9`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct FogLevel(u8);

impl FogLevel {
    pub const MAX: u8 = 9;

    pub fn new(k: u8) -> Option<Self> {
        (k <= Self::MAX).then_some(Self(k))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Scattering coefficient `0.01 k + 0.05`.
    pub fn beta(self) -> f64 {
        0.01 * self.0 as f64 + 0.05
    }
}

impl TryFrom<u8> for FogLevel {
    type Error = String;

    fn try_from(k: u8) -> Result<Self, Self::Error> {
        Self::new(k).ok_or_else(|| format!("fog level {k} is outside 0..=9"))
    }
}

impl From<FogLevel> for u8 {
    fn from(k: FogLevel) -> u8 {
        k.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegradeMode {
    None,
    Fog,
    Lowlight,
}

/// Which adverse condition a hybrid draw produces when it degrades.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Fog,
    Lowlight,
}

/// A degradation recipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradeSpec {
    pub mode: DegradeMode,
    /// Set only for fog.
    pub level: Option<FogLevel>,
    /// Set only for low light.
    pub gamma: Option<f64>,
    pub seed: u64,
}

impl DegradeSpec {
    pub fn none(seed: u64) -> Self {
        Self {
            mode: DegradeMode::None,
            level: None,
            gamma: None,
            seed,
        }
    }

    pub fn fog(level: FogLevel, seed: u64) -> Self {
        Self {
            mode: DegradeMode::Fog,
            level: Some(level),
            gamma: None,
            seed,
        }
    }

    pub fn lowlight(gamma: f64, seed: u64) -> Self {
        Self {
            mode: DegradeMode::Lowlight,
            level: None,
            gamma: Some(gamma),
            seed,
        }
    }

    pub fn apply(&self, img: &ImageF) -> ImageF {
        match self.mode {
            DegradeMode::None => img.clone(),
            DegradeMode::Fog => add_fog(img, self.level.expect("fog spec carries a level")),
            DegradeMode::Lowlight => add_lowlight(img, self.gamma.expect("low-light spec carries gamma")),
        }
    }
}

/// Pseudo-depth `d = -0.04 rho + sqrt(max(H, W))`, `rho` being the distance
/// to the central pixel `(H / 2, W / 2)` (integer division). Values may be
/// negative far from the centre of large images.
pub fn scene_depth(height: usize, width: usize) -> GrayF {
    let (cy, cx) = ((height / 2) as f64, (width / 2) as f64);
    let base = (height.max(width) as f64).sqrt();
    GrayF::from_fn(height, width, |y, x| {
        let rho = (y as f64 - cy).hypot(x as f64 - cx);
        -0.04 * rho + base
    })
}

/// Transmission map `exp(-beta max(d, 0))` for a fog level.
pub fn fog_transmission(height: usize, width: usize, level: FogLevel) -> GrayF {
    let beta = level.beta();
    scene_depth(height, width).map(|d| (-beta * d.max(0.0)).exp())
}

/// `I = J t + A (1 - t)` with `t` clamped to `[0, 1]`, output clamped to `[0, 1]`.
pub fn blend_toward_airlight(img: &ImageF, transmission: &GrayF, airlight: f64) -> ImageF {
    assert_eq!(img.dims(), transmission.dims(), "transmission map has different dimensions");
    let (h, w) = img.dims();
    ImageF::from_fn(h, w, |y, x| {
        let t = transmission.get(y, x).clamp(0.0, 1.0);
        img.get(y, x)
            .map(|j| (j * t + airlight * (1.0 - t)).clamp(0.0, 1.0))
    })
}

pub fn add_fog(img: &ImageF, level: FogLevel) -> ImageF {
    let t = fog_transmission(img.height(), img.width(), level);
    blend_toward_airlight(img, &t, FOG_AIRLIGHT)
}

/// Darkens with `x^gamma`.
pub fn add_lowlight(img: &ImageF, gamma: f64) -> ImageF {
    debug_assert!(gamma > 0.0);
    img.map(|p| p.map(|v| if v > 0.0 { v.powf(gamma) } else { 0.0 }))
}

/// Seeded stream of hybrid degradation draws: each draw degrades with
/// probability 2/3 (a uniform integer in `{0, 1, 2}` is positive); fog levels
/// are uniform on `{0..9}` and low-light exponents uniform on `[1.5, 5)`.
#[derive(Debug, Clone)]
pub struct HybridSampler {
    rng: ChaCha8Rng,
    seed: u64,
}

impl HybridSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    pub fn next_spec(&mut self, domain: Domain) -> DegradeSpec {
        if self.rng.gen_range(0..=2u32) == 0 {
            return DegradeSpec::none(self.seed);
        }
        match domain {
            Domain::Fog => {
                let k = self.rng.gen_range(0..=FogLevel::MAX);
                DegradeSpec::fog(FogLevel(k), self.seed)
            }
            Domain::Lowlight => {
                let (lo, hi) = LOWLIGHT_GAMMA_RANGE;
                DegradeSpec::lowlight(self.rng.gen_range(lo..hi), self.seed)
            }
        }
    }
}

/// Low-light exponent drawn uniformly from `[1.5, 5)` with a generator
/// seeded by `seed`.
pub fn draw_lowlight_gamma(seed: u64) -> f64 {
    let (lo, hi) = LOWLIGHT_GAMMA_RANGE;
    ChaCha8Rng::seed_from_u64(seed).gen_range(lo..hi)
}

/// First draw of a sampler seeded with `seed`.
pub fn hybrid_sample(seed: u64, domain: Domain) -> DegradeSpec {
    HybridSampler::new(seed).next_spec(domain)
}

/// Seed for image `index` of a corpus generated from `master`: the first
/// word of ChaCha8 stream `index`.
pub fn derive_image_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_examples() {
        let d = scene_depth(256, 256);
        assert_eq!(d.get(128, 128), 16.0);
        let rho = (128.0f64 * 128.0 * 2.0).sqrt();
        assert!((d.get(0, 0) - (16.0 - 0.04 * rho)).abs() < 1e-12);
        assert_eq!(scene_depth(1, 1).get(0, 0), 1.0);
        assert_eq!(d.max(), 16.0);
    }

    #[test]
    fn fog_examples() {
        let white = ImageF::filled(256, 256, [1.0; 3]);
        let fogged = add_fog(&white, FogLevel::new(0).unwrap());
        let t = (-0.8f64).exp();
        let expect = t + 0.5 * (1.0 - t);
        assert!((fogged.get(128, 128)[0] - expect).abs() < 1e-12);
        assert!((expect - 0.72466).abs() < 1e-4);

        let gray = ImageF::filled(20, 30, [0.5; 3]);
        for k in 0..=9 {
            assert!(add_fog(&gray, FogLevel::new(k).unwrap()).max_abs_diff(&gray) == 0.0);
        }
    }

    #[test]
    fn forced_zero_transmission_gives_airlight() {
        let img = ImageF::from_fn(5, 7, |y, x| [0.1 * y as f64, 0.1 * x as f64, 0.9]);
        let out = blend_toward_airlight(&img, &GrayF::filled(5, 7, 0.0), FOG_AIRLIGHT);
        assert!(out.pixels().iter().all(|p| *p == [0.5; 3]));
    }

    #[test]
    fn large_images_keep_transmission_below_one() {
        let t = fog_transmission(300, 4000, FogLevel::new(3).unwrap());
        assert!(t.values().iter().all(|&v| v > 0.0 && v <= 1.0));
        // 2000 px from the centre the depth is negative and clamps to zero.
        assert_eq!(t.get(150, 0), 1.0);
    }

    #[test]
    fn lowlight_examples() {
        let img = ImageF::new(1, 2, vec![[1.0, 0.5, 0.0], [0.25, 0.8, 0.01]]);
        let out = add_lowlight(&img, 2.0);
        assert_eq!(out.get(0, 0), [1.0, 0.25, 0.0]);
        let back = crate::filters::apply_gamma(&add_lowlight(&img, 3.7), 1.0 / 3.7);
        assert!(back.max_abs_diff(&img) < 1e-9);
    }

    #[test]
    fn fog_level_bounds() {
        assert!(FogLevel::new(9).is_some());
        assert!(FogLevel::new(10).is_none());
        assert!((FogLevel::new(5).unwrap().beta() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sampler_is_deterministic() {
        let mut a = HybridSampler::new(42);
        let mut b = HybridSampler::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_spec(Domain::Fog), b.next_spec(Domain::Fog));
        }
        assert_eq!(hybrid_sample(3, Domain::Lowlight), hybrid_sample(3, Domain::Lowlight));
        assert_ne!(derive_image_seed(1, 0), derive_image_seed(1, 1));
        assert_eq!(derive_image_seed(1, 5), derive_image_seed(1, 5));
    }

    #[test]
    fn lowlight_draws_stay_in_range() {
        let mut s = HybridSampler::new(9);
        for _ in 0..1000 {
            let spec = s.next_spec(Domain::Lowlight);
            if let Some(g) = spec.gamma {
                assert!((1.5..5.0).contains(&g));
                assert_eq!(spec.mode, DegradeMode::Lowlight);
            }
        }
    }
}
