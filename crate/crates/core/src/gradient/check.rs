//! Analytic-versus-numerical gradient comparison.
//!
//! Each trial draws parameters from the interior of their domains and
//! evaluates the scalar test loss `L = <c, chain(I)>` for a random cotangent
//! `c`. Pixels within `kink_margin` of a non-differentiable point of any
//! stage (clamp edges, tone joints, the transmission floor) get a zero
//! cotangent, so they do not contribute to `L`: a small perturbation cannot
//! carry them across the kink into the loss. Marks from stages feeding the
//! sharpen filter are widened by its kernel radius because sharpening mixes
//! neighbouring pixels. If too many pixels are marked, the draw is rejected.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::filters::{filter_vjp, kink_mask, ChainTape, FilterChain, FilterKind, FilterParams};
use crate::image::{gaussian_kernel, ImageF};

use super::{finite_diff, to_unconstrained_gradient};

/// Largest fraction of masked pixels a draw may have.
const MAX_MASKED_FRACTION: f64 = 0.6;
const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub trials: usize,
    pub seed: u64,
    /// Finite-difference step in unconstrained coordinates.
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Gradients smaller than this may pass on absolute error.
    pub small_gradient: f64,
    pub kink_margin: f64,
    /// Test hook: doubles the analytic gradient of the named parameter
    /// (e.g. `"gamma"` or `"wb.g"`), which the report must flag.
    pub corrupt: Option<String>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            trials: 10,
            seed: 0,
            step: 1e-5,
            rel_tol: 1e-4,
            abs_tol: 1e-7,
            small_gradient: 1e-3,
            kink_margin: 1e-3,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradRow {
    /// `"param"` for parameter gradients, `"input"` for directional input checks.
    pub check: String,
    /// Stage keys of the chain under test, joined with `+`.
    pub chain: String,
    pub filter: String,
    pub parameter: String,
    pub analytic: f64,
    pub numeric: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub pass: bool,
}

/// Worst case per (chain, parameter) over all trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    pub trials: usize,
    pub seed: u64,
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub rejected_draws: usize,
    pub passed: bool,
    pub rows: Vec<GradRow>,
}

impl GradReport {
    fn empty(cfg: &GradcheckConfig) -> Self {
        Self {
            trials: cfg.trials,
            seed: cfg.seed,
            step: cfg.step,
            rel_tol: cfg.rel_tol,
            abs_tol: cfg.abs_tol,
            rejected_draws: 0,
            passed: true,
            rows: Vec::new(),
        }
    }

    /// Appends the rows of another report (same configuration).
    pub fn merge(&mut self, other: GradReport) {
        self.rejected_draws += other.rejected_draws;
        self.passed &= other.passed;
        self.rows.extend(other.rows);
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Fixed-width text table.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<6} {:<36} {:<16} {:>14} {:>14} {:>10} {:>10}  {}\n",
            "check", "chain", "parameter", "analytic", "numeric", "abs_err", "rel_err", "result"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<6} {:<36} {:<16} {:>14.6e} {:>14.6e} {:>10.2e} {:>10.2e}  {}\n",
                r.check,
                r.chain,
                r.parameter,
                r.analytic,
                r.numeric,
                r.abs_error,
                r.rel_error,
                if r.pass { "ok" } else { "FAIL" }
            ));
        }
        out
    }
}

struct Comparison {
    analytic: f64,
    numeric: f64,
    abs_error: f64,
    rel_error: f64,
    /// <= 1 means pass.
    score: f64,
}

fn compare(analytic: f64, numeric: f64, cfg: &GradcheckConfig) -> Comparison {
    let abs_error = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    let rel_error = abs_error / scale.max(1e-12);
    let mut score = rel_error / cfg.rel_tol;
    if scale < cfg.small_gradient {
        score = score.min(abs_error / cfg.abs_tol);
    }
    if !score.is_finite() {
        score = f64::INFINITY;
    }
    Comparison {
        analytic,
        numeric,
        abs_error,
        rel_error,
        score,
    }
}

/// Keeps the worst comparison seen per slot.
struct Worst {
    slots: Vec<Option<Comparison>>,
}

impl Worst {
    fn new(n: usize) -> Self {
        Self {
            slots: (0..n).map(|_| None).collect(),
        }
    }

    fn record(&mut self, i: usize, c: Comparison) {
        let replace = match &self.slots[i] {
            None => true,
            Some(old) => c.score > old.score || c.score.is_nan(),
        };
        if replace {
            self.slots[i] = Some(c);
        }
    }
}

fn chain_label(chain: &FilterChain) -> String {
    let keys: Vec<&str> = chain.stages().iter().map(|s| s.kind().key()).collect();
    keys.join("+")
}

/// Smooth colour field with mild noise, strictly inside `(0, 1)`.
pub fn random_image(height: usize, width: usize, rng: &mut impl Rng) -> ImageF {
    let waves: [[f64; 4]; 3] = std::array::from_fn(|_| {
        [
            rng.gen_range(0.05..0.4),
            rng.gen_range(0.05..0.4),
            rng.gen_range(0.0..std::f64::consts::TAU),
            rng.gen_range(0.15..0.4),
        ]
    });
    let base: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.3..0.7));
    let noise: Vec<[f64; 3]> = (0..height * width)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-0.05..0.05)))
        .collect();
    ImageF::from_fn(height, width, |y, x| {
        std::array::from_fn(|c| {
            let [fy, fx, phase, amp] = waves[c];
            let v = base[c] + amp * (fy * y as f64 + fx * x as f64 + phase).sin() + noise[y * width + x][c];
            v.clamp(0.02, 0.98)
        })
    })
}

/// Interior parameter draw for one stage.
fn random_stage(template: &FilterParams, rng: &mut impl Rng) -> FilterParams {
    match template {
        FilterParams::Defog { .. } => FilterParams::Defog {
            omega: rng.gen_range(0.1..0.9),
        },
        FilterParams::WhiteBalance { .. } => FilterParams::WhiteBalance {
            gains: std::array::from_fn(|_| rng.gen_range(0.7..1.4)),
        },
        FilterParams::Gamma { .. } => FilterParams::Gamma {
            gamma: rng.gen_range(0.5..2.0),
        },
        FilterParams::Contrast { .. } => FilterParams::Contrast {
            alpha: rng.gen_range(0.1..0.9),
        },
        FilterParams::Tone { knots } => FilterParams::Tone {
            knots: knots.iter().map(|_| rng.gen_range(0.3..3.0)).collect(),
        },
        FilterParams::Sharpen { sigma, .. } => FilterParams::Sharpen {
            lambda: rng.gen_range(0.1..2.0),
            sigma: *sigma,
        },
    }
}

/// Random interior parameters for every stage of `template`.
pub fn random_chain(template: &FilterChain, rng: &mut impl Rng) -> FilterChain {
    let stages = template.stages().iter().map(|s| random_stage(s, rng)).collect();
    FilterChain::new(stages)
        .expect("interior draws are valid")
        .with_defog_radius(template.defog_radius())
}

fn dilate(mask: &[bool], height: usize, width: usize, radius: usize) -> Vec<bool> {
    // Separable max filter over a square window.
    let mut rows = vec![false; mask.len()];
    for y in 0..height {
        for x in 0..width {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(width - 1);
            rows[y * width + x] = (lo..=hi).any(|xx| mask[y * width + xx]);
        }
    }
    let mut out = vec![false; mask.len()];
    for y in 0..height {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(height - 1);
        for x in 0..width {
            out[y * width + x] = (lo..=hi).any(|yy| rows[yy * width + x]);
        }
    }
    out
}

/// Pixels whose chain output is not safely differentiable in the parameters.
fn chain_kink_mask(chain: &FilterChain, tape: &ChainTape<'_>, margin: f64) -> Vec<bool> {
    let (h, w) = tape.output().dims();
    let mut mask = vec![false; h * w];
    for (i, stage) in chain.stages().iter().enumerate() {
        if let FilterParams::Sharpen { sigma, .. } = stage {
            let radius = gaussian_kernel(*sigma).len() / 2;
            mask = dilate(&mask, h, w, radius);
        }
        let own = kink_mask(
            stage,
            tape.stage_input(i),
            margin,
            tape.defog_intermediates(),
            chain.defog_radius(),
        );
        for (m, o) in mask.iter_mut().zip(own) {
            *m |= o;
        }
    }
    mask
}

fn masked_cotangent(mask: &[bool], height: usize, width: usize, rng: &mut impl Rng) -> ImageF {
    let data = mask
        .iter()
        .map(|&m| {
            let c: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            if m {
                [0.0; 3]
            } else {
                c
            }
        })
        .collect();
    ImageF::new(height, width, data)
}

fn masked_fraction(mask: &[bool]) -> f64 {
    mask.iter().filter(|&&m| m).count() as f64 / mask.len().max(1) as f64
}

/// Compares analytic and central-difference gradients of every scalar
/// parameter of `template`'s structure over `cfg.trials` random draws. The
/// first trial uses `img`; later ones use fresh random images of its size.
/// The template's own parameter values are not used.
pub fn gradcheck(template: &FilterChain, img: &ImageF, cfg: &GradcheckConfig) -> GradReport {
    assert!(cfg.trials >= 1, "gradcheck needs at least one trial");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (h, w) = img.dims();
    let names = template.names();
    let mut worst = Worst::new(names.len());
    let mut report = GradReport::empty(cfg);

    for trial in 0..cfg.trials {
        let mut image = if trial == 0 { img.clone() } else { random_image(h, w, &mut rng) };
        let mut attempts = 0;
        let (chain, tape, mask) = loop {
            let chain = random_chain(template, &mut rng);
            let tape = ChainTape::forward(&chain, &image, None);
            let mask = chain_kink_mask(&chain, &tape, cfg.kink_margin);
            if masked_fraction(&mask) <= MAX_MASKED_FRACTION || attempts >= MAX_REDRAWS {
                break (chain, tape, mask);
            }
            attempts += 1;
            report.rejected_draws += 1;
            image = random_image(h, w, &mut rng);
        };
        let cot = masked_cotangent(&mask, h, w, &mut rng);
        let grad = tape.backward(&chain, &cot).concat();
        let mut analytic = to_unconstrained_gradient(&chain, &grad);
        if let Some(target) = &cfg.corrupt {
            for (a, n) in analytic.iter_mut().zip(&names) {
                if n == target {
                    *a *= 2.0;
                }
            }
        }
        let numeric = finite_diff(&chain, &image, &cot, cfg.step, tape.defog_intermediates());
        for (i, (a, f)) in analytic.iter().zip(&numeric).enumerate() {
            worst.record(i, compare(*a, *f, cfg));
        }
    }

    let label = chain_label(template);
    let kinds: Vec<FilterKind> = template
        .stages()
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.kind(), s.len()))
        .collect();
    for ((slot, name), kind) in worst.slots.into_iter().zip(names).zip(kinds) {
        let c = slot.expect("every parameter was compared");
        let pass = c.score <= 1.0;
        report.passed &= pass;
        report.rows.push(GradRow {
            check: "param".into(),
            chain: label.clone(),
            filter: kind.key().into(),
            parameter: name,
            analytic: c.analytic,
            numeric: c.numeric,
            abs_error: c.abs_error,
            rel_error: c.rel_error,
            pass,
        });
    }
    report
}

/// Directional check of a filter's input cotangent: `<vjp(c), v>` against
/// `(L(I + eps v) - L(I - eps v)) / 2 eps` with `L(I) = <c, f(I)>`, for
/// random directions `v`. Defog is excluded (its input cotangent is zero by
/// definition).
pub fn input_gradcheck(kind: FilterKind, img: &ImageF, cfg: &GradcheckConfig) -> GradReport {
    assert!(kind != FilterKind::Defog, "defog does not propagate input gradients");
    assert!(cfg.trials >= 1, "gradcheck needs at least one trial");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let (h, w) = img.dims();
    let template = FilterChain::new(vec![FilterParams::neutral(kind, crate::filters::DEFAULT_TONE_KNOTS)])
        .expect("single stage is valid");
    let mut worst = Worst::new(1);
    let mut report = GradReport::empty(cfg);
    let eps = cfg.step;

    for trial in 0..cfg.trials {
        let mut image = if trial == 0 { img.clone() } else { random_image(h, w, &mut rng) };
        let mut attempts = 0;
        let (stage, mask) = loop {
            let chain = random_chain(&template, &mut rng);
            let stage = chain.stages()[0].clone();
            let mask = kink_mask(&stage, &image, cfg.kink_margin, None, chain.defog_radius());
            if masked_fraction(&mask) <= MAX_MASKED_FRACTION || attempts >= MAX_REDRAWS {
                break (stage, mask);
            }
            attempts += 1;
            report.rejected_draws += 1;
            image = random_image(h, w, &mut rng);
        };
        let cot = masked_cotangent(&mask, h, w, &mut rng);
        let dir = ImageF::new(
            h,
            w,
            (0..h * w)
                .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
                .collect(),
        );
        let vjp = filter_vjp(&stage, &image, &cot, 0);
        let mut analytic = vjp.input.dot(&dir);
        if cfg.corrupt.as_deref() == Some(&format!("{}.input", kind.key())) {
            analytic *= 2.0;
        }
        let loss = |sign: f64| {
            let moved = image.zip_map(&dir, |p, d| std::array::from_fn(|c| p[c] + sign * eps * d[c]));
            crate::filters::apply_filter(&stage, &moved, 0).dot(&cot)
        };
        let numeric = (loss(1.0) - loss(-1.0)) / (2.0 * eps);
        worst.record(0, compare(analytic, numeric, cfg));
    }

    let c = worst.slots.pop().flatten().expect("one comparison per trial");
    let pass = c.score <= 1.0;
    report.passed = pass;
    report.rows.push(GradRow {
        check: "input".into(),
        chain: kind.key().into(),
        filter: kind.key().into(),
        parameter: format!("{}.input", kind.key()),
        analytic: c.analytic,
        numeric: c.numeric,
        abs_error: c.abs_error,
        rel_error: c.rel_error,
        pass,
    });
    report
}

/// Every single-filter chain, the full default chain with defog, and the
/// input checks of the five non-defog filters, on `size`-square images.
pub fn full_suite(size: usize, cfg: &GradcheckConfig) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let img = random_image(size, size, &mut rng);
    let mut report = GradReport::empty(cfg);
    for kind in FilterKind::ALL {
        let chain = FilterChain::new(vec![FilterParams::neutral(kind, crate::filters::DEFAULT_TONE_KNOTS)])
            .expect("single stage is valid");
        report.merge(gradcheck(&chain, &img, cfg));
    }
    report.merge(gradcheck(&FilterChain::default_chain(true), &img, cfg));
    for kind in FilterKind::ALL.into_iter().filter(|k| *k != FilterKind::Defog) {
        report.merge(input_gradcheck(kind, &img, cfg));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> GradcheckConfig {
        GradcheckConfig {
            trials: 3,
            seed: 11,
            ..GradcheckConfig::default()
        }
    }

    #[test]
    fn row_count_matches_parameter_count() {
        let img = random_image(16, 16, &mut ChaCha8Rng::seed_from_u64(1));
        let report = gradcheck(&FilterChain::default_chain(true), &img, &quick());
        assert_eq!(report.rows.len(), 3 + 1 + 1 + 8 + 1 + 1);
        assert!(report.passed, "{}", report.table());
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let img = random_image(16, 16, &mut ChaCha8Rng::seed_from_u64(2));
        let cfg = GradcheckConfig {
            corrupt: Some("wb.g".into()),
            ..quick()
        };
        let report = gradcheck(&FilterChain::default_chain(false), &img, &cfg);
        let failed: Vec<&str> = report.failures().map(|r| r.parameter.as_str()).collect();
        assert_eq!(failed, ["wb.g"]);
        assert!(!report.passed);
    }

    #[test]
    fn dilation_grows_by_radius() {
        let mut m = vec![false; 49];
        m[3 * 7 + 3] = true;
        let d = dilate(&m, 7, 7, 1);
        assert_eq!(d.iter().filter(|&&v| v).count(), 9);
        assert!(d[2 * 7 + 2] && d[4 * 7 + 4] && !d[7 + 3]);
    }

    #[test]
    fn same_seed_same_report() {
        let img = random_image(12, 12, &mut ChaCha8Rng::seed_from_u64(3));
        let chain = FilterChain::default_chain(false);
        assert_eq!(gradcheck(&chain, &img, &quick()).to_json(), gradcheck(&chain, &img, &quick()).to_json());
    }

    #[test]
    fn input_checks_pass() {
        let img = random_image(16, 16, &mut ChaCha8Rng::seed_from_u64(4));
        for kind in FilterKind::ALL.into_iter().filter(|k| *k != FilterKind::Defog) {
            let r = input_gradcheck(kind, &img, &quick());
            assert!(r.passed, "{}", r.table());
        }
    }
}
