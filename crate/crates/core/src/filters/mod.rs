//! The six enhancement filters, their composition into a chain, and
//! reverse-mode derivatives.
//!
//! Every filter clamps its output to `[0, 1]`; the clamp has derivative 1
//! on the closed interval and 0 outside it.

mod defog;
pub mod json;
mod pixelwise;
mod sharpen;

use std::borrow::Cow;
use std::fmt;

use thiserror::Error;

use crate::image::ImageF;

pub use defog::{
    apply_defog, dark_channel, estimate_atmospheric_light, normalized_dark_channel, transmission,
    DefogIntermediates, ATMOSPHERE_FLOOR, ATMOSPHERE_SAMPLES, DEFAULT_RADIUS, T_FLOOR,
};
pub use json::{format_number, ObjectWriter};
pub use pixelwise::{apply_contrast, apply_gamma, apply_tone, apply_wb, ToneCurve};
pub use sharpen::{apply_sharpen, DEFAULT_SIGMA};

/// Default number of tone-curve segments.
pub const DEFAULT_TONE_KNOTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FilterKind {
    Defog,
    WhiteBalance,
    Gamma,
    Contrast,
    Tone,
    Sharpen,
}

impl FilterKind {
    /// Canonical chain order.
    pub const ALL: [FilterKind; 6] = [
        FilterKind::Defog,
        FilterKind::WhiteBalance,
        FilterKind::Gamma,
        FilterKind::Contrast,
        FilterKind::Tone,
        FilterKind::Sharpen,
    ];

    /// Key used in chain JSON and on the command line.
    pub fn key(self) -> &'static str {
        match self {
            FilterKind::Defog => "defog",
            FilterKind::WhiteBalance => "wb",
            FilterKind::Gamma => "gamma",
            FilterKind::Contrast => "contrast",
            FilterKind::Tone => "tone",
            FilterKind::Sharpen => "sharpen",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.key() == key)
    }

    pub fn is_pixelwise(self) -> bool {
        !matches!(self, FilterKind::Defog | FilterKind::Sharpen)
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Parameters of one filter.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterParams {
    Defog { omega: f64 },
    WhiteBalance { gains: [f64; 3] },
    Gamma { gamma: f64 },
    Contrast { alpha: f64 },
    Tone { knots: Vec<f64> },
    /// `sigma` is a fixed blur width, not a fitted parameter.
    Sharpen { lambda: f64, sigma: f64 },
}

impl FilterParams {
    pub fn kind(&self) -> FilterKind {
        match self {
            FilterParams::Defog { .. } => FilterKind::Defog,
            FilterParams::WhiteBalance { .. } => FilterKind::WhiteBalance,
            FilterParams::Gamma { .. } => FilterKind::Gamma,
            FilterParams::Contrast { .. } => FilterKind::Contrast,
            FilterParams::Tone { .. } => FilterKind::Tone,
            FilterParams::Sharpen { .. } => FilterKind::Sharpen,
        }
    }

    /// The parameters at which the filter is the identity.
    pub fn neutral(kind: FilterKind, tone_knots: usize) -> Self {
        match kind {
            FilterKind::Defog => FilterParams::Defog { omega: 0.0 },
            FilterKind::WhiteBalance => FilterParams::WhiteBalance { gains: [1.0; 3] },
            FilterKind::Gamma => FilterParams::Gamma { gamma: 1.0 },
            FilterKind::Contrast => FilterParams::Contrast { alpha: 0.0 },
            FilterKind::Tone => FilterParams::Tone {
                knots: vec![1.0; tone_knots],
            },
            FilterKind::Sharpen => FilterParams::Sharpen {
                lambda: 0.0,
                sigma: DEFAULT_SIGMA,
            },
        }
    }

    /// The fitted scalars, in a fixed order.
    pub fn values(&self) -> Vec<f64> {
        match self {
            FilterParams::Defog { omega } => vec![*omega],
            FilterParams::WhiteBalance { gains } => gains.to_vec(),
            FilterParams::Gamma { gamma } => vec![*gamma],
            FilterParams::Contrast { alpha } => vec![*alpha],
            FilterParams::Tone { knots } => knots.clone(),
            FilterParams::Sharpen { lambda, .. } => vec![*lambda],
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FilterParams::WhiteBalance { .. } => 3,
            FilterParams::Tone { knots } => knots.len(),
            _ => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same filter with new fitted scalars; fixed settings are kept.
    pub fn with_values(&self, v: &[f64]) -> Self {
        assert_eq!(v.len(), self.len(), "wrong number of parameter values");
        match self {
            FilterParams::Defog { .. } => FilterParams::Defog { omega: v[0] },
            FilterParams::WhiteBalance { .. } => FilterParams::WhiteBalance {
                gains: [v[0], v[1], v[2]],
            },
            FilterParams::Gamma { .. } => FilterParams::Gamma { gamma: v[0] },
            FilterParams::Contrast { .. } => FilterParams::Contrast { alpha: v[0] },
            FilterParams::Tone { .. } => FilterParams::Tone { knots: v.to_vec() },
            FilterParams::Sharpen { sigma, .. } => FilterParams::Sharpen {
                lambda: v[0],
                sigma: *sigma,
            },
        }
    }

    /// Human-readable names of the fitted scalars.
    pub fn names(&self) -> Vec<String> {
        match self {
            FilterParams::Defog { .. } => vec!["defog.omega".into()],
            FilterParams::WhiteBalance { .. } => {
                vec!["wb.r".into(), "wb.g".into(), "wb.b".into()]
            }
            FilterParams::Gamma { .. } => vec!["gamma".into()],
            FilterParams::Contrast { .. } => vec!["contrast.alpha".into()],
            FilterParams::Tone { knots } => (0..knots.len()).map(|i| format!("tone[{i}]")).collect(),
            FilterParams::Sharpen { .. } => vec!["sharpen.lambda".into()],
        }
    }

    /// Checks the domain of every parameter.
    pub fn validate(&self) -> Result<(), ChainError> {
        let key = self.kind().key();
        let check = |field: String, v: f64, ok: bool, rule: &'static str| {
            if v.is_finite() && ok {
                Ok(())
            } else {
                Err(ChainError::OutOfRange {
                    field,
                    value: v,
                    rule,
                })
            }
        };
        match self {
            FilterParams::Defog { omega } => {
                check(format!("{key}.omega"), *omega, (0.0..=1.0).contains(omega), "0 <= omega <= 1")
            }
            FilterParams::WhiteBalance { gains } => {
                for (c, g) in gains.iter().enumerate() {
                    check(format!("{key}[{c}]"), *g, *g > 0.0, "gains must be positive")?;
                }
                Ok(())
            }
            FilterParams::Gamma { gamma } => check(key.into(), *gamma, *gamma > 0.0, "gamma must be positive"),
            FilterParams::Contrast { alpha } => {
                check(key.into(), *alpha, (0.0..=1.0).contains(alpha), "0 <= alpha <= 1")
            }
            FilterParams::Tone { knots } => {
                if knots.is_empty() {
                    return Err(ChainError::OutOfRange {
                        field: key.into(),
                        value: 0.0,
                        rule: "tone needs at least one knot",
                    });
                }
                for (i, t) in knots.iter().enumerate() {
                    check(format!("{key}[{i}]"), *t, *t > 0.0, "tone knots must be positive")?;
                }
                Ok(())
            }
            FilterParams::Sharpen { lambda, sigma } => {
                check(format!("{key}.lambda"), *lambda, *lambda >= 0.0, "lambda must be non-negative")?;
                check(format!("{key}.sigma"), *sigma, *sigma > 0.0, "sigma must be positive")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("ordering rule violated: `defog` must be the first filter of the chain, found at position {position}")]
    DefogNotFirst { position: usize },
    #[error("filter `{0}` appears more than once")]
    Duplicate(FilterKind),
    #[error("`{field}` = {value}: {rule}")]
    OutOfRange {
        field: String,
        value: f64,
        rule: &'static str,
    },
    #[error("`{field}`: {message}")]
    Malformed { field: String, message: String },
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("invalid JSON: {0}")]
    Json(String),
}

/// An ordered list of filters. Defog, when present, comes first; each kind
/// appears at most once.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterChain {
    stages: Vec<FilterParams>,
    defog_radius: usize,
}

impl FilterChain {
    pub fn new(stages: Vec<FilterParams>) -> Result<Self, ChainError> {
        for (i, s) in stages.iter().enumerate() {
            s.validate()?;
            if s.kind() == FilterKind::Defog && i != 0 {
                return Err(ChainError::DefogNotFirst { position: i });
            }
            if stages[..i].iter().any(|p| p.kind() == s.kind()) {
                return Err(ChainError::Duplicate(s.kind()));
            }
        }
        Ok(Self {
            stages,
            defog_radius: DEFAULT_RADIUS,
        })
    }

    /// Neutral chain of the given kinds, in the given order.
    pub fn neutral(kinds: &[FilterKind], tone_knots: usize) -> Result<Self, ChainError> {
        Self::new(
            kinds
                .iter()
                .map(|&k| FilterParams::neutral(k, tone_knots))
                .collect(),
        )
    }

    /// `[Defog, WB, Gamma, Contrast, Tone, Sharpen]` at neutral parameters,
    /// with Defog only when `defog` is set.
    pub fn default_chain(defog: bool) -> Self {
        let kinds: Vec<FilterKind> = FilterKind::ALL
            .into_iter()
            .filter(|k| defog || *k != FilterKind::Defog)
            .collect();
        Self::neutral(&kinds, DEFAULT_TONE_KNOTS).expect("canonical order is valid")
    }

    /// Same stages at their neutral parameters.
    pub fn to_neutral(&self) -> Self {
        let stages = self
            .stages
            .iter()
            .map(|s| match s {
                FilterParams::Tone { knots } => FilterParams::neutral(FilterKind::Tone, knots.len()),
                FilterParams::Sharpen { sigma, .. } => FilterParams::Sharpen {
                    lambda: 0.0,
                    sigma: *sigma,
                },
                other => FilterParams::neutral(other.kind(), 0),
            })
            .collect();
        Self {
            stages,
            defog_radius: self.defog_radius,
        }
    }

    pub fn with_defog_radius(mut self, radius: usize) -> Self {
        self.defog_radius = radius;
        self
    }

    pub fn defog_radius(&self) -> usize {
        self.defog_radius
    }

    pub fn stages(&self) -> &[FilterParams] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn defog_enabled(&self) -> bool {
        self.stages.first().map(|s| s.kind()) == Some(FilterKind::Defog)
    }

    pub fn get(&self, kind: FilterKind) -> Option<&FilterParams> {
        self.stages.iter().find(|s| s.kind() == kind)
    }

    /// True if no stage needs neighbouring pixels.
    pub fn is_pixelwise(&self) -> bool {
        self.stages.iter().all(|s| s.kind().is_pixelwise())
    }

    /// Total number of fitted scalars.
    pub fn num_values(&self) -> usize {
        self.stages.iter().map(FilterParams::len).sum()
    }

    pub fn values(&self) -> Vec<f64> {
        self.stages.iter().flat_map(FilterParams::values).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.stages.iter().flat_map(FilterParams::names).collect()
    }

    /// Replaces all fitted scalars; `v` is laid out as [`Self::values`].
    pub fn with_values(&self, v: &[f64]) -> Self {
        assert_eq!(v.len(), self.num_values(), "wrong number of parameter values");
        let mut offset = 0;
        let stages = self
            .stages
            .iter()
            .map(|s| {
                let n = s.len();
                let next = s.with_values(&v[offset..offset + n]);
                offset += n;
                next
            })
            .collect();
        Self {
            stages,
            defog_radius: self.defog_radius,
        }
    }
}

impl Default for FilterChain {
    fn default() -> Self {
        Self::default_chain(false)
    }
}

/// Cotangents returned by a filter's vector-Jacobian product.
#[derive(Debug, Clone, PartialEq)]
pub struct Vjp {
    /// Gradient with respect to the fitted scalars, ordered as [`FilterParams::values`].
    pub params: Vec<f64>,
    /// Gradient with respect to the input image.
    pub input: ImageF,
}

/// Forward map of one filter. `defog_radius` is used only by Defog.
pub fn apply_filter(params: &FilterParams, img: &ImageF, defog_radius: usize) -> ImageF {
    match params {
        FilterParams::Defog { omega } => apply_defog(img, *omega, defog_radius).0,
        FilterParams::WhiteBalance { gains } => apply_wb(img, *gains),
        FilterParams::Gamma { gamma } => apply_gamma(img, *gamma),
        FilterParams::Contrast { alpha } => apply_contrast(img, *alpha),
        FilterParams::Tone { knots } => apply_tone(img, knots),
        FilterParams::Sharpen { lambda, sigma } => apply_sharpen(img, *lambda, *sigma),
    }
}

/// Reverse-mode derivative of one filter at `img`, given the cotangent of
/// its output. Defog treats its input as a constant and returns a zero
/// input cotangent.
pub fn filter_vjp(params: &FilterParams, img: &ImageF, upstream: &ImageF, defog_radius: usize) -> Vjp {
    filter_vjp_with(params, img, upstream, defog_radius, None, None)
}

fn filter_vjp_with(
    params: &FilterParams,
    img: &ImageF,
    upstream: &ImageF,
    defog_radius: usize,
    defog: Option<&DefogIntermediates>,
    blurred: Option<&ImageF>,
) -> Vjp {
    match params {
        FilterParams::Defog { omega } => match defog {
            Some(inter) => inter.vjp(img, *omega, upstream),
            None => DefogIntermediates::new(img, defog_radius).vjp(img, *omega, upstream),
        },
        FilterParams::WhiteBalance { gains } => pixelwise::wb_vjp(img, *gains, upstream),
        FilterParams::Gamma { gamma } => pixelwise::gamma_vjp(img, *gamma, upstream),
        FilterParams::Contrast { alpha } => pixelwise::contrast_vjp(img, *alpha, upstream),
        FilterParams::Tone { knots } => pixelwise::tone_vjp(img, knots, upstream),
        FilterParams::Sharpen { lambda, sigma } => match blurred {
            Some(b) => sharpen::sharpen_vjp_blurred(img, b, *lambda, *sigma, upstream),
            None => sharpen::sharpen_vjp(img, *lambda, *sigma, upstream),
        },
    }
}

/// Flags pixels whose forward evaluation lies within `margin` of a point
/// where the filter is not differentiable (clamp edges, tone joints, the
/// transmission floor, zero for gamma and luminance).
pub fn kink_mask(
    params: &FilterParams,
    img: &ImageF,
    margin: f64,
    defog: Option<&DefogIntermediates>,
    defog_radius: usize,
) -> Vec<bool> {
    match params {
        FilterParams::Defog { omega } => match defog {
            Some(inter) => inter.kinks(img, *omega, margin),
            None => DefogIntermediates::new(img, defog_radius).kinks(img, *omega, margin),
        },
        FilterParams::WhiteBalance { gains } => pixelwise::wb_kinks(img, *gains, margin),
        FilterParams::Gamma { .. } => pixelwise::gamma_kinks(img, margin),
        FilterParams::Contrast { alpha } => pixelwise::contrast_kinks(img, *alpha, margin),
        FilterParams::Tone { knots } => pixelwise::tone_kinks(img, knots.len(), margin),
        FilterParams::Sharpen { lambda, sigma } => sharpen::sharpen_kinks(img, *lambda, *sigma, margin),
    }
}

/// Applies every stage left to right.
pub fn apply_chain(img: &ImageF, chain: &FilterChain) -> ImageF {
    ChainTape::forward(chain, img, None).output().clone()
}

/// A forward pass that keeps each stage's input for the backward pass.
#[derive(Debug, Clone)]
pub struct ChainTape<'a> {
    inputs: Vec<ImageF>,
    /// Blurred stage input, kept for sharpen stages.
    blurred: Vec<Option<ImageF>>,
    output: ImageF,
    defog: Option<Cow<'a, DefogIntermediates>>,
}

impl<'a> ChainTape<'a> {
    /// Runs the chain on `img`. If the chain starts with Defog, `defog` may
    /// supply precomputed intermediates for `img` (they do not depend on
    /// the parameters).
    pub fn forward(chain: &FilterChain, img: &ImageF, defog: Option<&'a DefogIntermediates>) -> Self {
        let mut inputs = Vec::with_capacity(chain.len());
        let mut blurred = Vec::with_capacity(chain.len());
        let mut current = img.clone();
        let mut cached: Option<Cow<'a, DefogIntermediates>> = None;
        for stage in chain.stages() {
            let mut blur = None;
            let next = match stage {
                FilterParams::Defog { omega } => {
                    let inter = match defog {
                        Some(d) => Cow::Borrowed(d),
                        None => Cow::Owned(DefogIntermediates::new(&current, chain.defog_radius())),
                    };
                    let out = inter.recover(&current, *omega);
                    cached = Some(inter);
                    out
                }
                FilterParams::Sharpen { lambda, sigma } => {
                    let (out, b) = sharpen::sharpen_keep_blur(&current, *lambda, *sigma);
                    blur = Some(b);
                    out
                }
                other => apply_filter(other, &current, chain.defog_radius()),
            };
            inputs.push(std::mem::replace(&mut current, next));
            blurred.push(blur);
        }
        Self {
            inputs,
            blurred,
            output: current,
            defog: cached,
        }
    }

    pub fn output(&self) -> &ImageF {
        &self.output
    }

    pub fn into_output(self) -> ImageF {
        self.output
    }

    /// Input of stage `i`.
    pub fn stage_input(&self, i: usize) -> &ImageF {
        &self.inputs[i]
    }

    pub fn defog_intermediates(&self) -> Option<&DefogIntermediates> {
        self.defog.as_deref()
    }

    /// Accumulates parameter cotangents right to left. Returns one vector
    /// per stage, laid out as [`FilterParams::values`].
    pub fn backward(&self, chain: &FilterChain, cotangent: &ImageF) -> Vec<Vec<f64>> {
        assert_eq!(chain.len(), self.inputs.len(), "tape belongs to another chain");
        let mut grads = vec![Vec::new(); chain.len()];
        let mut upstream = Cow::Borrowed(cotangent);
        for (i, stage) in chain.stages().iter().enumerate().rev() {
            let vjp = filter_vjp_with(
                stage,
                &self.inputs[i],
                &upstream,
                chain.defog_radius(),
                self.defog.as_deref(),
                self.blurred[i].as_ref(),
            );
            grads[i] = vjp.params;
            if i > 0 {
                upstream = Cow::Owned(vjp.input);
            }
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_image() -> ImageF {
        ImageF::from_fn(24, 20, |y, x| {
            [
                0.1 + 0.8 * (x as f64 / 19.0),
                0.2 + 0.5 * ((y * x) % 7) as f64 / 6.0,
                0.9 - 0.8 * (y as f64 / 23.0),
            ]
        })
    }

    #[test]
    fn identity_chain_is_exact() {
        let img = test_image();
        for defog in [false, true] {
            let chain = FilterChain::default_chain(defog);
            assert_eq!(apply_chain(&img, &chain), img);
        }
        for kind in FilterKind::ALL {
            let p = FilterParams::neutral(kind, 8);
            assert_eq!(apply_filter(&p, &img, 7), img, "{kind}");
        }
    }

    #[test]
    fn single_stage_chain_matches_direct_call() {
        let img = test_image();
        let chain = FilterChain::new(vec![FilterParams::Gamma { gamma: 0.7 }]).unwrap();
        assert_eq!(apply_chain(&img, &chain), apply_gamma(&img, 0.7));
    }

    #[test]
    fn chain_equals_manual_composition() {
        let img = test_image();
        let chain = FilterChain::new(vec![
            FilterParams::Defog { omega: 0.6 },
            FilterParams::WhiteBalance { gains: [1.1, 0.9, 1.2] },
            FilterParams::Gamma { gamma: 0.8 },
            FilterParams::Contrast { alpha: 0.4 },
            FilterParams::Tone { knots: vec![1.0, 2.0, 0.5, 1.5, 1.0, 1.0, 0.7, 1.2] },
            FilterParams::Sharpen { lambda: 0.5, sigma: 1.0 },
        ])
        .unwrap();
        let mut manual = apply_defog(&img, 0.6, DEFAULT_RADIUS).0;
        manual = apply_wb(&manual, [1.1, 0.9, 1.2]);
        manual = apply_gamma(&manual, 0.8);
        manual = apply_contrast(&manual, 0.4);
        manual = apply_tone(&manual, &[1.0, 2.0, 0.5, 1.5, 1.0, 1.0, 0.7, 1.2]);
        manual = apply_sharpen(&manual, 0.5, 1.0);
        assert_eq!(apply_chain(&img, &chain), manual);
    }

    #[test]
    fn chain_invariants() {
        let err = FilterChain::new(vec![
            FilterParams::Gamma { gamma: 1.0 },
            FilterParams::Defog { omega: 0.5 },
        ])
        .unwrap_err();
        assert_eq!(err, ChainError::DefogNotFirst { position: 1 });
        assert!(err.to_string().contains("must be the first filter"));
        assert!(matches!(
            FilterChain::new(vec![FilterParams::Gamma { gamma: 1.0 }, FilterParams::Gamma { gamma: 2.0 }]),
            Err(ChainError::Duplicate(FilterKind::Gamma))
        ));
        assert!(matches!(
            FilterChain::new(vec![FilterParams::Contrast { alpha: 1.5 }]),
            Err(ChainError::OutOfRange { .. })
        ));
        let c = FilterChain::default_chain(true);
        assert!(c.defog_enabled());
        assert_eq!(c.num_values(), 1 + 3 + 1 + 1 + 8 + 1);
        assert!(!FilterChain::default_chain(false).defog_enabled());
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let img = test_image();
        let chain = FilterChain::default_chain(true);
        let tape = ChainTape::forward(&chain, &img, None);
        let zero = ImageF::filled(24, 20, [0.0; 3]);
        for g in tape.backward(&chain, &zero) {
            assert!(g.iter().all(|&v| v == 0.0));
        }
    }
}
