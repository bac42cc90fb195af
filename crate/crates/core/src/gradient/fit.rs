//! Per-image parameter fitting by Adam on the mean squared error.

use thiserror::Error;

use crate::filters::json::{format_number, ObjectWriter};
use crate::filters::{ChainTape, DefogIntermediates, FilterChain, FilterKind};
use crate::image::{bilinear_resize, ImageF};

use super::reparam::chain_to_unconstrained;
use super::{chain_from_unconstrained, mse_with_cotangent, to_unconstrained_gradient, AdamState};

/// Unconstrained coordinates are kept inside `[-LIMIT, LIMIT]`.
const UNCONSTRAINED_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub iters: usize,
    pub lr: f64,
    /// Fit on a bilinear downsample of this size (square) and report the
    /// loss of the fitted chain at full resolution.
    pub low_res: Option<usize>,
    /// Unconstrained starting value for parameters whose neutral value sits
    /// on the boundary of their domain (contrast, sharpen, defog strength).
    /// Iteration 0 always evaluates the exact neutral chain.
    pub boundary_start: f64,
    /// Stop once the best loss improved by less than `tol` (relative) over
    /// the last `patience` iterations.
    pub patience: usize,
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            iters: 500,
            lr: 1e-2,
            low_res: None,
            boundary_start: -2.0,
            patience: 50,
            tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Best parameters seen.
    pub chain: FilterChain,
    /// `(iteration, loss)`; iteration 0 is the neutral chain. In low-res
    /// mode the losses are those of the downsampled pair.
    pub trace: Vec<(usize, f64)>,
    pub iterations: usize,
    pub converged: bool,
    /// Loss of `chain` on the full-resolution pair.
    pub final_loss: f64,
}

impl FitResult {
    pub fn initial_loss(&self) -> f64 {
        self.trace[0].1
    }

    /// The chain object followed by `trace`, `converged`, `iterations` and
    /// `final_loss`; readable as a chain parameter file.
    pub fn to_json(&self) -> String {
        let trace: Vec<String> = self
            .trace
            .iter()
            .map(|(i, l)| format!("[{i}, {}]", format_number(*l)))
            .collect();
        self.chain
            .json_fields(ObjectWriter::new())
            .raw("trace", format!("[{}]", trace.join(", ")))
            .raw("converged", self.converged.to_string())
            .raw("iterations", self.iterations.to_string())
            .number("final_loss", self.final_loss)
            .finish()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("degraded image is {degraded:?} but reference is {reference:?} (rows, cols)")]
    DimensionMismatch {
        degraded: (usize, usize),
        reference: (usize, usize),
    },
    #[error("invalid fit options: {0}")]
    InvalidOptions(String),
    #[error("loss or gradient became non-finite at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        /// Best parameters and trace up to the failure.
        partial: Box<FitResult>,
    },
}

/// Starting point in unconstrained coordinates.
fn start_point(neutral: &FilterChain, boundary_start: f64) -> Vec<f64> {
    let mut u = chain_to_unconstrained(neutral);
    let mut offset = 0;
    for stage in neutral.stages() {
        let n = stage.len();
        if matches!(stage.kind(), FilterKind::Contrast | FilterKind::Defog | FilterKind::Sharpen) {
            for x in &mut u[offset..offset + n] {
                *x = boundary_start;
            }
        }
        offset += n;
    }
    debug_assert!(super::reparam::transforms(neutral).count() == u.len());
    u
}

/// Fits the values of `template` (its structure and fixed settings; values
/// are ignored) so that `template(degraded)` approaches `reference`.
pub fn fit_params(
    degraded: &ImageF,
    reference: &ImageF,
    template: &FilterChain,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    if degraded.dims() != reference.dims() {
        return Err(FitError::DimensionMismatch {
            degraded: degraded.dims(),
            reference: reference.dims(),
        });
    }
    if opts.iters == 0 {
        return Err(FitError::InvalidOptions("iters must be at least 1".into()));
    }
    if !(opts.lr.is_finite() && opts.lr > 0.0) {
        return Err(FitError::InvalidOptions(format!("learning rate {} must be positive", opts.lr)));
    }
    if opts.low_res == Some(0) {
        return Err(FitError::InvalidOptions("low-res size must be positive".into()));
    }

    let (work_in, work_ref) = match opts.low_res {
        Some(s) => (bilinear_resize(degraded, s, s), bilinear_resize(reference, s, s)),
        None => (degraded.clone(), reference.clone()),
    };
    let defog = template
        .defog_enabled()
        .then(|| DefogIntermediates::new(&work_in, template.defog_radius()));

    let neutral = template.to_neutral();
    let mut trace = Vec::with_capacity(opts.iters + 1);
    let initial = ChainTape::forward(&neutral, &work_in, defog.as_ref()).output().mse(&work_ref);
    trace.push((0, initial));
    let mut best = (initial, neutral.clone());
    let mut best_history = vec![initial];

    let mut u = start_point(&neutral, opts.boundary_start);
    let mut adam = AdamState::new(u.len(), opts.lr);
    let mut converged = initial == 0.0;
    let mut iterations = 0;

    let fail = |iteration: usize, trace: &[(usize, f64)], best: &(f64, FilterChain)| FitError::NonFinite {
        iteration,
        partial: Box::new(FitResult {
            chain: best.1.clone(),
            trace: trace.to_vec(),
            iterations: iteration.saturating_sub(1),
            converged: false,
            final_loss: best.0,
        }),
    };

    while !converged && iterations < opts.iters {
        let it = iterations + 1;
        let chain = chain_from_unconstrained(&neutral, &u);
        let tape = ChainTape::forward(&chain, &work_in, defog.as_ref());
        let (loss, cot) = mse_with_cotangent(tape.output(), &work_ref);
        if !loss.is_finite() {
            return Err(fail(it, &trace, &best));
        }
        trace.push((it, loss));
        iterations = it;
        if loss < best.0 {
            best = (loss, chain.clone());
        }
        best_history.push(best.0);

        let grad = tape.backward(&chain, &cot).concat();
        let grad = to_unconstrained_gradient(&chain, &grad);
        if adam.update(&mut u, &grad).is_err() {
            return Err(fail(it, &trace, &best));
        }
        for x in &mut u {
            *x = x.clamp(-UNCONSTRAINED_LIMIT, UNCONSTRAINED_LIMIT);
        }

        if best.0 == 0.0 {
            converged = true;
        } else if it >= opts.patience {
            let earlier = best_history[it - opts.patience];
            converged = earlier - best.0 <= opts.tol * earlier;
        }
    }

    let final_loss = match opts.low_res {
        Some(_) => ChainTape::forward(&best.1, degraded, None).output().mse(reference),
        None => best.0,
    };
    Ok(FitResult {
        chain: best.1,
        trace,
        iterations,
        converged,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::add_lowlight;
    use crate::filters::FilterParams;

    fn scene(h: usize, w: usize) -> ImageF {
        ImageF::from_fn(h, w, |y, x| {
            let fy = y as f64 / h as f64;
            let fx = x as f64 / w as f64;
            [0.15 + 0.7 * fx, 0.2 + 0.6 * fy * fx, 0.85 - 0.6 * fy]
        })
    }

    fn gamma_chain() -> FilterChain {
        FilterChain::new(vec![FilterParams::Gamma { gamma: 1.0 }]).unwrap()
    }

    #[test]
    fn recovers_inverse_gamma() {
        let reference = scene(40, 50);
        let dark = add_lowlight(&reference, 2.0);
        let r = fit_params(&dark, &reference, &gamma_chain(), &FitOptions::default()).unwrap();
        let g = r.chain.values()[0];
        assert!((0.48..=0.52).contains(&g), "G = {g}");
        assert!(r.final_loss <= r.initial_loss());
    }

    #[test]
    fn identity_pair_keeps_neutral_parameters() {
        let img = scene(24, 24);
        let r = fit_params(&img, &img, &FilterChain::default_chain(false), &FitOptions::default()).unwrap();
        assert_eq!(r.final_loss, 0.0);
        assert!(r.converged);
        assert_eq!(r.chain, FilterChain::default_chain(false));
    }

    #[test]
    fn best_so_far_never_increases() {
        let reference = scene(32, 32);
        let dark = add_lowlight(&reference, 3.0);
        let opts = FitOptions {
            iters: 120,
            ..FitOptions::default()
        };
        let r = fit_params(&dark, &reference, &FilterChain::default_chain(false), &opts).unwrap();
        let mut best = f64::INFINITY;
        for (_, l) in &r.trace {
            assert!(l.is_finite());
            best = best.min(*l);
        }
        assert_eq!(best, r.final_loss);
        assert!(r.final_loss <= r.initial_loss());
        for s in r.chain.stages() {
            assert!(s.validate().is_ok());
        }
    }

    #[test]
    fn deterministic_trace() {
        let reference = scene(20, 30);
        let dark = add_lowlight(&reference, 2.5);
        let opts = FitOptions {
            iters: 40,
            ..FitOptions::default()
        };
        let a = fit_params(&dark, &reference, &FilterChain::default_chain(true), &opts).unwrap();
        let b = fit_params(&dark, &reference, &FilterChain::default_chain(true), &opts).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn result_file_reads_back_as_chain() {
        let reference = scene(16, 16);
        let dark = add_lowlight(&reference, 2.0);
        let opts = FitOptions {
            iters: 10,
            ..FitOptions::default()
        };
        let r = fit_params(&dark, &reference, &gamma_chain(), &opts).unwrap();
        let json = r.to_json();
        assert!(json.starts_with("{\n  \"defog\": null"));
        assert_eq!(FilterChain::from_json_str(&json).unwrap(), r.chain);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["trace"].as_array().unwrap().len(), r.trace.len());
        assert_eq!(v["converged"], serde_json::Value::Bool(r.converged));
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = scene(4, 4);
        let b = scene(4, 5);
        assert!(matches!(
            fit_params(&a, &b, &gamma_chain(), &FitOptions::default()),
            Err(FitError::DimensionMismatch { .. })
        ));
        let opts = FitOptions {
            iters: 0,
            ..FitOptions::default()
        };
        assert!(matches!(fit_params(&a, &a, &gamma_chain(), &opts), Err(FitError::InvalidOptions(_))));
    }

    #[test]
    fn low_res_reports_full_resolution_loss() {
        let reference = scene(60, 80);
        let dark = add_lowlight(&reference, 2.0);
        let opts = FitOptions {
            low_res: Some(32),
            ..FitOptions::default()
        };
        let r = fit_params(&dark, &reference, &gamma_chain(), &opts).unwrap();
        let direct = crate::filters::apply_chain(&dark, &r.chain).mse(&reference);
        assert_eq!(r.final_loss, direct);
        assert!((0.47..=0.53).contains(&r.chain.values()[0]));
    }
}
