use diffisp::gradient::FitError;
use diffisp::{fit_params, FilterChain, FilterKind, FilterParams, FitOptions, FitResult};

use super::{load, write_atomic};
use crate::{CliError, FitArgs};

/// Side of the square downsample used by `--low-res`.
pub const LOW_RES_SIZE: usize = 256;

/// Builds a neutral chain from `full`, `default`, `pixelwise`, or a
/// comma-separated list of filter keys (in any order; stages run in the
/// canonical order).
pub fn parse_chain_spec(spec: &str, tone_knots: usize) -> Result<FilterChain, CliError> {
    if tone_knots == 0 {
        return Err(CliError::Validation("--tone-knots must be at least 1".into()));
    }
    let kinds: Vec<FilterKind> = match spec.trim() {
        "full" => FilterKind::ALL.to_vec(),
        "default" => FilterKind::ALL[1..].to_vec(),
        "pixelwise" => FilterKind::ALL.into_iter().filter(|k| k.is_pixelwise()).collect(),
        list => {
            let mut kinds = Vec::new();
            for key in list.split(',').map(str::trim) {
                let kind = FilterKind::from_key(key)
                    .ok_or_else(|| CliError::Validation(format!("unknown filter `{key}` in --chain")))?;
                if kinds.contains(&kind) {
                    return Err(CliError::Validation(format!("filter `{key}` listed twice in --chain")));
                }
                kinds.push(kind);
            }
            kinds.sort();
            kinds
        }
    };
    let stages = kinds.into_iter().map(|k| FilterParams::neutral(k, tone_knots)).collect();
    FilterChain::new(stages).map_err(|e| CliError::Validation(e.to_string()))
}

pub fn cmd_fit(args: &FitArgs) -> Result<FitResult, CliError> {
    let template = parse_chain_spec(&args.chain, args.tone_knots)?;
    let degraded = load(&args.degraded)?;
    let reference = load(&args.reference)?;
    let opts = FitOptions {
        iters: args.iters,
        lr: args.lr,
        low_res: args.low_res.then_some(LOW_RES_SIZE),
        ..FitOptions::default()
    };
    match fit_params(&degraded, &reference, &template, &opts) {
        Ok(result) => {
            write_atomic(&args.out, result.to_json().as_bytes())?;
            log::info!(
                "fit {} iterations, loss {:.6e} -> {:.6e}{}",
                result.iterations,
                result.initial_loss(),
                result.final_loss,
                if result.converged { " (converged)" } else { "" }
            );
            Ok(result)
        }
        Err(FitError::NonFinite { iteration, partial }) => {
            write_atomic(&args.out, partial.to_json().as_bytes())?;
            Err(CliError::Runtime(format!(
                "loss became non-finite at iteration {iteration}; partial trace written to {}",
                args.out.display()
            )))
        }
        Err(e) => Err(CliError::Validation(e.to_string())),
    }
}
