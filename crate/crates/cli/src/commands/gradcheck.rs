use diffisp::gradient::{full_suite, GradcheckConfig};
use diffisp::GradReport;

use super::write_atomic;
use crate::{CliError, GradcheckArgs};

/// Runs the full gradient suite and writes the JSON report. The caller
/// decides what a failed check means for the exit status.
pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<GradReport, CliError> {
    if args.trials == 0 {
        return Err(CliError::Validation("--trials must be at least 1".into()));
    }
    if args.size < 4 {
        return Err(CliError::Validation("--size must be at least 4".into()));
    }
    let cfg = GradcheckConfig {
        trials: args.trials,
        seed: args.seed,
        corrupt: args.corrupt_vjp.clone(),
        ..GradcheckConfig::default()
    };
    let report = full_suite(args.size, &cfg);
    write_atomic(&args.out, report.to_json().as_bytes())?;
    Ok(report)
}
