use diffisp::{apply_chain, save_image, FilterChain};

use super::load;
use crate::{CliError, EnhanceArgs};

pub(crate) fn read_chain(path: &std::path::Path) -> Result<FilterChain, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    FilterChain::from_json_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn cmd_enhance(args: &EnhanceArgs) -> Result<(), CliError> {
    let chain = read_chain(&args.params)?;
    let img = load(&args.input)?;
    let out = apply_chain(&img, &chain);
    save_image(&out, &args.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    log::info!("{} -> {} ({} filters)", args.input.display(), args.out.display(), chain.len());
    Ok(())
}
