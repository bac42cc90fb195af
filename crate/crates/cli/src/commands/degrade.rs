use std::path::{Path, PathBuf};

use diffisp::degrade::{derive_image_seed, draw_lowlight_gamma, HybridSampler};
use diffisp::{par, save_image, DegradeMode, DegradeSpec, Domain, FogLevel};
use serde::Serialize;

use super::{load, write_atomic};
use crate::{CliError, DegradeArgs, DomainArg, ModeArg};

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub src: String,
    pub out: String,
    pub mode: DegradeMode,
    pub k: Option<u8>,
    pub gamma: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct DegradeSummary {
    pub manifest: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub failures: usize,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm" | "pnm"))
        .unwrap_or(false)
}

/// Image files under `input` (a directory or one file), sorted by name.
pub(crate) fn list_images(input: &Path) -> Result<Vec<PathBuf>, CliError> {
    if input.is_file() {
        return Ok(vec![input.to_owned()]);
    }
    let entries = std::fs::read_dir(input)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", input.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Validation(format!("no PNG/PPM images in {}", input.display())));
    }
    Ok(files)
}

fn validate(args: &DegradeArgs) -> Result<(), CliError> {
    match args.mode {
        ModeArg::Fog if args.level.is_none() => {
            Err(CliError::Validation("--mode fog requires --level 0..=9".into()))
        }
        _ => match args.gamma {
            Some(g) if !(g.is_finite() && g > 0.0) => {
                Err(CliError::Validation(format!("--gamma must be positive, got {g}")))
            }
            _ => Ok(()),
        },
    }
}

fn spec_for(args: &DegradeArgs, seed: u64) -> DegradeSpec {
    match args.mode {
        ModeArg::Fog => {
            let level = FogLevel::new(args.level.expect("validated")).expect("validated by clap");
            DegradeSpec::fog(level, seed)
        }
        ModeArg::Lowlight => DegradeSpec::lowlight(args.gamma.unwrap_or_else(|| draw_lowlight_gamma(seed)), seed),
        ModeArg::Hybrid => {
            let domain = match args.domain {
                DomainArg::Fog => Domain::Fog,
                DomainArg::Lowlight => Domain::Lowlight,
            };
            HybridSampler::new(seed).next_spec(domain)
        }
    }
}

fn process(args: &DegradeArgs, src: &Path, index: usize) -> Result<ManifestEntry, CliError> {
    let img = load(src)?;
    let seed = derive_image_seed(args.seed, index as u64);
    let spec = spec_for(args, seed);
    let stem = src.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    let out = args.out.join(format!("{stem}.png"));
    save_image(&spec.apply(&img), &out).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(ManifestEntry {
        src: src.display().to_string(),
        out: out.display().to_string(),
        mode: spec.mode,
        k: spec.level.map(FogLevel::get),
        gamma: spec.gamma,
        seed,
    })
}

/// Degrades every image under `--input`; image `i` (in name order) uses the
/// seed derived from `--seed` and `i`, so results do not depend on the
/// worker count.
pub fn cmd_degrade(args: &DegradeArgs) -> Result<DegradeSummary, CliError> {
    validate(args)?;
    if args.workers == Some(0) {
        return Err(CliError::Validation("--workers must be at least 1".into()));
    }
    let files = list_images(&args.input)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", args.out.display())))?;

    let indexed: Vec<(usize, &PathBuf)> = files.iter().enumerate().collect();
    let results = par::with_workers(args.workers, || {
        par::map_slice(&indexed, |(i, src)| process(args, src, *i))
    });

    let mut entries = Vec::with_capacity(results.len());
    let mut failures = 0;
    for (src, r) in files.iter().zip(results) {
        match r {
            Ok(e) => {
                log::info!("{} -> {} ({:?})", e.src, e.out, e.mode);
                entries.push(e);
            }
            Err(e) => {
                log::error!("{}: {e}", src.display());
                failures += 1;
            }
        }
    }

    let manifest = args.manifest.clone().unwrap_or_else(|| args.out.join("manifest.jsonl"));
    let mut text = String::new();
    for e in &entries {
        text.push_str(&serde_json::to_string(e).expect("manifest entries serialize"));
        text.push('\n');
    }
    write_atomic(&manifest, text.as_bytes())?;

    if failures > 0 {
        return Err(CliError::Runtime(format!("{failures} of {} images failed", files.len())));
    }
    Ok(DegradeSummary {
        manifest,
        entries,
        failures,
    })
}
