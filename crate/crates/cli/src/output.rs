use std::path::{Path, PathBuf};
use std::time::Instant;

use latentfire::io::{write_json, RunManifest};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{CliError, CliResult};

#[derive(clap::Args, Clone, Debug, Default)]
pub struct Common {
    /// Main JSON output; companion CSV/SVG/manifest files are written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed for every randomized stage.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Re-run with the configuration and seed recorded in this manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// A command invocation with its resolved configuration.
pub struct Run<A> {
    pub args: A,
    pub seed: u64,
    out: PathBuf,
    manifest: RunManifest,
    started: Instant,
}

pub fn required<'a, T>(value: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("the argument '{flag}' is required")))
}

impl<A: Serialize + DeserializeOwned> Run<A> {
    pub fn prepare(command: &str, args: A, common: Common) -> CliResult<Self> {
        let started = Instant::now();
        let (args, seed, out) = match &common.manifest {
            Some(path) => {
                let recorded = RunManifest::read(path)?;
                if recorded.command != command {
                    return Err(CliError::Usage(format!(
                        "manifest {} records command '{}', not '{command}'",
                        path.display(),
                        recorded.command
                    )));
                }
                for changed in recorded.changed_inputs() {
                    log::warn!("input {changed} differs from the manifest digest");
                }
                let args: A = serde_json::from_value(recorded.config["args"].clone()).map_err(|e| {
                    CliError::Usage(format!("manifest {} has an unreadable config: {e}", path.display()))
                })?;
                let out = match common.out {
                    Some(o) => o,
                    None => serde_json::from_value(recorded.config["out"].clone())
                        .map_err(|e| CliError::Usage(format!("manifest output path: {e}")))?,
                };
                (args, common.seed.unwrap_or(recorded.master_seed), out)
            }
            None => {
                let seed = common.seed.ok_or_else(|| {
                    CliError::Usage("the argument '--seed <SEED>' is required (or pass --manifest)".into())
                })?;
                let out = common.out.unwrap_or_else(|| PathBuf::from(format!("{command}.json")));
                (args, seed, out)
            }
        };
        let config = serde_json::json!({ "args": &args, "out": &out });
        Ok(Self {
            manifest: RunManifest::new(command, config, seed),
            args,
            seed,
            out,
            started,
        })
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.manifest.add_input(path)?;
        Ok(())
    }

    /// Companion file next to the main output: `report.json` → `report.<suffix>`.
    pub fn companion(&self, suffix: &str) -> PathBuf {
        let stem = self.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        self.out.with_file_name(format!("{stem}.{suffix}"))
    }

    /// Writes the main report and the manifest.
    pub fn finish<R: Serialize + ?Sized>(mut self, report: &R) -> CliResult<()> {
        write_json(&self.out, report)?;
        self.manifest.wall_time_seconds = self.started.elapsed().as_secs_f64();
        self.manifest.write(&self.companion("manifest.json"))?;
        println!("{}", self.out.display());
        Ok(())
    }
}
