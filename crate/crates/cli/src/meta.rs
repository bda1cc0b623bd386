//! Run metadata written next to each command's primary output.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;

use crate::Command;

#[derive(Debug, Serialize)]
struct RunMetadata<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    params: serde_json::Value,
    jobs: Option<u16>,
    inputs: &'a [PathBuf],
    outputs: &'a [PathBuf],
    started_unix_secs: f64,
    duration_secs: f64,
}

pub struct RunRecord {
    subcommand: String,
    params: serde_json::Value,
    jobs: Option<u16>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    /// Where metadata goes when `--meta` is not given.
    default_meta: Option<PathBuf>,
    started: SystemTime,
    clock: Instant,
}

impl RunRecord {
    pub fn start(command: &Command, jobs: Option<u16>) -> Self {
        // Externally tagged: {"subcommand": {params}}.
        let (subcommand, params) = match serde_json::to_value(command) {
            Ok(serde_json::Value::Object(map)) if map.len() == 1 => map.into_iter().next().unwrap(),
            Ok(other) => (String::new(), other),
            Err(e) => (String::new(), serde_json::Value::String(e.to_string())),
        };
        Self {
            subcommand,
            params,
            jobs,
            inputs: Vec::new(),
            outputs: Vec::new(),
            default_meta: None,
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    /// Sets the primary output; metadata defaults to `<path>.meta.json`.
    pub fn primary_output(&mut self, path: &Path) {
        // Normalizing drops a trailing separator, so `out/` gives `out.meta.json`.
        let path: PathBuf = path.components().collect();
        let path = path.as_path();
        let mut name = path.as_os_str().to_owned();
        name.push(".meta.json");
        self.default_meta = Some(PathBuf::from(name));
        self.output(path);
    }

    pub fn finish(self, explicit: Option<&Path>) -> anyhow::Result<()> {
        let Some(path) = explicit.map(Path::to_path_buf).or(self.default_meta.clone()) else {
            return Ok(());
        };
        let started = self
            .started
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        let meta = RunMetadata {
            tool: "echokit",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: &self.subcommand,
            params: self.params.clone(),
            jobs: self.jobs,
            inputs: &self.inputs,
            outputs: &self.outputs,
            started_unix_secs: started,
            duration_secs: self.clock.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&meta)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing run metadata {}", path.display()))
    }
}
