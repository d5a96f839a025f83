//! Run manifest: config echo plus one record per sweep point.
//!
//! ```text
//! pipeline = dynamics
//! version = 0.1.0
//! [config]
//! model.delta = 0.1
//! ...
//! [run]
//! name = nca_alpha0.1
//! status = completed
//! wall_time_s = 0.412
//! file = dynamics_nca_alpha0.1.csv
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// Divergence time in units of `2π/ω_c`.
    Diverged { time: f64 },
    Failed { message: String },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub name: String,
    pub status: RunStatus,
    pub wall_time: f64,
    pub files: Vec<String>,
    /// Extra `key = value` facts (fitted orders, warnings).
    pub notes: Vec<(String, String)>,
}

impl RunRecord {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: RunStatus::Completed,
            wall_time: 0.0,
            files: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn get_note(&self, key: &str) -> Option<&str> {
        self.notes.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub pipeline: String,
    pub version: String,
    /// Canonical configuration text.
    pub config: String,
    pub records: Vec<RunRecord>,
}

impl RunManifest {
    pub fn new(pipeline: &str, config: String) -> Self {
        Self {
            pipeline: pipeline.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            records: Vec::new(),
        }
    }

    pub fn files(&self) -> Vec<&str> {
        self.records.iter().flat_map(|r| r.files.iter().map(String::as_str)).collect()
    }

    pub fn all_completed(&self) -> bool {
        self.records.iter().all(|r| r.status.is_completed())
    }

    /// 0 when every point completed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_completed() {
            0
        } else {
            2
        }
    }

    pub fn record(&self, name: &str) -> Option<&RunRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "pipeline = {}", self.pipeline);
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "[config]");
        s.push_str(&self.config);
        if !self.config.ends_with('\n') && !self.config.is_empty() {
            s.push('\n');
        }
        for r in &self.records {
            let _ = writeln!(s, "[run]");
            let _ = writeln!(s, "name = {}", r.name);
            match &r.status {
                RunStatus::Completed => {
                    let _ = writeln!(s, "status = completed");
                }
                RunStatus::Diverged { time } => {
                    let _ = writeln!(s, "status = diverged");
                    let _ = writeln!(s, "diverged_at = {time}");
                }
                RunStatus::Failed { message } => {
                    let _ = writeln!(s, "status = failed");
                    let _ = writeln!(s, "message = {}", message.replace('\n', " "));
                }
            }
            let _ = writeln!(s, "wall_time_s = {:.3}", r.wall_time);
            for (k, v) in &r.notes {
                let _ = writeln!(s, "note.{k} = {v}");
            }
            for f in &r.files {
                let _ = writeln!(s, "file = {f}");
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut m = RunManifest {
            pipeline: String::new(),
            version: String::new(),
            config: String::new(),
            records: Vec::new(),
        };
        enum Section {
            Head,
            Config,
            Run,
        }
        let mut section = Section::Head;
        let mut diverged_at = None;
        let mut status = None;
        let mut message = None;
        let finish = |m: &mut RunManifest, status: &mut Option<String>, at: &mut Option<f64>, msg: &mut Option<String>| {
            if let Some(r) = m.records.last_mut() {
                r.status = match status.take().as_deref() {
                    Some("diverged") => RunStatus::Diverged {
                        time: at.take().unwrap_or(f64::NAN),
                    },
                    Some("failed") => RunStatus::Failed {
                        message: msg.take().unwrap_or_default(),
                    },
                    _ => RunStatus::Completed,
                };
            }
        };
        for (i, line) in text.lines().enumerate() {
            match line.trim() {
                "[config]" => {
                    section = Section::Config;
                    continue;
                }
                "[run]" => {
                    finish(&mut m, &mut status, &mut diverged_at, &mut message);
                    m.records.push(RunRecord::new(""));
                    section = Section::Run;
                    continue;
                }
                "" => continue,
                _ => {}
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
            match section {
                Section::Head => match k {
                    "pipeline" => m.pipeline = v.to_string(),
                    "version" => m.version = v.to_string(),
                    _ => return Err(format!("line {}: unknown key {k}", i + 1)),
                },
                Section::Config => {
                    m.config.push_str(line);
                    m.config.push('\n');
                }
                Section::Run => {
                    let r = m.records.last_mut().expect("inside a run section");
                    match k {
                        "name" => r.name = v.to_string(),
                        "status" => status = Some(v.to_string()),
                        "diverged_at" => diverged_at = v.parse().ok(),
                        "message" => message = Some(v.to_string()),
                        "wall_time_s" => r.wall_time = v.parse().map_err(|_| format!("line {}: bad time", i + 1))?,
                        "file" => r.files.push(v.to_string()),
                        _ => match k.strip_prefix("note.") {
                            Some(n) => r.notes.push((n.to_string(), v.to_string())),
                            None => return Err(format!("line {}: unknown key {k}", i + 1)),
                        },
                    }
                }
            }
        }
        finish(&mut m, &mut status, &mut diverged_at, &mut message);
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_text())?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
        Self::parse(&text)
    }
}
