//! Atomic artifact writing, run manifests and error-to-exit-code mapping.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use uavdh::Scenario;

pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Solver(uavdh::Error),
    NotConverged(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        use uavdh::Error as E;
        match self {
            CliError::Input(_) => EXIT_BAD_INPUT,
            CliError::NotConverged(_) => EXIT_NO_CONVERGENCE,
            CliError::Solver(e) => match e {
                E::Io { .. } | E::Parse(_) | E::Invariant { .. } | E::Dimension(_) => EXIT_BAD_INPUT,
                E::LpInfeasible | E::InfeasibleReference(_) | E::InfeasibleScenario(_) | E::HorizonExceeded { .. } => {
                    EXIT_INFEASIBLE
                }
                E::LpUnbounded | E::WaterFillUnbounded | E::SingularGram(_) => EXIT_NO_CONVERGENCE,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.code() {
            EXIT_BAD_INPUT => "bad_input",
            EXIT_INFEASIBLE => "infeasible",
            _ => "solver_failure",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::NotConverged(m) => f.write_str(m),
            CliError::Solver(e) => write!(f, "{e}"),
        }
    }
}

impl From<uavdh::Error> for CliError {
    fn from(e: uavdh::Error) -> Self {
        CliError::Solver(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn scenario_hash(s: &Scenario) -> String {
    hex::encode(Sha256::digest(s.to_toml().as_bytes()))
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub scenario_hash: Option<String>,
    pub seeds: Vec<u64>,
    pub settings: serde_json::Value,
    pub version: String,
    pub threads: usize,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_s: f64,
}

/// Collects the artifacts of one run. Files are written through a temporary sibling and
/// renamed into place; if the run fails, everything already written is removed.
pub struct Run {
    subcommand: String,
    started: Instant,
    written: Vec<PathBuf>,
    pub scenario_hash: Option<String>,
    pub seeds: Vec<u64>,
    pub settings: serde_json::Value,
}

impl Run {
    pub fn new(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            started: Instant::now(),
            written: Vec::new(),
            scenario_hash: None,
            seeds: Vec::new(),
            settings: serde_json::Value::Null,
        }
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".partial");
        let tmp = PathBuf::from(tmp);
        fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| {
            let _ = fs::remove_file(&tmp);
            io_err(path, e)
        })?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
        text.push('\n');
        self.write(path, text.as_bytes())
    }

    pub fn write_csv(&mut self, path: &Path, table: Table) -> CliResult<()> {
        self.write(path, &table.into_bytes())
    }

    /// Writes `<primary>.manifest.json` next to the primary output.
    pub fn finish(&mut self, primary: &Path) -> CliResult<()> {
        let mut name = primary.as_os_str().to_owned();
        name.push(".manifest.json");
        let manifest = RunManifest {
            subcommand: self.subcommand.clone(),
            scenario_hash: self.scenario_hash.clone(),
            seeds: self.seeds.clone(),
            settings: self.settings.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads: rayon::current_num_threads(),
            outputs: self.written.clone(),
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        };
        self.write_json(&PathBuf::from(name), &manifest)?;
        self.written.clear();
        Ok(())
    }

    pub fn abort(&mut self) {
        for p in self.written.drain(..) {
            let _ = fs::remove_file(p);
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Solver(uavdh::Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// CSV table with a header row; headers carry units.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }
}
