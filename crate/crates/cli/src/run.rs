use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use roughvar::io::{read_coefficients, read_path_csv, read_path_json, save_json};
use roughvar::pathgen::GENERATOR_VERSION;
use roughvar::schauder::triangular;
use roughvar::{GeneratorKind, GeneratorSpec, Path};

use crate::args::{KindArg, PathArgs};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o failure: {m}"),
        }
    }
}

impl From<roughvar::Error> for CliError {
    fn from(e: roughvar::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn invalid<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Validation(msg.into()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses `a:b` (inclusive) or a single level.
pub fn parse_levels(s: &str) -> CliResult<Vec<u32>> {
    let parse = |t: &str| {
        t.trim()
            .parse::<u32>()
            .map_err(|_| CliError::Validation(format!("bad level `{t}` in `{s}`; expected `a:b` or `n`")))
    };
    match s.split_once(':') {
        Some((a, b)) => {
            let (a, b) = (parse(a)?, parse(b)?);
            if a > b {
                return invalid(format!("level range `{s}` is empty"));
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![parse(s)?]),
    }
}

pub fn check_levels(levels: &[u32], grid_level: u32) -> CliResult<()> {
    if let Some(&top) = levels.iter().max() {
        if top > grid_level {
            return invalid(format!(
                "level {top} exceeds the path's grid level {grid_level}; use --levels up to {grid_level}"
            ));
        }
    }
    Ok(())
}

pub fn check_positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        invalid(format!("--{name} must be a positive finite number, got {v}"))
    }
}

/// Output directory must be creatable; nothing is created here.
pub fn check_out_dir(dir: &FsPath) -> CliResult<()> {
    if dir.exists() && !dir.is_dir() {
        return invalid(format!("--out {} exists and is not a directory", dir.display()));
    }
    Ok(())
}

pub fn check_out_file(file: &FsPath) -> CliResult<()> {
    if file.is_dir() {
        return invalid(format!("--out {} is a directory; expected a file", file.display()));
    }
    if file.file_name().is_none() {
        return invalid(format!("--out {} has no file name", file.display()));
    }
    Ok(())
}

/// Where a path came from, before it is materialised.
pub enum PathInput {
    File { path: PathBuf, bytes: Vec<u8> },
    Generated(GeneratorSpec),
}

fn kind_of(k: KindArg) -> GeneratorKind {
    match k {
        KindArg::Fbm => GeneratorKind::Fbm,
        KindArg::Takagi => GeneratorKind::Takagi,
        KindArg::Counterexample => GeneratorKind::Counterexample,
        KindArg::Smooth => GeneratorKind::Smooth,
        KindArg::CustomSchauder => GeneratorKind::CustomSchauder,
    }
}

/// Validates path arguments and reads input files, recording their digests.
pub fn path_input(a: &PathArgs, run: &mut Run) -> CliResult<PathInput> {
    if let Some(file) = &a.input {
        let bytes = fs::read(file).map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
        run.input(file, &bytes);
        return Ok(PathInput::File { path: file.clone(), bytes });
    }
    let Some(kind) = a.kind else {
        return invalid("a path is required: pass --in FILE or --kind KIND with generator flags");
    };
    let kind = kind_of(kind);
    let coefficients = match (&a.coeffs, kind) {
        (Some(file), GeneratorKind::CustomSchauder) => {
            let bytes = fs::read(file).map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
            run.input(file, &bytes);
            Some(read_coefficients(&bytes[..]).map_err(|e| match e {
                e if e.is_io() => CliError::Validation(format!("{}: {e}", file.display())),
                e => CliError::from(e),
            })?)
        }
        (None, GeneratorKind::CustomSchauder) => return invalid("--kind custom-schauder requires --coeffs FILE"),
        (Some(_), _) => return invalid("--coeffs only applies to --kind custom-schauder"),
        (None, _) => None,
    };
    let level = match (a.level, kind) {
        (Some(l), _) => l,
        (None, GeneratorKind::Counterexample) => match a.nmax {
            Some(n) => triangular(n),
            None => return invalid("--kind counterexample requires --nmax"),
        },
        (None, GeneratorKind::CustomSchauder) => coefficients.as_ref().map_or(0, |c| c.max_level),
        (None, _) => return invalid("--level is required with --kind"),
    };
    let mut spec = GeneratorSpec::new(kind, level);
    spec.hurst = a.hurst;
    spec.seed = a.seed;
    spec.coefficients = coefficients;
    if let Some(n) = a.nmax {
        spec = spec.param("nmax", n as f64);
    }
    if let Some(v) = a.amplitude {
        spec = spec.param("amplitude", v);
    }
    if let Some(v) = a.freq {
        spec = spec.param("freq", v);
    }
    if let Some(cs) = &a.poly {
        for (i, c) in cs.iter().enumerate() {
            spec = spec.param(&format!("c{i}"), *c);
        }
    }
    spec.validate()?;
    run.generator = Some(spec.clone());
    Ok(PathInput::Generated(spec))
}

/// Parses a file input or runs the generator.
pub fn materialise(input: &PathInput, run: &mut Run) -> CliResult<Path> {
    match input {
        PathInput::File { path, bytes } => {
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let parsed = match path.extension().and_then(|e| e.to_str()) {
                Some("json") => read_path_json(&bytes[..]),
                _ => read_path_csv(&bytes[..], label),
            };
            parsed.map_err(|e| match e {
                e if e.is_io() => CliError::Validation(format!("{}: {e}", path.display())),
                e => CliError::from(e),
            })
        }
        PathInput::Generated(spec) => run.time("generate", || spec.generate()).map_err(CliError::from),
    }
}

#[derive(Serialize)]
struct Versions {
    roughvar: &'static str,
    cli: &'static str,
    generator: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    config: &'a C,
    #[serde(skip_serializing_if = "Option::is_none")]
    generator: Option<&'a GeneratorSpec>,
    versions: Versions,
    threads: usize,
    started_unix_s: u64,
    timings_ms: &'a BTreeMap<String, f64>,
    input_digests: &'a BTreeMap<String, String>,
    outputs: Vec<String>,
    exit_code: u8,
}

/// Bookkeeping for one invocation.
pub struct Run {
    command: &'static str,
    started: Instant,
    started_unix_s: u64,
    timings: BTreeMap<String, f64>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
    pub generator: Option<GeneratorSpec>,
}

impl Run {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            started_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            timings: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            generator: None,
        }
    }

    pub fn input(&mut self, path: &FsPath, bytes: &[u8]) {
        self.inputs.insert(path.display().to_string(), sha256_hex(bytes));
    }

    pub fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        *self.timings.entry(name.to_string()).or_default() += t0.elapsed().as_secs_f64() * 1e3;
        out
    }

    pub fn created(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    pub fn json<T: Serialize>(&mut self, value: &T, path: PathBuf) -> CliResult<()> {
        save_json(value, &path)?;
        self.created(path);
        Ok(())
    }

    pub fn text(&mut self, text: &str, path: PathBuf) -> CliResult<()> {
        fs::write(&path, text)?;
        self.created(path);
        Ok(())
    }

    /// Writes the manifest listing every output recorded so far.
    pub fn finish<C: Serialize>(mut self, config: &C, path: PathBuf, exit_code: u8) -> CliResult<()> {
        self.timings
            .insert("total".into(), self.started.elapsed().as_secs_f64() * 1e3);
        let outputs = self
            .outputs
            .iter()
            .map(|out| out.display().to_string())
            .collect();
        let manifest = Manifest {
            command: self.command,
            config,
            generator: self.generator.as_ref(),
            versions: Versions {
                roughvar: roughvar::VERSION,
                cli: env!("CARGO_PKG_VERSION"),
                generator: GENERATOR_VERSION,
            },
            threads: rayon::current_num_threads(),
            started_unix_s: self.started_unix_s,
            timings_ms: &self.timings,
            input_digests: &self.inputs,
            outputs,
            exit_code,
        };
        save_json(&manifest, &path)?;
        Ok(())
    }
}

pub fn create_dir(dir: &FsPath) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_syntax() {
        assert_eq!(parse_levels("4:6").unwrap(), vec![4, 5, 6]);
        assert_eq!(parse_levels("7").unwrap(), vec![7]);
        assert_eq!(parse_levels(" 2 : 3 ").unwrap(), vec![2, 3]);
        assert!(parse_levels("6:4").is_err());
        assert!(parse_levels("a:b").is_err());
        assert!(parse_levels("").is_err());
    }

    #[test]
    fn exit_codes() {
        let v: CliError = roughvar::Error::InvalidParameter("x".into()).into();
        assert_eq!(v.code(), 1);
        let n: CliError = roughvar::Error::Bracket("x".into()).into();
        assert_eq!(n.code(), 2);
        let i: CliError = roughvar::Error::Io(std::io::Error::other("x")).into();
        assert_eq!(i.code(), 3);
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
