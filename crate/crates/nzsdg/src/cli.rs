//! Batch front door: JSON run configuration, subcommand execution, file
//! artifacts.
//!
//! A run configuration is a JSON document with top-level keys `problem`,
//! `grid`, `smoothing`, `sim`, `verify`, `output_dir`; everything except
//! `problem` is optional and defaults are filled at parse time, so an
//! emitted configuration always round-trips. Commands write their artifacts
//! into `output_dir` and report through exit codes: 0 success (and, for
//! `verify`, no violations), 1 verification violation, 2 infrastructure
//! error.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hamiltonian::TiePolicy;
use crate::mc::{girsanov_payoffs, simulate_payoffs, McError, PayoffEstimate, SimConfig, SimMode, Y0Report};
use crate::model::{ProblemSpec, ValidationReport};
use crate::pde::{refine_in_n, solve_limit, CauchyReport, GridSpec, PdeError};
use crate::strategy::bang_bang_pair;
use crate::verify::{
    isaacs_sweep, linear_oracle, nash_deviation_suite, quadrature_oracle, IsaacsReport,
    OracleError, VerdictReport,
};
use crate::Player;

/// Verification knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    #[serde(default = "default_deviations")]
    pub deviations_per_player: usize,
    #[serde(default = "default_slack")]
    pub slack: f64,
    #[serde(default = "default_isaacs_samples")]
    pub isaacs_samples: usize,
}

fn default_deviations() -> usize {
    50
}

fn default_slack() -> f64 {
    5e-3
}

fn default_isaacs_samples() -> usize {
    100_000
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            deviations_per_player: default_deviations(),
            slack: default_slack(),
            isaacs_samples: default_isaacs_samples(),
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub grid: GridSpec,
    pub smoothing: Vec<u32>,
    pub sim: SimConfig,
    pub verify: VerifyConfig,
    pub output_dir: PathBuf,
}

#[derive(Deserialize)]
struct RawConfig {
    problem: ProblemSpec,
    #[serde(default)]
    grid: Option<GridSpec>,
    #[serde(default)]
    smoothing: Option<Vec<u32>>,
    #[serde(default)]
    sim: Option<SimConfig>,
    #[serde(default)]
    verify: Option<VerifyConfig>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error at {pointer}: {message}")]
    Parse { pointer: String, message: String },
    #[error("invalid problem: {}", .0.violations.join("; "))]
    Validation(ValidationReport),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Mc(#[from] McError),
    #[error("artifact write failed: {0}")]
    Artifact(String),
}

/// Subcommands of the batch CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Solve,
    Refine,
    Simulate,
    Verify,
    Oracle,
}

const DEFAULT_SCHEDULE: [u32; 5] = [8, 16, 32, 64, 128];
const REFINE_TOL: f64 = 1e-3;
const Y0_GRID_TOL: f64 = 1e-2;

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(key),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

fn parse_raw(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let raw: RawConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| CliError::Parse {
        pointer: json_pointer(e.path()),
        message: e.inner().to_string(),
    })?;
    let grid = raw
        .grid
        .unwrap_or_else(|| GridSpec::default_for(&raw.problem));
    Ok(RunConfig {
        grid,
        smoothing: raw.smoothing.unwrap_or_else(|| DEFAULT_SCHEDULE.to_vec()),
        sim: raw.sim.unwrap_or_default(),
        verify: raw.verify.unwrap_or_default(),
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        problem: raw.problem,
    })
}

/// Parses and fully validates a run configuration, filling defaults for
/// absent optional fields.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let config = parse_raw(path)?;
    let report = config.problem.validate();
    if !report.ok {
        return Err(CliError::Validation(report));
    }
    config.grid.validate(&config.problem)?;
    if config.smoothing.is_empty()
        || config.smoothing.iter().any(|&n| n < 1)
        || config.smoothing.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(CliError::Config(
            "smoothing schedule must be a non-empty strictly increasing list of levels >= 1"
                .to_string(),
        ));
    }
    if config.sim.n_paths == 0 || config.sim.n_steps == 0 {
        return Err(CliError::Config(
            "sim.n_paths and sim.n_steps must be >= 1".to_string(),
        ));
    }
    Ok(config)
}

/// Serializes a resolved configuration; `parse_config` on the result is the
/// identity.
pub fn emit_config(config: &RunConfig) -> String {
    serde_json::to_string_pretty(config).expect("config serializes")
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let path = dir.join(name);
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Artifact(format!("{}: {e}", path.display())))?;
    fs::write(&path, json + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct VerifyArtifact {
    y0: Y0Report,
    nash: VerdictReport,
    isaacs: IsaacsReport,
    pass: bool,
}

#[derive(Serialize)]
struct OracleEntry {
    available: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    declined: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<serde_json::Value>,
}

#[derive(Serialize)]
struct OracleArtifact {
    linear: OracleEntry,
    quadrature: OracleEntry,
}

#[derive(Serialize)]
struct SimulateArtifact {
    payoffs: [PayoffEstimate; 2],
}

/// Executes one subcommand against a parsed configuration and returns the
/// process exit code (artifacts go to `config.output_dir`).
pub fn run(command: Command, config: &RunConfig) -> Result<i32, CliError> {
    fs::create_dir_all(&config.output_dir)?;
    let dir = config.output_dir.as_path();
    let spec = &config.problem;
    let tie = TiePolicy::for_spec(spec);

    match command {
        Command::Validate => {
            write_json(dir, "validation.json", &spec.validate())?;
            Ok(0)
        }
        Command::Solve => {
            let solution = solve_limit(spec, &config.grid, &tie)?;
            write_csv_artifact(dir, "solution.csv", &solution, &tie)?;
            write_json(dir, "diagnostics.json", &SolveDiagnostics::of(&solution))?;
            Ok(0)
        }
        Command::Refine => {
            let (solution, report) = refine_in_n(spec, &config.grid, &config.smoothing, REFINE_TOL)?;
            write_json::<CauchyReport>(dir, "cauchy.json", &report)?;
            write_csv_artifact(dir, "solution.csv", &solution, &tie)?;
            Ok(0)
        }
        Command::Simulate => {
            let solution = Arc::new(solve_limit(spec, &config.grid, &tie)?);
            let (u_star, v_star) = bang_bang_pair(&solution, &tie);
            let (e1, e2) = match config.sim.mode {
                SimMode::Strong => simulate_payoffs(spec, &u_star, &v_star, &config.sim)?,
                SimMode::Girsanov => girsanov_payoffs(spec, &u_star, &v_star, &config.sim)?,
            };
            write_json(dir, "payoffs.json", &SimulateArtifact { payoffs: [e1, e2] })?;
            Ok(0)
        }
        Command::Verify => {
            let solution = Arc::new(solve_limit(spec, &config.grid, &tie)?);
            let y0 = crate::mc::y0_consistency(spec, &solution, &tie, &config.sim, Y0_GRID_TOL)?;
            let nash = nash_deviation_suite(
                spec,
                &solution,
                &tie,
                config.verify.deviations_per_player,
                &SimConfig {
                    mode: SimMode::Strong,
                    ..config.sim
                },
                config.verify.slack,
            )?;
            let isaacs = isaacs_sweep(spec, config.verify.isaacs_samples, config.sim.seed);
            let pass = y0.pass && nash.pass && isaacs.pass;
            write_json(
                dir,
                "verdict.json",
                &VerifyArtifact {
                    y0,
                    nash,
                    isaacs,
                    pass,
                },
            )?;
            Ok(if pass { 0 } else { 1 })
        }
        Command::Oracle => {
            let solution = solve_limit(spec, &config.grid, &tie)?;
            let linear = match linear_oracle(spec, &config.grid) {
                Ok(oracle) => OracleEntry {
                    available: true,
                    declined: None,
                    detail: Some(serde_json::json!({
                        "eta1_at_start": oracle.eta_at_start(Player::One),
                        "eta2_at_start": oracle.eta_at_start(Player::Two),
                        "sup_error_vs_solve": solution.sup_gap(&oracle),
                    })),
                },
                Err(e) => declined(e),
            };
            let quadrature = match quadrature_oracle(spec, 64) {
                Ok((j1, j2)) => OracleEntry {
                    available: true,
                    declined: None,
                    detail: Some(serde_json::json!({
                        "j1": j1,
                        "j2": j2,
                        "eta1_error_at_start": (solution.eta_at_start(Player::One) - j1).abs(),
                        "eta2_error_at_start": (solution.eta_at_start(Player::Two) - j2).abs(),
                    })),
                },
                Err(e) => declined(e),
            };
            write_json(dir, "oracle.json", &OracleArtifact { linear, quadrature })?;
            Ok(0)
        }
    }
}

fn declined(e: OracleError) -> OracleEntry {
    OracleEntry {
        available: false,
        declined: Some(e.to_string()),
        detail: None,
    }
}

#[derive(Serialize)]
struct SolveDiagnostics {
    mode: crate::pde::SolveMode,
    max_residual: f64,
    chatter_max_flips: u32,
    chatter_warning: bool,
    growth_lambda: f64,
    growth_max_ratio: f64,
}

impl SolveDiagnostics {
    fn of(solution: &crate::pde::ValueSolution) -> Self {
        SolveDiagnostics {
            mode: solution.mode,
            max_residual: solution.diagnostics.max_residual,
            chatter_max_flips: solution.diagnostics.chatter_max_flips,
            chatter_warning: solution.diagnostics.chatter_warning,
            growth_lambda: solution.diagnostics.growth.lambda,
            growth_max_ratio: solution.diagnostics.growth.max_ratio,
        }
    }
}

fn write_csv_artifact(
    dir: &Path,
    name: &str,
    solution: &crate::pde::ValueSolution,
    tie: &TiePolicy,
) -> Result<(), CliError> {
    let path = dir.join(name);
    let file = fs::File::create(&path)?;
    let mut writer = BufWriter::new(file);
    solution.write_csv(tie, &mut writer)?;
    writer.flush()?;
    Ok(())
}

/// Lenient load used by the `validate` subcommand: schema errors still fail,
/// but invariant violations are returned in the report instead of erroring,
/// so the command can write them out.
pub fn parse_config_lenient(path: &Path) -> Result<(RunConfig, ValidationReport), CliError> {
    let config = parse_raw(path)?;
    let report = config.problem.validate();
    Ok((config, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_config_json() -> String {
        r#"{
            "problem": {
                "horizon": 1.0,
                "start_x": 0.0,
                "drift_base": {"kind": "constant", "value": 0.0},
                "terminal_1": {"kind": "affine", "slope": 1.0, "intercept": 0.0},
                "terminal_2": {"kind": "affine", "slope": 1.0, "intercept": 0.0},
                "diffusion": {"kind": "identity"},
                "u_interval": [0.0, 1.0],
                "v_interval": [-1.0, 1.0],
                "transform_h": {"kind": "identity"},
                "transform_l": {"kind": "identity"}
            }
        }"#
        .to_string()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn minimal_config_gets_the_documented_defaults() {
        let f = write_tmp(&minimal_config_json());
        let config = parse_config(f.path()).unwrap();
        assert_eq!(config.grid.nx, 401);
        assert_eq!(config.grid.nt, 400);
        assert_eq!(config.grid.x_min, -8.0);
        assert_eq!(config.grid.x_max, 8.0);
        assert_eq!(config.sim.n_paths, 200_000);
        assert_eq!(config.sim.n_steps, 200);
        assert_eq!(config.smoothing, vec![8, 16, 32, 64, 128]);
        assert_eq!(config.verify.deviations_per_player, 50);
        assert_eq!(config.verify.slack, 5e-3);
        assert_eq!(config.verify.isaacs_samples, 100_000);
    }

    #[test]
    fn invalid_problem_is_a_validation_error() {
        let json = minimal_config_json().replace("\"horizon\": 1.0", "\"horizon\": 0.0");
        let f = write_tmp(&json);
        match parse_config(f.path()) {
            Err(CliError::Validation(report)) => {
                assert!(report
                    .violations
                    .iter()
                    .any(|v| v == "horizon must be positive"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(
            parse_config(Path::new("/nonexistent/config.json")),
            Err(CliError::Io(_))
        ));
    }

    #[test]
    fn schema_violations_name_the_json_pointer() {
        let json = minimal_config_json().replace("\"horizon\": 1.0", "\"horizon\": \"soon\"");
        let f = write_tmp(&json);
        match parse_config(f.path()) {
            Err(CliError::Parse { pointer, .. }) => {
                assert!(pointer.contains("problem"), "pointer {pointer}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn emitted_configs_round_trip() {
        let f = write_tmp(&minimal_config_json());
        let config = parse_config(f.path()).unwrap();
        let emitted = emit_config(&config);
        let f2 = write_tmp(&emitted);
        let reparsed = parse_config(f2.path()).unwrap();
        assert_eq!(config, reparsed);
    }

    #[test]
    fn bad_schedules_are_rejected_at_parse_time() {
        let json = minimal_config_json().replace(
            "\"problem\"",
            "\"smoothing\": [8, 8, 16], \"problem\"",
        );
        let f = write_tmp(&json);
        assert!(matches!(parse_config(f.path()), Err(CliError::Config(_))));
    }
}
