//! The five commands. Each is a pure function of the scenario and its seed;
//! the worker count only changes how fast the answer arrives.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use bellsim_core::analysis::{
    accuracy_success_sweep, chsh_experiment, compare_to_ch_bound, conditional_correlation,
    estimate_joint, modest_variant_check, success_probability, variant2_contract_check,
    write_sweep_csv, BoundComparison, ChshReport, ContractReport, ContractVariant, Estimate,
    EstimatedLaw, SweepCurve,
};
use bellsim_core::protocol::{locality_audit, write_trials_csv};
use bellsim_core::target_law::{singlet_correlation, singlet_law};
use bellsim_core::{Direction, Error, Executor, JointLaw, SelectionRule, Tally};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ScenarioConfig};

pub const MANIFEST_SCHEMA: &str = "bellsim/manifest/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Chsh,
    Contract,
    Sweep,
    AuditLocality,
}

/// Process exit codes. Exhaustive: every run ends in exactly one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Config = 1,
    Violation = 2,
    Data = 3,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }

    fn of_core(e: &Error) -> Self {
        match e {
            Error::InsufficientData { .. } | Error::EmptyExperiment | Error::Range { .. } => {
                Exit::Data
            }
            _ => Exit::Config,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub message: String,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure {
            exit: Exit::Config,
            message: e.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            exit: Exit::of_core(&e),
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure {
        exit: Exit::Config,
        message: format!("cannot write {}: {e}", path.display()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub model: String,
    pub a: Direction,
    pub b: Direction,
    pub a_dot_b: f64,
    pub selection: SelectionRule,
    pub n_total: u64,
    pub n_accepted: u64,
    pub success: Estimate,
    pub conditional_law: EstimatedLaw,
    pub target_law: JointLaw,
    pub variation_distance: Estimate,
    pub correlation: Estimate,
    pub target_correlation: f64,
    /// Per-side acceptance rates, for models with binary verdicts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_a: Option<Estimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_b: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub model: String,
    pub selection: SelectionRule,
    pub local_bound: f64,
    pub quantum_bound: f64,
    #[serde(flatten)]
    pub report: ChshReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractResult {
    #[serde(flatten)]
    pub report: ContractReport,
    /// `min(η_A, η_B)` against the efficiency bound.
    pub symmetric_rate: BoundComparison,
    /// The rate 2/3 against the same bound, for reference.
    pub two_thirds: BoundComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub model: String,
    pub n: u64,
    pub a: Direction,
    pub b1: Direction,
    pub b2: Direction,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandResult {
    Simulate(SimulateReport),
    Chsh(ChshResult),
    Contract(ContractResult),
    Sweep(SweepCurve),
    AuditLocality(AuditResult),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub artifact_version: String,
    pub command: Command,
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub seed: u64,
    /// Present only when timing was requested, so default manifests replay
    /// byte for byte.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
    pub result: CommandResult,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// A finished run: the manifest and the exit status it implies.
#[derive(Debug)]
pub struct Completed {
    pub manifest: RunManifest,
    pub exit: Exit,
}

/// Runs `command` on an already-overridden config and writes its outputs.
pub fn run(
    command: Command,
    config: &ScenarioConfig,
    exec: &Executor,
    timing: bool,
) -> Result<Completed, Failure> {
    let seed = config.validate()?;
    let start = Instant::now();
    let (result, exit) = match command {
        Command::Simulate => simulate(config, seed, exec)?,
        Command::Chsh => chsh(config, seed, exec)?,
        Command::Contract => contract(config, seed, exec)?,
        Command::Sweep => sweep(config, seed, exec)?,
        Command::AuditLocality => audit(config, seed)?,
    };
    let manifest = RunManifest {
        schema: MANIFEST_SCHEMA.into(),
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        command,
        config: config.clone(),
        config_hash: config.hash(),
        seed,
        wall_clock_seconds: timing.then(|| start.elapsed().as_secs_f64()),
        result,
    };
    let json = manifest.to_json();
    match &config.outputs.report {
        Some(path) => std::fs::write(path, json).map_err(|e| io_failure(path, e))?,
        None => io::stdout()
            .write_all(json.as_bytes())
            .map_err(|e| io_failure(Path::new("<stdout>"), e))?,
    }
    Ok(Completed { manifest, exit })
}

fn write_csv(
    path: &Path,
    body: impl FnOnce(BufWriter<File>) -> io::Result<()>,
) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| io_failure(path, e))?;
    body(BufWriter::new(file)).map_err(|e| io_failure(path, e))
}

fn simulate(
    config: &ScenarioConfig,
    seed: u64,
    exec: &Executor,
) -> Result<(CommandResult, Exit), Failure> {
    let model = config.model.build()?;
    let settings = config
        .settings
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("simulate needs settings".into()))?;
    let (a, b) = settings.pair()?;
    let selection = config.selection_for(model.as_ref());
    let tally = match &config.outputs.csv {
        Some(path) => {
            let records =
                exec.run_records(model.as_ref(), &a, &b, config.trials, seed, &selection)?;
            write_csv(path, |w| write_trials_csv(&records, w))?;
            Tally::from_records(model.flavor(), &records, &selection)?
        }
        None => exec.run_experiment(model.as_ref(), &a, &b, config.trials, seed, &selection)?,
    };
    let law = estimate_joint(&tally)?;
    let target = singlet_law(&a, &b);
    let rates = tally.detection.as_ref().map(|d| {
        (
            Estimate::proportion(d.n_d1(), tally.n_total),
            Estimate::proportion(d.n_e1(), tally.n_total),
        )
    });
    let report = SimulateReport {
        model: model.name(),
        a,
        b,
        a_dot_b: a.dot(&b),
        selection,
        n_total: tally.n_total,
        n_accepted: tally.n_accepted,
        success: success_probability(&tally)?,
        variation_distance: law.distance_to(&target),
        conditional_law: law,
        target_law: target,
        correlation: conditional_correlation(&tally)?,
        target_correlation: singlet_correlation(&a, &b),
        eta_a: rates.map(|r| r.0),
        eta_b: rates.map(|r| r.1),
    };
    Ok((CommandResult::Simulate(report), Exit::Ok))
}

fn chsh(
    config: &ScenarioConfig,
    seed: u64,
    exec: &Executor,
) -> Result<(CommandResult, Exit), Failure> {
    let model = config.model.build()?;
    let settings = config
        .settings
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("chsh needs a settings quad".into()))?;
    let quad = settings.quad()?;
    let selection = config.selection_for(model.as_ref());
    let report = chsh_experiment(model.as_ref(), &quad, config.trials, seed, &selection, exec)?;
    Ok((
        CommandResult::Chsh(ChshResult {
            model: model.name(),
            selection,
            local_bound: 2.0,
            quantum_bound: 2.0 * std::f64::consts::SQRT_2,
            report,
        }),
        Exit::Ok,
    ))
}

fn contract(
    config: &ScenarioConfig,
    seed: u64,
    exec: &Executor,
) -> Result<(CommandResult, Exit), Failure> {
    let model = config.model.build()?;
    let tol = config.tolerances.contract;
    let report = match config.contract.variant {
        ContractVariant::Full => {
            variant2_contract_check(model.as_ref(), config.trials, seed, tol, exec)?
        }
        ContractVariant::Modest => {
            modest_variant_check(model.as_ref(), config.trials, seed, tol, exec)?
        }
    };
    let exit = if report.passed {
        Exit::Ok
    } else {
        Exit::Violation
    };
    let result = ContractResult {
        symmetric_rate: compare_to_ch_bound(report.eta_a.value.min(report.eta_b.value)),
        two_thirds: compare_to_ch_bound(2.0 / 3.0),
        report,
    };
    Ok((CommandResult::Contract(result), exit))
}

fn sweep(
    config: &ScenarioConfig,
    seed: u64,
    exec: &Executor,
) -> Result<(CommandResult, Exit), Failure> {
    let spec = config
        .sweep
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("sweep needs a \"sweep\" section".into()))?;
    let curve = accuracy_success_sweep(&spec.ks, config.trials, seed, spec.settings, exec)?;
    if let Some(path) = &config.outputs.csv {
        write_csv(path, |w| write_sweep_csv(&curve, w))?;
    }
    Ok((CommandResult::Sweep(curve), Exit::Ok))
}

fn audit(config: &ScenarioConfig, seed: u64) -> Result<(CommandResult, Exit), Failure> {
    let model = config.model.build()?;
    let settings = config
        .settings
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("audit-locality needs settings".into()))?;
    let (a, b1, b2) = settings.audit()?;
    let passed = locality_audit(model.as_ref(), config.trials, seed, &a, &b1, &b2);
    let exit = if passed { Exit::Ok } else { Exit::Violation };
    Ok((
        CommandResult::AuditLocality(AuditResult {
            model: model.name(),
            n: config.trials,
            a,
            b1,
            b2,
            passed,
        }),
        exit,
    ))
}
