//! Command-line driver. `run` never panics on malformed input and maps
//! outcomes to exit codes: 0 pass, 1 check failure, 2 input error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bell::{self, CorrelationTable, OperatorDoc, ScenarioDoc, SharedState};
use crate::error::{LqtError, Result};
use crate::qmath::{ComplexMatrix, OP_TOL};
use crate::states_effects::{compose_effects, compose_states, LqtEffect, LqtState};
use crate::theory::{qmap, ElementaryLabel, LatentConfig, LatentStateSpec, SystemString};
use crate::transforms::ParMutation;
use crate::verify::{run_negative_controls, run_suite, CheckReport, ControlReport, TheoryUnderTest};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "latentq", version, about = "Latent quantum theory simulator and axiom checker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Numerical tolerance for pass/fail decisions.
    #[arg(long, global = true, env = "LATENTQ_TOL")]
    pub tol: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the randomized axiom suite on a theory.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the trial count from the config.
        #[arg(long)]
        trials: Option<usize>,
        /// Also run the rule-mutation controls; each must be detected.
        #[arg(long)]
        controls: bool,
    },
    /// Latent and plain quantum correlation tables of a scenario.
    Bell {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Span of product effects and a local-tomography violation witness.
    Tomography {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated label names, e.g. `Q,Q`.
        #[arg(long, value_delimiter = ',', required = true)]
        system: Vec<String>,
    },
    /// Parallel composition of state or effect literals.
    Compose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        parts: PathBuf,
    },
}

// ---- config documents ----

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    pub theory: TheoryDoc,
    #[serde(default)]
    pub verify: VerifyDoc,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryDoc {
    /// Label name → dimension.
    pub labels: BTreeMap<String, usize>,
    #[serde(default)]
    pub default_latent_dim: Option<usize>,
    #[serde(default = "default_state")]
    pub default_latent_state: LatentStateSpec,
    #[serde(default)]
    pub pairs: Vec<PairDoc>,
}

fn default_state() -> LatentStateSpec {
    LatentStateSpec::pure_basis0()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairDoc {
    pub labels: [String; 2],
    pub dim: usize,
    #[serde(default = "default_state")]
    pub state: LatentStateSpec,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyDoc {
    #[serde(default)]
    pub mutation: Option<ParMutation>,
    /// Ancilla systems as label lists; ε is always included.
    #[serde(default)]
    pub ancilla_pool: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub trials: Option<usize>,
}

impl TheoryDoc {
    pub fn build(&self) -> Result<LatentConfig> {
        let labels =
            self.labels.iter().map(|(n, &d)| ElementaryLabel::new(n.clone(), d)).collect::<Result<Vec<_>>>()?;
        let mut cfg = LatentConfig::new(&labels, self.default_latent_dim, &self.default_latent_state)?;
        for p in &self.pairs {
            cfg = cfg.with_pair(&p.labels[0], &p.labels[1], p.dim, &p.state)?;
        }
        Ok(cfg)
    }
}

fn names(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

/// Reads and parses a JSON document; every failure is an input error.
fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> std::result::Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

// ---- reports ----

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub command: &'static str,
    pub seed: u64,
    pub tolerance: f64,
    pub trials: usize,
    pub mutation: Option<ParMutation>,
    pub ancilla_pool: Vec<String>,
    pub checks: Vec<CheckReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<ControlReport>>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BellReport {
    pub command: &'static str,
    pub scenario: Option<String>,
    pub seed: u64,
    pub tolerance: f64,
    pub lqt: CorrelationTable,
    pub qt: CorrelationTable,
    pub max_deviation: f64,
    pub chsh: Option<f64>,
    /// Present for product-form preparations.
    pub structure: Option<CheckReport>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessReport {
    pub state1: ComplexMatrix,
    pub state2: ComplexMatrix,
    pub product_stat_deviation: f64,
    pub trace_distance: f64,
    pub distinguishing_povm: Vec<ComplexMatrix>,
    pub success_prob: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TomographyReport {
    pub command: &'static str,
    pub seed: u64,
    pub system: String,
    pub span: usize,
    pub ambient: usize,
    pub deficit: usize,
    pub witness: Option<WitnessReport>,
    pub witness_success: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComposeReport {
    pub command: &'static str,
    pub seed: u64,
    pub kind: PartKind,
    pub system: String,
    pub dim: usize,
    pub operator: ComplexMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartKind {
    State,
    Effect,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartsDoc {
    pub kind: PartKind,
    pub parts: Vec<PartDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartDoc {
    pub system: Vec<String>,
    pub op: OperatorDoc,
}

/// What a command produced: the report text and whether its checks passed.
struct Outcome {
    text: String,
    pass: bool,
}

enum Failure {
    Input(String),
}

impl From<LqtError> for Failure {
    fn from(e: LqtError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<String> for Failure {
    fn from(e: String) -> Self {
        Failure::Input(e)
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn tolerance(cli: &Cli) -> std::result::Result<f64, Failure> {
    match cli.tol {
        Some(t) if !(t.is_finite() && t > 0.0) => Err(Failure::Input(format!("tolerance must be positive, got {t}"))),
        Some(t) => Ok(t),
        None => Ok(OP_TOL),
    }
}

fn cmd_verify(
    cli: &Cli,
    config: &Path,
    trials: Option<usize>,
    controls: bool,
) -> std::result::Result<Outcome, Failure> {
    let doc: ConfigDoc = load(config)?;
    let cfg = doc.theory.build()?;
    let tol = tolerance(cli)?;
    let tut = match &doc.verify.ancilla_pool {
        Some(pool) => {
            let pool = pool.iter().map(|p| cfg.system(&names(p))).collect::<Result<Vec<_>>>()?;
            TheoryUnderTest::new(cfg, pool, cli.seed)
        }
        None => TheoryUnderTest::with_default_pool(cfg, cli.seed),
    };
    let trials = trials.or(doc.verify.trials).unwrap_or(tut.trials);
    if trials == 0 {
        return Err(Failure::Input("trials must be at least 1".into()));
    }
    let tut = tut.with_trials(trials).with_tolerance(tol).with_mutation(doc.verify.mutation);
    let checks = run_suite(&tut)?;
    let controls = if controls { Some(run_negative_controls(&tut.clone().with_mutation(None), trials)?) } else { None };
    let pass = checks.iter().all(|c| c.pass) && controls.as_ref().is_none_or(|cs| cs.iter().all(|c| c.detected));
    let report = VerifyReport {
        command: "verify",
        seed: cli.seed,
        tolerance: tol,
        trials,
        mutation: tut.mutation,
        ancilla_pool: tut.ancilla_pool.iter().map(|s| s.to_string()).collect(),
        checks,
        controls,
        pass,
    };
    let text = match cli.format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let mut s = String::from("check,trials,max_deviation,tolerance,pass\n");
            for c in &report.checks {
                s.push_str(&format!(
                    "{},{},{:.6e},{:e},{}\n",
                    c.check_name, c.trials, c.max_deviation, c.tolerance, c.pass
                ));
            }
            s
        }
    };
    Ok(Outcome { text, pass })
}

fn cmd_bell(cli: &Cli, config: &Path, scenario: &Path) -> std::result::Result<Outcome, Failure> {
    let doc: ConfigDoc = load(config)?;
    let cfg = doc.theory.build()?;
    let tol = tolerance(cli)?;
    let sdoc: ScenarioDoc = load(scenario)?;
    let s = sdoc.build(&cfg)?;
    let lqt = bell::correlations_lqt(&s, &cfg)?;
    let (rho, _) = bell::to_qt_state(&s, &cfg)?;
    let effects: Vec<Vec<Vec<ComplexMatrix>>> = s
        .parties()
        .iter()
        .map(|p| p.settings.iter().map(|m| m.outcomes().iter().map(|e| e.op().clone()).collect()).collect())
        .collect();
    let qt = bell::correlations_qt(&rho, &effects)?;
    let max_deviation = lqt.max_abs_diff(&qt)?;
    let chsh = bell::chsh_value(&lqt).ok();
    let structure = match s.shared() {
        SharedState::Products(_) => Some(bell::check_scenario_structure(&s, &cfg, tol)?),
        SharedState::Joint(_) => None,
    };
    let pass = max_deviation < tol && structure.as_ref().is_none_or(|r| r.pass);
    let report = BellReport {
        command: "bell",
        scenario: sdoc.name.clone(),
        seed: cli.seed,
        tolerance: tol,
        lqt,
        qt,
        max_deviation,
        chsh,
        structure,
        pass,
    };
    let text = match cli.format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let n = report.lqt.rows.first().map_or(0, |r| r.settings.len());
            let mut header: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
            header.extend((0..n).map(|i| format!("a{i}")));
            header.extend(["p_lqt".to_string(), "p_qt".to_string()]);
            let mut s = header.join(",") + "\n";
            for (a, b) in report.lqt.rows.iter().zip(&report.qt.rows) {
                let idx: Vec<String> = a.settings.iter().chain(&a.outcomes).map(|v| v.to_string()).collect();
                s.push_str(&format!("{},{:.15e},{:.15e}\n", idx.join(","), a.probability, b.probability));
            }
            s
        }
    };
    Ok(Outcome { text, pass })
}

fn cmd_tomography(cli: &Cli, config: &Path, system: &[String]) -> std::result::Result<Outcome, Failure> {
    if cli.format == Format::Csv {
        return Err(Failure::Input("tomography reports are JSON only".into()));
    }
    let doc: ConfigDoc = load(config)?;
    let cfg = doc.theory.build()?;
    let sys = cfg.system(&names(system))?;
    let span = bell::tomography_span(&sys, &cfg)?;
    let witness = bell::tomography_violation_witness(&cfg)?.map(|w| WitnessReport {
        state1: w.state1.op().clone(),
        state2: w.state2.op().clone(),
        product_stat_deviation: w.product_stat_deviation,
        trace_distance: w.trace_distance,
        distinguishing_povm: w.distinguishing_povm.outcomes().iter().map(|e| e.op().clone()).collect(),
        success_prob: w.success_prob,
    });
    let report = TomographyReport {
        command: "tomography",
        seed: cli.seed,
        system: sys.to_string(),
        span: span.span,
        ambient: span.ambient,
        deficit: span.deficit(),
        witness_success: witness.as_ref().map(|w| w.success_prob),
        witness,
    };
    Ok(Outcome { text: to_json(&report), pass: true })
}

fn cmd_compose(cli: &Cli, config: &Path, parts: &Path) -> std::result::Result<Outcome, Failure> {
    if cli.format == Format::Csv {
        return Err(Failure::Input("compose prints JSON only".into()));
    }
    let doc: ConfigDoc = load(config)?;
    let cfg = doc.theory.build()?;
    let pdoc: PartsDoc = load(parts)?;
    if pdoc.parts.is_empty() {
        return Err(Failure::Input("nothing to compose".into()));
    }
    let mut resolved: Vec<(SystemString, ComplexMatrix)> = Vec::new();
    for p in &pdoc.parts {
        let s = cfg.system(&names(&p.system))?;
        let d = qmap(&s, &cfg)?.total_dim;
        resolved.push((s, p.op.resolve(d)?));
    }
    let (system, operator) = match pdoc.kind {
        PartKind::State => {
            let states = resolved.into_iter().map(|(s, m)| LqtState::new(s, m, &cfg)).collect::<Result<Vec<_>>>()?;
            let c = compose_states(&states, &cfg)?;
            (c.system().clone(), c.op().clone())
        }
        PartKind::Effect => {
            let effects = resolved.into_iter().map(|(s, m)| LqtEffect::new(s, m, &cfg)).collect::<Result<Vec<_>>>()?;
            let c = compose_effects(&effects, &cfg)?;
            (c.system().clone(), c.op().clone())
        }
    };
    let report = ComposeReport {
        command: "compose",
        seed: cli.seed,
        kind: pdoc.kind,
        system: system.to_string(),
        dim: operator.rows(),
        operator,
    };
    Ok(Outcome { text: to_json(&report), pass: true })
}

/// Parses `args` (including the program name) and runs one command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    let result = match &cli.command {
        Command::Verify { config, trials, controls } => cmd_verify(&cli, config, *trials, *controls),
        Command::Bell { config, scenario } => cmd_bell(&cli, config, scenario),
        Command::Tomography { config, system } => cmd_tomography(&cli, config, system),
        Command::Compose { config, parts } => cmd_compose(&cli, config, parts),
    };
    match result {
        Ok(outcome) => {
            let written = match &cli.out {
                Some(path) => {
                    std::fs::write(path, &outcome.text).map_err(|e| format!("cannot write {}: {e}", path.display()))
                }
                None => stdout.write_all(outcome.text.as_bytes()).map_err(|e| e.to_string()),
            };
            if let Err(e) = written {
                let _ = writeln!(stderr, "error: {e}");
                return EXIT_INPUT;
            }
            if outcome.pass {
                EXIT_PASS
            } else {
                let _ = writeln!(stderr, "checks failed");
                EXIT_FAIL
            }
        }
        Err(Failure::Input(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_INPUT
        }
    }
}
