//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 instance above
//! the enumeration cap, 4 unichain/aperiodicity failure.

pub mod instance;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::LocalityError;
use crate::influence::{
    action_supremum_baseline, logit_lipschitz, softmax_pi_bound, InfluenceReport,
};
use crate::lpi::{lpi_iterate, LpiTrace};
use crate::mdp::{
    induced_kernel, policy_reward, FactoredMdp, Policy, ValidationReport, DEFAULT_CAP,
};
use crate::measures::NonnegMatrix;
use crate::poisson::{
    discounted_rate, required_radius, solve_poisson, LocalityCertificate, PoissonSolution,
};
use crate::scenarios::{
    random_instance_with, scenario_hub_spoke, scenario_leader_follower, scenario_sleepy,
    RandomConfig,
};

use instance::InstanceFile;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const ORIENTATION: &str = "row j, column i: influence of coordinate i on coordinate j";

#[derive(Debug, Parser)]
#[command(
    name = "locality",
    version,
    about = "Locality certificates for factored multi-agent MDPs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Instance file, or `-` for standard input.
    pub instance: PathBuf,
    /// Report destination; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Maximum `|S|^2 * |A|` kernel evaluations.
    #[arg(long, env = "LOCALITY_CAP", default_value_t = DEFAULT_CAP)]
    pub cap: u128,
    /// Recorded in the report provenance.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sensitivity matrices, exact interdependence, and the action-supremum baseline.
    Influence {
        #[command(flatten)]
        common: Common,
        /// Also write every matrix as CSV into this directory.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Truncated certificate, surrogate value, and bias bounds.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        kappa: usize,
    },
    /// Oracle localized policy improvement trace.
    Lpi {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        kappa: usize,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 3)]
        iters: usize,
    },
    /// Emit a built-in example as an instance file.
    Scenario {
        /// `sleepy`, `leader-follower`, `hub-spoke`, or `random`.
        name: String,
        /// Parameters as `key=value`.
        params: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Discounted decay rate and the truncation radius it needs.
    Radius {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<LocalityError> for Failure {
    fn from(e: LocalityError) -> Self {
        let code = if e.is_irreducibility() {
            4
        } else if matches!(e.root(), LocalityError::CapExceeded { .. }) {
            3
        } else {
            2
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub input_sha256: Option<String>,
    pub tool_version: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub schema_version: u32,
    pub command: String,
    pub orientation: &'static str,
    pub provenance: Provenance,
    pub result: T,
}

#[derive(Debug, Serialize)]
pub struct InfluenceOutput {
    pub influence: InfluenceReport,
    pub action_supremum_baseline: NonnegMatrix,
    pub baseline_inf_norm: f64,
    pub logit_lipschitz: Option<NonnegMatrix>,
    pub softmax_pi_bound: Option<NonnegMatrix>,
}

#[derive(Debug, Serialize)]
pub struct DecayRow {
    pub kappa: usize,
    pub cert: Vec<f64>,
    pub bias_bound: Option<f64>,
    pub cert_gap_bound: Option<f64>,
    /// `inf_c ‖ĥ_κ - h - c‖_∞` against the exact solution.
    pub measured_bias: f64,
}

#[derive(Debug, Serialize)]
pub struct PoissonSummary {
    pub rbar: f64,
    pub residual: f64,
    pub h: Vec<f64>,
    pub d: Vec<f64>,
}

impl From<&PoissonSolution> for PoissonSummary {
    fn from(s: &PoissonSolution) -> Self {
        Self {
            rbar: s.rbar,
            residual: s.residual,
            h: s.h.0.clone(),
            d: s.d.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CertifyOutput {
    pub rho: f64,
    pub certified: bool,
    pub h_matrix: NonnegMatrix,
    pub certificate: LocalityCertificate,
    pub poisson: PoissonSummary,
    pub decay_table: Vec<DecayRow>,
}

#[derive(Debug, Serialize)]
pub struct RadiusOutput {
    pub gamma: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub lambda: f64,
    /// `ln ε / ln λ` before rounding up.
    pub real_solution: Option<f64>,
    pub kappa: Option<u64>,
    pub note: String,
}

fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    if path.as_os_str() == "-" {
        let mut buf = Vec::new();
        std::io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| Failure::input(format!("reading standard input: {e}")))?;
        Ok(buf)
    } else {
        fs::read(path).map_err(|e| Failure::input(format!("reading {}: {e}", path.display())))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, format!("{text}\n"))
            .map_err(|e| Failure::input(format!("writing {}: {e}", p.display()))),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}").and_then(|()| stdout.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(Failure::input(format!("writing standard output: {e}")))
                }
                _ => Ok(()),
            }
        }
    }
}

fn emit<T: Serialize>(
    command: &str,
    input_sha256: Option<String>,
    seed: Option<u64>,
    result: T,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        command: command.into(),
        orientation: ORIENTATION,
        provenance: Provenance {
            input_sha256,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
        },
        result,
    };
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Failure::input(format!("serializing report: {e}")))?;
    write_output(out, &text)
}

/// Parses, checks the cap, builds, and validates an instance.
fn load(common: &Common) -> Result<(FactoredMdp, Policy, String), Failure> {
    let bytes = read_input(&common.instance)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Failure::input(format!("instance is not UTF-8: {e}")))?;
    let file = InstanceFile::from_json(text)
        .map_err(|e| Failure::input(format!("malformed instance: {e}")))?;
    let evaluations = file.evaluations();
    if evaluations > common.cap {
        return Err(LocalityError::CapExceeded {
            evaluations,
            cap: common.cap,
        }
        .into());
    }
    let (mdp, policy) = file.build()?;
    let mdp = mdp.with_cap(common.cap);
    let report: ValidationReport = mdp.validate();
    if !report.is_clean() {
        let listing = serde_json::to_string(&report.violations).unwrap_or_default();
        return Err(Failure::input(format!(
            "instance failed validation: {listing}"
        )));
    }
    Ok((mdp, policy, sha256_hex(&bytes)))
}

fn write_csv(dir: &Path, name: &str, m: &NonnegMatrix) -> Result<(), Failure> {
    let io = |e: csv::Error| Failure::input(format!("writing {name}.csv: {e}"));
    let mut w = csv::Writer::from_path(dir.join(format!("{name}.csv"))).map_err(io)?;
    let header: Vec<String> = (0..m.dim()).map(|i| format!("from_{i}")).collect();
    w.write_record(std::iter::once("to".to_string()).chain(header))
        .map_err(io)?;
    for (j, row) in m.rows().iter().enumerate() {
        w.write_record(std::iter::once(j.to_string()).chain(row.iter().map(|v| v.to_string())))
            .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Failure::input(format!("writing {name}.csv: {e}")))
}

fn cmd_influence(common: &Common, csv_dir: Option<&Path>) -> Result<(), Failure> {
    let (mdp, policy, hash) = load(common)?;
    let pi = policy.materialize()?;
    let influence = InfluenceReport::compute(&mdp, &pi)?;
    let baseline = action_supremum_baseline(&mdp)?;
    let (l, bound) = match policy.softmax() {
        Some(sp) => {
            let l = logit_lipschitz(sp, &mdp)?;
            let b = softmax_pi_bound(&l, sp.temperature)?;
            (Some(l.l), Some(b))
        }
        None => (None, None),
    };
    if let Some(dir) = csv_dir {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::input(format!("creating {}: {e}", dir.display())))?;
        for (name, m) in [
            ("e_s", &influence.e_s),
            ("e_a", &influence.e_a),
            ("pi", &influence.pi),
            ("c", &influence.c),
            ("h", &influence.h),
            ("baseline", &baseline),
        ] {
            write_csv(dir, name, m)?;
        }
    }
    let output = InfluenceOutput {
        baseline_inf_norm: baseline.inf_norm(),
        influence,
        action_supremum_baseline: baseline,
        logit_lipschitz: l,
        softmax_pi_bound: bound,
    };
    emit(
        "influence",
        Some(hash),
        common.seed,
        output,
        common.out.as_deref(),
    )
}

fn cmd_certify(common: &Common, kappa: usize) -> Result<(), Failure> {
    let (mdp, policy, hash) = load(common)?;
    let pi = policy.materialize()?;
    let report = InfluenceReport::compute(&mdp, &pi)?;
    let kernel = induced_kernel(&mdp, &pi)?;
    let r_pi = policy_reward(&mdp, &pi)?;
    let sol = solve_poisson(&kernel, &r_pi)?;
    let mut decay_table = Vec::with_capacity(kappa + 1);
    let mut last = None;
    for k in 0..=kappa {
        let c = LocalityCertificate::from_parts(
            mdp.states(),
            &kernel,
            &report.h,
            report.rho,
            &r_pi,
            sol.rbar,
            k,
        )?;
        decay_table.push(DecayRow {
            kappa: k,
            cert: c.cert.0.clone(),
            bias_bound: c.bias_bound,
            cert_gap_bound: c.cert_gap_bound,
            measured_bias: c.h_hat.aligned_distance(&sol.h),
        });
        last = Some(c);
    }
    let certificate = last.expect("at least one radius");
    let output = CertifyOutput {
        rho: report.rho,
        certified: certificate.certified,
        h_matrix: report.h,
        poisson: PoissonSummary::from(&sol),
        certificate,
        decay_table,
    };
    emit(
        "certify",
        Some(hash),
        common.seed,
        output,
        common.out.as_deref(),
    )
}

fn cmd_lpi(common: &Common, kappa: usize, tau: f64, iters: usize) -> Result<(), Failure> {
    if iters == 0 {
        return Err(Failure::input("--iters must be at least 1"));
    }
    let (mdp, policy, hash) = load(common)?;
    let pi = policy.materialize()?;
    let trace: LpiTrace = lpi_iterate(&mdp, &pi, kappa, tau, iters)?;
    emit("lpi", Some(hash), common.seed, trace, common.out.as_deref())
}

fn parse_params(params: &[String]) -> Result<BTreeMap<String, String>, Failure> {
    params
        .iter()
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Failure::input(format!("parameter `{p}` is not key=value")))
        })
        .collect()
}

struct Params(BTreeMap<String, String>);

impl Params {
    fn take<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, Failure> {
        match self.0.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Failure::input(format!("cannot parse {key}={v}"))),
        }
    }

    fn finish(self) -> Result<(), Failure> {
        match self.0.keys().next() {
            Some(k) => Err(Failure::input(format!("unknown parameter `{k}`"))),
            None => Ok(()),
        }
    }
}

fn cmd_scenario(
    name: &str,
    params: &[String],
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let mut p = Params(parse_params(params)?);
    let scenario = match name {
        "sleepy" => {
            let alpha = p.take("alpha", 0.3)?;
            p.finish()?;
            scenario_sleepy(alpha)?
        }
        "leader-follower" => {
            p.finish()?;
            scenario_leader_follower()?
        }
        "hub-spoke" => {
            let n = p.take("n", 3usize)?;
            let beta = p.take("beta", 1.0)?;
            let tau = p.take("tau", 2.0)?;
            p.finish()?;
            scenario_hub_spoke(n, beta, tau)?
        }
        "random" => {
            let mut cfg = RandomConfig::new(
                seed.unwrap_or(0),
                p.take("n", 3usize)?,
                p.take("state_size", 2usize)?,
                p.take("action_size", 2usize)?,
                p.take("radius", 1usize)?,
            );
            cfg.coupling = p.take("coupling", 1.0)?;
            cfg.temperature = p.take("temperature", 1.0)?;
            p.finish()?;
            random_instance_with(&cfg)?
        }
        other => return Err(Failure::input(format!("unknown scenario `{other}`"))),
    };
    write_output(out, &InstanceFile::from_scenario(&scenario).to_json())
}

fn cmd_radius(gamma: f64, rho: f64, epsilon: f64, out: Option<&Path>) -> Result<(), Failure> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Failure::input(format!("epsilon {epsilon} outside (0, 1)")));
    }
    let lambda = discounted_rate(gamma, rho)?;
    let (real_solution, kappa, note) = if lambda == 0.0 {
        (
            None,
            Some(1),
            "lambda = 0: one step already suffices".to_string(),
        )
    } else if lambda >= 1.0 {
        (None, None, "lambda >= 1: no finite radius".to_string())
    } else {
        let k = required_radius(lambda, epsilon)?;
        let real = epsilon.ln() / lambda.ln();
        let note = if (real.round() - real).abs() > 1e-9 && real.round() < k as f64 {
            format!(
                "smallest integer radius; rounding the real solution {real:.3} to nearest gives {}",
                real.round()
            )
        } else {
            "smallest integer radius".to_string()
        };
        (Some(real), Some(k), note)
    };
    let output = RadiusOutput {
        gamma,
        rho,
        epsilon,
        lambda,
        real_solution,
        kappa,
        note,
    };
    emit("radius", None, None, output, out)
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Influence { common, csv } => cmd_influence(&common, csv.as_deref()),
        Command::Certify { common, kappa } => cmd_certify(&common, kappa),
        Command::Lpi {
            common,
            kappa,
            tau,
            iters,
        } => cmd_lpi(&common, kappa, tau, iters),
        Command::Scenario {
            name,
            params,
            seed,
            out,
        } => cmd_scenario(&name, &params, seed, out.as_deref()),
        Command::Radius {
            gamma,
            rho,
            epsilon,
            out,
        } => cmd_radius(gamma, rho, epsilon, out.as_deref()),
    }
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
