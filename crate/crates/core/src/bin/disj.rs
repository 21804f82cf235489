use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use disj_core::dist::{
    generate, info_report, seeded_stream, Dist, Generated, GeneratorSpec, JointDist,
};
use disj_core::harness::{
    evaluate_exact, evaluate_joint_exact, evaluate_joint_sampled, evaluate_sampled, lemma_battery,
    sweep, ExperimentConfig,
};
use disj_core::protocol::{ProtocolParams, SAMPLED_RETRIES};
use disj_core::rectangle::{extract_exact, extract_sampled, verify_witness};
use disj_core::substate::{find_threshold, truncate, BoundedMiProtocol, WrapperMode};
use disj_core::{Error, GroundSet, Protocol, Result, SubsetMask};

#[derive(Parser)]
#[command(
    name = "disj",
    version,
    about = "Distributional protocols for set disjointness"
)]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExtractArg {
    Exact,
    Sampled,
}

#[derive(Clone, Copy, ValueEnum)]
enum MiMode {
    Measured,
    PaperConstants,
}

impl From<MiMode> for WrapperMode {
    fn from(m: MiMode) -> WrapperMode {
        match m {
            MiMode::Measured => WrapperMode::Measured,
            MiMode::PaperConstants => WrapperMode::PaperConstants,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a distribution (or a joint, for correlated mixtures) from a JSON spec.
    GenDist {
        /// Inline JSON, or a path to a JSON file.
        spec: String,
    },
    /// Mutual information, I_inf and optional TV distance of a joint.
    Info {
        joint: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Extract an all-disjoint rectangle from two marginals.
    Extract {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value = "exact")]
        mode: ExtractArg,
    },
    /// Run the protocol on one input pair.
    Run {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        alice: SubsetMask,
        #[arg(long)]
        bob: SubsetMask,
        #[arg(long = "C", default_value_t = 2.0)]
        c: f64,
    },
    /// Error and cost of the protocol over a product distribution.
    Eval {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        eps: f64,
        /// Sampled evaluation with this many pairs; exact when absent.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long = "C", default_value_t = 2.0)]
        c: f64,
    },
    /// Evaluate a grid of (eps, n, family) cells and write CSV.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        keep_going: bool,
    },
    /// Truncate a joint to bounded max-divergence.
    Substate {
        joint: PathBuf,
        /// Fixed threshold in bits; chosen from --tv-target when absent.
        #[arg(long)]
        c: Option<f64>,
        #[arg(long, default_value_t = 0.125)]
        tv_target: f64,
    },
    /// Run the bounded-information wrapper on a correlated joint.
    RunMi {
        joint: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value = "measured")]
        mode: MiMode,
        /// Run one pair; otherwise evaluate over the joint.
        #[arg(long, requires = "bob")]
        alice: Option<SubsetMask>,
        #[arg(long)]
        bob: Option<SubsetMask>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long = "C", default_value_t = 2.0)]
        c: f64,
    },
    /// Random rectangle-extraction battery with witness verification.
    VerifyLemma {
        #[arg(long, default_value_t = 12)]
        n: u32,
        #[arg(long, default_value_t = 0.125)]
        eps: f64,
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: &Option<PathBuf>, v: &T) -> Result<()> {
    emit(out, &(serde_json::to_string_pretty(v)? + "\n"))
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let out = &cli.out;
    match cli.cmd {
        Cmd::GenDist { spec } => {
            let text = if Path::new(&spec).is_file() {
                fs::read_to_string(&spec)?
            } else {
                spec
            };
            let spec: GeneratorSpec = serde_json::from_str(&text)?;
            match generate(&spec, &mut seeded_stream(seed, 0))? {
                Generated::Dist(d) => emit_json(out, &d),
                Generated::Joint(j) => emit_json(out, &j),
            }
        }
        Cmd::Info { joint, reference } => {
            let j: JointDist = read_json(&joint)?;
            let r: Option<JointDist> = reference.as_deref().map(read_json).transpose()?;
            emit_json(out, &info_report(&j, r.as_ref())?)
        }
        Cmd::Extract { a, b, eps, mode } => {
            let (da, db): (Dist, Dist) = (read_json(&a)?, read_json(&b)?);
            let x = GroundSet::full(da.n())?;
            let w = match mode {
                ExtractArg::Exact => extract_exact(&da, &db, eps, &x)?,
                ExtractArg::Sampled => extract_sampled(
                    &da,
                    &db,
                    eps,
                    &x,
                    &mut seeded_stream(seed, 0),
                    SAMPLED_RETRIES,
                )?
                .ok_or_else(|| Error::InvalidParameter("no retries".into()))?,
            };
            let report = verify_witness(&da, &db, &w, &x);
            emit_json(
                out,
                &serde_json::json!({ "witness": w, "verification": report, "ok": report.ok() }),
            )
        }
        Cmd::Run {
            a,
            b,
            eps,
            alice,
            bob,
            c,
        } => {
            let p = Protocol::new(
                read_json(&a)?,
                read_json(&b)?,
                ProtocolParams { eps, seed, c },
            )?;
            let o = p.run_protocol(alice, bob)?;
            emit_json(out, &o)
        }
        Cmd::Eval {
            a,
            b,
            eps,
            samples,
            c,
        } => {
            let (da, db): (Dist, Dist) = (read_json(&a)?, read_json(&b)?);
            let params = ProtocolParams { eps, seed, c };
            let rep = match samples {
                Some(s) => evaluate_sampled(&da, &db, params, s)?,
                None => evaluate_exact(&da, &db, params)?,
            };
            emit_json(out, &rep)
        }
        Cmd::Sweep { config, keep_going } => {
            let mut cfg: ExperimentConfig = read_json(&config)?;
            cfg.keep_going |= keep_going;
            let target = out.clone().or_else(|| cfg.out.clone());
            emit(&target, &sweep(&cfg)?.csv)
        }
        Cmd::Substate {
            joint,
            c,
            tv_target,
        } => {
            let j: JointDist = read_json(&joint)?;
            let c = match c {
                Some(c) => c,
                None => find_threshold(&j, tv_target)?.c,
            };
            emit_json(out, &truncate(&j, c)?)
        }
        Cmd::RunMi {
            joint,
            eps,
            mode,
            alice,
            bob,
            samples,
            c,
        } => {
            let j: JointDist = read_json(&joint)?;
            let w = BoundedMiProtocol::new(&j, eps, seed, mode.into(), c)?;
            let summary = serde_json::json!({
                "eps": w.eps,
                "eps_prime": w.eps_prime,
                "threshold": w.choice,
                "tv": w.truncation.tv,
                "i_inf_nu": w.truncation.i_inf_nu,
            });
            let result = match (alice, bob, samples) {
                (Some(a), Some(b), _) => serde_json::to_value(w.run(a, b)?)?,
                (_, _, Some(s)) => serde_json::to_value(evaluate_joint_sampled(&w, &j, s, seed)?)?,
                _ => serde_json::to_value(evaluate_joint_exact(&w, &j)?)?,
            };
            emit_json(
                out,
                &serde_json::json!({ "wrapper": summary, "result": result }),
            )
        }
        Cmd::VerifyLemma { n, eps, instances } => {
            emit_json(out, &lemma_battery(n, eps, instances, seed)?)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::GuardViolation { .. } => 3,
        Error::InvalidParameter(_)
        | Error::EpsOutOfRange { .. }
        | Error::ParseMask(_)
        | Error::Json(_)
        | Error::Io(_)
        | Error::GroundSetSize(_)
        | Error::InvalidDist(_)
        | Error::SizeMismatch(..) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::GuardViolation { .. } = e {
                eprintln!("hint: use sampled evaluation for large supports");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
