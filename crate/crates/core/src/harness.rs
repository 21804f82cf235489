//! Evaluation, sweeps and reporting.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{disjoint_probability, generate, seeded_stream, Dist, GeneratorSpec, JointDist};
use crate::error::{Error, Result};
use crate::protocol::{LevelExit, Protocol, ProtocolParams, RunOutcome};
use crate::rectangle::{
    bound_a, bound_b, expected_b_measure_closed, expected_b_measure_enumerated, extract_exact,
    lemma_ell, verify_witness,
};
use crate::sets::{GroundSet, SubsetMask};
use crate::substate::BoundedMiProtocol;

/// Largest support-pair count for exact evaluation.
pub const EXACT_GUARD: u128 = 1 << 26;

/// Two-sided 99% normal quantile.
const Z99: f64 = 2.575_829_303_548_901;

// stream tags
const TAG_SAMPLE_PAIRS: u64 = 0x5341_4d50;
const TAG_FAMILY: u64 = 0x4641_4d00;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Exact,
    Sampled { num_samples: usize },
}

/// One distribution family of a sweep; the ground-set size comes from the
/// sweep's `n_range`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FamilyKind {
    UniformAll,
    /// `k` defaults to `⌈√n⌉`.
    UniformKSubsets {
        #[serde(default)]
        k: Option<u32>,
    },
    RandomSparse {
        support: usize,
    },
    /// A single `p` for every element, or seeded `p_i ∈ [0.05, 0.5]` when absent.
    PerElementIndependent {
        #[serde(default)]
        p: Option<f64>,
    },
    /// Marginals read from two distribution files; `n` must match them.
    Files {
        a: PathBuf,
        b: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: FamilyKind,
}

impl FamilySpec {
    pub fn new(kind: FamilyKind) -> FamilySpec {
        FamilySpec { name: None, kind }
    }

    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.kind {
            FamilyKind::UniformAll => "uniform-all".into(),
            FamilyKind::UniformKSubsets { .. } => "uniform-k-subsets".into(),
            FamilyKind::RandomSparse { .. } => "random-sparse".into(),
            FamilyKind::PerElementIndependent { .. } => "per-element-independent".into(),
            FamilyKind::Files { .. } => "files".into(),
        }
    }

    /// Both marginals at ground-set size `n`; random families draw from
    /// streams keyed by `(seed, index, n)`.
    pub fn instantiate(&self, n: u32, seed: u64, index: usize) -> Result<(Dist, Dist)> {
        let tag = TAG_FAMILY ^ ((index as u64) << 32) ^ ((n as u64) << 8);
        let mut rng_a = seeded_stream(seed, tag);
        let mut rng_b = seeded_stream(seed, tag | 1);
        let spec = |rng: &mut dyn rand::RngCore| -> Result<GeneratorSpec> {
            Ok(match &self.kind {
                FamilyKind::UniformAll => GeneratorSpec::UniformAll { n },
                FamilyKind::UniformKSubsets { k } => GeneratorSpec::UniformKSubsets {
                    n,
                    k: k.unwrap_or_else(|| (n as f64).sqrt().ceil() as u32),
                },
                FamilyKind::RandomSparse { support } => GeneratorSpec::RandomSparse {
                    n,
                    support: *support,
                },
                FamilyKind::PerElementIndependent { p } => GeneratorSpec::PerElementIndependent {
                    n,
                    p: match p {
                        Some(q) => vec![*q; n as usize],
                        None => (0..n).map(|_| 0.05 + 0.45 * rng.random::<f64>()).collect(),
                    },
                },
                FamilyKind::Files { .. } => unreachable!(),
            })
        };
        if let FamilyKind::Files { a, b } = &self.kind {
            let da: Dist = serde_json::from_str(&std::fs::read_to_string(a)?)?;
            let db: Dist = serde_json::from_str(&std::fs::read_to_string(b)?)?;
            if da.n() != n || db.n() != n {
                return Err(Error::SizeMismatch(da.n(), n));
            }
            return Ok((da, db));
        }
        let sa = spec(&mut rng_a)?;
        let sb = spec(&mut rng_b)?;
        Ok((
            generate(&sa, &mut rng_a)?.into_dist()?,
            generate(&sb, &mut rng_b)?.into_dist()?,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsList {
    One(f64),
    Many(Vec<f64>),
}

impl EpsList {
    pub fn values(&self) -> Vec<f64> {
        match self {
            EpsList::One(e) => vec![*e],
            EpsList::Many(v) => v.clone(),
        }
    }
}

fn default_c() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub eps: EpsList,
    pub n_range: Vec<u32>,
    pub families: Vec<FamilySpec>,
    pub eval_mode: EvalMode,
    #[serde(rename = "C", default = "default_c")]
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub keep_going: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub weighted_error: f64,
    pub max_cost_bits: u64,
    /// Expected cost under the evaluation measure.
    pub mean_cost_bits: f64,
    /// Per-level exit counts over all evaluated pairs.
    pub stop_histogram: BTreeMap<String, u64>,
    pub pairs: u64,
    pub subprotocol_invocations: u64,
    pub exhausted_invocations: u64,
    /// Every recursion at least halved its ground set.
    pub halving_ok: bool,
    /// Longest schedule built, and whether every schedule stayed within its cap.
    pub max_schedule_steps: usize,
    pub schedules_within_cap: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence_half_width: Option<f64>,
    pub wall_time_secs: f64,
}

impl EvalReport {
    pub fn exhaustion_rate(&self) -> f64 {
        if self.subprotocol_invocations == 0 {
            0.0
        } else {
            self.exhausted_invocations as f64 / self.subprotocol_invocations as f64
        }
    }
}

#[derive(Default)]
struct Acc {
    error: f64,
    mass: f64,
    cost: f64,
    max_cost: u64,
    pairs: u64,
    invocations: u64,
    exhausted: u64,
    halving_ok: bool,
    hist: BTreeMap<&'static str, u64>,
}

impl Acc {
    fn new() -> Acc {
        Acc {
            halving_ok: true,
            ..Acc::default()
        }
    }

    fn add(&mut self, out: &RunOutcome, w: f64) {
        self.mass += w;
        if !out.correct {
            self.error += w;
        }
        self.cost += w * out.cost_bits as f64;
        self.max_cost = self.max_cost.max(out.cost_bits);
        self.pairs += 1;
        let mut prev: Option<SubsetMask> = None;
        for rec in &out.trace {
            *self.hist.entry(rec.exit.label()).or_insert(0) += 1;
            if rec.exit != LevelExit::BaseCase {
                self.invocations += 1;
            }
            if let LevelExit::NoYes {
                stop: crate::protocol::StopReason::Exhausted { .. },
            } = rec.exit
            {
                self.exhausted += 1;
            }
            if let Some(p) = prev {
                if rec.x.len() > p.len() / 2 || !rec.x.is_subset_of(p) {
                    self.halving_ok = false;
                }
            }
            prev = Some(rec.x);
        }
    }

    fn merge(mut self, o: Acc) -> Acc {
        self.error += o.error;
        self.mass += o.mass;
        self.cost += o.cost;
        self.max_cost = self.max_cost.max(o.max_cost);
        self.pairs += o.pairs;
        self.invocations += o.invocations;
        self.exhausted += o.exhausted;
        self.halving_ok &= o.halving_ok;
        for (k, v) in o.hist {
            *self.hist.entry(k).or_insert(0) += v;
        }
        self
    }

    fn report(self, protocol: &Protocol, start: Instant, half_width: Option<f64>) -> EvalReport {
        let levels = protocol.levels();
        EvalReport {
            weighted_error: (self.error / self.mass).clamp(0.0, 1.0),
            max_cost_bits: self.max_cost,
            mean_cost_bits: self.cost / self.mass,
            stop_histogram: self
                .hist
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            pairs: self.pairs,
            subprotocol_invocations: self.invocations,
            exhausted_invocations: self.exhausted,
            halving_ok: self.halving_ok,
            max_schedule_steps: levels
                .iter()
                .map(|l| l.schedule.steps.len())
                .max()
                .unwrap_or(0),
            schedules_within_cap: levels
                .iter()
                .all(|l| l.schedule.steps.len() as u64 <= l.schedule.t_cap),
            confidence_half_width: half_width,
            wall_time_secs: start.elapsed().as_secs_f64(),
        }
    }
}

/// Ordered merge of per-chunk accumulators, so float sums do not depend on
/// thread scheduling.
fn merge_ordered(parts: Vec<Result<Acc>>) -> Result<Acc> {
    parts
        .into_iter()
        .try_fold(Acc::new(), |acc, p| Ok(acc.merge(p?)))
}

fn check_guard(pairs: u128) -> Result<()> {
    if pairs > EXACT_GUARD {
        Err(Error::GuardViolation {
            pairs,
            guard: EXACT_GUARD,
        })
    } else {
        Ok(())
    }
}

/// Runs every support pair of `μ_A × μ_B` and sums `μ_A(a)·μ_B(b)` over
/// wrong answers.
pub fn evaluate_exact(mu_a: &Dist, mu_b: &Dist, params: ProtocolParams) -> Result<EvalReport> {
    let start = Instant::now();
    let protocol = Protocol::new(mu_a.clone(), mu_b.clone(), params)?;
    check_guard(mu_a.len() as u128 * mu_b.len() as u128)?;
    let parts: Vec<Result<Acc>> = mu_a
        .support()
        .par_iter()
        .map(|&(a, wa)| {
            let mut acc = Acc::new();
            for &(b, wb) in mu_b.support() {
                acc.add(&protocol.run_protocol_counting(a, b)?, wa * wb);
            }
            Ok(acc)
        })
        .collect();
    Ok(merge_ordered(parts)?.report(&protocol, start, None))
}

/// I.i.d. pairs from `μ_A × μ_B`; the error is a frequency with a 99%
/// normal-approximation half-width.
pub fn evaluate_sampled(
    mu_a: &Dist,
    mu_b: &Dist,
    params: ProtocolParams,
    num_samples: usize,
) -> Result<EvalReport> {
    if num_samples == 0 {
        return Err(Error::InvalidParameter(
            "num_samples must be at least 1".into(),
        ));
    }
    let start = Instant::now();
    let protocol = Protocol::new(mu_a.clone(), mu_b.clone(), params)?;
    let mut rng = seeded_stream(params.seed, TAG_SAMPLE_PAIRS);
    let pairs: Vec<(SubsetMask, SubsetMask)> = (0..num_samples)
        .map(|_| (mu_a.sample(&mut rng), mu_b.sample(&mut rng)))
        .collect();
    let acc = eval_pairs(&protocol, &pairs, |p, a, b| p.run_protocol_counting(a, b))?;
    let hw = binomial_half_width(acc.error / acc.mass, num_samples);
    Ok(acc.report(&protocol, start, Some(hw)))
}

fn eval_pairs(
    protocol: &Protocol,
    pairs: &[(SubsetMask, SubsetMask)],
    run: impl Fn(&Protocol, SubsetMask, SubsetMask) -> Result<RunOutcome> + Sync,
) -> Result<Acc> {
    let parts: Vec<Result<Acc>> = pairs
        .par_chunks(1024)
        .map(|chunk| {
            let mut acc = Acc::new();
            for &(a, b) in chunk {
                acc.add(&run(protocol, a, b)?, 1.0);
            }
            Ok(acc)
        })
        .collect();
    merge_ordered(parts)
}

pub fn binomial_half_width(p: f64, samples: usize) -> f64 {
    Z99 * (p * (1.0 - p) / samples as f64).sqrt()
}

/// Wrapper evaluation over a correlated `μ`: exact over `μ`'s support.
pub fn evaluate_joint_exact(wrapper: &BoundedMiProtocol, mu: &JointDist) -> Result<EvalReport> {
    check_guard(mu.len() as u128)?;
    let start = Instant::now();
    let p = &wrapper.protocol;
    let parts: Vec<Result<Acc>> = mu
        .support()
        .par_chunks(1024)
        .map(|chunk| {
            let mut acc = Acc::new();
            for &((a, b), w) in chunk {
                acc.add(&p.run_protocol_counting(a, b)?, w);
            }
            Ok(acc)
        })
        .collect();
    Ok(merge_ordered(parts)?.report(p, start, None))
}

/// Wrapper evaluation over i.i.d. samples from a correlated `μ`.
pub fn evaluate_joint_sampled(
    wrapper: &BoundedMiProtocol,
    mu: &JointDist,
    num_samples: usize,
    seed: u64,
) -> Result<EvalReport> {
    if num_samples == 0 {
        return Err(Error::InvalidParameter(
            "num_samples must be at least 1".into(),
        ));
    }
    let start = Instant::now();
    // inverse CDF over the joint support
    let mut cum = Vec::with_capacity(mu.len());
    let mut acc = 0.0;
    for &(_, w) in mu.support() {
        acc += w;
        cum.push(acc);
    }
    let mut rng = seeded_stream(seed, TAG_SAMPLE_PAIRS);
    let pairs: Vec<(SubsetMask, SubsetMask)> = (0..num_samples)
        .map(|_| {
            let r = rng.random::<f64>() * acc;
            let i = cum.partition_point(|&c| c <= r).min(mu.len() - 1);
            mu.support()[i].0
        })
        .collect();
    let res = eval_pairs(&wrapper.protocol, &pairs, |p, a, b| {
        p.run_protocol_counting(a, b)
    })?;
    let hw = binomial_half_width(res.error / res.mass, num_samples);
    Ok(res.report(&wrapper.protocol, start, Some(hw)))
}

/// Fixed 9-significant-digit rendering used in every CSV cell.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..9).contains(&mag) {
        let decimals = (8 - mag).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{:.8e}", x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: u32,
    pub eps: f64,
    pub family: String,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn scale(&self) -> f64 {
        (self.n as f64 * (1.0 / self.eps).log2()).sqrt()
    }
}

pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub csv: String,
}

pub const CSV_HEADER: [&str; 12] = [
    "n",
    "eps",
    "family",
    "weighted_error",
    "max_cost",
    "mean_cost",
    "sqrt_n_log",
    "cost_ratio",
    "exhaustion_rate",
    "halving_ok",
    "stop_histogram",
    "error",
];

/// Evaluates every `(eps, n, family)` cell and renders the CSV.
pub fn sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    let mut rows = Vec::new();
    for eps in config.eps.values() {
        for &n in &config.n_range {
            for (i, fam) in config.families.iter().enumerate() {
                let params = ProtocolParams {
                    eps,
                    seed: config.seed,
                    c: config.c,
                };
                let result = fam.instantiate(n, config.seed, i).and_then(|(da, db)| {
                    match config.eval_mode {
                        EvalMode::Exact => evaluate_exact(&da, &db, params),
                        EvalMode::Sampled { num_samples } => {
                            evaluate_sampled(&da, &db, params, num_samples)
                        }
                    }
                });
                let row = match result {
                    Ok(r) => SweepRow {
                        n,
                        eps,
                        family: fam.label(),
                        report: Some(r),
                        error: None,
                    },
                    Err(e) if config.keep_going => {
                        log::warn!(
                            "sweep cell n={n} eps={eps} family={} failed: {e}",
                            fam.label()
                        );
                        SweepRow {
                            n,
                            eps,
                            family: fam.label(),
                            report: None,
                            error: Some(e.to_string()),
                        }
                    }
                    Err(e) => return Err(e),
                };
                rows.push(row);
            }
        }
    }
    let csv = render_csv(config, &rows)?;
    Ok(SweepOutput { rows, csv })
}

fn render_csv(config: &ExperimentConfig, rows: &[SweepRow]) -> Result<String> {
    let mut meta = config.clone();
    meta.out = None;
    let mut out = format!("# {}\n", serde_json::to_string(&meta)?);
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        let rec: Vec<String> = match &r.report {
            Some(rep) => vec![
                r.n.to_string(),
                fmt_sig9(r.eps),
                r.family.clone(),
                fmt_sig9(rep.weighted_error),
                rep.max_cost_bits.to_string(),
                fmt_sig9(rep.mean_cost_bits),
                fmt_sig9(r.scale()),
                fmt_sig9(rep.max_cost_bits as f64 / r.scale()),
                fmt_sig9(rep.exhaustion_rate()),
                rep.halving_ok.to_string(),
                rep.stop_histogram
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(";"),
                String::new(),
            ],
            None => {
                let mut v = vec![r.n.to_string(), fmt_sig9(r.eps), r.family.clone()];
                v.extend(std::iter::repeat(String::new()).take(8));
                v.push(r.error.clone().unwrap_or_default());
                v
            }
        };
        w.write_record(&rec).map_err(csv_err)?;
    }
    out.push_str(
        &String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?)
            .expect("csv is utf-8"),
    );
    // fitted max_cost / √(n log₂ 1/eps), per family
    let mut fits: BTreeMap<&str, f64> = BTreeMap::new();
    for r in rows {
        if let Some(rep) = &r.report {
            let ratio = rep.max_cost_bits as f64 / r.scale();
            let e = fits.entry(r.family.as_str()).or_insert(0.0);
            *e = e.max(ratio);
        }
    }
    for (fam, ratio) in fits {
        out.push_str(&format!("# fit,{fam},{}\n", fmt_sig9(ratio)));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaInstance {
    pub disjoint_probability: f64,
    pub u: SubsetMask,
    pub measure_a: f64,
    pub measure_b: f64,
    pub bound_a: f64,
    pub bound_b: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaBatteryReport {
    pub n: u32,
    pub eps: f64,
    pub ell: u32,
    pub instances: Vec<LemmaInstance>,
    pub skipped_below_threshold: usize,
    pub all_ok: bool,
    /// Jensen step: min over instances of `E[μ_B(ℬ)] − P[disjoint]^ℓ`.
    pub jensen_min_slack: f64,
}

/// Random product instances satisfying the disjointness precondition, each
/// run through the exact extractor and the witness verifier.
pub fn lemma_battery(n: u32, eps: f64, instances: usize, seed: u64) -> Result<LemmaBatteryReport> {
    let ell = lemma_ell(n, eps)?;
    let x = GroundSet::full(n)?;
    let mut rng = seeded_stream(seed, 0x4c45_4d4d);
    let mut out = Vec::with_capacity(instances);
    let mut skipped = 0;
    let mut jensen_min_slack = f64::INFINITY;
    while out.len() < instances {
        let (da, db) = random_lemma_pair(n, &mut rng)?;
        let p = disjoint_probability(&da, &db)?;
        if p < eps {
            skipped += 1;
            continue;
        }
        let w = extract_exact(&da, &db, eps, &x)?;
        let rep = verify_witness(&da, &db, &w, &x);
        if da.len() <= 64 {
            let e = expected_b_measure_closed(&da, &db, ell)?;
            jensen_min_slack = jensen_min_slack.min(e - p.powi(ell as i32));
        }
        out.push(LemmaInstance {
            disjoint_probability: p,
            u: w.u,
            measure_a: w.measure_a,
            measure_b: w.measure_b,
            bound_a: bound_a(n, ell),
            bound_b: bound_b(eps, ell),
            ok: rep.ok() && !w.below_guarantee,
        });
    }
    let all_ok = out.iter().all(|i| i.ok);
    Ok(LemmaBatteryReport {
        n,
        eps,
        ell,
        instances: out,
        skipped_below_threshold: skipped,
        all_ok,
        jensen_min_slack,
    })
}

/// A random product pair for rectangle experiments: sparse or
/// per-element-independent marginals with random sizes and densities.
pub fn random_lemma_pair<R: Rng>(n: u32, rng: &mut R) -> Result<(Dist, Dist)> {
    let one = |rng: &mut R| -> Result<Dist> {
        let spec = if rng.random::<bool>() {
            let support = rng.random_range(2..=48usize).min(1 << n);
            GeneratorSpec::RandomSparse { n, support }
        } else {
            let hi = rng.random_range(0.05..0.35f64);
            GeneratorSpec::PerElementIndependent {
                n,
                p: (0..n).map(|_| hi * rng.random::<f64>()).collect(),
            }
        };
        let d = generate(&spec, rng)?.into_dist()?;
        if let GeneratorSpec::RandomSparse { .. } = spec {
            // thin out large sets so the precondition is reachable
            let keep =
                SubsetMask(rng.random::<u64>() & rng.random::<u64>() & SubsetMask::full(n).bits());
            return Dist::from_weights(n, d.support().iter().map(|&(s, w)| (s.intersect(keep), w)));
        }
        Ok(d)
    };
    Ok((one(rng)?, one(rng)?))
}

/// Jensen-step check with both routes: the enumerated expectation over
/// ℓ-tuples and the closed form, against `P[disjoint]^ℓ`.
pub fn jensen_check(da: &Dist, db: &Dist, ell: u32) -> Result<(f64, f64, f64)> {
    let enumerated = expected_b_measure_enumerated(da, db, ell)?;
    let closed = expected_b_measure_closed(da, db, ell)?;
    let p = disjoint_probability(da, db)?;
    Ok((enumerated, closed, p.powi(ell as i32)))
}
