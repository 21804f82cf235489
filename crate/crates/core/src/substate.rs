//! Bounded max-divergence surrogates for correlated distributions, and the
//! wrapper that runs the product protocol on the surrogate's marginals.
//!
//! The surrogate drops every pair whose log density ratio exceeds a
//! threshold `c` and renormalizes. Its distance to the original and its
//! own `I_∞` are measured, not assumed.

use serde::{Deserialize, Serialize};

use crate::dist::{i_infinity, mutual_information, tv_distance, JointDist};
use crate::error::{Error, Result};
use crate::protocol::{Protocol, ProtocolParams, RunOutcome};
use crate::sets::SubsetMask;

/// Smallest threshold handed to [`truncate`]; log ratios at or below it
/// count as "no correlation".
pub const MIN_THRESHOLD: f64 = 1e-9;

/// Log ratios closer than this are treated as one candidate threshold.
const RATIO_GROUP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationResult {
    pub nu: JointDist,
    pub threshold_c: f64,
    pub removed_mass: f64,
    pub tv: f64,
    pub i_inf_nu: f64,
}

/// Removes `S = {(a,b) : log₂ μ(a,b)/(μ_A(a)μ_B(b)) > c}` and renormalizes.
pub fn truncate(mu: &JointDist, c: f64) -> Result<TruncationResult> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold {c} must be positive"
        )));
    }
    let ratios = mu.log_ratios();
    let mut kept = Vec::with_capacity(mu.len());
    let mut removed_mass = 0.0;
    for (&(p, w), &r) in mu.support().iter().zip(&ratios) {
        if r > c {
            removed_mass += w;
        } else {
            kept.push((p, w));
        }
    }
    if kept.is_empty() {
        return Err(Error::EverythingTruncated(c));
    }
    let nu = JointDist::from_weights(mu.n(), kept)?;
    let tv = tv_distance(mu, &nu)?;
    Ok(TruncationResult {
        i_inf_nu: i_infinity(&nu),
        nu,
        threshold_c: c,
        removed_mass,
        tv,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub c: f64,
    pub removed_mass: f64,
    /// `I(A:B)` of the input, in bits.
    pub k: f64,
    /// `4(k+1)/tv_target`, for comparison with `c`.
    pub reference_bound: f64,
}

/// Smallest candidate threshold, over the distinct log ratios of `mu`,
/// whose truncation removes at most `tv_target` mass.
pub fn find_threshold(mu: &JointDist, tv_target: f64) -> Result<ThresholdChoice> {
    if !(tv_target > 0.0 && tv_target <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tv target {tv_target} outside (0,1]"
        )));
    }
    let mut pairs: Vec<(f64, f64)> = mu
        .log_ratios()
        .into_iter()
        .zip(mu.support().iter().map(|&(_, w)| w))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));

    // groups of (representative ratio = group max, group mass)
    let mut groups: Vec<(f64, f64)> = Vec::new();
    for (r, w) in pairs {
        match groups.last_mut() {
            Some(g) if r - g.0 <= RATIO_GROUP_TOL => {
                g.0 = r;
                g.1 += w;
            }
            _ => groups.push((r, w)),
        }
    }
    // mass strictly above each group's representative
    let mut above = vec![0.0; groups.len()];
    for i in (0..groups.len().saturating_sub(1)).rev() {
        above[i] = above[i + 1] + groups[i + 1].1;
    }
    let idx = (0..groups.len())
        .find(|&i| above[i] <= tv_target)
        .unwrap_or(groups.len() - 1);
    let c = groups[idx].0.max(MIN_THRESHOLD);
    let k = mutual_information(mu);
    Ok(ThresholdChoice {
        c,
        removed_mass: above[idx],
        k,
        reference_bound: 4.0 * (k + 1.0) / tv_target,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WrapperMode {
    /// `ε′ = eps·2^{-8(k+1)/eps - 1}` with `k = I(A:B)`.
    PaperConstants,
    /// `ε′ = eps·2^{-I_∞(ν) - 1}` with the surrogate's measured `I_∞`.
    Measured,
}

/// The product protocol run on the marginals of a truncated surrogate.
pub struct BoundedMiProtocol {
    pub truncation: TruncationResult,
    pub choice: ThresholdChoice,
    pub eps: f64,
    pub eps_prime: f64,
    pub mode: WrapperMode,
    pub protocol: Protocol,
}

/// Reduced error parameter for the inner product protocol.
pub fn reduced_eps(eps: f64, mode: WrapperMode, k: f64, i_inf_nu: f64) -> f64 {
    match mode {
        WrapperMode::PaperConstants => eps * (-8.0 * (k + 1.0) / eps - 1.0).exp2(),
        WrapperMode::Measured => eps * (-i_inf_nu - 1.0).exp2(),
    }
}

impl BoundedMiProtocol {
    pub fn new(
        mu: &JointDist,
        eps: f64,
        seed: u64,
        mode: WrapperMode,
        c: f64,
    ) -> Result<BoundedMiProtocol> {
        let n = mu.n();
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::EpsOutOfRange { eps, n });
        }
        let choice = find_threshold(mu, eps / 2.0)?;
        let truncation = truncate(mu, choice.c)?;
        let eps_prime = reduced_eps(eps, mode, choice.k, truncation.i_inf_nu);
        if eps_prime <= (-(n as f64)).exp2() {
            let min_n = (1.0 / eps_prime).log2().floor() as u32 + 1;
            return Err(Error::ReducedEpsTooSmall {
                eps_prime,
                n,
                min_n,
            });
        }
        let nu_a = truncation.nu.marginal_a();
        let nu_b = truncation.nu.marginal_b();
        let protocol = Protocol::new(
            nu_a,
            nu_b,
            ProtocolParams {
                eps: eps_prime,
                seed,
                c,
            },
        )?;
        Ok(BoundedMiProtocol {
            truncation,
            choice,
            eps,
            eps_prime,
            mode,
            protocol,
        })
    }

    pub fn run(&self, a: SubsetMask, b: SubsetMask) -> Result<RunOutcome> {
        self.protocol.run_protocol(a, b)
    }
}

/// One-shot form of [`BoundedMiProtocol`].
pub fn bounded_mi_protocol(
    mu: &JointDist,
    eps: f64,
    seed: u64,
    a: SubsetMask,
    b: SubsetMask,
    mode: WrapperMode,
) -> Result<RunOutcome> {
    BoundedMiProtocol::new(mu, eps, seed, mode, 2.0)?.run(a, b)
}
