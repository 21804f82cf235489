//! Full (all-pairs-disjoint) rectangles `2^U × 2^{X∖U}` of large measure.
//!
//! Any maximal full rectangle of the disjointness matrix on `2^X` has this
//! shape, so an exhaustive scan over `U ⊆ X` finds the best one. The
//! sampled extractor follows the probabilistic construction directly: draw
//! `ℓ` sets from the A-side distribution and take their union.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{disjoint_probability, seeded_stream, Dist};
use crate::error::{Error, Result};
use crate::sets::{GroundSet, SubsetMask, MAX_ENUM_N};

/// Float slack used when comparing a measure against a proof-level bound.
pub const BOUND_TOL: f64 = 1e-12;

const PAR_SCAN_MIN_BITS: u32 = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractMode {
    Exact,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectangleWitness {
    pub u: SubsetMask,
    pub measure_a: f64,
    pub measure_b: f64,
    pub ell: u32,
    pub mode: ExtractMode,
    pub eps: f64,
    /// Set when neither bound-satisfying candidate was found; the witness
    /// is then the best rectangle seen.
    #[serde(default)]
    pub below_guarantee: bool,
}

impl RectangleWitness {
    pub fn measure(&self) -> f64 {
        self.measure_a * self.measure_b
    }
}

/// `ℓ = ⌊√(n / log₂(1/eps))⌋`, at least 1.
pub fn lemma_ell(n: u32, eps: f64) -> Result<u32> {
    check_eps(n, eps)?;
    let ell = (n as f64 / (1.0 / eps).log2()).sqrt().floor() as u32;
    Ok(ell.max(1))
}

/// `2^{-3n/ℓ}`: the A-side bound.
pub fn bound_a(n: u32, ell: u32) -> f64 {
    (-3.0 * n as f64 / ell as f64).exp2()
}

/// `eps^ℓ / 2`: the B-side bound.
pub fn bound_b(eps: f64, ell: u32) -> f64 {
    eps.powi(ell as i32) / 2.0
}

fn check_eps(n: u32, eps: f64) -> Result<()> {
    let lower = (-(n as f64)).exp2();
    if eps > lower && eps < 0.5 {
        Ok(())
    } else {
        Err(Error::EpsOutOfRange { eps, n })
    }
}

fn check_support_in(d: &Dist, x: &GroundSet) -> Result<()> {
    if d.n() != x.n {
        return Err(Error::SizeMismatch(d.n(), x.n));
    }
    d.support()
        .iter()
        .try_for_each(|&(m, _)| x.check_contains(m))
}

fn check_preconditions(da: &Dist, db: &Dist, eps: f64, x: &GroundSet) -> Result<u32> {
    check_support_in(da, x)?;
    check_support_in(db, x)?;
    let ell = lemma_ell(x.size(), eps)?;
    let prob = disjoint_probability(da, db)?;
    if prob < eps {
        return Err(Error::BelowThreshold { prob, eps });
    }
    Ok(ell)
}

/// Exhaustive scan over `U ⊆ x`.
///
/// Among the `U` meeting both bounds (`μ_A(2^U) ≥ 2^{-3|x|/ℓ}` and
/// `μ_B(2^{x∖U}) ≥ eps^ℓ/2`) returns the one with the largest product
/// measure, smallest mask on ties. The admissible set is nonempty whenever
/// the preconditions hold; should float error empty it, the unconstrained
/// maximizer is returned with `below_guarantee` set.
pub fn extract_exact(da: &Dist, db: &Dist, eps: f64, x: &GroundSet) -> Result<RectangleWitness> {
    let k = x.size();
    if k > MAX_ENUM_N {
        return Err(Error::TooLarge(k));
    }
    let ell = check_preconditions(da, db, eps, x)?;
    let ta = da.downset_table(x.mask)?;
    let tb = db.downset_table(x.mask)?;
    let (lo_a, lo_b) = (bound_a(k, ell) - BOUND_TOL, bound_b(eps, ell) - BOUND_TOL);
    let full = (1usize << k) - 1;

    let admissible = scan_best(k, |u| {
        let (ma, mb) = (ta[u], tb[full ^ u]);
        (ma >= lo_a && mb >= lo_b).then_some(ma * mb)
    });
    let (best, below) = match admissible {
        Some(b) => (b, false),
        None => (
            scan_best(k, |u| Some(ta[u] * tb[full ^ u])).expect("scan is nonempty"),
            true,
        ),
    };
    Ok(RectangleWitness {
        u: SubsetMask::expand(best as u64, x.mask),
        measure_a: ta[best],
        measure_b: tb[full ^ best],
        ell,
        mode: ExtractMode::Exact,
        eps,
        below_guarantee: below,
    })
}

/// Index maximizing `score` over `0..2^k`; ties go to the smaller index.
fn scan_best(k: u32, score: impl Fn(usize) -> Option<f64> + Sync) -> Option<usize> {
    let pick = |a: Option<(f64, usize)>, b: Option<(f64, usize)>| match (a, b) {
        (Some(x), Some(y)) => Some(if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
            y
        } else {
            x
        }),
        (x, None) => x,
        (None, y) => y,
    };
    let len = 1usize << k;
    let best = if k >= PAR_SCAN_MIN_BITS {
        (0..len)
            .into_par_iter()
            .map(|u| score(u).map(|s| (s, u)))
            .reduce(|| None, pick)
    } else {
        (0..len).map(|u| score(u).map(|s| (s, u))).fold(None, pick)
    };
    best.map(|(_, u)| u)
}

/// Rejection sampling over unions of `ℓ` draws from `da`.
///
/// Returns the first union meeting both bounds, otherwise the best seen
/// (flagged `below_guarantee`), or `None` when `max_retries == 0`.
pub fn extract_sampled<R: Rng + ?Sized>(
    da: &Dist,
    db: &Dist,
    eps: f64,
    x: &GroundSet,
    rng: &mut R,
    max_retries: usize,
) -> Result<Option<RectangleWitness>> {
    check_support_in(da, x)?;
    check_support_in(db, x)?;
    let k = x.size();
    let ell = lemma_ell(k, eps)?;
    let (lo_a, lo_b) = (bound_a(k, ell), bound_b(eps, ell));
    let mut best: Option<RectangleWitness> = None;
    for _ in 0..max_retries {
        let u = (0..ell)
            .fold(SubsetMask::EMPTY, |acc, _| acc.union(da.sample(rng)))
            .intersect(x.mask);
        let ma = da.downset_measure(u);
        let mb = db.downset_measure(x.mask.minus(u));
        let w = RectangleWitness {
            u,
            measure_a: ma,
            measure_b: mb,
            ell,
            mode: ExtractMode::Sampled,
            eps,
            below_guarantee: false,
        };
        if ma >= lo_a && mb >= lo_b {
            return Ok(Some(w));
        }
        if best.as_ref().map_or(true, |b| w.measure() > b.measure()) {
            best = Some(RectangleWitness {
                below_guarantee: true,
                ..w
            });
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub contained: bool,
    pub recomputed_a: f64,
    pub recomputed_b: f64,
    pub measures_match: bool,
    pub pairs_checked: usize,
    pub pairs_disjoint: bool,
    pub bound_a: f64,
    pub bound_b: f64,
    pub bound_a_holds: bool,
    pub bound_b_holds: bool,
}

impl WitnessReport {
    pub fn ok(&self) -> bool {
        self.contained
            && self.measures_match
            && self.pairs_disjoint
            && self.bound_a_holds
            && self.bound_b_holds
    }
}

const VERIFY_PAIRS: usize = 100;

/// Recomputes a witness from scratch and checks it.
pub fn verify_witness(da: &Dist, db: &Dist, w: &RectangleWitness, x: &GroundSet) -> WitnessReport {
    let contained = w.u.is_subset_of(x.mask);
    let v = x.mask.minus(w.u);
    let recomputed_a = da.downset_measure(w.u);
    let recomputed_b = db.downset_measure(v);
    let mut rng = seeded_stream(w.u.bits(), 0x7665_7269_6679);
    let pairs_disjoint = (0..VERIFY_PAIRS).all(|_| {
        let a = SubsetMask(rng.random::<u64>() & w.u.bits());
        let b = SubsetMask(rng.random::<u64>() & v.bits());
        a.is_disjoint(b)
    });
    let bound_a = bound_a(x.size(), w.ell.max(1));
    let bound_b = bound_b(w.eps, w.ell.max(1));
    WitnessReport {
        contained,
        recomputed_a,
        recomputed_b,
        measures_match: (recomputed_a - w.measure_a).abs() <= 1e-12
            && (recomputed_b - w.measure_b).abs() <= 1e-12,
        pairs_checked: VERIFY_PAIRS,
        pairs_disjoint,
        bound_a,
        bound_b,
        bound_a_holds: recomputed_a >= bound_a - BOUND_TOL,
        bound_b_holds: recomputed_b >= bound_b - BOUND_TOL,
    }
}

/// `E[μ_B(2^{[n]∖(A_1∪…∪A_ℓ)})]` over i.i.d. `A_i ~ da`, by enumerating
/// every ℓ-tuple of `da`'s support.
pub fn expected_b_measure_enumerated(da: &Dist, db: &Dist, ell: u32) -> Result<f64> {
    let tuples = (da.len() as u128).checked_pow(ell).unwrap_or(u128::MAX);
    if tuples > 1 << 24 {
        return Err(Error::InvalidParameter(format!(
            "{tuples} tuples to enumerate"
        )));
    }
    let full = SubsetMask::full(da.n());
    let mut acc = 0.0;
    let mut idx = vec![0usize; ell as usize];
    loop {
        let (u, p) = idx.iter().fold((SubsetMask::EMPTY, 1.0), |(u, p), &i| {
            let (s, w) = da.support()[i];
            (u.union(s), p * w)
        });
        acc += p * db.downset_measure(full.minus(u));
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return Ok(acc);
            }
            idx[pos] += 1;
            if idx[pos] < da.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Same expectation via `Σ_B μ_B(B)·μ_A(2^{[n]∖B})^ℓ`.
pub fn expected_b_measure_closed(da: &Dist, db: &Dist, ell: u32) -> Result<f64> {
    if da.n() != db.n() {
        return Err(Error::SizeMismatch(da.n(), db.n()));
    }
    let full = SubsetMask::full(da.n());
    Ok(db
        .support()
        .iter()
        .map(|&(b, w)| w * da.downset_measure(full.minus(b)).powi(ell as i32))
        .sum())
}
