//! The input-independent rectangle schedule of one subprotocol level.
//!
//! Along the path where every tested party answers "no", the family
//! evolution does not depend on the inputs, so both parties can compute
//! the whole sequence of rectangles in advance.

use log::warn;
use serde::{Deserialize, Serialize};

use super::Side;
use crate::dist::{disjoint_probability, seeded_stream, Dist};
use crate::error::{Error, Result};
use crate::rectangle::{extract_exact, extract_sampled, RectangleWitness};
use crate::sets::{GroundSet, SubsetMask, MAX_ENUM_N};

/// Retry budget for the sampled extractor on ground sets above the
/// enumeration cap.
pub const SAMPLED_RETRIES: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub u: SubsetMask,
    pub side: Side,
    /// The ground set to recurse on when this step's test succeeds: `u` for
    /// side A, `x∖u` for side B.
    pub y: SubsetMask,
    pub rect_measure: f64,
    #[serde(default)]
    pub below_guarantee: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StopReason {
    AlmostEmpty { at_step: usize },
    Exhausted { t: u64 },
    DegenerateZeroMass { at_step: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub x: GroundSet,
    pub eps: f64,
    pub steps: Vec<ScheduleStep>,
    pub stop: StopReason,
    pub t_cap: u64,
}

/// Whether `|x| ≤ 4·log₂(1/eps)`, where the parties just exchange the input.
pub fn is_base_case(x_size: u32, eps: f64) -> bool {
    x_size as f64 <= 4.0 * (1.0 / eps).log2()
}

/// `⌈2^{C·√(|x|·log₂(1/eps))}·(|x| + log₂(1/eps))⌉`, saturating.
pub fn t_cap(x_size: u32, eps: f64, c: f64) -> u64 {
    let l = (1.0 / eps).log2();
    let v = (c * (x_size as f64 * l).sqrt()).exp2() * (x_size as f64 + l);
    if v >= u64::MAX as f64 {
        u64::MAX
    } else {
        v.ceil() as u64
    }
}

/// Builds the schedule from the marginals, the ground set and the shared
/// parameters alone.
pub fn build_schedule(
    mu_a: &Dist,
    mu_b: &Dist,
    x: &GroundSet,
    eps: f64,
    seed: u64,
    c: f64,
) -> Result<Schedule> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::EpsOutOfRange { eps, n: x.size() });
    }
    if is_base_case(x.size(), eps) {
        return Err(Error::InvalidParameter(format!(
            "|x| = {} is within the base case for eps = {eps}",
            x.size()
        )));
    }
    let mut cur_a = mu_a.project(x)?;
    let mut cur_b = mu_b.project(x)?;
    let cap = t_cap(x.size(), eps, c);
    let half = eps / 2.0;
    let mut rng = seeded_stream(seed, x.mask.bits());
    let mut steps = Vec::new();

    let stop = loop {
        if disjoint_probability(&cur_a, &cur_b)? <= half {
            break StopReason::AlmostEmpty {
                at_step: steps.len(),
            };
        }
        if steps.len() as u64 >= cap {
            warn!("schedule on {} hit its cap of {cap} steps", x.mask);
            break StopReason::Exhausted { t: cap };
        }
        let w: RectangleWitness = if x.size() <= MAX_ENUM_N {
            extract_exact(&cur_a, &cur_b, half, x)?
        } else {
            match extract_sampled(&cur_a, &cur_b, half, x, &mut rng, SAMPLED_RETRIES)? {
                Some(w) => w,
                None => unreachable!("retry budget is positive"),
            }
        };
        let v = x.mask.minus(w.u);
        let (side, y) = if w.u.len() <= v.len() {
            (Side::A, w.u)
        } else {
            (Side::B, v)
        };
        steps.push(ScheduleStep {
            u: w.u,
            side,
            y,
            rect_measure: w.measure(),
            below_guarantee: w.below_guarantee,
        });
        let removed = match side {
            Side::A => cur_a.without_downset(y).map(|d| cur_a = d),
            Side::B => cur_b.without_downset(y).map(|d| cur_b = d),
        };
        match removed {
            Ok(()) => {}
            Err(Error::ZeroMass) => {
                break StopReason::DegenerateZeroMass {
                    at_step: steps.len(),
                }
            }
            Err(e) => return Err(e),
        }
    };
    Ok(Schedule {
        x: *x,
        eps,
        steps,
        stop,
        t_cap: cap,
    })
}

impl Schedule {
    /// Smallest index of a step testing `side` whose candidate contains
    /// `input`. Because the tested family is the current one intersected
    /// with `2^y`, the first containment is exactly the first "yes".
    pub fn first_yes(&self, side: Side, input: SubsetMask) -> Option<usize> {
        self.steps
            .iter()
            .position(|s| s.side == side && input.is_subset_of(s.y))
    }

    pub fn first_yes_a(&self, a_prime: SubsetMask) -> Option<usize> {
        self.first_yes(Side::A, a_prime)
    }

    pub fn first_yes_b(&self, b_prime: SubsetMask) -> Option<usize> {
        self.first_yes(Side::B, b_prime)
    }

    /// Width of each party's index message.
    pub fn index_width(&self) -> u32 {
        ceil_log2(self.steps.len() as u64 + 2)
    }
}

pub(crate) fn ceil_log2(v: u64) -> u32 {
    if v <= 1 {
        0
    } else {
        64 - (v - 1).leading_zeros()
    }
}
