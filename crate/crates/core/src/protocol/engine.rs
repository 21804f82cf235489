use std::cell::RefCell;
use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use super::schedule::{build_schedule, is_base_case, Schedule, StopReason};
use super::transcript::{Side, Transcript};
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::sets::{GroundSet, SubsetMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Answer {
    Disjoint,
    NotDisjoint,
}

impl Answer {
    pub fn truth(a: SubsetMask, b: SubsetMask) -> Answer {
        if a.is_disjoint(b) {
            Answer::Disjoint
        } else {
            Answer::NotDisjoint
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubOutcome {
    Declare(Answer),
    Recurse(GroundSet),
}

/// How one level of a run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "exit", rename_all = "kebab-case")]
pub enum LevelExit {
    /// A threshold bit was set.
    Threshold,
    /// Nobody answered yes before the schedule stopped.
    NoYes {
        stop: StopReason,
    },
    Recursed {
        step: usize,
        y: SubsetMask,
    },
    BaseCase,
}

impl LevelExit {
    pub fn label(&self) -> &'static str {
        match self {
            LevelExit::Threshold => "threshold",
            LevelExit::NoYes {
                stop: StopReason::AlmostEmpty { .. },
            } => "almost-empty",
            LevelExit::NoYes {
                stop: StopReason::Exhausted { .. },
            } => "exhausted",
            LevelExit::NoYes {
                stop: StopReason::DegenerateZeroMass { .. },
            } => "degenerate",
            LevelExit::Recursed { .. } => "recurse",
            LevelExit::BaseCase => "base-case",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub x: SubsetMask,
    #[serde(flatten)]
    pub exit: LevelExit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOutcome {
    pub answer: Answer,
    pub correct: bool,
    pub cost_bits: u64,
    pub trace: Vec<LevelRecord>,
    pub transcript: Transcript,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub eps: f64,
    pub seed: u64,
    /// Constant `C` of the per-level step cap.
    pub c: f64,
}

impl ProtocolParams {
    pub fn new(eps: f64, seed: u64) -> ProtocolParams {
        ProtocolParams { eps, seed, c: 2.0 }
    }
}

/// Shared, input-independent data of one level.
#[derive(Debug)]
pub struct Level {
    pub x: GroundSet,
    pub nu_a: Dist,
    pub nu_b: Dist,
    /// Threshold `eps / 2^{2|x|}` on a single set's projected mass.
    pub threshold: f64,
    pub schedule: Schedule,
}

/// What a party contributes, computed from its own input and shared data.
pub trait Player {
    fn threshold_bit(&self, level: &Level) -> bool;
    fn first_yes(&self, level: &Level) -> Option<usize>;
    /// Alice's base-case message.
    fn reveal(&self, x: SubsetMask) -> SubsetMask;
    /// Bob's base-case decision from Alice's revealed set.
    fn decide(&self, revealed: SubsetMask, x: SubsetMask) -> Answer;
}

pub struct Alice(pub SubsetMask);
pub struct Bob(pub SubsetMask);

impl Player for Alice {
    fn threshold_bit(&self, level: &Level) -> bool {
        level.nu_a.weight(self.0.intersect(level.x.mask)) <= level.threshold
    }

    fn first_yes(&self, level: &Level) -> Option<usize> {
        level.schedule.first_yes_a(self.0.intersect(level.x.mask))
    }

    fn reveal(&self, x: SubsetMask) -> SubsetMask {
        self.0.intersect(x)
    }

    fn decide(&self, _revealed: SubsetMask, _x: SubsetMask) -> Answer {
        unreachable!("Bob decides the base case")
    }
}

impl Player for Bob {
    fn threshold_bit(&self, level: &Level) -> bool {
        level.nu_b.weight(self.0.intersect(level.x.mask)) <= level.threshold
    }

    fn first_yes(&self, level: &Level) -> Option<usize> {
        level.schedule.first_yes_b(self.0.intersect(level.x.mask))
    }

    fn reveal(&self, _x: SubsetMask) -> SubsetMask {
        unreachable!("Alice reveals in the base case")
    }

    fn decide(&self, revealed: SubsetMask, x: SubsetMask) -> Answer {
        Answer::truth(revealed, self.0.intersect(x))
    }
}

/// Plays back one side's recorded messages, for information-flow checks.
pub struct Scripted {
    values: RefCell<VecDeque<u64>>,
}

impl Scripted {
    pub fn from_transcript(t: &Transcript, side: Side) -> Scripted {
        Scripted {
            values: RefCell::new(t.by(side).map(|m| m.value).collect()),
        }
    }

    fn next(&self) -> u64 {
        self.values
            .borrow_mut()
            .pop_front()
            .expect("script ran out of messages")
    }
}

impl Player for Scripted {
    fn threshold_bit(&self, _level: &Level) -> bool {
        self.next() == 1
    }

    fn first_yes(&self, level: &Level) -> Option<usize> {
        let v = self.next() as usize;
        (v < level.schedule.steps.len()).then_some(v)
    }

    fn reveal(&self, x: SubsetMask) -> SubsetMask {
        SubsetMask::expand(self.next(), x)
    }

    fn decide(&self, _revealed: SubsetMask, _x: SubsetMask) -> Answer {
        Answer::NotDisjoint
    }
}

/// Result of the literal one-bit-per-step subprotocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SequentialResult {
    pub outcome: SubOutcome,
    pub membership_bits: usize,
}

type LevelSlot = Arc<OnceLock<Result<Arc<Level>>>>;

/// A protocol instance: fixed marginals and parameters, plus the memoized
/// per-level schedules shared by every run.
pub struct Protocol {
    mu_a: Dist,
    mu_b: Dist,
    params: ProtocolParams,
    levels: RwLock<HashMap<u64, LevelSlot>>,
    exhausted_declares: AtomicU64,
}

impl Protocol {
    pub fn new(mu_a: Dist, mu_b: Dist, params: ProtocolParams) -> Result<Protocol> {
        if mu_a.n() != mu_b.n() {
            return Err(Error::SizeMismatch(mu_a.n(), mu_b.n()));
        }
        if !(params.eps > 0.0 && params.eps < 0.5) {
            return Err(Error::EpsOutOfRange {
                eps: params.eps,
                n: mu_a.n(),
            });
        }
        if !(params.c > 0.0 && params.c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t-cap constant {} must be positive",
                params.c
            )));
        }
        Ok(Protocol {
            mu_a,
            mu_b,
            params,
            levels: RwLock::new(HashMap::new()),
            exhausted_declares: AtomicU64::new(0),
        })
    }

    pub fn n(&self) -> u32 {
        self.mu_a.n()
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn mu_a(&self) -> &Dist {
        &self.mu_a
    }

    pub fn mu_b(&self) -> &Dist {
        &self.mu_b
    }

    /// Number of subprotocol invocations so far that ended because the
    /// schedule hit its cap.
    pub fn exhausted_declares(&self) -> u64 {
        self.exhausted_declares.load(Ordering::Relaxed)
    }

    /// Number of distinct memoized levels.
    pub fn cached_levels(&self) -> usize {
        self.levels.read().unwrap().len()
    }

    /// Every successfully built level so far, in ground-set mask order.
    pub fn levels(&self) -> Vec<Arc<Level>> {
        let read = self.levels.read().unwrap();
        let mut keys: Vec<&u64> = read.keys().collect();
        keys.sort();
        keys.into_iter()
            .filter_map(|k| read[k].get().and_then(|r| r.as_ref().ok().cloned()))
            .collect()
    }

    /// Memoized level data; concurrent callers for the same `x` wait for a
    /// single build.
    pub fn level(&self, x: &GroundSet) -> Result<Arc<Level>> {
        let key = x.mask.bits();
        let slot = {
            let read = self.levels.read().unwrap();
            read.get(&key).cloned()
        };
        let slot = match slot {
            Some(s) => s,
            None => self.levels.write().unwrap().entry(key).or_default().clone(),
        };
        slot.get_or_init(|| self.build_level(x).map(Arc::new))
            .clone()
    }

    fn build_level(&self, x: &GroundSet) -> Result<Level> {
        let ProtocolParams { eps, seed, c } = self.params;
        let schedule = build_schedule(&self.mu_a, &self.mu_b, x, eps, seed, c)?;
        Ok(Level {
            x: *x,
            nu_a: self.mu_a.project(x)?,
            nu_b: self.mu_b.project(x)?,
            threshold: eps / (2.0 * x.size() as f64).exp2(),
            schedule,
        })
    }

    fn check_inputs(&self, x: &GroundSet, a: SubsetMask, b: SubsetMask) -> Result<()> {
        let n = self.n();
        for m in [a, b] {
            if !m.fits(n) {
                return Err(Error::NotContained {
                    mask: m,
                    ground: SubsetMask::full(n),
                });
            }
        }
        if x.n != n {
            return Err(Error::SizeMismatch(x.n, n));
        }
        Ok(())
    }

    /// One subprotocol level with the index-exchange realization.
    pub fn run_subprotocol(
        &self,
        x: &GroundSet,
        a: SubsetMask,
        b: SubsetMask,
        transcript: &mut Transcript,
    ) -> Result<SubOutcome> {
        self.check_inputs(x, a, b)?;
        let level = self.level(x)?;
        Ok(self.sub_level(&level, &Alice(a), &Bob(b), transcript).0)
    }

    fn sub_level(
        &self,
        level: &Level,
        alice: &dyn Player,
        bob: &dyn Player,
        t: &mut Transcript,
    ) -> (SubOutcome, LevelExit) {
        let ta = alice.threshold_bit(level);
        t.push(Side::A, ta as u64, 1, "threshold");
        let tb = bob.threshold_bit(level);
        t.push(Side::B, tb as u64, 1, "threshold");
        if ta || tb {
            return (
                SubOutcome::Declare(Answer::NotDisjoint),
                LevelExit::Threshold,
            );
        }

        let s = &level.schedule;
        if s.steps.is_empty() {
            return (
                SubOutcome::Declare(Answer::NotDisjoint),
                LevelExit::NoYes { stop: s.stop },
            );
        }
        let width = s.index_width();
        let none = s.steps.len() as u64;
        let ia = alice.first_yes(level).map_or(none, |i| i as u64);
        t.push(Side::A, ia, width, "index");
        let ib = bob.first_yes(level).map_or(none, |i| i as u64);
        t.push(Side::B, ib, width, "index");

        let m = ia.min(ib);
        if m < none {
            let step = m as usize;
            let y = s.steps[step].y;
            (
                SubOutcome::Recurse(GroundSet {
                    n: level.x.n,
                    mask: y,
                }),
                LevelExit::Recursed { step, y },
            )
        } else {
            if matches!(s.stop, StopReason::Exhausted { .. }) {
                self.exhausted_declares.fetch_add(1, Ordering::Relaxed);
            }
            (
                SubOutcome::Declare(Answer::NotDisjoint),
                LevelExit::NoYes { stop: s.stop },
            )
        }
    }

    /// The literal loop: at each step the tested party sends one bit.
    pub fn run_sequential_reference(
        &self,
        x: &GroundSet,
        a: SubsetMask,
        b: SubsetMask,
    ) -> Result<SequentialResult> {
        self.check_inputs(x, a, b)?;
        let level = self.level(x)?;
        if Alice(a).threshold_bit(&level) || Bob(b).threshold_bit(&level) {
            return Ok(SequentialResult {
                outcome: SubOutcome::Declare(Answer::NotDisjoint),
                membership_bits: 0,
            });
        }
        let (ax, bx) = (a.intersect(x.mask), b.intersect(x.mask));
        for (j, step) in level.schedule.steps.iter().enumerate() {
            let tested = match step.side {
                Side::A => ax,
                Side::B => bx,
            };
            if tested.is_subset_of(step.y) {
                return Ok(SequentialResult {
                    outcome: SubOutcome::Recurse(GroundSet {
                        n: x.n,
                        mask: step.y,
                    }),
                    membership_bits: j + 1,
                });
            }
        }
        Ok(SequentialResult {
            outcome: SubOutcome::Declare(Answer::NotDisjoint),
            membership_bits: level.schedule.steps.len(),
        })
    }

    /// Full run from `x = [n]` down to a declaration or the base case.
    pub fn run_protocol(&self, a: SubsetMask, b: SubsetMask) -> Result<RunOutcome> {
        self.run_into(a, b, Transcript::new())
    }

    /// As [`run_protocol`](Self::run_protocol) but keeps only the bit count.
    pub fn run_protocol_counting(&self, a: SubsetMask, b: SubsetMask) -> Result<RunOutcome> {
        self.run_into(a, b, Transcript::counting())
    }

    fn run_into(
        &self,
        a: SubsetMask,
        b: SubsetMask,
        mut transcript: Transcript,
    ) -> Result<RunOutcome> {
        let full = GroundSet::full(self.n())?;
        self.check_inputs(&full, a, b)?;
        let mut trace = Vec::new();
        let answer = self.drive(
            &Alice(a),
            &Bob(b),
            &mut transcript,
            &mut trace,
            Some((a, b)),
        )?;
        Ok(RunOutcome {
            answer,
            correct: answer == Answer::truth(a, b),
            cost_bits: transcript.total_bits(),
            trace,
            transcript,
        })
    }

    /// Re-derives Alice's messages from her input and Bob's recorded
    /// messages only.
    pub fn replay_alice(&self, a: SubsetMask, recorded: &Transcript) -> Result<Transcript> {
        let mut t = Transcript::new();
        let mut trace = Vec::new();
        self.drive(
            &Alice(a),
            &Scripted::from_transcript(recorded, Side::B),
            &mut t,
            &mut trace,
            None,
        )?;
        Ok(t)
    }

    fn drive(
        &self,
        alice: &dyn Player,
        bob: &dyn Player,
        t: &mut Transcript,
        trace: &mut Vec<LevelRecord>,
        inputs: Option<(SubsetMask, SubsetMask)>,
    ) -> Result<Answer> {
        let eps = self.params.eps;
        let mut x = GroundSet::full(self.n())?;
        loop {
            if let Some((a, b)) = inputs {
                assert!(
                    a.minus(x.mask).is_disjoint(b.minus(x.mask)),
                    "inputs intersect outside the current ground set {}",
                    x.mask
                );
            }
            if is_base_case(x.size(), eps) {
                let revealed = alice.reveal(x.mask);
                t.push(Side::A, revealed.compress(x.mask), x.size(), "base-case");
                trace.push(LevelRecord {
                    x: x.mask,
                    exit: LevelExit::BaseCase,
                });
                return Ok(bob.decide(revealed, x.mask));
            }
            let level = self.level(&x)?;
            let (outcome, exit) = self.sub_level(&level, alice, bob, t);
            trace.push(LevelRecord { x: x.mask, exit });
            match outcome {
                SubOutcome::Declare(ans) => return Ok(ans),
                SubOutcome::Recurse(y) => {
                    assert!(
                        y.size() <= x.size() / 2,
                        "recursion did not halve the ground set"
                    );
                    x = y;
                }
            }
        }
    }
}
