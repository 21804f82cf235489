//! Subsets of a ground set `[n]` packed into one machine word, and the
//! removal-history representation of the shrinking set families used by
//! the subprotocol.
//!
//! Elements are 1-based in the human-readable form: `{1,3}` is bits 0 and 2.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest supported ground set.
pub const MAX_N: u32 = 63;

/// Cap for code paths that enumerate all `2^|x|` subsets.
pub const MAX_ENUM_N: u32 = 24;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SubsetMask(pub u64);

impl SubsetMask {
    pub const EMPTY: SubsetMask = SubsetMask(0);

    /// The full ground set `[n]`.
    pub fn full(n: u32) -> SubsetMask {
        debug_assert!(n <= MAX_N);
        SubsetMask((1u64 << n) - 1)
    }

    pub fn from_elements<I: IntoIterator<Item = u32>>(elems: I) -> SubsetMask {
        SubsetMask(elems.into_iter().fold(0u64, |acc, e| {
            debug_assert!((1..=MAX_N).contains(&e));
            acc | (1u64 << (e - 1))
        }))
    }

    #[inline]
    pub fn bits(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// 1-based element test.
    #[inline]
    pub fn contains(self, elem: u32) -> bool {
        elem >= 1 && elem <= 64 && self.0 & (1u64 << (elem - 1)) != 0
    }

    #[inline]
    pub fn is_subset_of(self, other: SubsetMask) -> bool {
        self.0 & !other.0 == 0
    }

    #[inline]
    pub fn is_disjoint(self, other: SubsetMask) -> bool {
        self.0 & other.0 == 0
    }

    #[inline]
    pub fn union(self, other: SubsetMask) -> SubsetMask {
        SubsetMask(self.0 | other.0)
    }

    #[inline]
    pub fn intersect(self, other: SubsetMask) -> SubsetMask {
        SubsetMask(self.0 & other.0)
    }

    #[inline]
    pub fn minus(self, other: SubsetMask) -> SubsetMask {
        SubsetMask(self.0 & !other.0)
    }

    /// True when no bit at position `>= n` is set.
    #[inline]
    pub fn fits(self, n: u32) -> bool {
        n >= 64 || self.0 >> n == 0
    }

    /// 1-based elements in increasing order.
    pub fn elements(self) -> impl Iterator<Item = u32> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let tz = rest.trailing_zeros();
            rest &= rest - 1;
            Some(tz + 1)
        })
    }

    /// Iterates all subsets of `self` (including `∅` and `self`), in
    /// increasing numeric order.
    pub fn subsets(self) -> impl Iterator<Item = SubsetMask> {
        let full = self.0;
        let mut next = Some(0u64);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full {
                None
            } else {
                Some((cur.wrapping_sub(full)) & full)
            };
            Some(SubsetMask(cur))
        })
    }

    /// Packs the bits of `self` that lie inside `ground` into the low
    /// `|ground|` positions, in increasing element order.
    pub fn compress(self, ground: SubsetMask) -> u64 {
        let mut out = 0u64;
        for (i, e) in ground.elements().enumerate() {
            if self.contains(e) {
                out |= 1 << i;
            }
        }
        out
    }

    /// Inverse of [`compress`](Self::compress).
    pub fn expand(packed: u64, ground: SubsetMask) -> SubsetMask {
        let mut out = 0u64;
        for (i, e) in ground.elements().enumerate() {
            if packed >> i & 1 == 1 {
                out |= 1 << (e - 1);
            }
        }
        SubsetMask(out)
    }
}

impl fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, e) in self.elements().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for SubsetMask {
    type Err = Error;

    /// Accepts an unsigned decimal word or the `{1,3,5}` form.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = || Error::ParseMask(s.to_string());
        if let Some(inner) = t.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
            let mut bits = 0u64;
            for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let e: u32 = part.parse().map_err(|_| bad())?;
                if !(1..=MAX_N).contains(&e) {
                    return Err(bad());
                }
                bits |= 1 << (e - 1);
            }
            Ok(SubsetMask(bits))
        } else {
            t.parse::<u64>().map(SubsetMask).map_err(|_| bad())
        }
    }
}

impl Serialize for SubsetMask {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u64(self.0)
    }
}

impl<'de> Deserialize<'de> for SubsetMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(SubsetMask(v)),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Bitwise union of a list of masks; the empty list gives `∅`.
pub fn union_of(masks: &[SubsetMask]) -> SubsetMask {
    masks.iter().fold(SubsetMask::EMPTY, |acc, m| acc.union(*m))
}

/// The current ground set `X ⊆ [n]`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct GroundSet {
    pub n: u32,
    pub mask: SubsetMask,
}

impl GroundSet {
    pub fn new(n: u32, mask: SubsetMask) -> Result<GroundSet> {
        check_n(n)?;
        if !mask.fits(n) {
            return Err(Error::NotContained {
                mask,
                ground: SubsetMask::full(n),
            });
        }
        Ok(GroundSet { n, mask })
    }

    pub fn full(n: u32) -> Result<GroundSet> {
        check_n(n)?;
        Ok(GroundSet {
            n,
            mask: SubsetMask::full(n),
        })
    }

    /// `|X|`.
    pub fn size(&self) -> u32 {
        self.mask.len()
    }

    pub fn check_contains(&self, m: SubsetMask) -> Result<()> {
        if m.is_subset_of(self.mask) {
            Ok(())
        } else {
            Err(Error::NotContained {
                mask: m,
                ground: self.mask,
            })
        }
    }
}

pub(crate) fn check_n(n: u32) -> Result<()> {
    if (1..=MAX_N).contains(&n) {
        Ok(())
    } else {
        Err(Error::GroundSetSize(n))
    }
}

/// Families `𝒜_i`, `ℬ_i` stored as their removal history.
///
/// Each A-side removal `U_j` deletes every remaining set contained in
/// `U_j`; each B-side removal `V_j` does the same on the other side. A set
/// is still in the family iff it is contained in none of the removals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FamilyState {
    pub ground: GroundSet,
    removed_a: Vec<SubsetMask>,
    removed_b: Vec<SubsetMask>,
}

impl FamilyState {
    pub fn new(ground: GroundSet) -> FamilyState {
        FamilyState {
            ground,
            removed_a: Vec::new(),
            removed_b: Vec::new(),
        }
    }

    pub fn removed_a(&self) -> &[SubsetMask] {
        &self.removed_a
    }

    pub fn removed_b(&self) -> &[SubsetMask] {
        &self.removed_b
    }

    pub fn remove_a(&mut self, u: SubsetMask) -> Result<()> {
        self.ground.check_contains(u)?;
        self.removed_a.push(u);
        Ok(())
    }

    pub fn remove_b(&mut self, v: SubsetMask) -> Result<()> {
        self.ground.check_contains(v)?;
        self.removed_b.push(v);
        Ok(())
    }

    /// Membership in `𝒜_i`.
    pub fn contains_a(&self, a: SubsetMask) -> Result<bool> {
        self.ground.check_contains(a)?;
        Ok(!self.removed_a.iter().any(|u| a.is_subset_of(*u)))
    }

    /// Membership in `ℬ_i`.
    pub fn contains_b(&self, b: SubsetMask) -> Result<bool> {
        self.ground.check_contains(b)?;
        Ok(!self.removed_b.iter().any(|v| b.is_subset_of(*v)))
    }
}
