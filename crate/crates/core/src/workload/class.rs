//! Workload taxonomy: six base classes, twelve derived subclasses and the
//! in-distribution / held-out split.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassId {
    ShuffleHeavyEtl,
    SkewedMultiWayJoin,
    IterativeMlPrep,
    TimeWindowedAgg,
    BroadcastBoundedLookup,
    BurstySlaReporting,
}

impl ClassId {
    pub const ALL: [ClassId; 6] = [
        ClassId::ShuffleHeavyEtl,
        ClassId::SkewedMultiWayJoin,
        ClassId::IterativeMlPrep,
        ClassId::TimeWindowedAgg,
        ClassId::BroadcastBoundedLookup,
        ClassId::BurstySlaReporting,
    ];

    /// 1-based class number used in subclass names.
    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<ClassId> {
        ClassId::ALL.get(usize::from(n).checked_sub(1)?).copied()
    }

    pub fn template(self) -> Template {
        match self {
            ClassId::ShuffleHeavyEtl => Template::LinearWide,
            ClassId::SkewedMultiWayJoin => Template::JoinTree,
            ClassId::IterativeMlPrep => Template::IterativeLoop,
            ClassId::TimeWindowedAgg => Template::WindowAgg,
            ClassId::BroadcastBoundedLookup => Template::BroadcastJoin,
            ClassId::BurstySlaReporting => Template::BurstyBatch,
        }
    }

    /// Skew level the class exhibits by default; the large-scale variant flips it.
    pub fn default_skew(self) -> SkewLevel {
        match self {
            ClassId::SkewedMultiWayJoin => SkewLevel::High,
            _ => SkewLevel::Low,
        }
    }

    pub fn shuffle_band(self) -> ShuffleBand {
        match self {
            ClassId::ShuffleHeavyEtl => ShuffleBand::High,
            ClassId::SkewedMultiWayJoin => ShuffleBand::Medium,
            ClassId::IterativeMlPrep => ShuffleBand::LowMedium,
            ClassId::TimeWindowedAgg => ShuffleBand::Medium,
            ClassId::BroadcastBoundedLookup => ShuffleBand::Low,
            ClassId::BurstySlaReporting => ShuffleBand::Medium,
        }
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ClassId::ShuffleHeavyEtl => "shuffle-heavy-etl",
            ClassId::SkewedMultiWayJoin => "skewed-multi-way-join",
            ClassId::IterativeMlPrep => "iterative-ml-prep",
            ClassId::TimeWindowedAgg => "time-windowed-agg",
            ClassId::BroadcastBoundedLookup => "broadcast-bounded-lookup",
            ClassId::BurstySlaReporting => "bursty-sla-reporting",
        };
        f.write_str(name)
    }
}

/// DAG shape of the logical plan a class emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    LinearWide,
    JoinTree,
    IterativeLoop,
    WindowAgg,
    BroadcastJoin,
    BurstyBatch,
}

/// Qualitative shuffle-to-input band of the class summary table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShuffleBand {
    Low,
    LowMedium,
    Medium,
    High,
}

impl ShuffleBand {
    /// Default numeric interval for the band, as `(lo, hi)` shuffle/input ratio.
    pub fn default_range(self) -> (f64, f64) {
        match self {
            ShuffleBand::Low => (0.0, 0.25),
            ShuffleBand::LowMedium => (0.25, 1.0),
            ShuffleBand::Medium => (0.5, 1.5),
            ShuffleBand::High => (2.0, 3.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScaleLevel {
    Small,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SkewLevel {
    Low,
    High,
}

impl SkewLevel {
    pub fn flipped(self) -> SkewLevel {
        match self {
            SkewLevel::Low => SkewLevel::High,
            SkewLevel::High => SkewLevel::Low,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DistributionRole {
    InDistribution,
    HeldOut,
}

/// Identity of a subclass: base class, input scale and skew level.
///
/// Serialized as `c<class>-<scale>-<skew>`, e.g. `c2-small-high`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubclassId {
    pub base: ClassId,
    pub scale: ScaleLevel,
    pub skew: SkewLevel,
}

impl SubclassId {
    pub fn new(base: ClassId, scale: ScaleLevel, skew: SkewLevel) -> Self {
        Self { base, scale, skew }
    }

    /// Position in the registry (0..12) if this is a registered subclass.
    pub fn ordinal(&self) -> Option<usize> {
        registry().iter().position(|s| s.id() == *self)
    }

    pub fn registered(&self) -> Result<Subclass> {
        registry()
            .into_iter()
            .find(|s| s.id() == *self)
            .ok_or_else(|| Error::Config(format!("unknown subclass {self}")))
    }
}

impl fmt::Display for SubclassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scale = match self.scale {
            ScaleLevel::Small => "small",
            ScaleLevel::Large => "large",
        };
        let skew = match self.skew {
            SkewLevel::Low => "low",
            SkewLevel::High => "high",
        };
        write!(f, "c{}-{}-{}", self.base.number(), scale, skew)
    }
}

impl FromStr for SubclassId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed subclass id {s:?}"));
        let mut parts = s.trim().split('-');
        let class = parts
            .next()
            .and_then(|c| c.strip_prefix('c'))
            .and_then(|n| n.parse::<u8>().ok())
            .and_then(ClassId::from_number)
            .ok_or_else(bad)?;
        let scale = match parts.next() {
            Some("small") => ScaleLevel::Small,
            Some("large") => ScaleLevel::Large,
            _ => return Err(bad()),
        };
        let skew = match parts.next() {
            Some("low") => SkewLevel::Low,
            Some("high") => SkewLevel::High,
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(SubclassId::new(class, scale, skew))
    }
}

impl Serialize for SubclassId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SubclassId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Subclass {
    pub base: ClassId,
    pub scale_level: ScaleLevel,
    pub skew_level: SkewLevel,
    pub distribution_role: DistributionRole,
}

impl Subclass {
    pub fn id(&self) -> SubclassId {
        SubclassId::new(self.base, self.scale_level, self.skew_level)
    }
}

impl fmt::Display for Subclass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.id().fmt(f)
    }
}

/// The twelve registered subclasses in ordinal order.
///
/// Each class contributes a small variant at its default skew and a large
/// variant with the skew flipped. Roles alternate between classes so that the
/// split constraint holds by construction.
pub fn registry() -> [Subclass; 12] {
    let mut out = [Subclass {
        base: ClassId::ShuffleHeavyEtl,
        scale_level: ScaleLevel::Small,
        skew_level: SkewLevel::Low,
        distribution_role: DistributionRole::InDistribution,
    }; 12];
    for (i, class) in ClassId::ALL.into_iter().enumerate() {
        let (small_role, large_role) = if i % 2 == 0 {
            (DistributionRole::InDistribution, DistributionRole::HeldOut)
        } else {
            (DistributionRole::HeldOut, DistributionRole::InDistribution)
        };
        out[2 * i] = Subclass {
            base: class,
            scale_level: ScaleLevel::Small,
            skew_level: class.default_skew(),
            distribution_role: small_role,
        };
        out[2 * i + 1] = Subclass {
            base: class,
            scale_level: ScaleLevel::Large,
            skew_level: class.default_skew().flipped(),
            distribution_role: large_role,
        };
    }
    out
}

/// Checks a proposed split: twelve entries, six per role, and no
/// in-distribution subclass sharing `(base, skew_level)` with a held-out one.
///
/// Duplicate subclass identities are a validation error rather than `false`.
pub fn validate_split(subclasses: &[Subclass]) -> Result<bool> {
    let mut seen = BTreeSet::new();
    for s in subclasses {
        if !seen.insert(s.id()) {
            return Err(Error::Validation(format!("duplicate subclass {}", s.id())));
        }
    }
    if subclasses.len() != 12 {
        return Ok(false);
    }
    let in_dist: BTreeSet<_> = subclasses
        .iter()
        .filter(|s| s.distribution_role == DistributionRole::InDistribution)
        .map(|s| (s.base, s.skew_level))
        .collect();
    let in_count = subclasses
        .iter()
        .filter(|s| s.distribution_role == DistributionRole::InDistribution)
        .count();
    if in_count != 6 {
        return Ok(false);
    }
    let overlaps = subclasses
        .iter()
        .filter(|s| s.distribution_role == DistributionRole::HeldOut)
        .any(|s| in_dist.contains(&(s.base, s.skew_level)));
    Ok(!overlaps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_split_is_valid() {
        assert!(validate_split(&registry()).unwrap());
    }

    #[test]
    fn same_class_and_skew_in_both_roles_fails() {
        let mut split = registry();
        // c1-large-high becomes c1-large-low, held out against c1-small-low.
        split[1].skew_level = SkewLevel::Low;
        assert!(!validate_split(&split).unwrap());
    }

    #[test]
    fn seven_five_split_fails() {
        let mut split = registry();
        split[1].distribution_role = DistributionRole::InDistribution;
        assert!(!validate_split(&split).unwrap());
    }

    #[test]
    fn duplicates_are_errors() {
        let mut split = registry();
        split[3] = split[2];
        assert!(matches!(validate_split(&split), Err(Error::Validation(_))));
    }

    #[test]
    fn ids_round_trip_through_text() {
        for s in registry() {
            let text = s.id().to_string();
            assert_eq!(text.parse::<SubclassId>().unwrap(), s.id());
        }
        assert!("c7-small-low".parse::<SubclassId>().is_err());
        assert!("c1-medium-low".parse::<SubclassId>().is_err());
    }

    #[test]
    fn registry_ordinals() {
        for (i, s) in registry().iter().enumerate() {
            assert_eq!(s.id().ordinal(), Some(i));
        }
        let unregistered = SubclassId::new(ClassId::ShuffleHeavyEtl, ScaleLevel::Large, SkewLevel::Low);
        assert_eq!(unregistered.ordinal(), None);
        assert!(matches!(unregistered.registered(), Err(Error::Config(_))));
    }
}
