//! Symmetric vs asymmetric classification of a two-party sample id layout.
//!
//! Party `i` is weak when `log10(n_i / n_world) < -1/2`. The comparison is
//! done exactly in integers as `10 * n_i^2 < n_world^2`.

use std::collections::HashSet;
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    P1,
    P2,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::P1 => Party::P2,
            Party::P2 => Party::P1,
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::P1 => "party 1",
            Party::P2 => "party 2",
        })
    }
}

/// Sizes of both parties' id spaces and of their union.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FederationProfile {
    n1: u64,
    n2: u64,
    n_world: u64,
}

impl FederationProfile {
    pub fn new(n1: u64, n2: u64, n_world: u64) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidParameter(
                "both parties need at least one sample".into(),
            ));
        }
        if n_world < n1.max(n2) {
            return Err(Error::InvalidParameter(format!(
                "world size {n_world} is smaller than a party's id space ({n1}, {n2})"
            )));
        }
        Ok(Self { n1, n2, n_world })
    }

    /// Profile of two concrete id sets, with the world taken as their union.
    pub fn from_sets<T: Eq + Hash>(ids1: &HashSet<T>, ids2: &HashSet<T>) -> Result<Self> {
        let world = ids1.union(ids2).count() as u64;
        Self::new(ids1.len() as u64, ids2.len() as u64, world)
    }

    pub fn n1(&self) -> u64 {
        self.n1
    }

    pub fn n2(&self) -> u64 {
        self.n2
    }

    pub fn n_world(&self) -> u64 {
        self.n_world
    }

    fn size(&self, party: Party) -> u64 {
        match party {
            Party::P1 => self.n1,
            Party::P2 => self.n2,
        }
    }

    fn is_weak(&self, party: Party) -> bool {
        let n = self.size(party) as u128;
        let w = self.n_world as u128;
        10 * n * n < w * w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FederationKind {
    Symmetric,
    Asymmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FederationClass {
    pub kind: FederationKind,
    pub weak: Option<Party>,
    pub strong: Option<Party>,
}

impl fmt::Display for FederationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.weak, self.strong) {
            (FederationKind::Asymmetric, Some(w), Some(s)) => {
                write!(f, "AVFL: {w} is weak, {s} is strong")
            }
            _ => f.write_str("SVFL: neither party is weak"),
        }
    }
}

pub fn classify(profile: &FederationProfile) -> Result<FederationClass> {
    match (profile.is_weak(Party::P1), profile.is_weak(Party::P2)) {
        (false, false) => Ok(FederationClass {
            kind: FederationKind::Symmetric,
            weak: None,
            strong: None,
        }),
        (true, true) => Err(Error::InvariantViolation(format!(
            "both parties are weak ({}, {} of {}); the world must be the union of both id spaces",
            profile.n1, profile.n2, profile.n_world
        ))),
        (p1_weak, _) => {
            let weak = if p1_weak { Party::P1 } else { Party::P2 };
            Ok(FederationClass {
                kind: FederationKind::Asymmetric,
                weak: Some(weak),
                strong: Some(weak.other()),
            })
        }
    }
}
