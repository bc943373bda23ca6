//! Asymmetric private set intersection.
//!
//! The strong party (large id space) and the weak party (small id space)
//! each encrypt hashed ids under their own Pohlig-Hellman key and exchange
//! the results. The weak party finds the doubly encrypted intersection,
//! pads it with random strong-side elements to the obfuscated size, and the
//! strong party helps peel its layer off. The weak party ends up with the
//! exact intersection; the strong party only learns the padded superset.
//!
//! Wire steps, strong → weak unless marked:
//!
//! | tag                   | content                                  |
//! |-----------------------|------------------------------------------|
//! | `apsi/1/group`        | proposed safe prime                      |
//! | `apsi/1/group_ack`    | weak echoes the accepted prime (← weak)  |
//! | `apsi/4/u1`           | strong ids under the strong key          |
//! | `apsi/4/u2`           | weak ids under the weak key (← weak)     |
//! | `apsi/6/u2_dagger`    | weak set under both keys, order kept     |
//! | `apsi/8/u_obf_dagger` | padded selection under both keys (← weak)|
//! | `apsi/10/u_obf`       | selection with the strong layer removed  |
//! | `apsi/12/i_obf`       | selection as plain id hashes (← weak)    |

mod strong;
mod weak;

#[cfg(test)]
mod protocol_tests;

pub use strong::{StrongApsi, StrongPhase};
pub use weak::{WeakApsi, WeakPhase};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::thread;

use rand::Rng;

use crate::error::{join_parties, Error, Result};
use crate::ph_cipher::{GroupElement, GroupParams};
use crate::seeding;
use crate::transport::{Payload, Protocol, Session};

pub const TAG_GROUP: &str = "apsi/1/group";
pub const TAG_GROUP_ACK: &str = "apsi/1/group_ack";
pub const TAG_U1: &str = "apsi/4/u1";
pub const TAG_U2: &str = "apsi/4/u2";
pub const TAG_U2_DAGGER: &str = "apsi/6/u2_dagger";
pub const TAG_U_OBF_DAGGER: &str = "apsi/8/u_obf_dagger";
pub const TAG_U_OBF: &str = "apsi/10/u_obf";
pub const TAG_I_OBF: &str = "apsi/12/i_obf";

/// Smallest group the weak party accepts by default.
pub const DEFAULT_MIN_GROUP_BITS: u64 = 1024;

/// An opaque sample identifier.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SampleId(Vec<u8>);

impl SampleId {
    pub fn from_bytes(bytes: impl Into<Vec<u8>>) -> Self {
        Self(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl From<&str> for SampleId {
    fn from(s: &str) -> Self {
        Self(s.as_bytes().to_vec())
    }
}

impl From<String> for SampleId {
    fn from(s: String) -> Self {
        Self(s.into_bytes())
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match std::str::from_utf8(&self.0) {
            Ok(s) => f.write_str(s),
            Err(_) => f.write_str(&hex::encode(&self.0)),
        }
    }
}

impl fmt::Debug for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SampleId({self})")
    }
}

/// A duplicate-free set of sample ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdSet(BTreeSet<SampleId>);

impl IdSet {
    /// Builds a set, rejecting the first repeated id.
    pub fn from_ids<I, T>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: Into<SampleId>,
    {
        let mut set = BTreeSet::new();
        for id in ids {
            let id = id.into();
            if set.contains(&id) {
                return Err(Error::DuplicateId(id.to_string()));
            }
            set.insert(id);
        }
        Ok(Self(set))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: &SampleId) -> bool {
        self.0.contains(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SampleId> {
        self.0.iter()
    }

    pub fn is_subset(&self, other: &IdSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn intersection(&self, other: &IdSet) -> IdSet {
        IdSet(self.0.intersection(&other.0).cloned().collect())
    }
}

impl FromIterator<SampleId> for IdSet {
    fn from_iter<I: IntoIterator<Item = SampleId>>(iter: I) -> Self {
        IdSet(iter.into_iter().collect())
    }
}

/// Obfuscation knob `lambda` in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct SecurityNumber(f64);

impl SecurityNumber {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!(
                "security number {lambda} is outside [0, 1]"
            )));
        }
        Ok(Self(lambda))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Size of the obfuscated set: `n_inter * (n_strong / n_inter)^lambda`,
/// rounded half up and clamped to `[n_inter, n_strong]`.
pub fn obfuscated_target_size(
    n_strong: usize,
    n_inter: usize,
    lambda: SecurityNumber,
) -> Result<usize> {
    if n_inter == 0 {
        return Err(Error::EmptyIntersection);
    }
    if n_inter > n_strong {
        return Err(Error::InvalidParameter(format!(
            "intersection of {n_inter} exceeds the strong set of {n_strong}"
        )));
    }
    let h = (n_strong as f64 / n_inter as f64).powf(lambda.value());
    let target = (n_inter as f64 * h + 0.5).floor() as usize;
    Ok(target.clamp(n_inter, n_strong))
}

/// What the strong party learns: the obfuscated set, keyed by the hashed
/// token that both parties use to align rows afterwards.
#[derive(Clone, Debug)]
pub struct ApsiResultStrong {
    obfuscated: BTreeMap<GroupElement, SampleId>,
}

impl ApsiResultStrong {
    pub fn obfuscated(&self) -> IdSet {
        self.obfuscated.values().cloned().collect()
    }

    /// Obfuscated ids in token order.
    pub fn aligned_ids(&self) -> Vec<SampleId> {
        self.obfuscated.values().cloned().collect()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &GroupElement> {
        self.obfuscated.keys()
    }

    pub fn len(&self) -> usize {
        self.obfuscated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obfuscated.is_empty()
    }
}

/// What the weak party learns: the exact intersection and the obfuscated
/// set as tokens. Padding tokens belong to ids the weak party never held,
/// so they cannot be named.
#[derive(Clone, Debug)]
pub struct ApsiResultWeak {
    intersection: IdSet,
    tokens: Vec<GroupElement>,
    genuine: BTreeMap<GroupElement, SampleId>,
}

impl ApsiResultWeak {
    pub fn intersection(&self) -> &IdSet {
        &self.intersection
    }

    /// Obfuscated set as sorted tokens.
    pub fn obfuscated_tokens(&self) -> &[GroupElement] {
        &self.tokens
    }

    pub fn obfuscated_len(&self) -> usize {
        self.tokens.len()
    }

    /// For each obfuscated token in order, the weak party's id if genuine.
    pub fn aligned_ids(&self) -> Vec<Option<SampleId>> {
        self.tokens
            .iter()
            .map(|t| self.genuine.get(t).cloned())
            .collect()
    }
}

fn abort_on_error<T>(session: &mut Session, result: Result<T>) -> Result<T> {
    if let Err(e) = &result {
        if !matches!(e, Error::Protocol(_) | Error::Transport(_) | Error::Io(_)) {
            session.abort(Protocol::Apsi, &e.to_string());
        }
    }
    result
}

/// Strong side of a full run over `session`.
pub fn run_strong<R: Rng>(
    session: &mut Session,
    ids: IdSet,
    group: GroupParams,
    rng: &mut R,
) -> Result<ApsiResultStrong> {
    let mut party = StrongApsi::new(ids, group, rng)?;
    let result = strong_steps(session, &mut party);
    abort_on_error(session, result)
}

fn strong_steps(session: &mut Session, party: &mut StrongApsi) -> Result<ApsiResultStrong> {
    session.send(
        TAG_GROUP,
        Payload::Group {
            p: party.exchange_group()?.p().clone(),
        },
    )?;
    match session.recv(TAG_GROUP_ACK)?.payload {
        Payload::Group { p } => party.confirm_group(&p)?,
        other => return Err(unexpected(TAG_GROUP_ACK, &other)),
    }
    session.send(TAG_U1, Payload::Elements(party.encrypt_own_set()?))?;
    let u2 = session.recv(TAG_U2)?.into_elements()?;
    session.send(
        TAG_U2_DAGGER,
        Payload::Elements(party.double_encrypt_peer_set(&u2)?),
    )?;
    let u_obf_dagger = session.recv(TAG_U_OBF_DAGGER)?.into_elements()?;
    session.send(
        TAG_U_OBF,
        Payload::Elements(party.peel_layers(&u_obf_dagger)?),
    )?;
    let i_obf = session.recv(TAG_I_OBF)?.into_elements()?;
    party.receive_reveal(&i_obf)
}

/// Weak side of a full run over `session`.
pub fn run_weak<R: Rng>(
    session: &mut Session,
    ids: IdSet,
    lambda: SecurityNumber,
    min_group_bits: u64,
    rng: &mut R,
) -> Result<ApsiResultWeak> {
    let mut party = WeakApsi::new(ids, lambda, min_group_bits)?;
    let result = weak_steps(session, &mut party, rng);
    abort_on_error(session, result)
}

fn weak_steps<R: Rng>(
    session: &mut Session,
    party: &mut WeakApsi,
    rng: &mut R,
) -> Result<ApsiResultWeak> {
    let p = match session.recv(TAG_GROUP)?.payload {
        Payload::Group { p } => p,
        other => return Err(unexpected(TAG_GROUP, &other)),
    };
    let accepted = party.exchange_group(p, rng)?;
    session.send(
        TAG_GROUP_ACK,
        Payload::Group {
            p: accepted.p().clone(),
        },
    )?;
    let u1 = session.recv(TAG_U1)?.into_elements()?;
    session.send(TAG_U2, Payload::Elements(party.encrypt_own_set()?))?;
    party.double_encrypt_peer_set(&u1)?;
    let u2_dagger = session.recv(TAG_U2_DAGGER)?.into_elements()?;
    let selection = party.select_obfuscated(&u2_dagger, rng)?;
    session.send(TAG_U_OBF_DAGGER, Payload::Elements(selection))?;
    let u_obf = session.recv(TAG_U_OBF)?.into_elements()?;
    party.peel_layers(&u_obf)?;
    session.send(TAG_I_OBF, Payload::Elements(party.reveal_obfuscated()?))?;
    party.finish()
}

fn unexpected(tag: &str, payload: &Payload) -> Error {
    crate::error::ProtocolError::UnexpectedPayload(format!("{tag} carried {payload:?}")).into()
}

/// Runs both parties on two threads over an in-process channel. Each party
/// draws from its own stream derived from `seed`.
pub fn run_apsi(
    strong_ids: IdSet,
    weak_ids: IdSet,
    lambda: SecurityNumber,
    group: GroupParams,
    seed: u64,
) -> Result<(ApsiResultStrong, ApsiResultWeak)> {
    let (mut s_session, mut w_session) = Session::in_process_pair();
    let min_bits = group.bits();
    thread::scope(|scope| {
        let strong = scope.spawn(move || {
            let mut rng = seeding::stream(seed, "apsi/strong");
            run_strong(&mut s_session, strong_ids, group, &mut rng)
        });
        let mut rng = seeding::stream(seed, "apsi/weak");
        let weak = run_weak(&mut w_session, weak_ids, lambda, min_bits, &mut rng);
        join_parties(strong.join().expect("strong party thread panicked"), weak)
    })
}
