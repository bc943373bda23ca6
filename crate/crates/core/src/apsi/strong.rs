use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigUint;
use rand::Rng;

use super::{ApsiResultStrong, IdSet, SampleId};
use crate::error::{Error, ProtocolError, Result};
use crate::ph_cipher::{hash_to_group, keygen, GroupElement, GroupParams, PhKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrongPhase {
    Init,
    GroupProposed,
    GroupAgreed,
    OwnSetEncrypted,
    PeerSetEncrypted,
    Peeled,
    Done,
}

impl StrongPhase {
    fn name(self) -> &'static str {
        match self {
            StrongPhase::Init => "init",
            StrongPhase::GroupProposed => "group_proposed",
            StrongPhase::GroupAgreed => "group_agreed",
            StrongPhase::OwnSetEncrypted => "own_set_encrypted",
            StrongPhase::PeerSetEncrypted => "peer_set_encrypted",
            StrongPhase::Peeled => "peeled",
            StrongPhase::Done => "done",
        }
    }
}

/// Strong-party state machine. It never sees the plaintext intersection.
pub struct StrongApsi {
    phase: StrongPhase,
    ids: IdSet,
    key: PhKey,
    tokens: HashMap<GroupElement, SampleId>,
    own_encrypted: usize,
    peeled: usize,
}

impl StrongApsi {
    pub fn new<R: Rng + ?Sized>(ids: IdSet, group: GroupParams, rng: &mut R) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::InvalidParameter("strong id set is empty".into()));
        }
        Ok(Self {
            phase: StrongPhase::Init,
            key: keygen(&group, rng),
            ids,
            tokens: HashMap::new(),
            own_encrypted: 0,
            peeled: 0,
        })
    }

    pub fn phase(&self) -> StrongPhase {
        self.phase
    }

    fn expect(&self, phase: StrongPhase, transition: &'static str) -> Result<()> {
        if self.phase != phase {
            return Err(ProtocolError::OutOfOrder {
                transition,
                phase: self.phase.name(),
            }
            .into());
        }
        Ok(())
    }

    /// Proposes the group for this run.
    pub fn exchange_group(&mut self) -> Result<&GroupParams> {
        self.expect(StrongPhase::Init, "exchange_group")?;
        self.phase = StrongPhase::GroupProposed;
        Ok(self.key.group())
    }

    pub fn confirm_group(&mut self, echoed: &BigUint) -> Result<()> {
        self.expect(StrongPhase::GroupProposed, "confirm_group")?;
        if echoed != self.key.group().p() {
            return Err(Error::GroupMismatch(
                "peer accepted a different modulus".into(),
            ));
        }
        self.phase = StrongPhase::GroupAgreed;
        Ok(())
    }

    /// `U1`: hashed own ids under the strong key, sorted by value so the
    /// order says nothing about the ids.
    pub fn encrypt_own_set(&mut self) -> Result<Vec<GroupElement>> {
        self.expect(StrongPhase::GroupAgreed, "encrypt_own_set")?;
        let group = self.key.group().clone();
        let mut out = Vec::with_capacity(self.ids.len());
        for id in self.ids.iter() {
            let token = hash_to_group(&group, id.as_bytes());
            out.push(self.key.encrypt(&token)?);
            if self.tokens.insert(token, id.clone()).is_some() {
                return Err(Error::Integrity(format!("hash collision on id {id}")));
            }
        }
        out.sort();
        self.own_encrypted = out.len();
        self.phase = StrongPhase::OwnSetEncrypted;
        Ok(out)
    }

    /// `U2†`: the weak party's set under the strong key, in received order.
    pub fn double_encrypt_peer_set(&mut self, u2: &[GroupElement]) -> Result<Vec<GroupElement>> {
        self.expect(StrongPhase::OwnSetEncrypted, "double_encrypt_peer_set")?;
        if u2.is_empty() {
            return Err(Error::Integrity("weak party sent an empty set".into()));
        }
        ensure_distinct(u2, "weak encrypted set")?;
        let out = u2
            .iter()
            .map(|x| self.key.encrypt(x))
            .collect::<Result<Vec<_>>>()?;
        self.phase = StrongPhase::PeerSetEncrypted;
        Ok(out)
    }

    /// `U_obf`: the strong layer removed from the weak party's selection,
    /// in received order.
    pub fn peel_layers(&mut self, u_obf_dagger: &[GroupElement]) -> Result<Vec<GroupElement>> {
        self.expect(StrongPhase::PeerSetEncrypted, "peel_layers")?;
        if u_obf_dagger.is_empty() || u_obf_dagger.len() > self.own_encrypted {
            return Err(Error::Integrity(format!(
                "selection of {} elements from a set of {}",
                u_obf_dagger.len(),
                self.own_encrypted
            )));
        }
        ensure_distinct(u_obf_dagger, "obfuscated selection")?;
        let out = u_obf_dagger
            .iter()
            .map(|x| self.key.decrypt(x))
            .collect::<Result<Vec<_>>>()?;
        self.peeled = out.len();
        self.phase = StrongPhase::Peeled;
        Ok(out)
    }

    /// Maps the revealed tokens back to own ids.
    pub fn receive_reveal(&mut self, i_obf: &[GroupElement]) -> Result<ApsiResultStrong> {
        self.expect(StrongPhase::Peeled, "receive_reveal")?;
        if i_obf.len() != self.peeled {
            return Err(Error::Integrity(format!(
                "revealed {} elements, {} were selected",
                i_obf.len(),
                self.peeled
            )));
        }
        let mut obfuscated = BTreeMap::new();
        for token in i_obf {
            let id = self.tokens.get(token).ok_or_else(|| {
                Error::Integrity(format!(
                    "revealed element {} is not an own id",
                    short(token)
                ))
            })?;
            if obfuscated.insert(token.clone(), id.clone()).is_some() {
                return Err(Error::Integrity("revealed set repeats an element".into()));
            }
        }
        self.phase = StrongPhase::Done;
        Ok(ApsiResultStrong { obfuscated })
    }
}

fn ensure_distinct(xs: &[GroupElement], what: &str) -> Result<()> {
    let distinct: BTreeSet<&GroupElement> = xs.iter().collect();
    if distinct.len() != xs.len() {
        return Err(Error::Integrity(format!(
            "{what} contains repeated elements"
        )));
    }
    Ok(())
}

pub(super) fn short(x: &GroupElement) -> String {
    let hex = x.to_hex();
    hex[..hex.len().min(12)].to_owned()
}
