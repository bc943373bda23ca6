use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use rand::seq::index;
use rand::Rng;

use super::strong::short;
use super::{obfuscated_target_size, ApsiResultWeak, IdSet, SampleId, SecurityNumber};
use crate::error::{Error, ProtocolError, Result};
use crate::ph_cipher::{hash_to_group, keygen, GroupElement, GroupParams, PhKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeakPhase {
    Init,
    GroupAgreed,
    OwnSetEncrypted,
    PeerSetEncrypted,
    Selected,
    Peeled,
    Revealed,
}

impl WeakPhase {
    fn name(self) -> &'static str {
        match self {
            WeakPhase::Init => "init",
            WeakPhase::GroupAgreed => "group_agreed",
            WeakPhase::OwnSetEncrypted => "own_set_encrypted",
            WeakPhase::PeerSetEncrypted => "peer_set_encrypted",
            WeakPhase::Selected => "selected",
            WeakPhase::Peeled => "peeled",
            WeakPhase::Revealed => "revealed",
        }
    }
}

/// Weak-party state machine.
pub struct WeakApsi {
    phase: WeakPhase,
    ids: IdSet,
    lambda: SecurityNumber,
    min_group_bits: u64,
    key: Option<PhKey>,
    // Own ids in the order of the U2 message, with their encryptions.
    own: Vec<(GroupElement, SampleId)>,
    own_tokens: BTreeMap<GroupElement, SampleId>,
    u1_dagger: BTreeSet<GroupElement>,
    intersection: IdSet,
    selected: usize,
    revealed: Vec<GroupElement>,
}

impl WeakApsi {
    pub fn new(ids: IdSet, lambda: SecurityNumber, min_group_bits: u64) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::InvalidParameter("weak id set is empty".into()));
        }
        Ok(Self {
            phase: WeakPhase::Init,
            ids,
            lambda,
            min_group_bits,
            key: None,
            own: Vec::new(),
            own_tokens: BTreeMap::new(),
            u1_dagger: BTreeSet::new(),
            intersection: IdSet::default(),
            selected: 0,
            revealed: Vec::new(),
        })
    }

    pub fn phase(&self) -> WeakPhase {
        self.phase
    }

    fn expect(&self, phase: WeakPhase, transition: &'static str) -> Result<()> {
        if self.phase != phase {
            return Err(ProtocolError::OutOfOrder {
                transition,
                phase: self.phase.name(),
            }
            .into());
        }
        Ok(())
    }

    pub(super) fn key(&self) -> &PhKey {
        self.key
            .as_ref()
            .expect("key is set once the group is agreed")
    }

    /// Validates the proposed modulus and generates the weak key on it.
    pub fn exchange_group<R: Rng + ?Sized>(
        &mut self,
        p: BigUint,
        rng: &mut R,
    ) -> Result<GroupParams> {
        self.expect(WeakPhase::Init, "exchange_group")?;
        if p.bits() < self.min_group_bits {
            return Err(Error::GroupMismatch(format!(
                "proposed modulus has {} bits, at least {} required",
                p.bits(),
                self.min_group_bits
            )));
        }
        let group = GroupParams::from_prime(p).map_err(|e| Error::GroupMismatch(e.to_string()))?;
        self.key = Some(keygen(&group, rng));
        self.phase = WeakPhase::GroupAgreed;
        Ok(group)
    }

    /// `U2`: hashed own ids under the weak key, sorted by value.
    pub fn encrypt_own_set(&mut self) -> Result<Vec<GroupElement>> {
        self.expect(WeakPhase::GroupAgreed, "encrypt_own_set")?;
        let key = self.key().clone();
        let mut own = Vec::with_capacity(self.ids.len());
        for id in self.ids.iter() {
            let token = hash_to_group(key.group(), id.as_bytes());
            own.push((key.encrypt(&token)?, id.clone()));
            if self.own_tokens.insert(token, id.clone()).is_some() {
                return Err(Error::Integrity(format!("hash collision on id {id}")));
            }
        }
        own.sort();
        self.own = own;
        self.phase = WeakPhase::OwnSetEncrypted;
        Ok(self.own.iter().map(|(e, _)| e.clone()).collect())
    }

    /// `U1†`: the strong party's set under the weak key. Kept locally.
    pub fn double_encrypt_peer_set(&mut self, u1: &[GroupElement]) -> Result<()> {
        self.expect(WeakPhase::OwnSetEncrypted, "double_encrypt_peer_set")?;
        if u1.is_empty() {
            return Err(Error::Integrity("strong party sent an empty set".into()));
        }
        let key = self.key();
        let dagger = u1
            .iter()
            .map(|x| key.encrypt(x))
            .collect::<Result<BTreeSet<_>>>()?;
        if dagger.len() != u1.len() {
            return Err(Error::Integrity(
                "strong encrypted set contains repeated elements".into(),
            ));
        }
        self.u1_dagger = dagger;
        self.phase = WeakPhase::PeerSetEncrypted;
        Ok(())
    }

    /// Intersects `U1†` with `U2†`, learns the exact intersection, and pads
    /// the doubly encrypted intersection with uniformly sampled elements of
    /// `U1†` up to the obfuscated size. Returned sorted by value.
    pub fn select_obfuscated<R: Rng + ?Sized>(
        &mut self,
        u2_dagger: &[GroupElement],
        rng: &mut R,
    ) -> Result<Vec<GroupElement>> {
        self.expect(WeakPhase::PeerSetEncrypted, "select_obfuscated")?;
        if u2_dagger.len() != self.own.len() {
            return Err(Error::Integrity(format!(
                "received {} doubly encrypted elements for {} own ids",
                u2_dagger.len(),
                self.own.len()
            )));
        }
        let mut genuine = BTreeSet::new();
        let mut intersection = Vec::new();
        for (x, (_, id)) in u2_dagger.iter().zip(&self.own) {
            if !genuine.insert(x.clone()) {
                return Err(Error::Integrity(
                    "doubly encrypted weak set repeats an element".into(),
                ));
            }
            if self.u1_dagger.contains(x) {
                intersection.push(id.clone());
            }
        }
        genuine.retain(|x| self.u1_dagger.contains(x));

        let target = obfuscated_target_size(self.u1_dagger.len(), genuine.len(), self.lambda)?;
        let pool: Vec<GroupElement> = self.u1_dagger.difference(&genuine).cloned().collect();
        let padding = index::sample(rng, pool.len(), target - genuine.len());
        let mut selection: Vec<GroupElement> = genuine.into_iter().collect();
        selection.extend(padding.iter().map(|i| pool[i].clone()));
        selection.sort();

        self.intersection = intersection.into_iter().collect();
        self.selected = selection.len();
        self.phase = WeakPhase::Selected;
        Ok(selection)
    }

    /// Removes the weak layer from `U_obf`, leaving id hashes, and checks
    /// that the genuine ones are exactly the intersection found earlier.
    pub fn peel_layers(&mut self, u_obf: &[GroupElement]) -> Result<()> {
        self.expect(WeakPhase::Selected, "peel_layers")?;
        if u_obf.len() != self.selected {
            return Err(Error::Integrity(format!(
                "received {} peeled elements for a selection of {}",
                u_obf.len(),
                self.selected
            )));
        }
        let key = self.key();
        let tokens = u_obf
            .iter()
            .map(|x| key.decrypt(x))
            .collect::<Result<BTreeSet<_>>>()?;
        if tokens.len() != u_obf.len() {
            return Err(Error::Integrity(
                "peeled selection repeats an element".into(),
            ));
        }
        let recovered: IdSet = tokens
            .iter()
            .filter_map(|t| self.own_tokens.get(t).cloned())
            .collect();
        if recovered != self.intersection {
            let missing = self.intersection.iter().find(|id| !recovered.contains(id));
            return Err(Error::Integrity(match missing {
                Some(id) => format!("intersection id {id} did not survive peeling"),
                None => "peeling produced own ids outside the intersection".into(),
            }));
        }
        self.revealed = tokens.into_iter().collect();
        self.phase = WeakPhase::Peeled;
        Ok(())
    }

    /// The obfuscated set as id hashes, sorted, for the strong party.
    pub fn reveal_obfuscated(&mut self) -> Result<Vec<GroupElement>> {
        self.expect(WeakPhase::Peeled, "reveal_obfuscated")?;
        self.phase = WeakPhase::Revealed;
        log::debug!(
            "revealing {} obfuscated elements (first {})",
            self.revealed.len(),
            self.revealed.first().map(short).unwrap_or_default()
        );
        Ok(self.revealed.clone())
    }

    pub fn finish(&mut self) -> Result<ApsiResultWeak> {
        self.expect(WeakPhase::Revealed, "finish")?;
        let genuine = self
            .revealed
            .iter()
            .filter_map(|t| self.own_tokens.get(t).map(|id| (t.clone(), id.clone())))
            .collect();
        Ok(ApsiResultWeak {
            intersection: self.intersection.clone(),
            tokens: self.revealed.clone(),
            genuine,
        })
    }
}
