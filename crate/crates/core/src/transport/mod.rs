//! Two-party message plumbing.
//!
//! Every message is an [`Envelope`] serialized as JSON and framed with a
//! 4-byte big-endian length. Big integers travel as lowercase hex strings.
//! A [`Session`] wraps a byte [`Channel`] and enforces the step tag and the
//! per-direction sequence number of every received message.

mod channel;

pub use channel::{
    connect, connect_with_retry, in_process_pair, listen, tcp_loopback_pair, Channel,
    InProcChannel, TcpChannel,
};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ProtocolError, Result};
use crate::hom_crypto::Ciphertext;
use crate::ph_cipher::GroupElement;

/// Frames longer than this are rejected before allocation.
pub const MAX_FRAME_LEN: usize = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Apsi,
    Avlr,
}

impl Protocol {
    /// The protocol a step tag belongs to, from its first path segment.
    pub fn of_tag(tag: &str) -> Result<Protocol> {
        match tag.split('/').next() {
            Some("apsi") => Ok(Protocol::Apsi),
            Some("avlr") => Ok(Protocol::Avlr),
            _ => Err(Error::Transport(format!(
                "step tag {tag:?} names no known protocol"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Group {
        #[serde(with = "crate::hexser")]
        p: BigUint,
    },
    Elements(Vec<GroupElement>),
    AvlrSetup {
        #[serde(with = "crate::hexser")]
        n: BigUint,
        samples: u64,
        iterations: u64,
    },
    Reals(Vec<f64>),
    Ciphertexts(Vec<Ciphertext>),
    Abort(String),
}

impl Payload {
    fn kind(&self) -> &'static str {
        match self {
            Payload::Group { .. } => "group",
            Payload::Elements(_) => "elements",
            Payload::AvlrSetup { .. } => "avlr_setup",
            Payload::Reals(_) => "reals",
            Payload::Ciphertexts(_) => "ciphertexts",
            Payload::Abort(_) => "abort",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub protocol: Protocol,
    pub step_tag: String,
    pub sequence: u64,
    pub payload: Payload,
}

impl Envelope {
    pub fn to_frame(&self) -> Result<Vec<u8>> {
        let body = serde_json::to_vec(self)?;
        if body.len() > MAX_FRAME_LEN {
            return Err(Error::Transport(format!(
                "message of {} bytes exceeds the frame limit",
                body.len()
            )));
        }
        let mut frame = Vec::with_capacity(body.len() + 4);
        frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
        frame.extend_from_slice(&body);
        Ok(frame)
    }

    pub fn from_frame(frame: &[u8]) -> Result<Self> {
        let (header, body) = frame
            .split_first_chunk::<4>()
            .ok_or_else(|| Error::Transport("frame shorter than its length header".into()))?;
        let len = u32::from_be_bytes(*header) as usize;
        if len != body.len() {
            return Err(Error::Transport(format!(
                "frame header announces {len} bytes, body has {}",
                body.len()
            )));
        }
        Ok(serde_json::from_slice(body)?)
    }

    pub fn into_elements(self) -> Result<Vec<GroupElement>> {
        match self.payload {
            Payload::Elements(v) => Ok(v),
            other => Err(unexpected(&self.step_tag, &other)),
        }
    }

    pub fn into_reals(self) -> Result<Vec<f64>> {
        match self.payload {
            Payload::Reals(v) => Ok(v),
            other => Err(unexpected(&self.step_tag, &other)),
        }
    }

    pub fn into_ciphertexts(self) -> Result<Vec<Ciphertext>> {
        match self.payload {
            Payload::Ciphertexts(v) => Ok(v),
            other => Err(unexpected(&self.step_tag, &other)),
        }
    }
}

fn unexpected(tag: &str, payload: &Payload) -> Error {
    ProtocolError::UnexpectedPayload(format!("{tag} carried a {} payload", payload.kind())).into()
}

/// One endpoint of a two-party conversation.
pub struct Session {
    channel: Box<dyn Channel>,
    next_send: u64,
    next_recv: u64,
}

impl Session {
    pub fn new(channel: Box<dyn Channel>) -> Self {
        Self {
            channel,
            next_send: 0,
            next_recv: 0,
        }
    }

    /// Two connected in-process sessions.
    pub fn in_process_pair() -> (Session, Session) {
        let (a, b) = in_process_pair();
        (Session::new(Box::new(a)), Session::new(Box::new(b)))
    }

    /// Two sessions joined by a loopback TCP connection.
    pub fn tcp_loopback_pair() -> Result<(Session, Session)> {
        let (a, b) = tcp_loopback_pair()?;
        Ok((Session::new(Box::new(a)), Session::new(Box::new(b))))
    }

    pub fn send(&mut self, step_tag: &str, payload: Payload) -> Result<()> {
        let envelope = Envelope {
            protocol: Protocol::of_tag(step_tag)?,
            step_tag: step_tag.to_owned(),
            sequence: self.next_send,
            payload,
        };
        self.channel.send_frame(&envelope.to_frame()?)?;
        self.next_send += 1;
        log::trace!("sent {step_tag} #{}", envelope.sequence);
        Ok(())
    }

    /// Tells the peer this side is giving up, best effort.
    pub fn abort(&mut self, protocol: Protocol, reason: &str) {
        let tag = match protocol {
            Protocol::Apsi => "apsi/abort",
            Protocol::Avlr => "avlr/abort",
        };
        if let Err(e) = self.send(tag, Payload::Abort(reason.to_owned())) {
            log::debug!("could not deliver abort: {e}");
        }
    }

    /// Receives the next message, which must carry `expected_tag` and the
    /// next sequence number.
    pub fn recv(&mut self, expected_tag: &str) -> Result<Envelope> {
        let envelope = Envelope::from_frame(&self.channel.recv_frame()?)?;
        if envelope.sequence != self.next_recv {
            return Err(ProtocolError::SequenceGap {
                expected: self.next_recv,
                received: envelope.sequence,
            }
            .into());
        }
        self.next_recv += 1;
        if let Payload::Abort(reason) = &envelope.payload {
            return Err(ProtocolError::PeerAborted(reason.clone()).into());
        }
        if envelope.step_tag != expected_tag || envelope.protocol != Protocol::of_tag(expected_tag)?
        {
            return Err(ProtocolError::UnexpectedStep {
                expected: expected_tag.to_owned(),
                received: envelope.step_tag,
            }
            .into());
        }
        log::trace!("received {expected_tag} #{}", envelope.sequence);
        Ok(envelope)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn element(v: u64) -> GroupElement {
        GroupElement::new(BigUint::from(v))
    }

    #[test]
    fn in_process_roundtrip_is_byte_identical() {
        let (mut a, mut b) = Session::in_process_pair();
        let payload = Payload::Elements(vec![element(9), element(0xdead_beef)]);
        a.send("apsi/4/u1", payload.clone()).unwrap();
        let env = b.recv("apsi/4/u1").unwrap();
        assert_eq!(env.protocol, Protocol::Apsi);
        assert_eq!(env.sequence, 0);
        assert_eq!(
            serde_json::to_vec(&env.payload).unwrap(),
            serde_json::to_vec(&payload).unwrap()
        );
    }

    #[test]
    fn wrong_step_is_a_protocol_error() {
        let (mut a, mut b) = Session::in_process_pair();
        a.send("avlr/4/scores", Payload::Reals(vec![1.0])).unwrap();
        let err = b.recv("avlr/6/residuals").unwrap_err();
        assert!(matches!(
            err,
            Error::Protocol(ProtocolError::UnexpectedStep { ref expected, ref received })
                if expected == "avlr/6/residuals" && received == "avlr/4/scores"
        ));
    }

    #[test]
    fn sequence_gap_is_detected() {
        let (mut a, mut b) = Session::in_process_pair();
        a.next_send = 3;
        a.send("avlr/4/scores", Payload::Reals(vec![])).unwrap();
        assert!(matches!(
            b.recv("avlr/4/scores"),
            Err(Error::Protocol(ProtocolError::SequenceGap {
                expected: 0,
                received: 3
            }))
        ));
    }

    #[test]
    fn sequences_count_per_direction() {
        let (mut a, mut b) = Session::in_process_pair();
        for i in 0..3u64 {
            a.send("apsi/4/u1", Payload::Reals(vec![i as f64])).unwrap();
            assert_eq!(b.recv("apsi/4/u1").unwrap().sequence, i);
        }
        b.send("apsi/4/u2", Payload::Reals(vec![])).unwrap();
        assert_eq!(a.recv("apsi/4/u2").unwrap().sequence, 0);
    }

    #[test]
    fn disconnected_peer_fails_the_receive() {
        let (a, mut b) = Session::in_process_pair();
        drop(a);
        assert!(matches!(b.recv("apsi/1/group"), Err(Error::Transport(_))));
    }

    #[test]
    fn abort_surfaces_on_any_receive() {
        let (mut a, mut b) = Session::in_process_pair();
        a.abort(Protocol::Apsi, "intersection is empty");
        assert!(matches!(
            b.recv("apsi/8/u_obf_dagger"),
            Err(Error::Protocol(ProtocolError::PeerAborted(ref r))) if r == "intersection is empty"
        ));
    }

    #[test]
    fn payload_kind_mismatch() {
        let env = Envelope {
            protocol: Protocol::Avlr,
            step_tag: "avlr/4/scores".into(),
            sequence: 0,
            payload: Payload::Elements(vec![]),
        };
        assert!(matches!(
            env.into_reals(),
            Err(Error::Protocol(ProtocolError::UnexpectedPayload(_)))
        ));
    }

    #[test]
    fn frame_layout() {
        let env = Envelope {
            protocol: Protocol::Apsi,
            step_tag: "apsi/1/group".into(),
            sequence: 7,
            payload: Payload::Group {
                p: BigUint::from(23u32),
            },
        };
        let frame = env.to_frame().unwrap();
        let body = br#"{"protocol":"apsi","step_tag":"apsi/1/group","sequence":7,"payload":{"group":{"p":"17"}}}"#;
        assert_eq!(&frame[..4], &(body.len() as u32).to_be_bytes());
        assert_eq!(&frame[4..], body);
        assert_eq!(Envelope::from_frame(&frame).unwrap(), env);
        assert!(Envelope::from_frame(&frame[..frame.len() - 1]).is_err());
        assert!(Envelope::from_frame(&frame[..2]).is_err());
    }

    #[test]
    fn rejects_non_canonical_hex() {
        for bad in ["017", "", "1G", "AB"] {
            let json = format!(
                r#"{{"protocol":"apsi","step_tag":"apsi/1/group","sequence":0,"payload":{{"group":{{"p":"{bad}"}}}}}}"#
            );
            assert!(serde_json::from_str::<Envelope>(&json).is_err(), "{bad}");
        }
    }

    #[test]
    fn unknown_protocol_tag() {
        let (mut a, _b) = Session::in_process_pair();
        assert!(a.send("psi/1/x", Payload::Reals(vec![])).is_err());
    }

    fn big_hex() -> impl Strategy<Value = BigUint> {
        proptest::collection::vec(any::<u32>(), 1..80).prop_map(BigUint::new)
    }

    fn payload() -> impl Strategy<Value = Payload> {
        prop_oneof![
            big_hex().prop_map(|p| Payload::Group { p }),
            proptest::collection::vec(big_hex().prop_filter("nonzero", |v| v.bits() > 0), 0..40)
                .prop_map(|v| Payload::Elements(v.into_iter().map(GroupElement::new).collect())),
            (big_hex(), any::<u64>(), any::<u64>()).prop_map(|(n, samples, iterations)| {
                Payload::AvlrSetup {
                    n,
                    samples,
                    iterations,
                }
            }),
            proptest::collection::vec(-1e300f64..1e300, 0..40).prop_map(Payload::Reals),
            "[ -~]{0,40}".prop_map(Payload::Abort),
            proptest::collection::vec((big_hex(), 0u32..4), 0..40).prop_map(|v| {
                Payload::Ciphertexts(v.into_iter().map(|(c, s)| Ciphertext::new(c, s)).collect())
            }),
        ]
    }

    proptest! {
        #[test]
        fn envelope_roundtrip(p in payload(), seq in any::<u64>(), avlr in any::<bool>()) {
            let (protocol, tag) = if avlr { (Protocol::Avlr, "avlr/6/residuals") } else { (Protocol::Apsi, "apsi/4/u2") };
            let env = Envelope { protocol, step_tag: tag.into(), sequence: seq, payload: p };
            let back = Envelope::from_frame(&env.to_frame().unwrap()).unwrap();
            prop_assert_eq!(back, env);
        }
    }

    #[test]
    fn thousand_big_integers_roundtrip() {
        use num_bigint::RandBigInt;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1000);
        let cts: Vec<Ciphertext> = (0..1000)
            .map(|_| Ciphertext::new(rng.gen_biguint(4096), 2))
            .collect();
        let env = Envelope {
            protocol: Protocol::Avlr,
            step_tag: "avlr/9/masked_gradient".into(),
            sequence: 12,
            payload: Payload::Ciphertexts(cts),
        };
        assert_eq!(Envelope::from_frame(&env.to_frame().unwrap()).unwrap(), env);
    }
}
