use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::error::ProtocolError;
use crate::ph_cipher::{generate_group, hash_to_group};

fn group() -> GroupParams {
    static G: OnceLock<GroupParams> = OnceLock::new();
    G.get_or_init(|| generate_group(96, &mut ChaCha20Rng::seed_from_u64(96)).unwrap())
        .clone()
}

fn ids(names: &[&str]) -> IdSet {
    IdSet::from_ids(names.iter().copied()).unwrap()
}

fn lam(v: f64) -> SecurityNumber {
    SecurityNumber::new(v).unwrap()
}

/// Drives both state machines directly, without a transport.
fn drive(
    strong_ids: &IdSet,
    weak_ids: &IdSet,
    lambda: f64,
    rng: &mut ChaCha20Rng,
) -> Result<(ApsiResultStrong, ApsiResultWeak)> {
    let mut s = StrongApsi::new(strong_ids.clone(), group(), rng)?;
    let mut w = WeakApsi::new(weak_ids.clone(), lam(lambda), 64)?;
    let p = s.exchange_group()?.p().clone();
    let g = w.exchange_group(p, rng)?;
    s.confirm_group(g.p())?;
    let u1 = s.encrypt_own_set()?;
    let u2 = w.encrypt_own_set()?;
    w.double_encrypt_peer_set(&u1)?;
    let u2_dagger = s.double_encrypt_peer_set(&u2)?;
    let sel = w.select_obfuscated(&u2_dagger, rng)?;
    let u_obf = s.peel_layers(&sel)?;
    w.peel_layers(&u_obf)?;
    let i_obf = w.reveal_obfuscated()?;
    Ok((s.receive_reveal(&i_obf)?, w.finish()?))
}

fn check_contract(
    strong_ids: &IdSet,
    weak_ids: &IdSet,
    lambda: f64,
    s: &ApsiResultStrong,
    w: &ApsiResultWeak,
) {
    let truth = strong_ids.intersection(weak_ids);
    assert_eq!(w.intersection(), &truth);
    let obf = s.obfuscated();
    assert!(truth.is_subset(&obf));
    assert!(obf.is_subset(strong_ids));
    assert_eq!(
        obf.len(),
        obfuscated_target_size(strong_ids.len(), truth.len(), lam(lambda)).unwrap()
    );
    let strong_tokens: Vec<&GroupElement> = s.tokens().collect();
    let weak_tokens: Vec<&GroupElement> = w.obfuscated_tokens().iter().collect();
    assert_eq!(strong_tokens, weak_tokens);
    let genuine: IdSet = w.aligned_ids().into_iter().flatten().collect();
    assert_eq!(genuine, truth);
}

#[test]
fn four_and_two_at_lambda_zero() {
    let (strong, weak) = (ids(&["a", "b", "c", "d"]), ids(&["b", "c"]));
    let (s, w) = run_apsi(strong.clone(), weak.clone(), lam(0.0), group(), 1).unwrap();
    assert_eq!(w.intersection(), &ids(&["b", "c"]));
    assert_eq!(s.obfuscated(), ids(&["b", "c"]));
    check_contract(&strong, &weak, 0.0, &s, &w);
}

#[test]
fn four_and_two_at_lambda_one() {
    let (strong, weak) = (ids(&["a", "b", "c", "d"]), ids(&["b", "c"]));
    let (s, w) = run_apsi(strong.clone(), weak.clone(), lam(1.0), group(), 2).unwrap();
    assert_eq!(s.obfuscated(), strong);
    assert_eq!(w.intersection(), &ids(&["b", "c"]));
    assert_eq!(w.aligned_ids().iter().filter(|x| x.is_none()).count(), 2);
}

#[test]
fn random_instances_match_brute_force() {
    let mut rng = ChaCha20Rng::seed_from_u64(500);
    for (round, lambda) in [0.0, 0.3, 0.5, 0.9, 1.0].into_iter().enumerate() {
        let universe: Vec<String> = (0..800).map(|i| format!("user-{i}")).collect();
        let strong: IdSet = universe
            .choose_multiple(&mut rng, 500)
            .map(|s| SampleId::from(s.as_str()))
            .collect();
        let mut weak_pick: Vec<SampleId> = strong
            .iter()
            .cloned()
            .collect::<Vec<_>>()
            .choose_multiple(&mut rng, 30)
            .cloned()
            .collect();
        weak_pick.extend((0..20).map(|i| SampleId::from(format!("outsider-{i}"))));
        let weak: IdSet = weak_pick.into_iter().collect();
        let (s, w) = drive(&strong, &weak, lambda, &mut rng).unwrap();
        check_contract(&strong, &weak, lambda, &s, &w);
        assert_eq!(w.intersection().len(), 30, "round {round}");
    }
}

#[test]
fn double_encryption_commutes() {
    let g = group();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let (a, b) = (keygen(&g, &mut rng), keygen(&g, &mut rng));
    let h = hash_to_group(&g, b"alice");
    assert_eq!(
        b.encrypt(&a.encrypt(&h).unwrap()).unwrap(),
        a.encrypt(&b.encrypt(&h).unwrap()).unwrap()
    );
}

use crate::ph_cipher::keygen;

#[test]
fn peeled_selection_maps_into_strong_hash_table() {
    let strong: IdSet = (0..40).map(|i| SampleId::from(format!("s{i}"))).collect();
    let weak: IdSet = (30..45).map(|i| SampleId::from(format!("s{i}"))).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let (_, w) = drive(&strong, &weak, 0.6, &mut rng).unwrap();
    let table: HashMap<GroupElement, &SampleId> = strong
        .iter()
        .map(|id| (hash_to_group(&group(), id.as_bytes()), id))
        .collect();
    for t in w.obfuscated_tokens() {
        assert!(table.contains_key(t));
    }
}

#[test]
fn lambda_zero_selection_is_the_doubly_encrypted_intersection() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let strong: IdSet = (0..30).map(|i| SampleId::from(format!("x{i}"))).collect();
    let weak: IdSet = (20..35).map(|i| SampleId::from(format!("x{i}"))).collect();
    let mut s = StrongApsi::new(strong, group(), &mut rng).unwrap();
    let mut w = WeakApsi::new(weak, lam(0.0), 64).unwrap();
    let p = s.exchange_group().unwrap().p().clone();
    w.exchange_group(p.clone(), &mut rng).unwrap();
    s.confirm_group(&p).unwrap();
    let u1 = s.encrypt_own_set().unwrap();
    let u2 = w.encrypt_own_set().unwrap();
    w.double_encrypt_peer_set(&u1).unwrap();
    let u2_dagger = s.double_encrypt_peer_set(&u2).unwrap();
    let sel = w.select_obfuscated(&u2_dagger, &mut rng).unwrap();
    let u1_dagger: BTreeSet<GroupElement> =
        u1.iter().map(|x| w.key().encrypt(x).unwrap()).collect();
    let expected: Vec<GroupElement> = u2_dagger
        .iter()
        .filter(|x| u1_dagger.contains(*x))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    assert_eq!(sel, expected);
    assert_eq!(sel.len(), 10);
}

#[test]
fn transitions_out_of_order_are_rejected() {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let mut s = StrongApsi::new(ids(&["a", "b"]), group(), &mut rng).unwrap();
    assert!(matches!(
        s.encrypt_own_set(),
        Err(Error::Protocol(ProtocolError::OutOfOrder {
            transition: "encrypt_own_set",
            phase: "init"
        }))
    ));
    assert!(s.peel_layers(&[]).is_err());
    assert!(s.receive_reveal(&[]).is_err());

    let mut w = WeakApsi::new(ids(&["a"]), lam(0.5), 64).unwrap();
    assert!(w.select_obfuscated(&[], &mut rng).is_err());
    assert!(w.reveal_obfuscated().is_err());
    assert!(w.finish().is_err());
    let p = s.exchange_group().unwrap().p().clone();
    w.exchange_group(p.clone(), &mut rng).unwrap();
    assert!(matches!(
        w.exchange_group(p, &mut rng),
        Err(Error::Protocol(ProtocolError::OutOfOrder { .. }))
    ));
}

#[test]
fn empty_intersection_aborts_both_sides() {
    let err = run_apsi(ids(&["a", "b"]), ids(&["c"]), lam(0.5), group(), 7).unwrap_err();
    assert!(matches!(err, Error::EmptyIntersection), "{err}");

    let (mut ss, mut ws) = Session::in_process_pair();
    let (strong_err, _) = thread::scope(|scope| {
        let h = scope.spawn(|| {
            let mut rng = ChaCha20Rng::seed_from_u64(1);
            run_strong(&mut ss, ids(&["a", "b"]), group(), &mut rng)
        });
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let w = run_weak(&mut ws, ids(&["c"]), lam(0.5), 64, &mut rng);
        (h.join().unwrap().unwrap_err(), w)
    });
    assert!(matches!(
        strong_err,
        Error::Protocol(ProtocolError::PeerAborted(_))
    ));
}

#[test]
fn weak_refuses_small_or_bad_groups() {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let mut w = WeakApsi::new(ids(&["a"]), lam(0.5), 128).unwrap();
    assert!(matches!(
        w.exchange_group(group().p().clone(), &mut rng),
        Err(Error::GroupMismatch(_))
    ));
    let mut w = WeakApsi::new(ids(&["a"]), lam(0.5), 8).unwrap();
    // 2^89 - 1 is prime but (p - 1) / 2 is not.
    let not_safe = (BigUint::from(1u32) << 89) - 1u32;
    assert!(matches!(
        w.exchange_group(not_safe, &mut rng),
        Err(Error::GroupMismatch(_))
    ));
}

use num_bigint::BigUint;

#[test]
fn strong_rejects_tampered_reveal() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let strong = ids(&["a", "b", "c"]);
    let mut s = StrongApsi::new(strong, group(), &mut rng).unwrap();
    let mut w = WeakApsi::new(ids(&["a", "b"]), lam(0.0), 64).unwrap();
    let p = s.exchange_group().unwrap().p().clone();
    w.exchange_group(p.clone(), &mut rng).unwrap();
    s.confirm_group(&p).unwrap();
    let u1 = s.encrypt_own_set().unwrap();
    let u2 = w.encrypt_own_set().unwrap();
    w.double_encrypt_peer_set(&u1).unwrap();
    let sel = w
        .select_obfuscated(&s.double_encrypt_peer_set(&u2).unwrap(), &mut rng)
        .unwrap();
    let u_obf = s.peel_layers(&sel).unwrap();
    w.peel_layers(&u_obf).unwrap();
    let mut i_obf = w.reveal_obfuscated().unwrap();
    i_obf[0] = hash_to_group(&group(), b"mallory");
    assert!(matches!(s.receive_reveal(&i_obf), Err(Error::Integrity(_))));
}

#[test]
fn weak_detects_dropped_intersection_element() {
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let mut s = StrongApsi::new(ids(&["a", "b", "c", "d"]), group(), &mut rng).unwrap();
    let mut w = WeakApsi::new(ids(&["a", "b"]), lam(0.0), 64).unwrap();
    let p = s.exchange_group().unwrap().p().clone();
    w.exchange_group(p.clone(), &mut rng).unwrap();
    s.confirm_group(&p).unwrap();
    let u1 = s.encrypt_own_set().unwrap();
    let u2 = w.encrypt_own_set().unwrap();
    w.double_encrypt_peer_set(&u1).unwrap();
    let sel = w
        .select_obfuscated(&s.double_encrypt_peer_set(&u2).unwrap(), &mut rng)
        .unwrap();
    let mut u_obf = s.peel_layers(&sel).unwrap();
    // Replace one element with a strong-only id under the weak key.
    u_obf[0] = w.key().encrypt(&hash_to_group(&group(), b"d")).unwrap();
    assert!(matches!(w.peel_layers(&u_obf), Err(Error::Integrity(_))));
}

/// Padding is uniform over the strong-only elements, and a uniformly drawn
/// obfuscated element is genuine with probability |∩| / |obf|.
#[test]
fn padding_is_uniform_and_guessing_rate_matches() {
    let strong: IdSet = (0..20).map(|i| SampleId::from(format!("p{i}"))).collect();
    let weak: IdSet = (0..4)
        .chain([50])
        .map(|i| SampleId::from(format!("p{i}")))
        .collect();
    let truth = strong.intersection(&weak);
    let target = obfuscated_target_size(20, 4, lam(0.5)).unwrap();
    assert_eq!(target, 9);

    let runs = 600;
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let mut counts: HashMap<SampleId, usize> = HashMap::new();
    let mut genuine_draws = 0usize;
    for _ in 0..runs {
        let (s, _) = drive(&strong, &weak, 0.5, &mut rng).unwrap();
        let obf: Vec<SampleId> = s.obfuscated().iter().cloned().collect();
        for id in &obf {
            *counts.entry(id.clone()).or_default() += 1;
        }
        let pick = &obf[rng.gen_range(0..obf.len())];
        genuine_draws += truth.contains(pick) as usize;
    }
    let expected = (target - truth.len()) as f64 / (strong.len() - truth.len()) as f64;
    for id in strong.iter().filter(|id| !truth.contains(id)) {
        let freq = counts.get(id).copied().unwrap_or(0) as f64 / runs as f64;
        // Binomial sd is about 0.019 at 600 runs.
        assert!((freq - expected).abs() < 0.08, "{id}: {freq} vs {expected}");
    }
    let rate = genuine_draws as f64 / runs as f64;
    let bound = truth.len() as f64 / target as f64;
    assert!((rate - bound).abs() < 0.08, "{rate} vs {bound}");
}
