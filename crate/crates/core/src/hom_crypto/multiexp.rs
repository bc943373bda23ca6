//! Bucketed simultaneous exponentiation: `prod_i base_i^exp_i mod m`.

use num_bigint::BigUint;
use num_traits::{One, Zero};

fn mul(acc: Option<BigUint>, x: &BigUint, modulus: &BigUint) -> BigUint {
    match acc {
        Some(a) => (a * x) % modulus,
        None => x.clone(),
    }
}

fn digit(words: &[u64], start: u64, width: u64) -> usize {
    let mut out = 0usize;
    for i in 0..width {
        let bit = start + i;
        let word = (bit / 64) as usize;
        if word < words.len() && (words[word] >> (bit % 64)) & 1 == 1 {
            out |= 1 << i;
        }
    }
    out
}

fn window_width(terms: usize, bits: u64) -> u64 {
    (1..=16u64)
        .min_by_key(|&c| {
            let windows = bits.div_ceil(c);
            windows * (terms as u64 + (1 << c)) + windows * c
        })
        .unwrap_or(1)
}

pub(crate) fn multi_exp(terms: &[(&BigUint, BigUint)], modulus: &BigUint) -> BigUint {
    let live: Vec<(&BigUint, &BigUint)> = terms
        .iter()
        .filter(|(_, e)| !e.is_zero())
        .map(|(b, e)| (*b, e))
        .collect();
    if live.is_empty() {
        return BigUint::one() % modulus;
    }

    // Shared power-of-two factors come out as trailing squarings.
    let shift = live
        .iter()
        .filter_map(|(_, e)| e.trailing_zeros())
        .min()
        .unwrap_or(0);
    let digits: Vec<Vec<u64>> = live
        .iter()
        .map(|(_, e)| (*e >> shift).to_u64_digits())
        .collect();
    let bits = live
        .iter()
        .map(|(_, e)| e.bits() - shift)
        .max()
        .unwrap_or(0);

    let c = window_width(live.len(), bits);
    let windows = bits.div_ceil(c);
    let mut acc: Option<BigUint> = None;
    for w in (0..windows).rev() {
        if let Some(a) = acc.as_mut() {
            for _ in 0..c {
                *a = (&*a * &*a) % modulus;
            }
        }
        let mut buckets: Vec<Option<BigUint>> = vec![None; 1 << c];
        for ((base, _), words) in live.iter().zip(&digits) {
            let d = digit(words, w * c, c);
            if d != 0 {
                buckets[d] = Some(mul(buckets[d].take(), base, modulus));
            }
        }
        let mut running: Option<BigUint> = None;
        let mut window_sum: Option<BigUint> = None;
        for bucket in buckets.iter().skip(1).rev() {
            if let Some(b) = bucket {
                running = Some(mul(running, b, modulus));
            }
            if let Some(r) = &running {
                window_sum = Some(mul(window_sum, r, modulus));
            }
        }
        if let Some(s) = window_sum {
            acc = Some(mul(acc, &s, modulus));
        }
    }

    let mut out = acc.unwrap_or_else(|| BigUint::one() % modulus);
    for _ in 0..shift {
        out = (&out * &out) % modulus;
    }
    out
}
