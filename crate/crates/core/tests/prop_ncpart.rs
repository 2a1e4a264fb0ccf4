use std::collections::BTreeMap;

use dtlab::ncpart::{
    all_words, cumulants_to_moments, enumerate_nc_pairings, enumerate_nc_partitions, free_mixed_moments, moebius_nc,
    moments_to_cumulants, MomentSequence, NCPartition,
};
use dtlab::rational::{catalan, frac, Rational};
use num_traits::{One, Zero};
use proptest::prelude::*;

fn sequence(letters: usize, order: usize, values: &[(i64, i64)]) -> MomentSequence {
    let alphabet: Vec<String> = (0..letters).map(|i| format!("x{i}")).collect();
    let mut map = BTreeMap::new();
    for (w, &(p, q)) in all_words(letters, order).into_iter().zip(values.iter().cycle()) {
        map.insert(w, frac(p, q));
    }
    MomentSequence::new(alphabet, order, map).unwrap()
}

fn values() -> impl Strategy<Value = Vec<(i64, i64)>> {
    prop::collection::vec((-7i64..=7, 1i64..=6), 1..40)
}

// C_{k+1} = C_k · 2(2k+1)/(k+2)
fn catalan_oracle(n: usize) -> usize {
    (0..n).fold(1, |c, k| c * 2 * (2 * k + 1) / (k + 2))
}

#[test]
fn catalan_counts() {
    for n in 1..=10 {
        assert_eq!(enumerate_nc_partitions(n).unwrap().len(), catalan_oracle(n), "NC({n})");
        assert_eq!(enumerate_nc_pairings(2 * n).len(), catalan_oracle(n), "NC_2({})", 2 * n);
        assert_eq!(catalan(n), catalan_oracle(n).into());
    }
}

#[test]
fn moebius_sums_to_delta() {
    for n in 1..=6 {
        let all = enumerate_nc_partitions(n).unwrap();
        let zero = NCPartition::zero(n);
        for pi in &all {
            let mut acc = Rational::zero();
            for sigma in all.iter().filter(|s| s.refines(pi)) {
                acc += moebius_nc(sigma, pi).unwrap();
            }
            let want = if *pi == zero { Rational::one() } else { Rational::zero() };
            assert_eq!(acc, want, "n={n} pi={pi}");
        }
    }
}

#[test]
fn round_trip_two_letters_order_eight() {
    let vals: Vec<(i64, i64)> = (0..37).map(|i| ((i * 7) % 11 - 5, (i % 5) + 1)).collect();
    let m = sequence(2, 8, &vals);
    assert_eq!(cumulants_to_moments(&moments_to_cumulants(&m).unwrap()).unwrap(), m);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn round_trip_one_letter(order in 1usize..=8, vals in values()) {
        let m = sequence(1, order, &vals);
        prop_assert_eq!(cumulants_to_moments(&moments_to_cumulants(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn round_trip_two_letters(order in 1usize..=5, vals in values()) {
        let m = sequence(2, order, &vals);
        let k = moments_to_cumulants(&m).unwrap();
        prop_assert_eq!(&moments_to_cumulants(&cumulants_to_moments(&k).unwrap()).unwrap(), &k);
        prop_assert_eq!(cumulants_to_moments(&k).unwrap(), m);
    }

    #[test]
    fn single_family_word_is_plain_moment(vals_a in values(), vals_b in values(), word in prop::collection::vec(0usize..2, 1..=6)) {
        let a = sequence(2, 6, &vals_a);
        let b = MomentSequence::new(vec!["y".into()], 6, {
            let mut m = BTreeMap::new();
            for (w, &(p, q)) in all_words(1, 6).into_iter().zip(vals_b.iter().cycle()) {
                m.insert(w, frac(p, q));
            }
            m
        }).unwrap();
        let names: Vec<&str> = word.iter().map(|&i| if i == 0 { "x0" } else { "x1" }).collect();
        let mixed = free_mixed_moments(&a, &b, &names, 6).unwrap();
        prop_assert_eq!(&mixed, a.get(&word).unwrap());
    }

    #[test]
    fn kreweras_is_order_reversing(n in 1usize..=7, i in 0usize..500, j in 0usize..500) {
        let all = enumerate_nc_partitions(n).unwrap();
        let (p, q) = (&all[i % all.len()], &all[j % all.len()]);
        if p.refines(q) {
            prop_assert!(q.kreweras().refines(&p.kreweras()));
        }
    }
}
