use dtlab::dgauss::{
    conjugate_residual_family, ed_moment, fisher_exact, tau, DtModel, Generator, PiecewisePoly, SLetter, Word, WordExpr,
};
use dtlab::rational::{frac, int, Rational};
use num_traits::{Signed, Zero};
use proptest::prelude::*;

fn rat() -> impl Strategy<Value = Rational> {
    (-4i64..=4, 1i64..=3).prop_map(|(p, q)| frac(p, q))
}

fn poly() -> impl Strategy<Value = PiecewisePoly> {
    let single = prop::collection::vec(rat(), 1..=3).prop_map(PiecewisePoly::poly);
    let split = (prop::collection::vec(rat(), 1..=2), prop::collection::vec(rat(), 1..=2), 1i64..=3).prop_map(|(a, b, k)| {
        let m = frac(k, 4);
        PiecewisePoly::from_pieces(vec![(int(0), m.clone(), a), (m, int(1), b)]).unwrap()
    });
    prop_oneof![3 => single, 1 => split]
}

fn generator() -> impl Strategy<Value = Generator> {
    prop::sample::select(Generator::ALL.to_vec())
}

fn word(max_len: usize) -> impl Strategy<Value = WordExpr> {
    prop::collection::vec(generator(), 0..=max_len)
        .prop_flat_map(|gens| {
            let k = gens.len() + 1;
            (Just(gens), prop::collection::vec(poly(), k), rat())
        })
        .prop_map(|(gens, inserts, c)| WordExpr::word(c, Word { inserts, gens }).unwrap())
}

fn expr(max_len: usize) -> impl Strategy<Value = WordExpr> {
    prop::collection::vec(word(max_len), 1..=2).prop_map(|ws| ws.iter().fold(WordExpr::zero(), |acc, w| &acc + w))
}

fn gen_expr(g: Generator) -> WordExpr {
    WordExpr::gen(g)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn traciality(a in expr(4), b in expr(4)) {
        prop_assert_eq!(tau(&(&a * &b)).unwrap(), tau(&(&b * &a)).unwrap());
    }

    #[test]
    fn positivity(w in expr(3)) {
        prop_assert!(!tau(&(&w.adjoint() * &w)).unwrap().is_negative());
    }

    #[test]
    fn star_compatible(w in expr(6)) {
        prop_assert_eq!(tau(&w.adjoint()).unwrap(), tau(&w).unwrap());
    }

    #[test]
    fn bimodule(w in expr(4), d1 in poly(), d2 in poly()) {
        let lhs = ed_moment(&(&(&WordExpr::poly(d1.clone()) * &w) * &WordExpr::poly(d2.clone()))).unwrap();
        let rhs = d1.mul(&ed_moment(&w).unwrap()).mul(&d2);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn odd_words_vanish(gens in prop::collection::vec(generator(), 0..=3), inserts in prop::collection::vec(poly(), 8)) {
        let mut gens = gens;
        gens.push(Generator::T1);
        if gens.len() % 2 == 0 {
            gens.push(Generator::T2_STAR);
        }
        let inserts = inserts[..gens.len() + 1].to_vec();
        let w = WordExpr::word(int(1), Word { inserts, gens }).unwrap();
        prop_assert!(ed_moment(&w).unwrap().is_zero());
    }

    #[test]
    fn covariance(d in poly()) {
        for (g, gs) in [(Generator::T1, Generator::T1_STAR), (Generator::T2, Generator::T2_STAR)] {
            let dd = WordExpr::poly(d.clone());
            let l = ed_moment(&(&(&gen_expr(g) * &dd) * &gen_expr(gs))).unwrap();
            let ls = ed_moment(&(&(&gen_expr(gs) * &dd) * &gen_expr(g))).unwrap();
            // L(d)(x) = ∫_x^1 d, L*(d)(x) = ∫_0^x d, checked at sample points through the integral
            let total = d.integral();
            for x in [frac(0, 1), frac(1, 5), frac(1, 2), frac(7, 9)] {
                let cut = PiecewisePoly::from_pieces(vec![(int(0), x.clone(), vec![int(1)]), (x.clone(), int(1), vec![int(0)])]);
                let below = match cut {
                    Ok(c) => d.mul(&c).integral(),
                    Err(_) => Rational::zero(),
                };
                prop_assert_eq!(ls.eval(&x).unwrap(), below.clone());
                prop_assert_eq!(l.eval(&x).unwrap(), &total - &below);
            }
            prop_assert_eq!(l, d.cov_l());
            prop_assert_eq!(ls, d.cov_lstar());
        }
    }

    #[test]
    fn fisher_consistent(tp in 1i64..=9, tq in 1i64..=9, rp in 1i64..=8, rq in 2i64..=9) {
        prop_assume!(rp < rq);
        let t = frac(tp, tq);
        let r = frac(rp, rq);
        let csq = &t * (Rational::from_integer(1.into()) / (&r * &r) - int(1));
        let closed = &t / (&csq + &t) + int(1);
        prop_assert_eq!(fisher_exact(&t, &csq).unwrap(), closed);
    }

    #[test]
    fn scaling_preserves_conjugacy(
        letters in prop::collection::vec(prop::bool::ANY, 1..=3),
        inserts in prop::collection::vec(poly(), 4),
        which in 0usize..3,
        target in prop::bool::ANY,
    ) {
        let scale = [frac(1, 2), int(2), int(3)][which].clone();
        let m = DtModel::with_identity(frac(1, 4), frac(3, 4)).unwrap();
        let family = [m.letter(SLetter::S).scale(&scale), m.letter(SLetter::SStar).scale(&scale)];
        let xi = if target { m.xi() } else { m.xi().adjoint() };
        let xi = xi.scale(&(Rational::from_integer(1.into()) / &scale));
        let word: Vec<usize> = letters.iter().map(|&b| b as usize).collect();
        let ins = inserts[..word.len() + 1].to_vec();
        let target_idx = if target { 0 } else { 1 };
        prop_assert!(conjugate_residual_family(&xi, &family, target_idx, &word, &ins).unwrap().is_zero());
    }
}
