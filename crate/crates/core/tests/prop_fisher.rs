use dtlab::dgauss::fisher_exact;
use dtlab::fisher::{
    chi_star_from_profile, chi_star_upper, delta_star_lower, log_grid, phi_dt_relative_d, rescaled_dt_profile, stam_bound,
    PhiProfile,
};
use dtlab::rational::{frac, int, to_f64, Rational};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_increasing_and_bounded(cp in 1i64..=50, cq in 1i64..=10, a in 1i64..=200, b in 1i64..=200, q in 1i64..=20) {
        prop_assume!(a != b);
        let csq = frac(cp, cq);
        let (lo, hi) = (frac(a.min(b), q), frac(a.max(b), q));
        let p_lo = phi_dt_relative_d(&lo, &csq).unwrap().exact.unwrap();
        let p_hi = phi_dt_relative_d(&hi, &csq).unwrap().exact.unwrap();
        prop_assert!(p_lo < p_hi);
        prop_assert!(p_lo > int(1) && p_hi < int(2));
    }

    #[test]
    fn closed_form_matches_conjugate_vector(tp in 1i64..=9, tq in 1i64..=9, rp in 1i64..=6, rq in 2i64..=7) {
        prop_assume!(rp < rq);
        let t = frac(tp, tq);
        let r = frac(rp, rq);
        let csq = &t * (int(1) / (&r * &r) - int(1));
        prop_assert_eq!(phi_dt_relative_d(&t, &csq).unwrap().exact.unwrap(), fisher_exact(&t, &csq).unwrap());
    }

    #[test]
    fn stam_below_min(x in 1e-6f64..1e6, y in 1e-6f64..1e6, inf_x in prop::bool::weighted(0.1)) {
        let x = if inf_x { f64::INFINITY } else { x };
        prop_assert!(stam_bound(x, y).unwrap() <= x.min(y));
    }

    #[test]
    fn lower_bound_monotone(amp in prop::collection::vec(0.0f64..3.0, 8), shrink in prop::collection::vec(0.0f64..=1.0, 8)) {
        let ts = log_grid(1.0, 1e-4, 16).unwrap();
        let f = |k: usize| amp[k % amp.len()];
        let big = PhiProfile::from_fn(ts.clone(), false, |t| {
            let k = (-to_f64(t).log10() * 2.0) as usize;
            f(k) / to_f64(t)
        }).unwrap();
        let small = big.map(|t, phi| phi * shrink[((-t.log10() * 2.0) as usize) % shrink.len()]).unwrap();
        let (b, s) = (delta_star_lower(&big, 2).unwrap(), delta_star_lower(&small, 2).unwrap());
        prop_assert!(s.lower_bound >= b.lower_bound);
    }

    #[test]
    fn entropy_below_upper_bound(v in 0.05f64..20.0, n in 1usize..=3) {
        let ts = log_grid(1e6, 1e-8, 32).unwrap();
        let p = PhiProfile::from_fn(ts, false, |t| n as f64 / (v + to_f64(t))).unwrap();
        let chi = chi_star_from_profile(&p, n).unwrap();
        prop_assert!(chi.value <= chi_star_upper(n, n as f64 * v).unwrap() + chi.quadrature_error + 1e-9);
    }
}

#[test]
fn dt_profile_entropy_is_below_upper_bound() {
    for csq in [frac(1, 4), frac(3, 4), int(3)] {
        let c2 = to_f64(&csq);
        let ts = log_grid(1e6, 1e-8, 32).unwrap();
        let p = PhiProfile::from_fn(ts, false, |t| {
            let t = to_f64(t);
            (2.0 * t / (c2 + 2.0 * t) + 1.0) / t
        })
        .unwrap();
        let chi = chi_star_from_profile(&p, 2).unwrap();
        // δ*(Z : D) = 1 < 2 forces χ* = −∞, which the quadrature reports
        assert!(chi.diverges());
        assert!(chi.value <= chi_star_upper(2, 1.0 / 3.0 + c2 / 2.0).unwrap());
    }
}

#[test]
fn rescaled_profile_times_t_is_phi() {
    let csq = frac(3, 4);
    let ts: Vec<Rational> = (0..6).map(|k| frac(1, 4i64.pow(k))).collect();
    let p = rescaled_dt_profile(&csq, &ts).unwrap();
    for s in p.samples() {
        let phi = phi_dt_relative_d(&s.t, &csq).unwrap().exact.unwrap();
        assert_eq!(s.exact.clone().unwrap() * &s.t, phi);
    }
}
