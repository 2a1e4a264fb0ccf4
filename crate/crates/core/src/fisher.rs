//! Free Fisher information profiles, non-microstate entropy and the
//! dimension lower bounds read off them.
//!
//! A profile is a list of samples `t ↦ Φ*(t)` taken on a decreasing grid of
//! `t > 0`. For the entropy integral the profile is `Φ*(a + √t S)`; for the
//! dimension bound it is the same function, and the bound uses `t·Φ*(t)` as
//! `t → 0`.

use std::fmt;
use std::io::{Read, Write};

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::dgauss::{circular_moments, fisher_exact, ExactRow};
use crate::error::{arg, Error, Result};
use crate::ncpart::{all_words, moments_to_cumulants};
use crate::rational::{fmt as rfmt, frac, int, parse as rparse, sqrt_exact, to_f64, Rational};

/// Smallest sampling density accepted by the entropy quadrature.
pub const MIN_POINTS_PER_DECADE: usize = 16;
/// Without an exact tail the profile has to reach at least this `t`.
pub const MIN_T_MAX: f64 = 1e3;
/// The dimension estimator needs this many decades of `t`.
pub const MIN_DECADES: f64 = 3.0;
/// Relative agreement of successive decade maxima needed to claim equality.
pub const EQUALITY_RTOL: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct PhiSample {
    pub t: Rational,
    /// `+∞` is allowed.
    pub phi: f64,
    /// Exact value when one is known.
    pub exact: Option<Rational>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhiProfile {
    samples: Vec<PhiSample>,
    /// The tail beyond the last sample contributes nothing to the entropy integral.
    pub exact_tail: bool,
}

impl PhiProfile {
    /// Samples must have `t > 0` strictly decreasing and `phi ≥ 0` (or `+∞`).
    pub fn new(samples: Vec<PhiSample>, exact_tail: bool) -> Result<Self> {
        if samples.is_empty() {
            return arg("a profile needs at least one sample");
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.t.is_positive() {
                return arg(format!("sample {i}: t must be positive"));
            }
            if s.phi.is_nan() || s.phi < 0.0 {
                return arg(format!("sample {i}: phi must be non-negative"));
            }
            if i > 0 && s.t >= samples[i - 1].t {
                return arg(format!("sample {i}: t must be strictly decreasing"));
            }
        }
        Ok(PhiProfile { samples, exact_tail })
    }

    /// Builds a profile from a function on a grid (any order).
    pub fn from_fn(mut ts: Vec<Rational>, exact_tail: bool, f: impl Fn(&Rational) -> f64) -> Result<Self> {
        ts.sort_by(|a, b| b.cmp(a));
        ts.dedup();
        let samples = ts.into_iter().map(|t| PhiSample { phi: f(&t), t, exact: None }).collect();
        Self::new(samples, exact_tail)
    }

    pub fn samples(&self) -> &[PhiSample] {
        &self.samples
    }

    pub fn t_max(&self) -> f64 {
        to_f64(&self.samples[0].t)
    }

    pub fn t_min(&self) -> f64 {
        to_f64(&self.samples[self.samples.len() - 1].t)
    }

    pub fn decades(&self) -> f64 {
        (self.t_max() / self.t_min()).log10()
    }

    /// Pointwise map of the values, keeping the grid.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .map(|s| PhiSample { t: s.t.clone(), phi: f(to_f64(&s.t), s.phi), exact: None })
            .collect();
        Self::new(samples, self.exact_tail)
    }

    /// CSV with header `t,phi,exact_flag`. Exact values are written as `p/q`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        out.write_record(["t", "phi", "exact_flag"]).map_err(io)?;
        for s in &self.samples {
            let phi = match &s.exact {
                Some(e) => rfmt(e),
                None => s.phi.to_string(),
            };
            let flag = if s.exact.is_some() { "1" } else { "0" };
            out.write_record([rfmt(&s.t), phi, flag.to_string()]).map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl Read, exact_tail: bool) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut samples = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            if rec.len() != 3 {
                return Err(Error::Parse(format!("row {}: expected 3 fields", i + 1)));
            }
            let t = crate::rational::parse_decimal(&rec[0])?;
            let exact = match rec[2].trim() {
                "1" => Some(rparse(&rec[1])?),
                "0" => None,
                other => return Err(Error::Parse(format!("row {}: exact_flag `{other}`", i + 1))),
            };
            let phi = match &exact {
                Some(e) => to_f64(e),
                None => rec[1].trim().parse::<f64>().map_err(|_| Error::Parse(format!("row {}: phi `{}`", i + 1, &rec[1])))?,
            };
            samples.push(PhiSample { t, phi, exact });
        }
        Self::new(samples, exact_tail)
    }
}

/// Log-spaced grid from `t_hi` down to `t_lo` with `per_decade` points per
/// decade, both ends included.
pub fn log_grid(t_hi: f64, t_lo: f64, per_decade: usize) -> Result<Vec<Rational>> {
    if !(t_lo > 0.0 && t_hi > t_lo && t_hi.is_finite()) || per_decade == 0 {
        return arg("log_grid needs 0 < t_lo < t_hi and per_decade ≥ 1");
    }
    let decades = (t_hi / t_lo).log10();
    let steps = (decades * per_decade as f64).ceil() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = if k == steps { t_lo } else { t_hi * 10f64.powf(-(k as f64) / per_decade as f64) };
        out.push(Rational::from_float(t).expect("finite grid point"));
    }
    out.dedup();
    Ok(out)
}

/// `Φ*(S_t, S_t* : 𝒟) = t/(c²+t) + 1`. When `r` is rational the value is
/// recomputed from the conjugate vector and must agree.
pub fn phi_dt_relative_d(t: &Rational, csq: &Rational) -> Result<PhiSample> {
    if !t.is_positive() || csq.is_negative() {
        return arg("need t > 0 and c² ≥ 0");
    }
    let closed = t / (csq + t) + int(1);
    if sqrt_exact(&(t / (csq + t))).is_some() {
        let direct = fisher_exact(t, csq)?;
        if direct != closed {
            return Err(Error::Check(format!("conjugate vector gives {} at t = {}", rfmt(&direct), rfmt(t))));
        }
    }
    Ok(PhiSample { t: t.clone(), phi: to_f64(&closed), exact: Some(closed) })
}

/// Exact samples of `t ↦ Φ*(S_t, S_t* : 𝒟)` on the given grid.
pub fn phi_dt_profile(csq: &Rational, ts: &[Rational]) -> Result<PhiProfile> {
    let mut ts = ts.to_vec();
    ts.sort_by(|a, b| b.cmp(a));
    ts.dedup();
    let samples = ts.iter().map(|t| phi_dt_relative_d(t, csq)).collect::<Result<Vec<_>>>()?;
    PhiProfile::new(samples, false)
}

/// `t ↦ Φ*(Z + √t Y, (Z + √t Y)* : 𝒟)` for `Z = D + cT1`. By scaling this is
/// `Φ*(S_t, S_t* : 𝒟) / t`.
pub fn rescaled_dt_profile(csq: &Rational, ts: &[Rational]) -> Result<PhiProfile> {
    let base = phi_dt_profile(csq, ts)?;
    let samples = base
        .samples
        .into_iter()
        .map(|s| {
            let e = s.exact.map(|e| e / &s.t);
            PhiSample { phi: e.as_ref().map(to_f64).unwrap_or(f64::NAN), exact: e, t: s.t }
        })
        .collect();
    PhiProfile::new(samples, false)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub n_vars: usize,
    pub limsup_estimate: f64,
    pub lower_bound: f64,
    pub equality_claimed: bool,
    /// Maxima of `t·Φ*(t)` per decade, starting at the smallest `t`.
    #[serde(default)]
    pub decade_maxima: Vec<f64>,
}

impl fmt::Display for DimensionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n={} limsup≈{} bound={}{}",
            self.n_vars,
            self.limsup_estimate,
            self.lower_bound,
            if self.equality_claimed { " (equality)" } else { "" }
        )
    }
}

/// `n − limsup_{t→0} t·Φ*(t)`. The limsup is the maximum of `t·Φ*(t)` over the
/// smallest sampled decade. Equality is claimed when the two smallest decades
/// agree within [`EQUALITY_RTOL`].
pub fn delta_star_lower(profile: &PhiProfile, n_vars: usize) -> Result<DimensionReport> {
    if n_vars == 0 {
        return arg("n_vars must be positive");
    }
    if profile.decades() < MIN_DECADES - 1e-9 {
        return Err(Error::Precondition(format!(
            "the profile spans {:.2} decades of t; at least {MIN_DECADES} are needed",
            profile.decades()
        )));
    }
    let t_min = profile.t_min();
    let mut maxima: Vec<f64> = Vec::new();
    for s in profile.samples.iter().rev() {
        let t = to_f64(&s.t);
        let d = ((t / t_min).log10() + 1e-9).floor().max(0.0) as usize;
        let v = t * s.phi;
        if d >= maxima.len() {
            maxima.resize(d + 1, f64::NEG_INFINITY);
        }
        maxima[d] = maxima[d].max(v);
    }
    let limsup = maxima[0];
    let converged = maxima.len() > 1
        && maxima[1].is_finite()
        && limsup.is_finite()
        && (limsup - maxima[1]).abs() <= EQUALITY_RTOL * limsup.abs().max(maxima[1].abs()) + 1e-12;
    let lower_bound = n_vars as f64 - limsup;
    Ok(DimensionReport {
        n_vars,
        limsup_estimate: limsup,
        lower_bound,
        equality_claimed: converged || lower_bound >= n_vars as f64,
        decade_maxima: maxima,
    })
}

/// `δ*(Z : 𝒟)` for the DT element: the limsup is exactly `1`, so the bound is
/// `2 − 1 = 1`. Equality is claimed after the numerical profile over eight
/// decades below `c²` (or below `1` when `c = 0`) shows convergence.
pub fn delta_star_relative_d(csq: &Rational) -> Result<DimensionReport> {
    let scale = if csq.is_positive() { to_f64(csq).min(1.0) } else { 1.0 };
    let ts = log_grid(scale, scale * 1e-8, MIN_POINTS_PER_DECADE)?;
    let numeric = delta_star_lower(&rescaled_dt_profile(csq, &ts)?, 2)?;
    if (numeric.limsup_estimate - 1.0).abs() > 1e-6 {
        return Err(Error::Check(format!("numerical limsup {} does not approach 1", numeric.limsup_estimate)));
    }
    Ok(DimensionReport {
        n_vars: 2,
        limsup_estimate: 1.0,
        lower_bound: 1.0,
        equality_claimed: numeric.equality_claimed,
        decade_maxima: numeric.decade_maxima,
    })
}

/// Non-self-adjoint form: `δ*(a : B) ≥ 2 − limsup t·Φ*(a + √tY, (a + √tY)* : B)`.
/// When `analytic_limsup_zero` is set the limsup is taken to be `0` and the
/// bound meets the upper bound `2`.
pub fn delta_star_nonsa(profile: &PhiProfile, analytic_limsup_zero: bool) -> Result<DimensionReport> {
    let mut rep = delta_star_lower(profile, 2)?;
    if analytic_limsup_zero {
        rep.limsup_estimate = 0.0;
        rep.lower_bound = 2.0;
        rep.equality_claimed = true;
    }
    Ok(rep)
}

/// `(n/2) log(2πe C²/n)` where `C² = φ(Σ a_j²)`.
pub fn chi_star_upper(n: usize, c_sq: f64) -> Result<f64> {
    if n == 0 || !(c_sq > 0.0) || !c_sq.is_finite() {
        return arg("need n ≥ 1 and C² > 0");
    }
    let n = n as f64;
    Ok(n / 2.0 * (2.0 * std::f64::consts::PI * std::f64::consts::E * c_sq / n).ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiStar {
    /// `−∞` when the integral diverges at `t → 0`.
    pub value: f64,
    /// Difference against the same rule on every other sample.
    pub quadrature_error: f64,
}

impl ChiStar {
    pub fn diverges(&self) -> bool {
        self.value == f64::NEG_INFINITY
    }
}

fn trapezoid_log(ts: &[f64], g: &[f64]) -> f64 {
    // ∫ g(t) dt = ∫ g(e^u) e^u du
    let mut acc = 0.0;
    for i in 1..ts.len() {
        let (u0, u1) = (ts[i - 1].ln(), ts[i].ln());
        acc += 0.5 * (u1 - u0) * (g[i - 1] * ts[i - 1] + g[i] * ts[i]);
    }
    acc
}

/// `½∫₀^∞ (n/(1+t) − Φ*(t)) dt + (n/2) log(2πe)` by the trapezoid rule in
/// `log t`. Below the grid `Φ*` is extrapolated as a power law; above it the
/// integrand is assumed to decay like `t⁻²` unless the tail is exact.
pub fn chi_star_from_profile(profile: &PhiProfile, n_vars: usize) -> Result<ChiStar> {
    if n_vars == 0 {
        return arg("n_vars must be positive");
    }
    let asc: Vec<(f64, f64)> = profile.samples.iter().rev().map(|s| (to_f64(&s.t), s.phi)).collect();
    if asc.len() < 2 {
        return Err(Error::Precision("the entropy integral needs at least two samples".into()));
    }
    let max_gap = asc.windows(2).map(|w| (w[1].0 / w[0].0).log10()).fold(0.0, f64::max);
    if max_gap > 1.0 / MIN_POINTS_PER_DECADE as f64 + 1e-9 {
        return Err(Error::Precision(format!(
            "sampling gap of {max_gap:.3} decades; at least {MIN_POINTS_PER_DECADE} points per decade are needed"
        )));
    }
    let t_max = asc[asc.len() - 1].0;
    if !profile.exact_tail && t_max < MIN_T_MAX {
        return Err(Error::Precision(format!("profile stops at t = {t_max}; it must reach {MIN_T_MAX} or have an exact tail")));
    }
    let n = n_vars as f64;
    if asc.iter().any(|&(_, p)| p.is_infinite()) {
        return Ok(ChiStar { value: f64::NEG_INFINITY, quadrature_error: 0.0 });
    }

    // Behaviour at the small end: Φ*(t) ≈ A t^{-p}.
    let (t0, p0) = asc[0];
    let near = asc.iter().position(|&(t, _)| t >= 10.0 * t0 * (1.0 - 1e-9)).unwrap_or(asc.len() - 1);
    let (t1, p1) = asc[near];
    let tp0 = t0 * p0;
    let tp1 = t1 * p1;
    if tp0 > 1e-3 * n && tp0 >= 0.5 * tp1 {
        return Ok(ChiStar { value: f64::NEG_INFINITY, quadrature_error: 0.0 });
    }
    let p = if p0 > 0.0 && p1 > 0.0 && t1 > t0 { ((p0 / p1).ln() / (t1 / t0).ln()).clamp(0.0, 0.9) } else { 0.0 };
    let head = n * t0.ln_1p() - tp0 / (1.0 - p);

    let tail = |pts: &[(f64, f64)]| {
        if profile.exact_tail {
            0.0
        } else {
            let (t, ph) = pts[pts.len() - 1];
            (n / (1.0 + t) - ph) * t
        }
    };
    let integrand = |pts: &[(f64, f64)]| -> f64 {
        let ts: Vec<f64> = pts.iter().map(|x| x.0).collect();
        let g: Vec<f64> = pts.iter().map(|&(t, ph)| n / (1.0 + t) - ph).collect();
        trapezoid_log(&ts, &g) + tail(pts)
    };
    let full = integrand(&asc);
    let mut coarse: Vec<(f64, f64)> = asc.iter().step_by(2).copied().collect();
    if coarse.last() != asc.last() {
        coarse.push(*asc.last().unwrap());
    }
    let half = integrand(&coarse);
    let base = n / 2.0 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    Ok(ChiStar { value: 0.5 * (head + full) + base, quadrature_error: 0.5 * (full - half).abs() })
}

/// `(Φ₁⁻¹ + Φ₂⁻¹)⁻¹`, the lower bound for the Fisher information of a free sum.
pub fn stam_bound(phi1: f64, phi2: f64) -> Result<f64> {
    for p in [phi1, phi2] {
        if p.is_nan() || p <= 0.0 {
            return arg("Fisher informations must be positive (or +∞)");
        }
    }
    // the clamp only absorbs rounding when one term dominates
    Ok((1.0 / (1.0 / phi1 + 1.0 / phi2)).min(phi1).min(phi2))
}

#[derive(Clone, Debug)]
pub struct NonsaReport {
    pub rows: Vec<ExactRow>,
    /// `Φ*(c, c*)`.
    pub phi_pair: Rational,
    /// `Φ*(Re c, Im c)`.
    pub phi_re_im: Rational,
    /// `Φ*(2c, 2c*)`.
    pub phi_scaled: Rational,
}

impl NonsaReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(ExactRow::pass)
    }
}

pub const MAX_NONSA_LEN: usize = 6;

/// Checks the Fisher information of a non-self-adjoint variable on the
/// circular element `c = T1 + T2*`: `(c*, c)` is the conjugate system of
/// `(c, c*)`, `Re c` and `Im c` are free semicirculars of variance `1/2`,
/// `Φ*(Re c, Im c) = 2Φ*(c, c*)` and `Φ*(2c, 2c*) = Φ*(c, c*)/4`.
pub fn nonsa_fisher_identity_check(max_len: usize) -> Result<NonsaReport> {
    if !(2..=MAX_NONSA_LEN).contains(&max_len) {
        return arg(format!("max_len must be in 2..={MAX_NONSA_LEN}"));
    }
    let kappa = moments_to_cumulants(&circular_moments(max_len)?)?;
    let k = |w: &[usize]| kappa.get(w).cloned().ok_or_else(|| Error::Argument("cumulant order exceeded".into()));
    let mut rows = Vec::new();

    // κ(ξ_i, a_j, ...) = [word is a single letter equal to the target]
    for w in all_words(2, max_len - 1) {
        for (target, xi) in [(0usize, 1usize), (1, 0)] {
            let mut full = vec![xi];
            full.extend(&w);
            rows.push(ExactRow {
                word: format!("κ({})", kappa.word_name(&full)),
                expected: if w == [target] { int(1) } else { int(0) },
                actual: k(&full)?,
            });
        }
    }

    // Re c = (c + c*)/2, Im c = -i(c - c*)/2, expanded multilinearly.
    let half = frac(1, 2);
    for w in all_words(2, max_len) {
        let m = w.iter().filter(|&&x| x == 1).count();
        let mut sum = Rational::zero();
        for choice in 0u32..(1 << w.len()) {
            let letters: Vec<usize> = (0..w.len()).map(|i| ((choice >> i) & 1) as usize).collect();
            let sign = w.iter().zip(&letters).filter(|(&x, &l)| x == 1 && l == 1).count();
            let v = k(&letters)?;
            if sign % 2 == 1 {
                sum -= v;
            } else {
                sum += v;
            }
        }
        let scale = crate::rational::pow(&half, w.len() as u32);
        let name: String = w.iter().map(|&x| if x == 0 { "R" } else { "I" }).collect::<Vec<_>>().join(" ");
        let expected = if w == [0, 0] || w == [1, 1] { half.clone() } else { int(0) };
        if m % 2 == 1 {
            // purely imaginary coefficient: the real sum has to vanish
            rows.push(ExactRow { word: format!("κ({name})"), expected, actual: sum * scale });
        } else {
            let s = if (m / 2) % 2 == 1 { int(-1) } else { int(1) };
            rows.push(ExactRow { word: format!("κ({name})"), expected, actual: sum * scale * s });
        }
    }

    let tau_cc = k(&[0, 1])?;
    let tau_csc = k(&[1, 0])?;
    let phi_pair = &tau_cc + &tau_csc;
    let var = (&tau_cc + &tau_csc) * &half * &half;
    let phi_re_im = (Rational::one() / &var) * int(2);
    rows.push(ExactRow { word: "Φ*(Re c, Im c) - 2Φ*(c, c*)".into(), expected: int(0), actual: &phi_re_im - &phi_pair * int(2) });
    let r = int(2);
    // conjugate system of (rc, rc*) is (c*/r, c/r)
    let phi_scaled = (&tau_cc + &tau_csc) / (&r * &r);
    rows.push(ExactRow { word: "Φ*(2c, 2c*) - Φ*(c, c*)/4".into(), expected: int(0), actual: &phi_scaled - &phi_pair / int(4) });
    Ok(NonsaReport { rows, phi_pair, phi_re_im, phi_scaled })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(hi: f64, lo: f64) -> Vec<Rational> {
        log_grid(hi, lo, 32).unwrap()
    }

    #[test]
    fn dt_fisher_values() {
        let s = phi_dt_relative_d(&int(1), &int(3)).unwrap();
        assert_eq!(s.exact, Some(frac(5, 4)));
        let s = phi_dt_relative_d(&frac(1, 4), &frac(3, 4)).unwrap();
        assert_eq!(s.exact, Some(frac(5, 4)));
        let s = phi_dt_relative_d(&int(1), &int(8)).unwrap();
        assert_eq!(s.exact, Some(frac(10, 9)));
        // irrational r: closed form only
        let s = phi_dt_relative_d(&int(1), &int(1)).unwrap();
        assert_eq!(s.exact, Some(frac(3, 2)));
    }

    #[test]
    fn semicircle_entropy() {
        let p = PhiProfile::from_fn(grid(1e6, 1e-6), true, |t| 1.0 / (1.0 + to_f64(t))).unwrap();
        let chi = chi_star_from_profile(&p, 1).unwrap();
        let want = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((chi.value - want).abs() < 1e-9, "{chi:?}");
    }

    #[test]
    fn scaled_semicircle_entropy() {
        // variance v: Φ*(t) = 1/(v+t), χ* = ½log(2πe v)
        let v = 4.0;
        let p = PhiProfile::from_fn(grid(1e6, 1e-8), false, |t| 1.0 / (v + to_f64(t))).unwrap();
        let chi = chi_star_from_profile(&p, 1).unwrap();
        let want = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * v).ln();
        assert!((chi.value - want).abs() < 1e-4, "{chi:?} vs {want}");
        assert!(chi.value <= chi_star_upper(1, v).unwrap() + 1e-9);
    }

    #[test]
    fn inverse_t_diverges() {
        let p = PhiProfile::from_fn(grid(1e4, 1e-6), false, |t| 1.0 / to_f64(t)).unwrap();
        assert!(chi_star_from_profile(&p, 1).unwrap().diverges());
    }

    #[test]
    fn precision_errors() {
        let sparse = PhiProfile::from_fn(log_grid(1e4, 1e-4, 8).unwrap(), true, |_| 1.0).unwrap();
        assert!(matches!(chi_star_from_profile(&sparse, 1), Err(Error::Precision(_))));
        let short = PhiProfile::from_fn(grid(10.0, 1e-4), false, |_| 1.0).unwrap();
        assert!(matches!(chi_star_from_profile(&short, 1), Err(Error::Precision(_))));
    }

    #[test]
    fn dimension_profiles() {
        let inv = PhiProfile::from_fn(grid(1.0, 1e-6), false, |t| 1.0 / to_f64(t)).unwrap();
        let r = delta_star_lower(&inv, 3).unwrap();
        assert!((r.lower_bound - 2.0).abs() < 1e-12 && r.equality_claimed);
        let flat = PhiProfile::from_fn(grid(1.0, 1e-9), false, |_| 5.0).unwrap();
        let r = delta_star_lower(&flat, 2).unwrap();
        assert!((r.lower_bound - 2.0).abs() < 1e-6);
        let short = PhiProfile::from_fn(grid(1.0, 1e-2), false, |_| 5.0).unwrap();
        assert!(matches!(delta_star_lower(&short, 2), Err(Error::Precondition(_))));
    }

    #[test]
    fn dt_dimension_relative_d() {
        for csq in [frac(1, 4), int(1), int(3), int(100)] {
            let r = delta_star_relative_d(&csq).unwrap();
            assert_eq!(r.lower_bound, 1.0);
            assert!(r.equality_claimed);
        }
        let ts = grid(1.0, 1e-6);
        let r = delta_star_lower(&rescaled_dt_profile(&int(1), &ts).unwrap(), 2).unwrap();
        assert!((r.lower_bound - 1.0).abs() < 1e-5);
        let p = rescaled_dt_profile(&int(1), &grid(1e4, 1e-6)).unwrap();
        assert!(chi_star_from_profile(&p, 2).unwrap().diverges());
    }

    #[test]
    fn nonsa_dimension() {
        let p = rescaled_dt_profile(&int(1), &grid(1.0, 1e-6)).unwrap();
        assert!((delta_star_nonsa(&p, false).unwrap().lower_bound - 1.0).abs() < 1e-5);
        let r = delta_star_nonsa(&p, true).unwrap();
        assert_eq!(r.lower_bound, 2.0);
    }

    #[test]
    fn stam() {
        assert_eq!(stam_bound(2.0, 2.0).unwrap(), 1.0);
        assert_eq!(stam_bound(f64::INFINITY, 3.0).unwrap(), 3.0);
        assert_eq!(stam_bound(f64::INFINITY, f64::INFINITY).unwrap(), f64::INFINITY);
        assert!(stam_bound(0.0, 1.0).is_err());
    }

    #[test]
    fn nonsa_identities() {
        let rep = nonsa_fisher_identity_check(4).unwrap();
        assert!(rep.pass(), "{:?}", rep.rows.iter().filter(|r| !r.pass()).collect::<Vec<_>>());
        assert_eq!(rep.phi_pair, int(2));
        assert_eq!(rep.phi_re_im, int(4));
        assert_eq!(rep.phi_scaled, frac(1, 2));
    }

    #[test]
    fn csv_round_trip() {
        let p = phi_dt_profile(&int(3), &[int(1), frac(1, 2), frac(1, 4)]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,phi,exact_flag\n1,5/4,1\n"), "{text}");
        assert_eq!(PhiProfile::read_csv(&buf[..], false).unwrap(), p);
    }

    #[test]
    fn profile_validation() {
        let s = |t: i64, phi: f64| PhiSample { t: int(t), phi, exact: None };
        assert!(PhiProfile::new(vec![s(1, 1.0), s(2, 1.0)], false).is_err());
        assert!(PhiProfile::new(vec![s(2, -1.0), s(1, 1.0)], false).is_err());
        assert!(PhiProfile::new(vec![s(2, f64::INFINITY), s(1, 1.0)], false).is_ok());
    }
}
