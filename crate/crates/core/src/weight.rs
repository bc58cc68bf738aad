//! Weight measures `G` on `(0, inf)`, described by their tails `Gbar(u) = G((u, inf))`.
//!
//! ```text
//! power_measure  Gbar(u) = u^-xi                      (infinite mass)
//! pareto         Gbar(u) = (u / sigma)^-xi, u >= sigma; 1 below
//! burr           Gbar(u) = (1 + u^c)^-k
//! exponential    Gbar(u) = exp(-rate u)
//! sum            Gbar(u) = sum of the parts' tails
//! ```
//!
//! Every single-family variant has a closed-form tail inverse, which is what
//! the simulator uses to draw marks.

use serde::{Deserialize, Serialize};

use crate::error::{contract, EsnError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    PowerMeasure { xi: f64 },
    Pareto { xi: f64, sigma: f64 },
    Burr { c: f64, k: f64 },
    Exponential { rate: f64 },
    /// Superposition of independent weight measures.
    Sum { parts: Vec<WeightSpec> },
}

/// Outcome of the uniform power bound check on `Gbar_lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotterReport {
    pub c_hat: f64,
    /// Same maximum restricted to the larger half of the lambda grid.
    pub c_hat_upper: f64,
    pub ratio: f64,
    pub pass: bool,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        contract(format!("{name} must be positive and finite, got {v}"))
    }
}

impl WeightSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            WeightSpec::PowerMeasure { xi } => positive("xi", *xi),
            WeightSpec::Pareto { xi, sigma } => positive("xi", *xi).and(positive("sigma", *sigma)),
            WeightSpec::Burr { c, k } => positive("c", *c).and(positive("k", *k)),
            WeightSpec::Exponential { rate } => positive("rate", *rate),
            WeightSpec::Sum { parts } => {
                if parts.is_empty() {
                    return contract("sum needs at least one part");
                }
                parts.iter().try_for_each(|p| p.validate())
            }
        }
    }

    /// True for probability measures.
    pub fn is_probability(&self) -> bool {
        matches!(
            self,
            WeightSpec::Pareto { .. } | WeightSpec::Burr { .. } | WeightSpec::Exponential { .. }
        )
    }

    /// Index `xi` with `Gbar` regularly varying of index `-xi`.
    pub fn rv_exponent(&self) -> Option<f64> {
        match self {
            WeightSpec::PowerMeasure { xi } | WeightSpec::Pareto { xi, .. } => Some(*xi),
            WeightSpec::Burr { c, k } => Some(c * k),
            WeightSpec::Exponential { .. } => None,
            WeightSpec::Sum { parts } => parts
                .iter()
                .filter_map(|p| p.rv_exponent())
                .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x)))),
        }
    }

    /// `Gbar(u)` for `u > 0`.
    pub fn tail(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) {
            return contract(format!("tail needs u > 0, got {u}"));
        }
        Ok(self.tail_value(u))
    }

    /// `Gbar(u)` without the argument check; `Gbar(inf) = 0`.
    pub fn tail_value(&self, u: f64) -> f64 {
        if u == f64::INFINITY {
            return 0.0;
        }
        match self {
            WeightSpec::PowerMeasure { xi } => u.powf(-xi),
            WeightSpec::Pareto { xi, sigma } => {
                if u < *sigma {
                    1.0
                } else {
                    (u / sigma).powf(-xi)
                }
            }
            WeightSpec::Burr { c, k } => (-k * u.powf(*c).ln_1p()).exp(),
            WeightSpec::Exponential { rate } => (-rate * u).exp(),
            WeightSpec::Sum { parts } => parts.iter().map(|p| p.tail_value(u)).sum(),
        }
    }

    /// Smallest `u` with `Gbar(u) <= t`.
    pub fn tail_inverse(&self, t: f64) -> Option<f64> {
        if !(t > 0.0) {
            return Some(f64::INFINITY);
        }
        match self {
            WeightSpec::PowerMeasure { xi } => Some(t.powf(-1.0 / xi)),
            WeightSpec::Pareto { xi, sigma } => Some(if t >= 1.0 { 0.0 } else { sigma * t.powf(-1.0 / xi) }),
            WeightSpec::Burr { c, k } => {
                Some(if t >= 1.0 { 0.0 } else { (-t.ln() / k).exp_m1().powf(1.0 / c) })
            }
            WeightSpec::Exponential { rate } => Some(if t >= 1.0 { 0.0 } else { -t.ln() / rate }),
            WeightSpec::Sum { .. } => None,
        }
    }

    /// Normalization `a_lambda = G^{-1}(1 - 1/lambda)`.
    pub fn a_lambda(&self, lambda: f64) -> Result<f64> {
        if !self.is_probability() {
            return Err(EsnError::NotApplicable("a_lambda needs a probability weight".into()));
        }
        if !(lambda > 1.0) {
            return contract(format!("a_lambda needs lambda > 1, got {lambda}"));
        }
        Ok(self.tail_inverse(1.0 / lambda).expect("closed-form inverse"))
    }

    /// `lambda * Gbar(a_lambda * u)`.
    pub fn rescaled_tail(&self, lambda: f64, u: f64) -> Result<f64> {
        let a = self.a_lambda(lambda)?;
        Ok(lambda * self.tail(a * u)?)
    }

    /// Draw from `G` restricted to `(t, inf)` and normalized, by inversion of `v`.
    pub fn sample_conditional(&self, t: f64, v: f64) -> Result<f64> {
        self.sample_between(t, f64::INFINITY, v)
    }

    /// Draw from `G` restricted to `(lo, hi]` and normalized, by inversion of `v`.
    pub fn sample_between(&self, lo: f64, hi: f64, v: f64) -> Result<f64> {
        if !(lo > 0.0) || !(hi > lo) {
            return contract(format!("sampling interval ({lo}, {hi}] is invalid"));
        }
        if !(v > 0.0 && v < 1.0) {
            return contract(format!("uniform variate must lie in (0, 1), got {v}"));
        }
        let m = match self {
            WeightSpec::Exponential { rate } => {
                // memoryless: lo + Exp(rate) truncated to (0, hi - lo]
                let span = -(-rate * (hi - lo)).exp_m1();
                lo - (-v * span).ln_1p() / rate
            }
            WeightSpec::Sum { .. } => {
                return Err(EsnError::NotApplicable("no closed-form tail inverse for a sum".into()))
            }
            _ => {
                let t_lo = self.tail_value(lo);
                let t_hi = self.tail_value(hi);
                let target = t_hi + v * (t_lo - t_hi);
                self.tail_inverse(target).expect("closed-form inverse")
            }
        };
        let m = if m > lo { m } else { lo.next_up() };
        Ok(m.min(hi))
    }

    /// Bound `Gbar(v) <= C v^-q` for all `v > 0`. Exponential tails take
    /// any `q_hint > 0`.
    pub fn power_bound(&self, q_hint: f64) -> Option<(f64, f64)> {
        match self {
            WeightSpec::PowerMeasure { xi } => Some((1.0, *xi)),
            WeightSpec::Pareto { xi, sigma } => Some((sigma.powf(*xi), *xi)),
            WeightSpec::Burr { c, k } => Some((1.0, c * k)),
            WeightSpec::Exponential { rate } => {
                let q = q_hint;
                Some(((q / (rate * std::f64::consts::E)).powf(q), q))
            }
            WeightSpec::Sum { .. } => None,
        }
    }

    /// Infimum of the support of `G`.
    pub fn lower_support(&self) -> f64 {
        match self {
            WeightSpec::Pareto { sigma, .. } => *sigma,
            WeightSpec::Sum { parts } => parts.iter().map(|p| p.lower_support()).fold(f64::INFINITY, f64::min),
            _ => 0.0,
        }
    }

    /// Maximum of `Gbar_lambda(u) u^(xi - delta)` over `u >= eps` on the grids.
    pub fn potter_bound_check(
        &self,
        xi: f64,
        delta: f64,
        eps: f64,
        lambdas: &[f64],
        us: &[f64],
    ) -> Result<PotterReport> {
        let Some(rv) = self.rv_exponent().filter(|_| self.is_probability()) else {
            return Err(EsnError::NotApplicable(
                "uniform power bound needs a regularly varying probability weight".into(),
            ));
        };
        if (rv - xi).abs() > 1e-12 * xi.abs().max(1.0) {
            return contract(format!("weight has index {rv}, check requested {xi}"));
        }
        if !(delta > 0.0 && delta < xi) || !(eps > 0.0) || lambdas.is_empty() {
            return contract("need 0 < delta < xi, eps > 0 and a nonempty lambda grid");
        }
        let mut ls = lambdas.to_vec();
        ls.sort_by(f64::total_cmp);
        let cut = ls[ls.len() / 2];
        let (mut full, mut upper) = (0.0f64, 0.0f64);
        for &l in &ls {
            for &u in us.iter().filter(|u| **u >= eps) {
                let v = self.rescaled_tail(l, u)? * u.powf(xi - delta);
                full = full.max(v);
                if l >= cut {
                    upper = upper.max(v);
                }
            }
        }
        let ratio = full / upper;
        Ok(PotterReport {
            c_hat: full,
            c_hat_upper: upper,
            ratio,
            pass: full.is_finite() && ratio <= 1.05,
        })
    }
}

/// `n` points log-spaced on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else if i == 0 {
                lo
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const PARETO: WeightSpec = WeightSpec::Pareto { xi: 2.0, sigma: 1.0 };

    #[test]
    fn tails() {
        assert!((PARETO.tail(10.0).unwrap() - 0.01).abs() < 1e-16);
        assert_eq!(PARETO.tail(0.5).unwrap(), 1.0);
        assert_eq!(WeightSpec::PowerMeasure { xi: 1.0 }.tail(4.0).unwrap(), 0.25);
        assert!(PARETO.tail(0.0).is_err());
    }

    #[test]
    fn normalizations() {
        assert!((PARETO.a_lambda(100.0).unwrap() - 10.0).abs() < 1e-12);
        let e = WeightSpec::Exponential { rate: 1.0 };
        assert!((e.a_lambda(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        let b = WeightSpec::Burr { c: 1.0, k: 2.0 };
        assert!((b.a_lambda(101.0).unwrap() - (101f64.sqrt() - 1.0)).abs() < 1e-12);
        assert!(matches!(
            WeightSpec::PowerMeasure { xi: 1.0 }.a_lambda(10.0),
            Err(EsnError::NotApplicable(_))
        ));
        assert!(PARETO.a_lambda(1.0).is_err());
    }

    #[test]
    fn quantile_identity() {
        let ws = [
            PARETO,
            WeightSpec::Burr { c: 2.0, k: 0.7 },
            WeightSpec::Exponential { rate: 3.0 },
        ];
        for w in &ws {
            for l in [1.5, 10.0, 1e3, 1e6] {
                let t = w.tail(w.a_lambda(l).unwrap()).unwrap();
                assert!((t * l - 1.0).abs() < 1e-9, "{w:?} {l} {t}");
                assert!((w.rescaled_tail(l, 1.0).unwrap() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rescaled_tail_examples() {
        assert!((PARETO.rescaled_tail(50.0, 3.0).unwrap() - 1.0 / 9.0).abs() < 1e-14);
        let b = WeightSpec::Burr { c: 2.0, k: 1.0 };
        let v = b.rescaled_tail(1e4, 2.0).unwrap();
        assert!((v - 0.25).abs() < 0.05 * 0.25);
    }

    #[test]
    fn rescaled_tail_converges_monotonically() {
        for w in [PARETO, WeightSpec::Burr { c: 1.0, k: 2.0 }] {
            let xi = w.rv_exponent().unwrap();
            for u in [0.5, 1.0, 2.0, 5.0] {
                let errs: Vec<f64> = [1e2, 1e3, 1e4, 1e5]
                    .iter()
                    .map(|l| (w.rescaled_tail(*l, u).unwrap() - u.powf(-xi)).abs())
                    .collect();
                for p in errs.windows(2) {
                    assert!(p[1] <= p[0] + 1e-12, "{w:?} u={u} {errs:?}");
                }
            }
        }
    }

    #[test]
    fn conditional_sampling() {
        let p = WeightSpec::PowerMeasure { xi: 2.0 };
        assert!((p.sample_conditional(1.0, 0.25).unwrap() - 2.0).abs() < 1e-15);
        let ws = [
            PARETO,
            p,
            WeightSpec::Burr { c: 1.5, k: 2.0 },
            WeightSpec::Exponential { rate: 2.0 },
        ];
        for w in &ws {
            for t in [1e-3, 0.5, 3.0, 40.0] {
                for v in [1e-12, 0.3, 0.999_999] {
                    assert!(w.sample_conditional(t, v).unwrap() > t);
                }
            }
        }
    }

    #[test]
    fn interval_sampling_stays_inside() {
        let ws = [PARETO, WeightSpec::Exponential { rate: 0.5 }, WeightSpec::Burr { c: 1.0, k: 1.0 }];
        for w in &ws {
            for v in [1e-9, 0.5, 1.0 - 1e-9] {
                let m = w.sample_between(2.0, 4.0, v).unwrap();
                assert!(m > 2.0 && m <= 4.0);
            }
        }
    }

    #[test]
    fn truncated_conditional_mean() {
        // m | m > 5 under Pareto(1, 1); E min(m, 100) by the trapezoid rule on the survival function.
        let w = WeightSpec::Pareto { xi: 1.0, sigma: 1.0 };
        let n = 200_000;
        let h = 100.0 / n as f64;
        let surv = |s: f64| if s < 5.0 { 1.0 } else { 5.0 / s };
        let oracle: f64 = (0..n).map(|i| 0.5 * h * (surv(i as f64 * h) + surv((i + 1) as f64 * h))).sum();
        let mut rng = crate::rng::stream(11, 0, 0);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| w.sample_conditional(5.0, crate::rng::open01(&mut rng)).unwrap().min(100.0))
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        let se = (var / draws.len() as f64).sqrt();
        assert!((mean - oracle).abs() < 3.0 * se, "{mean} {oracle} {se}");
    }

    #[test]
    fn potter_pareto_and_burr() {
        let lambdas = log_grid(10.0, 1e4, 13);
        let us = log_grid(0.1, 100.0, 61);
        let r = PARETO.potter_bound_check(2.0, 0.5, 0.1, &lambdas, &us).unwrap();
        assert!(r.pass);
        assert!((r.c_hat - 0.1f64.powf(-0.5)).abs() < 1e-9);
        let b = WeightSpec::Burr { c: 1.0, k: 2.0 };
        let us = log_grid(0.5, 100.0, 61);
        assert!(b.potter_bound_check(2.0, 0.5, 0.5, &lambdas, &us).unwrap().pass);
        let e = WeightSpec::Exponential { rate: 1.0 };
        assert!(matches!(
            e.potter_bound_check(1.0, 0.5, 0.5, &lambdas, &us),
            Err(EsnError::NotApplicable(_))
        ));
    }

    #[test]
    fn power_bounds_hold() {
        let ws = [PARETO, WeightSpec::Burr { c: 0.7, k: 3.0 }, WeightSpec::Exponential { rate: 2.0 }];
        for w in &ws {
            let (c, q) = w.power_bound(1.3).unwrap();
            for v in log_grid(1e-3, 1e3, 200) {
                assert!(w.tail_value(v) <= c * v.powf(-q) * (1.0 + 1e-12), "{w:?} {v}");
            }
        }
    }

    #[test]
    fn config_block() {
        let w: WeightSpec = serde_json::from_str(r#"{"variant":"pareto","xi":2.0,"sigma":1.0}"#).unwrap();
        assert_eq!(w, PARETO);
        assert!(serde_json::from_str::<WeightSpec>(r#"{"variant":"pareto","xi":2.0}"#).is_err());
    }
}
