//! Empirical distribution functions and Kolmogorov-Smirnov statistics.
//!
//! Samples may contain ties and the reference cdf may have atoms (a field
//! value of exactly 0 has positive probability when the weight is finite and
//! the shape compactly supported), so every statistic is computed from left
//! and right limits at the distinct sample values.

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Fraction of `sorted_xs` that is `<= u`.
pub fn ecdf(sorted_xs: &[f64], u: f64) -> f64 {
    if sorted_xs.is_empty() {
        return 0.0;
    }
    sorted_xs.partition_point(|x| *x <= u) as f64 / sorted_xs.len() as f64
}

/// `sup_u |F_n(u) - F(u)|` for a right-continuous `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let v = sorted(xs);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < v.len() {
        let x = v[i];
        let mut j = i;
        while j < v.len() && v[j] == x {
            j += 1;
        }
        let below = i as f64 / n;
        let at = j as f64 / n;
        d = d.max((at - cdf(x)).abs()).max((below - cdf(x.next_down())).abs());
        i = j;
    }
    d
}

/// `sup_u |F_n(u) - G_m(u)|`.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> f64 {
    let (a, b) = (sorted(xs), sorted(ys));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) => p.min(*q),
            (Some(p), None) => *p,
            (None, Some(q)) => *q,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// `Q(t) = 2 sum_{k >= 1} (-1)^(k-1) exp(-2 k^2 t^2)`.
pub fn kolmogorov_q(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * t * t).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Asymptotic p-value with the Stephens small-sample correction.
pub fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

/// Two-sample p-value with `n_eff = n m / (n + m)`.
pub fn ks_two_sample_p(d: f64, n: usize, m: usize) -> f64 {
    ks_p_value(d, (n * m) as f64 / (n + m) as f64)
}

/// Asymptotic 99% critical value `1.6276 / sqrt(n)`.
pub fn ks_critical_01(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecdf_counts_ties() {
        let v = [0.0, 0.0, 1.0, 2.0];
        assert_eq!(ecdf(&v, 0.0), 0.5);
        assert_eq!(ecdf(&v, -1.0), 0.0);
        assert_eq!(ecdf(&v, 5.0), 1.0);
    }

    #[test]
    fn one_sample_known_values() {
        // uniform cdf against the points 0.1, 0.2, 0.9
        let d = ks_one_sample(&[0.9, 0.1, 0.2], |u| u.clamp(0.0, 1.0));
        assert!((d - (2.0 / 3.0 - 0.2)).abs() < 1e-12);
        // an atom at 0 of mass 0.5 matched exactly
        let d = ks_one_sample(&[0.0, 0.0, 0.5, 1.0], |u| if u < 0.0 { 0.0 } else { (0.5 + 0.5 * u).min(1.0) });
        assert!((d - 0.25).abs() < 1e-12, "{d}");
    }

    #[test]
    fn two_sample_known_values() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_two_sample(&[0.0, 0.0, 1.0], &[0.0, 1.0, 1.0]) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_tail() {
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 2e-4);
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 2e-4);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn moments() {
        let (m, v) = mean_var(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((v - 5.0 / 3.0).abs() < 1e-15);
    }
}
