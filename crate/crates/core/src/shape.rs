//! Shape functions `h: R^d -> [0, inf)`.
//!
//! Every variant is nonincreasing away from the origin, either radially or
//! coordinate by coordinate, so sup/inf envelopes over balls and boxes are
//! exact: evaluate at the nearest or the farthest point of the region.
//!
//! ```text
//! gaussian_diag     a * exp(-0.5 * sum (x_i / sigma_i)^2)
//! path_loss_hard    (A * max(r0, |x|))^(-beta)
//! path_loss_smooth  (1 + A |x|)^(-beta)
//! indicator_box     a * 1{|x_i| <= w_i for all i}
//! log_decay         min(cap, gamma / ln(e + |x|))
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, contract, EsnError, Result};
use crate::quadrature::{self, Decay, QuadOptions};

/// Volume of the unit ball in dimension `d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => {
            let n = d as f64;
            std::f64::consts::PI.powf(n / 2.0) / gamma_fn(n / 2.0 + 1.0)
        }
    }
}

/// Surface area of the unit sphere in dimension `d`.
pub fn unit_sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}

// Lanczos approximation, only used for d > 3 which the models never reach.
fn gamma_fn(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x))
    } else {
        let x = x - 1.0;
        let t = x + 7.5;
        let mut s = G[0];
        for (i, g) in G.iter().enumerate().skip(1) {
            s += g / (x + i as f64);
        }
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * s
    }
}

/// Amplitude of a Gaussian or box shape: an explicit value, or the value
/// making `int h^xi = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Amplitude {
    Value(f64),
    Normalized { normalize_xi: f64 },
}

impl Amplitude {
    fn resolve(self, base_integral: f64) -> Result<f64> {
        match self {
            Amplitude::Value(a) if a > 0.0 && a.is_finite() => Ok(a),
            Amplitude::Value(a) => contract(format!("amplitude must be positive, got {a}")),
            Amplitude::Normalized { normalize_xi } if normalize_xi > 0.0 => {
                // int (a g)^xi = a^xi * base(xi) where base is passed in.
                Ok(base_integral.powf(-1.0 / normalize_xi))
            }
            Amplitude::Normalized { normalize_xi } => {
                contract(format!("normalize_xi must be positive, got {normalize_xi}"))
            }
        }
    }

    fn value(self) -> f64 {
        match self {
            Amplitude::Value(a) => a,
            Amplitude::Normalized { .. } => f64::NAN,
        }
    }
}

fn gaussian_default_amplitude() -> Amplitude {
    Amplitude::Normalized { normalize_xi: 1.0 }
}

fn box_default_amplitude() -> Amplitude {
    Amplitude::Value(1.0)
}

/// Parameters of a shape function, as written in a scenario config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeKind {
    GaussianDiag {
        sigma: Vec<f64>,
        #[serde(default = "gaussian_default_amplitude")]
        amplitude: Amplitude,
    },
    PathLossHard {
        a: f64,
        r0: f64,
        beta: f64,
    },
    PathLossSmooth {
        a: f64,
        beta: f64,
    },
    IndicatorBox {
        halfwidth: Vec<f64>,
        #[serde(default = "box_default_amplitude")]
        amplitude: Amplitude,
    },
    LogDecay {
        gamma: f64,
        cap: f64,
    },
}

/// A set of offsets `A` used by envelopes `sup/inf_{z in A} h(x + z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    /// Closed Euclidean ball of the given radius around 0.
    Ball { radius: f64 },
    /// Closed box `[lo, hi]`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Finite set of offsets.
    Points { points: Vec<Vec<f64>> },
}

impl Region {
    pub fn ball(radius: f64) -> Self {
        Region::Ball { radius }
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Region::Box { lo, hi }
    }

    pub fn points(points: Vec<Vec<f64>>) -> Self {
        Region::Points { points }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Region::Ball { radius } => {
                if !(*radius >= 0.0 && radius.is_finite()) {
                    return contract(format!("ball radius must be >= 0, got {radius}"));
                }
            }
            Region::Box { lo, hi } => {
                check_dim(dim, lo.len())?;
                check_dim(dim, hi.len())?;
                if lo.iter().zip(hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
                    return contract("box region needs finite lo <= hi");
                }
            }
            Region::Points { points } => {
                if points.is_empty() {
                    return contract("point region must be nonempty");
                }
                for p in points {
                    check_dim(dim, p.len())?;
                }
            }
        }
        Ok(())
    }

    /// Radius of the smallest origin-centered ball containing the region.
    pub fn radius(&self) -> f64 {
        match self {
            Region::Ball { radius } => *radius,
            Region::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| l.abs().max(h.abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
            Region::Points { points } => points.iter().map(|p| norm(p)).fold(0.0, f64::max),
        }
    }

    /// Per-axis bounding box of the region.
    pub fn bounding_box(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        match self {
            Region::Ball { radius } => (vec![-radius; dim], vec![*radius; dim]),
            Region::Box { lo, hi } => (lo.clone(), hi.clone()),
            Region::Points { points } => {
                let mut lo = vec![f64::INFINITY; dim];
                let mut hi = vec![f64::NEG_INFINITY; dim];
                for p in points {
                    for i in 0..dim {
                        lo[i] = lo[i].min(p[i]);
                        hi[i] = hi[i].max(p[i]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// True when the region has nonempty interior.
    pub fn has_interior(&self) -> bool {
        match self {
            Region::Ball { radius } => *radius > 0.0,
            Region::Box { lo, hi } => lo.iter().zip(hi).all(|(l, h)| h > l),
            Region::Points { .. } => false,
        }
    }
}

/// Which envelope to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeMode {
    Sup,
    Inf,
}

/// Result of the `(C'_xi)` classification: `h(x) <= C (|x|^-gamma ^ 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub bounded: bool,
    pub sup_norm: f64,
    pub compact_support: bool,
    pub cprime_xi_holds: bool,
    pub gamma: Option<f64>,
    pub constant_c: Option<f64>,
    pub xi_used: f64,
}

/// A validated shape function in a fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeSpec {
    kind: ShapeKind,
    dim: usize,
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl ShapeSpec {
    /// Validate parameters and resolve normalized amplitudes.
    pub fn new(kind: ShapeKind, dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return contract(format!("dimension must be 1, 2 or 3, got {dim}"));
        }
        let pos = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                contract(format!("{name} must be positive and finite, got {v}"))
            }
        };
        let kind = match kind {
            ShapeKind::GaussianDiag { sigma, amplitude } => {
                check_dim(dim, sigma.len())?;
                for s in &sigma {
                    pos("sigma", *s)?;
                }
                let base = |xi: f64| -> f64 {
                    sigma.iter().map(|s| s * (2.0 * std::f64::consts::PI / xi).sqrt()).product()
                };
                let a = match amplitude {
                    Amplitude::Normalized { normalize_xi } if normalize_xi > 0.0 => {
                        amplitude.resolve(base(normalize_xi))?
                    }
                    other => other.resolve(1.0)?,
                };
                ShapeKind::GaussianDiag { sigma, amplitude: Amplitude::Value(a) }
            }
            ShapeKind::IndicatorBox { halfwidth, amplitude } => {
                check_dim(dim, halfwidth.len())?;
                for w in &halfwidth {
                    pos("halfwidth", *w)?;
                }
                let vol: f64 = halfwidth.iter().map(|w| 2.0 * w).product();
                let a = amplitude.resolve(vol)?;
                ShapeKind::IndicatorBox { halfwidth, amplitude: Amplitude::Value(a) }
            }
            ShapeKind::PathLossHard { a, r0, beta } => {
                pos("a", a)?;
                pos("r0", r0)?;
                pos("beta", beta)?;
                ShapeKind::PathLossHard { a, r0, beta }
            }
            ShapeKind::PathLossSmooth { a, beta } => {
                pos("a", a)?;
                pos("beta", beta)?;
                ShapeKind::PathLossSmooth { a, beta }
            }
            ShapeKind::LogDecay { gamma, cap } => {
                pos("gamma", gamma)?;
                pos("cap", cap)?;
                ShapeKind::LogDecay { gamma, cap }
            }
        };
        Ok(ShapeSpec { kind, dim })
    }

    /// Normalized Gaussian density with the given per-axis standard deviations.
    pub fn gaussian(sigma: Vec<f64>) -> Result<Self> {
        let dim = sigma.len();
        Self::new(ShapeKind::GaussianDiag { sigma, amplitude: gaussian_default_amplitude() }, dim)
    }

    pub fn indicator_box(halfwidth: Vec<f64>, amplitude: f64) -> Result<Self> {
        let dim = halfwidth.len();
        Self::new(ShapeKind::IndicatorBox { halfwidth, amplitude: Amplitude::Value(amplitude) }, dim)
    }

    pub fn kind(&self) -> &ShapeKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `h(x)`, checking the dimension.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(self.value(x))
    }

    /// `h(x)` without the dimension check.
    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ShapeKind::GaussianDiag { sigma, amplitude } => {
                let q: f64 = x.iter().zip(sigma).map(|(xi, s)| (xi / s).powi(2)).sum();
                amplitude.value() * (-0.5 * q).exp()
            }
            ShapeKind::IndicatorBox { halfwidth, amplitude } => {
                if x.iter().zip(halfwidth).all(|(xi, w)| xi.abs() <= *w) {
                    amplitude.value()
                } else {
                    0.0
                }
            }
            _ => self.profile(norm(x)),
        }
    }

    /// Radial profile `p(r)` for radial variants (isotropic Gaussians included).
    fn profile(&self, r: f64) -> f64 {
        match &self.kind {
            ShapeKind::PathLossHard { a, r0, beta } => (a * r.max(*r0)).powf(-beta),
            ShapeKind::PathLossSmooth { a, beta } => (1.0 + a * r).powf(-beta),
            ShapeKind::LogDecay { gamma, cap } => cap.min(gamma / (std::f64::consts::E + r).ln()),
            ShapeKind::GaussianDiag { sigma, amplitude } => {
                amplitude.value() * (-0.5 * (r / sigma[0]).powi(2)).exp()
            }
            ShapeKind::IndicatorBox { .. } => unreachable!("box shape is not radial"),
        }
    }

    fn is_radial(&self) -> bool {
        match &self.kind {
            ShapeKind::GaussianDiag { sigma, .. } => sigma.iter().all(|s| *s == sigma[0]),
            ShapeKind::IndicatorBox { .. } => false,
            _ => true,
        }
    }

    /// `sup_x h(x)`.
    pub fn sup_norm(&self) -> f64 {
        match &self.kind {
            ShapeKind::GaussianDiag { amplitude, .. } | ShapeKind::IndicatorBox { amplitude, .. } => {
                amplitude.value()
            }
            _ => self.profile(0.0),
        }
    }

    /// Radius of a ball containing the support, for compactly supported shapes.
    pub fn support_radius(&self) -> Option<f64> {
        match &self.kind {
            ShapeKind::IndicatorBox { halfwidth, .. } => Some(norm(halfwidth)),
            _ => None,
        }
    }

    /// `sup_{|x| >= r} h(x)`.
    pub fn sup_beyond(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match &self.kind {
            ShapeKind::IndicatorBox { halfwidth, amplitude } => {
                if r <= norm(halfwidth) {
                    amplitude.value()
                } else {
                    0.0
                }
            }
            ShapeKind::GaussianDiag { sigma, amplitude } => {
                let s = sigma.iter().cloned().fold(0.0, f64::max);
                amplitude.value() * (-0.5 * (r / s).powi(2)).exp()
            }
            _ => self.profile(r),
        }
    }

    /// Smallest positive value of `h`; 0 when `h` takes arbitrarily small positive values.
    pub fn min_positive_value(&self) -> f64 {
        match &self.kind {
            ShapeKind::IndicatorBox { amplitude, .. } => amplitude.value(),
            _ => 0.0,
        }
    }

    /// Characteristic length, used to seed quadrature panels.
    pub fn scale(&self) -> f64 {
        match &self.kind {
            ShapeKind::GaussianDiag { sigma, .. } => sigma.iter().cloned().fold(0.0, f64::max),
            ShapeKind::IndicatorBox { halfwidth, .. } => halfwidth.iter().cloned().fold(0.0, f64::max),
            ShapeKind::PathLossHard { a, r0, .. } => r0.max(1.0 / a),
            ShapeKind::PathLossSmooth { a, .. } => 1.0 / a,
            ShapeKind::LogDecay { .. } => 1.0,
        }
    }

    /// Coordinates along `axis` where `h` or one of its derivatives jumps.
    pub fn breakpoints(&self, axis: usize) -> Vec<f64> {
        match &self.kind {
            ShapeKind::IndicatorBox { halfwidth, .. } => vec![-halfwidth[axis], halfwidth[axis]],
            ShapeKind::PathLossHard { r0, .. } => vec![-r0, 0.0, *r0],
            _ => vec![0.0],
        }
    }

    /// Breakpoints of `x -> h_A(x)` along `axis`.
    pub fn region_breakpoints(&self, region: &Region, axis: usize) -> Vec<f64> {
        let base = self.breakpoints(axis);
        let mut out = Vec::new();
        match region {
            Region::Ball { radius } => {
                for b in &base {
                    out.extend([b - radius, *b, b + radius]);
                }
            }
            Region::Box { lo, hi } => {
                for b in &base {
                    out.extend([b - hi[axis], b - lo[axis]]);
                }
            }
            Region::Points { points } => {
                for p in points {
                    for b in &base {
                        out.push(b - p[axis]);
                    }
                }
            }
        }
        out
    }

    /// Power-law bound `h(x) <= C min(1, |x|^-gamma)`.
    ///
    /// Path-loss variants have a fixed exponent; for Gaussian and box shapes
    /// any `gamma_hint > 0` works and sets the returned exponent.
    pub fn power_envelope(&self, gamma_hint: f64) -> Option<(f64, f64)> {
        match &self.kind {
            ShapeKind::GaussianDiag { sigma, amplitude } => {
                let a = amplitude.value();
                let s2 = sigma.iter().cloned().fold(0.0, f64::max).powi(2);
                let g = gamma_hint;
                let peak = a * (g * s2).powf(g / 2.0) * (-g / 2.0).exp();
                Some((a.max(peak), g))
            }
            ShapeKind::IndicatorBox { halfwidth, amplitude } => {
                let r = norm(halfwidth);
                Some((amplitude.value() * r.powf(gamma_hint).max(1.0), gamma_hint))
            }
            ShapeKind::PathLossSmooth { a, beta } => Some((a.powf(-beta).max(1.0), *beta)),
            ShapeKind::PathLossHard { a, r0, beta } => {
                Some(((a * r0).powf(-beta).max(a.powf(-beta)), *beta))
            }
            ShapeKind::LogDecay { .. } => None,
        }
    }

    /// `sup` or `inf` of `z -> h(x + z)` over the region.
    pub fn envelope(&self, x: &[f64], region: &Region, mode: EnvelopeMode) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        region.validate(self.dim)?;
        Ok(self.envelope_value(x, region, mode))
    }

    /// Envelope without validation.
    pub fn envelope_value(&self, x: &[f64], region: &Region, mode: EnvelopeMode) -> f64 {
        let sup = mode == EnvelopeMode::Sup;
        match region {
            Region::Points { points } => {
                let mut z = vec![0.0; x.len()];
                let it = points.iter().map(|p| {
                    for i in 0..x.len() {
                        z[i] = x[i] + p[i];
                    }
                    self.value(&z)
                });
                if sup {
                    it.fold(0.0, f64::max)
                } else {
                    it.fold(f64::INFINITY, f64::min)
                }
            }
            Region::Box { lo, hi } => self.box_envelope(x, lo, hi, sup),
            Region::Ball { radius } => self.ball_envelope(x, *radius, sup),
        }
    }

    fn box_envelope(&self, x: &[f64], lo: &[f64], hi: &[f64], sup: bool) -> f64 {
        let d = x.len();
        if let ShapeKind::IndicatorBox { halfwidth, amplitude } = &self.kind {
            let ok = (0..d).all(|i| {
                let (a, b) = (x[i] + lo[i], x[i] + hi[i]);
                let w = halfwidth[i];
                if sup {
                    a <= w && b >= -w
                } else {
                    a >= -w && b <= w
                }
            });
            return if ok { amplitude.value() } else { 0.0 };
        }
        // Nearest (sup) or farthest (inf) point of the translated box from 0,
        // coordinate by coordinate.
        let mut z = vec![0.0; d];
        for i in 0..d {
            let (a, b) = (x[i] + lo[i], x[i] + hi[i]);
            z[i] = if sup {
                0.0f64.clamp(a, b)
            } else if a.abs() >= b.abs() {
                a
            } else {
                b
            };
        }
        self.value(&z)
    }

    fn ball_envelope(&self, x: &[f64], r: f64, sup: bool) -> f64 {
        if r == 0.0 {
            return self.value(x);
        }
        if self.is_radial() {
            let n = norm(x);
            let rr = if sup { (n - r).max(0.0) } else { n + r };
            return self.profile(rr);
        }
        match &self.kind {
            ShapeKind::IndicatorBox { halfwidth, amplitude } => {
                let ok = if sup {
                    let d2: f64 = x
                        .iter()
                        .zip(halfwidth)
                        .map(|(xi, w)| (xi.abs() - w).max(0.0).powi(2))
                        .sum();
                    d2 <= r * r
                } else {
                    x.iter().zip(halfwidth).all(|(xi, w)| xi.abs() + r <= *w)
                };
                if ok {
                    amplitude.value()
                } else {
                    0.0
                }
            }
            ShapeKind::GaussianDiag { sigma, amplitude } => {
                let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
                let q = if sup {
                    gaussian_ball_min_q(x, &w, r)
                } else {
                    gaussian_ball_max_q(x, &w, r)
                };
                amplitude.value() * (-0.5 * q).exp()
            }
            _ => unreachable!(),
        }
    }

    /// `int h^xi` over `R^d`.
    pub fn xi_integral(&self, xi: f64, tol: f64) -> Result<f64> {
        if !(xi > 0.0) || !(tol > 0.0) {
            return contract("xi_integral needs xi > 0 and tol > 0");
        }
        let d = self.dim;
        match &self.kind {
            ShapeKind::GaussianDiag { sigma, amplitude } => Ok(amplitude.value().powf(xi)
                * sigma
                    .iter()
                    .map(|s| s * (2.0 * std::f64::consts::PI / xi).sqrt())
                    .product::<f64>()),
            ShapeKind::IndicatorBox { halfwidth, amplitude } => {
                Ok(amplitude.value().powf(xi) * halfwidth.iter().map(|w| 2.0 * w).product::<f64>())
            }
            ShapeKind::LogDecay { .. } => Err(EsnError::Divergent(
                "logarithmic decay: int h^xi is infinite for every xi".into(),
            )),
            ShapeKind::PathLossHard { beta, .. } | ShapeKind::PathLossSmooth { beta, .. } => {
                if beta * xi <= d as f64 {
                    return Err(EsnError::Divergent(format!(
                        "beta * xi = {} <= d = {d}",
                        beta * xi
                    )));
                }
                let (c, g) = self.power_envelope(1.0).expect("path loss has a power envelope");
                let sd = unit_sphere_area(d);
                let f = |r: &[f64]| {
                    if r[0] < 0.0 {
                        0.0
                    } else {
                        sd * r[0].powi(d as i32 - 1) * self.profile(r[0]).powf(xi)
                    }
                };
                let mut opts = QuadOptions::new(tol);
                opts.decay = Some(Decay {
                    c: sd * c.powf(xi),
                    gamma: g * xi - d as f64 + 1.0,
                    r_min: 0.0,
                });
                opts.breakpoints = vec![self.breakpoints(0)];
                opts.scale = self.scale();
                let res = quadrature::integrate_with(f, 1, &opts)?;
                if res.diverged {
                    return Err(EsnError::Divergent("radial quadrature diverged".into()));
                }
                Ok(res.value)
            }
        }
    }

    /// Classify condition `(C'_xi)`.
    pub fn check_regularity(&self, xi: f64) -> RegularityReport {
        let d = self.dim as f64;
        let (holds, gamma) = match &self.kind {
            ShapeKind::GaussianDiag { .. } | ShapeKind::IndicatorBox { .. } => (true, Some(d / xi + 1.0)),
            ShapeKind::PathLossHard { beta, .. } | ShapeKind::PathLossSmooth { beta, .. } => {
                (beta * xi > d, Some(*beta))
            }
            ShapeKind::LogDecay { .. } => (false, None),
        };
        let constant_c = gamma.and_then(|g| self.power_envelope(g)).map(|(c, _)| c);
        RegularityReport {
            bounded: true,
            sup_norm: self.sup_norm(),
            compact_support: self.support_radius().is_some(),
            cprime_xi_holds: holds,
            gamma: if holds { gamma } else { None },
            constant_c: if holds { constant_c } else { None },
            xi_used: xi,
        }
    }
}

// min sum w_i z_i^2 over |z - x| <= r
fn gaussian_ball_min_q(x: &[f64], w: &[f64], r: f64) -> f64 {
    let n = norm(x);
    if n <= r {
        return 0.0;
    }
    let phi = |mu: f64| -> f64 {
        x.iter().zip(w).map(|(xi, wi)| (wi * xi / (wi + mu)).powi(2)).sum()
    };
    let wmax = w.iter().cloned().fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, wmax * n / r);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid) > r * r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    x.iter().zip(w).map(|(xi, wi)| wi * (mu * xi / (wi + mu)).powi(2)).sum()
}

// max sum w_i z_i^2 over |z - x| <= r (trust-region form, hard case included)
fn gaussian_ball_max_q(x: &[f64], w: &[f64], r: f64) -> f64 {
    let d = x.len();
    let wmax = w.iter().cloned().fold(0.0, f64::max);
    let is_top = |i: usize| w[i] >= wmax * (1.0 - 1e-12);
    let psi = |mu: f64| -> f64 {
        (0..d)
            .filter(|&i| x[i] != 0.0)
            .map(|i| (w[i] * x[i] / (mu - w[i])).powi(2))
            .sum()
    };
    let top_has_mass = (0..d).any(|i| is_top(i) && x[i] != 0.0);
    let mut p = vec![0.0; d];
    let hard = !top_has_mass && {
        let tilde: f64 = (0..d)
            .filter(|&i| !is_top(i))
            .map(|i| (w[i] * x[i] / (wmax - w[i])).powi(2))
            .sum();
        tilde < r * r
    };
    if hard {
        let mut used = 0.0;
        for i in 0..d {
            if !is_top(i) {
                p[i] = w[i] * x[i] / (wmax - w[i]);
                used += p[i] * p[i];
            }
        }
        let first_top = (0..d).find(|&i| is_top(i)).expect("some weight is maximal");
        p[first_top] = (r * r - used).max(0.0).sqrt();
    } else {
        let n = norm(x);
        let (mut lo, mut hi) = (wmax, wmax + wmax * n / r + 1e-300);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if psi(mid) > r * r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mu = hi;
        for i in 0..d {
            if !(is_top(i) && x[i] == 0.0) {
                p[i] = w[i] * x[i] / (mu - w[i]);
            }
        }
    }
    (0..d).map(|i| w[i] * (x[i] + p[i]).powi(2)).sum()
}
