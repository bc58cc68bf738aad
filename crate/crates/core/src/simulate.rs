//! Exact simulation of the field on a finite grid.
//!
//! Only points whose largest contribution on a target set `K` exceeds a
//! threshold `u` can matter for values above `u` on `K`, and there are finitely
//! many of them. Points are generated in layers by that largest contribution
//! `m h_K(x)`, where `h_K(x) = sup_{y in K} h(y - x)`:
//!
//! ```text
//! layer 0:  u0 < m h_K(x)
//! layer k:  u0 2^-k < m h_K(x) <= u0 2^(1-k)
//! ```
//!
//! Layers are independent Poisson processes, each drawn from its own random
//! stream. Sampling stops once every grid node carries a value above the
//! current layer floor; no unsampled point can change a node after that.
//!
//! Locations are drawn by thinning a dominating process: a piecewise
//! constant bound on 64 cells per axis around `K`, plus a power-law radial
//! proposal beyond the cells for shapes without compact support.

use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analytic::alpha_window;
use crate::error::{check_dim, contract, EsnError, Result};
use crate::rng::{open01, stream};
use crate::shape::{unit_ball_volume, unit_sphere_area, EnvelopeMode, Region, ShapeKind, ShapeSpec};
use crate::weight::WeightSpec;

const CELLS_PER_AXIS: usize = 64;
const INNER_CELLS: usize = 16;
/// Expected number of tail proposals per layer.
const TAIL_PROPOSALS: f64 = 0.5;
/// Refuse layers whose dominating process would need more proposals than this.
const MAX_PROPOSALS: f64 = 5e7;

/// Regular grid `origin + k * spacing`, `0 <= k_i < counts_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub counts: Vec<usize>,
}

impl GridSpec {
    pub fn new(origin: Vec<f64>, spacing: Vec<f64>, counts: Vec<usize>) -> Self {
        GridSpec { origin, spacing, counts }
    }

    /// Single node at `x`.
    pub fn single(x: Vec<f64>) -> Self {
        let d = x.len();
        GridSpec { origin: x, spacing: vec![1.0; d], counts: vec![1; d] }
    }

    /// `n` nodes per axis spanning `[lo, hi]` inclusive.
    pub fn spanning(lo: &[f64], hi: &[f64], n: usize) -> Self {
        let spacing = lo.iter().zip(hi).map(|(l, h)| if n > 1 { (h - l) / (n - 1) as f64 } else { 1.0 }).collect();
        GridSpec { origin: lo.to_vec(), spacing, counts: vec![n; lo.len()] }
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        check_dim(dim, self.origin.len())?;
        check_dim(dim, self.spacing.len())?;
        check_dim(dim, self.counts.len())?;
        if self.spacing.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return contract("grid spacing must be positive");
        }
        if self.counts.contains(&0) {
            return contract("grid counts must be positive");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-axis indices of node `i`; the last axis varies fastest.
    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut k = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            k[a] = i % self.counts[a];
            i /= self.counts[a];
        }
        k
    }

    pub fn flat_index(&self, k: &[usize]) -> usize {
        k.iter().zip(&self.counts).fold(0, |acc, (ki, c)| acc * c + ki)
    }

    pub fn node(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .iter()
            .enumerate()
            .map(|(a, k)| self.origin[a] + *k as f64 * self.spacing[a])
            .collect()
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Node with index `counts / 2` on every axis.
    pub fn center_index(&self) -> usize {
        let k: Vec<usize> = self.counts.iter().map(|c| c / 2).collect();
        self.flat_index(&k)
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let hi = (0..self.dim())
            .map(|a| self.origin[a] + (self.counts[a] - 1) as f64 * self.spacing[a])
            .collect();
        (self.origin.clone(), hi)
    }

    /// Same span with `factor` times as many intervals per axis.
    pub fn refined(&self, factor: usize) -> Self {
        GridSpec {
            origin: self.origin.clone(),
            spacing: self.spacing.iter().map(|s| s / factor as f64).collect(),
            counts: self.counts.iter().map(|c| (c - 1) * factor + 1).collect(),
        }
    }
}

/// Closed box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Window {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

/// Everything the sampler needs for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub shape: ShapeSpec,
    pub weight: WeightSpec,
    pub lambda: f64,
    pub window: Window,
    pub grid: GridSpec,
    pub u0: f64,
    pub max_halvings: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let d = self.shape.dim();
        self.weight.validate()?;
        self.grid.validate(d)?;
        Region::boxed(self.window.lo.clone(), self.window.hi.clone()).validate(d)?;
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return contract("lambda must be positive");
        }
        if matches!(self.weight, WeightSpec::PowerMeasure { .. }) && self.lambda != 1.0 {
            return contract("a power measure weight absorbs the intensity: lambda must be 1");
        }
        if matches!(self.weight, WeightSpec::Sum { .. }) {
            return Err(EsnError::NotApplicable("marks of a summed weight have no closed-form inverse".into()));
        }
        if !(self.u0 > 0.0 && self.u0.is_finite()) {
            return contract("u0 must be positive");
        }
        let (lo, hi) = self.grid.bounding_box();
        if !self.window.contains(&lo) || !self.window.contains(&hi) {
            return contract("grid nodes must lie inside the window");
        }
        Ok(())
    }
}

/// A point `(x, m)` of the Poisson process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: Vec<f64>,
    pub m: f64,
}

/// One exact (or censored) draw of the field on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub points: Vec<PointRecord>,
    /// Floor of the last sampled layer.
    pub u_final: f64,
    /// Values are the true field values at every node.
    pub exact: bool,
    pub seed: u64,
    pub rep_index: u64,
    pub halvings_used: usize,
}

/// Node-wise largest `r` contributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStats {
    /// `stats[i][j]` is the `(i + 1)`-th largest value at node `j`.
    pub stats: Vec<Vec<f64>>,
    pub u_final: f64,
    pub exact: bool,
    pub halvings_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigBallSup {
    pub sup: f64,
    pub n_r: f64,
    pub normalized: f64,
    pub exact: bool,
}

struct Tail {
    t0: f64,
    p: f64,
    c: f64,
    kappa: f64,
    mass: f64,
}

struct Layer {
    u_lo: f64,
    u_hi: f64,
    knots: Vec<Vec<f64>>,
    /// `Gbar(u_lo / sup_cell h_K)` per cell.
    bound: Vec<f64>,
    /// Running sums of `lambda * vol * bound`.
    cum: Vec<f64>,
    tail: Option<Tail>,
}

struct Sampled {
    x: Vec<f64>,
    m: f64,
    hk: f64,
}

/// Layered sampler for one scenario and target set.
pub struct Simulator {
    shape: ShapeSpec,
    weight: WeightSpec,
    lambda: f64,
    target: Region,
    grid: GridSpec,
    nodes: Vec<Vec<f64>>,
    u0: f64,
    max_halvings: usize,
    seed: u64,
    center: Vec<f64>,
    r_k: f64,
    /// No contribution on `K` is positive but below this.
    floor: f64,
    layers: Vec<OnceLock<Option<Layer>>>,
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> Result<u64> {
    if !(mean > 0.0) {
        return Ok(0);
    }
    if !(mean <= MAX_PROPOSALS) {
        return Err(EsnError::Numerical(format!("layer needs {mean:.3e} proposals")));
    }
    let p = Poisson::new(mean).map_err(|e| EsnError::Numerical(e.to_string()))?;
    Ok(p.sample(rng) as u64)
}

/// `n` cells from `a` outward to `a + sign * len`, first width about `w0`.
fn outward_knots(a: f64, sign: f64, len: f64, n: usize, w0: f64) -> Vec<f64> {
    if n == 0 || len <= 0.0 {
        return vec![];
    }
    let widths: Vec<f64> = if w0 * n as f64 >= len {
        vec![len / n as f64; n]
    } else {
        // w0 (r^n - 1) / (r - 1) = len
        let total = |r: f64| w0 * (r.powi(n as i32) - 1.0) / (r - 1.0);
        let (mut lo, mut hi) = (1.0 + 1e-12, 2.0);
        while total(hi) < len {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) < len {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = total(hi);
        (0..n).map(|i| w0 * hi.powi(i as i32) * len / s).collect()
    };
    let mut out = Vec::with_capacity(n);
    let mut pos = 0.0;
    for (i, w) in widths.iter().enumerate() {
        pos += w;
        out.push(if i + 1 == n { a + sign * len } else { a + sign * pos });
    }
    out
}

impl Simulator {
    /// Sampler whose target set is the bounding box of the scenario grid.
    pub fn new(scn: &Scenario) -> Result<Self> {
        let (lo, hi) = scn.grid.bounding_box();
        Self::with_target(scn, Region::boxed(lo, hi), scn.u0, scn.max_halvings)
    }

    pub fn with_target(scn: &Scenario, target: Region, u0: f64, max_halvings: usize) -> Result<Self> {
        scn.validate()?;
        let d = scn.shape.dim();
        target.validate(d)?;
        if !(u0 > 0.0 && u0.is_finite()) {
            return contract("u0 must be positive");
        }
        if matches!(target, Region::Points { .. }) {
            return contract("sampler targets are boxes or balls");
        }
        if let Some(a) = alpha_window(&scn.shape, &scn.weight, &target) {
            if u0 <= a {
                return contract(format!(
                    "u0 = {u0} is not above alpha = {a}: the sampling region has infinite mass"
                ));
            }
        }
        let (lo, hi) = target.bounding_box(d);
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
        let r_k = lo.iter().zip(&hi).map(|(l, h)| (0.5 * (h - l)).powi(2)).sum::<f64>().sqrt();
        let floor = scn.weight.lower_support() * scn.shape.min_positive_value();
        Ok(Simulator {
            shape: scn.shape.clone(),
            weight: scn.weight.clone(),
            lambda: scn.lambda,
            target,
            grid: scn.grid.clone(),
            nodes: scn.grid.nodes(),
            u0,
            max_halvings,
            seed: scn.seed,
            center,
            r_k,
            floor,
            layers: (0..=max_halvings).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `h_K(x)`.
    fn h_target(&self, x: &[f64]) -> f64 {
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        self.shape.envelope_value(&neg, &self.target, EnvelopeMode::Sup)
    }

    /// Upper bound of `h_K` over the cell `[clo, chi]`.
    fn cell_sup(&self, clo: &[f64], chi: &[f64]) -> f64 {
        let d = self.dim();
        let (klo, khi) = self.target.bounding_box(d);
        let zlo: Vec<f64> = (0..d).map(|i| klo[i] - chi[i]).collect();
        let zhi: Vec<f64> = (0..d).map(|i| khi[i] - clo[i]).collect();
        let zero = vec![0.0; d];
        let by_box = self.shape.envelope_value(&zero, &Region::boxed(zlo, zhi), EnvelopeMode::Sup);
        match self.target {
            Region::Ball { radius } => {
                let dist = (0..d)
                    .map(|i| (clo[i].max(0.0) + (-chi[i]).max(0.0)).powi(2))
                    .sum::<f64>()
                    .sqrt();
                by_box.min(self.shape.sup_beyond(dist - radius))
            }
            _ => by_box,
        }
    }

    /// `Gbar(u / h_K(x)) <= C t^-p` at distance `t + r_K` from the centre, `t >= 1`.
    fn tail_power(&self, u: f64) -> Option<(f64, f64)> {
        let d = self.dim() as f64;
        if let (ShapeKind::LogDecay { gamma, .. }, WeightSpec::Exponential { rate }) =
            (self.shape.kind(), &self.weight)
        {
            return Some((1.0, rate * u / gamma));
        }
        let q_hint = match self.shape.kind() {
            ShapeKind::PathLossHard { beta, .. } | ShapeKind::PathLossSmooth { beta, .. } => (d + 2.0) / beta,
            _ => 1.0,
        };
        let (cg, q) = self.weight.power_bound(q_hint)?;
        let (ch, gh) = self.shape.power_envelope((d + 2.0) / q)?;
        Some((cg * (ch / u).powf(q), gh * q))
    }

    fn build_layer(&self, k: usize) -> Option<Layer> {
        let d = self.dim();
        let df = d as f64;
        let u_lo = self.u0 * 0.5f64.powi(k as i32);
        let u_hi = if k == 0 { f64::INFINITY } else { 2.0 * u_lo };
        if let Some(a) = alpha_window(&self.shape, &self.weight, &self.target) {
            if u_lo <= a {
                return None;
            }
        }
        let (klo, khi) = self.target.bounding_box(d);
        let min_half = (0..d).map(|i| 0.5 * (khi[i] - klo[i])).fold(f64::INFINITY, f64::min);
        let (outer, w0, tail) = match self.shape.kind() {
            ShapeKind::IndicatorBox { halfwidth, .. } => (halfwidth.clone(), f64::INFINITY, None),
            _ => {
                let (c, p) = self.tail_power(u_lo)?;
                if !(p > df) || !c.is_finite() {
                    return None;
                }
                let need = (self.lambda * unit_sphere_area(d) * 2f64.powi(d as i32 - 1) * c
                    / ((p - df) * TAIL_PROPOSALS))
                    .powf(1.0 / (p - df));
                let t0 = need.max(1.0).max(self.r_k);
                let kappa = 1.0 + self.r_k / t0;
                let mass =
                    self.lambda * unit_sphere_area(d) * kappa.powi(d as i32 - 1) * c * t0.powf(df - p) / (p - df);
                if !(t0.is_finite() && mass.is_finite()) {
                    return None;
                }
                let s_out = t0 + self.r_k - min_half;
                (vec![s_out; d], 0.25 * self.shape.scale(), Some(Tail { t0, p, c, kappa, mass }))
            }
        };
        let knots: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                let (lo, hi) = (klo[a], khi[a]);
                let n_in = if hi > lo { INNER_CELLS } else { 0 };
                let n_out = (CELLS_PER_AXIS - n_in) / 2;
                let mut v: Vec<f64> = outward_knots(lo, -1.0, outer[a], n_out, w0).into_iter().rev().collect();
                v.push(lo);
                for i in 1..n_in {
                    v.push(lo + (hi - lo) * i as f64 / n_in as f64);
                }
                if hi > lo {
                    v.push(hi);
                }
                v.extend(outward_knots(hi, 1.0, outer[a], n_out, w0));
                v
            })
            .collect();
        if knots.iter().flatten().any(|v| !v.is_finite()) {
            return None;
        }
        let counts: Vec<usize> = knots.iter().map(|k| k.len() - 1).collect();
        let cells = GridSpec { origin: vec![0.0; d], spacing: vec![1.0; d], counts: counts.clone() };
        let mut bound = Vec::with_capacity(cells.len());
        let mut cum = Vec::with_capacity(cells.len());
        let mut acc = 0.0;
        for i in 0..cells.len() {
            let idx = cells.multi_index(i);
            let clo: Vec<f64> = (0..d).map(|a| knots[a][idx[a]]).collect();
            let chi: Vec<f64> = (0..d).map(|a| knots[a][idx[a] + 1]).collect();
            let h = self.cell_sup(&clo, &chi);
            let b = if h > 0.0 { self.weight.tail_value(u_lo / h) } else { 0.0 };
            let vol: f64 = (0..d).map(|a| chi[a] - clo[a]).product();
            acc += self.lambda * vol * b;
            bound.push(b);
            cum.push(acc);
        }
        if !acc.is_finite() {
            return None;
        }
        Some(Layer { u_lo, u_hi, knots, bound, cum, tail })
    }

    fn layer(&self, k: usize) -> Option<&Layer> {
        self.layers.get(k)?.get_or_init(|| self.build_layer(k)).as_ref()
    }

    fn density(&self, layer: &Layer, hk: f64) -> f64 {
        if hk > 0.0 {
            self.weight.tail_value(layer.u_lo / hk) - self.weight.tail_value(layer.u_hi / hk)
        } else {
            0.0
        }
    }

    fn inside_cells(layer: &Layer, x: &[f64]) -> bool {
        x.iter().zip(&layer.knots).all(|(v, k)| k[0] <= *v && *v <= k[k.len() - 1])
    }

    fn accept(&self, layer: &Layer, rng: &mut ChaCha8Rng, x: Vec<f64>, bound: f64, out: &mut Vec<Sampled>) -> Result<()> {
        let hk = self.h_target(&x);
        let f = self.density(layer, hk);
        if f > 0.0 && open01(rng) * bound < f {
            let m = self.weight.sample_between(layer.u_lo / hk, layer.u_hi / hk, open01(rng))?;
            out.push(Sampled { x, m, hk });
        }
        Ok(())
    }

    /// Draw layer `k` of replication `rep`; `None` when the layer has infinite mass.
    fn sample_layer(&self, rep: u64, k: usize) -> Result<Option<Vec<Sampled>>> {
        let Some(layer) = self.layer(k) else { return Ok(None) };
        let d = self.dim();
        let mut rng = stream(self.seed, rep, k as u64);
        let mut out = Vec::new();
        let total = *layer.cum.last().unwrap_or(&0.0);
        let cells_shape: Vec<usize> = layer.knots.iter().map(|k| k.len() - 1).collect();
        let cells = GridSpec { origin: vec![0.0; d], spacing: vec![1.0; d], counts: cells_shape };
        for _ in 0..poisson(&mut rng, total)? {
            let v = open01(&mut rng) * total;
            let c = layer.cum.partition_point(|s| *s <= v).min(layer.cum.len() - 1);
            let idx = cells.multi_index(c);
            let x: Vec<f64> = (0..d)
                .map(|a| {
                    let (l, h) = (layer.knots[a][idx[a]], layer.knots[a][idx[a] + 1]);
                    l + open01(&mut rng) * (h - l)
                })
                .collect();
            self.accept(layer, &mut rng, x, layer.bound[c], &mut out)?;
        }
        if let Some(t) = &layer.tail {
            let df = d as f64;
            for _ in 0..poisson(&mut rng, t.mass)? {
                let tt = t.t0 * open01(&mut rng).powf(-1.0 / (t.p - df));
                let s = tt + self.r_k;
                let dir: Vec<f64> = if d == 1 {
                    vec![if open01(&mut rng) < 0.5 { -1.0 } else { 1.0 }]
                } else {
                    loop {
                        let g: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if n > 0.0 {
                            break g.into_iter().map(|v| v / n).collect();
                        }
                    }
                };
                let x: Vec<f64> = (0..d).map(|a| self.center[a] + s * dir[a]).collect();
                if Self::inside_cells(layer, &x) {
                    continue;
                }
                let q = t.c * t.kappa.powi(d as i32 - 1) * tt.powf(df - 1.0 - t.p) / s.powf(df - 1.0);
                self.accept(layer, &mut rng, x, q, &mut out)?;
            }
        }
        Ok(Some(out))
    }

    fn contribution(&self, p: &Sampled, node: &[f64], buf: &mut [f64]) -> f64 {
        for i in 0..buf.len() {
            buf[i] = node[i] - p.x[i];
        }
        p.m * self.shape.value(buf)
    }

    /// Node-wise top `r` values, halving until the `r`-th value clears the layer floor.
    fn run(&self, rep: u64, r: usize) -> Result<(Vec<f64>, Vec<Sampled>, f64, bool, usize)> {
        let n = self.nodes.len();
        let mut top = vec![0.0; n * r];
        let mut points = Vec::new();
        let mut buf = vec![0.0; self.dim()];
        for k in 0..=self.max_halvings {
            let Some(layer) = self.sample_layer(rep, k)? else {
                let u = if k == 0 { self.u0 } else { self.u0 * 0.5f64.powi(k as i32 - 1) };
                return Ok((top, points, u, false, k.saturating_sub(1)));
            };
            for p in &layer {
                for (j, node) in self.nodes.iter().enumerate() {
                    let v = self.contribution(p, node, &mut buf);
                    let slot = &mut top[j * r..(j + 1) * r];
                    if v > slot[r - 1] {
                        let pos = slot.partition_point(|s| *s >= v);
                        slot[pos..].rotate_right(1);
                        slot[pos] = v;
                    }
                }
            }
            points.extend(layer);
            let u = self.u0 * 0.5f64.powi(k as i32);
            let complete = u < self.floor;
            let cleared = (0..n).all(|j| top[j * r + r - 1] > u);
            if cleared || complete {
                return Ok((top, points, u, true, k));
            }
        }
        let u = self.u0 * 0.5f64.powi(self.max_halvings as i32);
        Ok((top, points, u, false, self.max_halvings))
    }

    /// Field values on the grid for replication `rep`.
    pub fn sample_field(&self, rep: u64) -> Result<FieldSample> {
        let (values, pts, u_final, exact, halvings_used) = self.run(rep, 1)?;
        Ok(FieldSample {
            grid: self.grid.clone(),
            values,
            points: pts.into_iter().map(|p| PointRecord { x: p.x, m: p.m }).collect(),
            u_final,
            exact,
            seed: self.seed,
            rep_index: rep,
            halvings_used,
        })
    }

    /// Node-wise `r` largest contributions.
    pub fn sample_order_stats(&self, r: usize, rep: u64) -> Result<OrderStats> {
        if r == 0 {
            return contract("order statistics need r >= 1");
        }
        let (top, _, u_final, exact, halvings_used) = self.run(rep, r)?;
        let n = self.nodes.len();
        let stats = (0..r).map(|i| (0..n).map(|j| top[j * r + i]).collect()).collect();
        Ok(OrderStats { stats, u_final, exact, halvings_used })
    }

    /// Points of layer 0 with `m h(y - x) >= thresholds[j]` at every node.
    ///
    /// Exact when `u0 < min_j thresholds[j]`.
    pub fn count_dominating(&self, thresholds: &[f64], rep: u64) -> Result<u64> {
        if thresholds.len() != self.nodes.len() {
            return Err(EsnError::Dimension { expected: self.nodes.len(), got: thresholds.len() });
        }
        let Some(layer) = self.sample_layer(rep, 0)? else {
            return contract("threshold layer has infinite mass");
        };
        let mut buf = vec![0.0; self.dim()];
        let count = layer
            .iter()
            .filter(|p| {
                self.nodes
                    .iter()
                    .zip(thresholds)
                    .all(|(y, f)| self.contribution(p, y, &mut buf) >= *f)
            })
            .count();
        Ok(count as u64)
    }

    /// `sup_K M`, exact once a layer contains a point.
    pub fn sup_over_target(&self, rep: u64) -> Result<(f64, bool)> {
        for k in 0..=self.max_halvings {
            let Some(layer) = self.sample_layer(rep, k)? else { return Ok((0.0, false)) };
            let best = layer.iter().map(|p| p.m * p.hk).fold(0.0, f64::max);
            if best > 0.0 {
                return Ok((best, true));
            }
            if self.u0 * 0.5f64.powi(k as i32) < self.floor {
                return Ok((0.0, true));
            }
        }
        Ok((0.0, false))
    }
}

/// One draw of the field; builds a fresh sampler.
pub fn sample_field(scn: &Scenario, rep: u64) -> Result<FieldSample> {
    Simulator::new(scn)?.sample_field(rep)
}

pub fn sample_order_stats(scn: &Scenario, r: usize, rep: u64) -> Result<OrderStats> {
    Simulator::new(scn)?.sample_order_stats(r, rep)
}

/// Sampler for exceedance counts of `a_lambda f` on the grid.
pub fn pot_sampler(scn: &Scenario, f: &[f64]) -> Result<(Simulator, Vec<f64>)> {
    if f.len() != scn.grid.len() || f.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return contract("threshold function must be positive at every grid node");
    }
    let a = scn.weight.a_lambda(scn.lambda)?;
    let f_min = f.iter().cloned().fold(f64::INFINITY, f64::min);
    let (lo, hi) = scn.grid.bounding_box();
    // strictly below every threshold, so no qualifying point sits above the layer
    let sim = Simulator::with_target(scn, Region::boxed(lo, hi), 0.5 * a * f_min, 0)?;
    Ok((sim, f.iter().map(|v| a * v).collect()))
}

/// Number of points with `m h(y - x) >= a_lambda f(y)` at every grid node.
pub fn pot_count(scn: &Scenario, f: &[f64], rep: u64) -> Result<u64> {
    let (sim, thr) = pot_sampler(scn, f)?;
    sim.count_dominating(&thr, rep)
}

/// `N(R) = ||h|| c_d^(1/xi) lambda^(1/xi) G^-1(1 - R^-d)`.
pub fn bigball_norm(shape: &ShapeSpec, weight: &WeightSpec, lambda: f64, r: f64) -> Result<f64> {
    let xi = weight
        .rv_exponent()
        .filter(|_| weight.is_probability())
        .ok_or_else(|| EsnError::NotApplicable("big-ball normalization needs a regularly varying probability weight".into()))?;
    if !(r > 0.0) {
        return contract("ball radius must be positive");
    }
    let d = shape.dim();
    let q = weight
        .tail_inverse(r.powi(-(d as i32)))
        .ok_or_else(|| EsnError::NotApplicable("weight has no tail inverse".into()))?;
    Ok(shape.sup_norm() * unit_ball_volume(d).powf(1.0 / xi) * lambda.powf(1.0 / xi) * q)
}

/// Sampler for the supremum over the centred ball of radius `r`.
pub fn bigball_sampler(scn: &Scenario, r: f64) -> Result<(Simulator, f64)> {
    let n_r = bigball_norm(&scn.shape, &scn.weight, scn.lambda, r)?;
    let sim = Simulator::with_target(scn, Region::ball(r), 2.0 * n_r, scn.max_halvings)?;
    Ok((sim, n_r))
}

pub fn bigball_sup(scn: &Scenario, r: f64, rep: u64) -> Result<BigBallSup> {
    let (sim, n_r) = bigball_sampler(scn, r)?;
    let (sup, exact) = sim.sup_over_target(rep)?;
    Ok(BigBallSup { sup, n_r, normalized: sup / n_r, exact })
}

/// Points attaining the field value at one or more grid nodes.
pub fn extremal_points(fs: &FieldSample, shape: &ShapeSpec) -> Result<Vec<PointRecord>> {
    if !fs.exact {
        return contract("extremal points need an exact sample");
    }
    let nodes = fs.grid.nodes();
    let mut buf = vec![0.0; shape.dim()];
    let mut keep = vec![false; fs.points.len()];
    for (node, v) in nodes.iter().zip(&fs.values) {
        if *v <= 0.0 {
            continue;
        }
        for (i, p) in fs.points.iter().enumerate() {
            for a in 0..buf.len() {
                buf[a] = node[a] - p.x[a];
            }
            if p.m * shape.value(&buf) >= v * (1.0 - 1e-12) {
                keep[i] = true;
            }
        }
    }
    Ok(fs.points.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_scenario(weight: WeightSpec, lambda: f64, grid: GridSpec) -> Scenario {
        let d = grid.dim();
        Scenario {
            shape: ShapeSpec::indicator_box(vec![0.5; d], 1.0).unwrap(),
            weight,
            lambda,
            window: Window { lo: vec![-1.0; d], hi: vec![1.0; d] },
            grid,
            u0: 8.0,
            max_halvings: 40,
            reps: 1,
            seed: 11,
        }
    }

    #[test]
    fn grid_indexing() {
        let g = GridSpec::new(vec![0.0, 1.0], vec![0.5, 1.0], vec![3, 2]);
        assert_eq!(g.len(), 6);
        assert_eq!(g.node(1), vec![0.0, 2.0]);
        assert_eq!(g.node(5), vec![1.0, 2.0]);
        assert_eq!(g.flat_index(&g.multi_index(4)), 4);
        assert_eq!(g.refined(2).counts, vec![5, 3]);
    }

    #[test]
    fn geometric_knots_reach_the_end() {
        let k = outward_knots(1.0, 1.0, 10.0, 24, 0.01);
        assert_eq!(k.len(), 24);
        assert!((k[0] - 1.01).abs() < 1e-6);
        assert_eq!(k[23], 11.0);
        assert!(k.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn exact_samples_clear_the_floor() {
        let g = GridSpec::spanning(&[-1.0], &[1.0], 9);
        let s = box_scenario(WeightSpec::PowerMeasure { xi: 1.0 }, 1.0, g);
        let sim = Simulator::new(&s).unwrap();
        for rep in 0..50 {
            let f = sim.sample_field(rep).unwrap();
            assert!(f.exact);
            assert!(f.values.iter().all(|v| *v > f.u_final));
            assert_eq!(f, sim.sample_field(rep).unwrap());
        }
    }

    #[test]
    fn complete_below_the_floor() {
        let s = box_scenario(WeightSpec::Pareto { xi: 2.0, sigma: 1.0 }, 0.5, GridSpec::single(vec![0.0]));
        let sim = Simulator::new(&s).unwrap();
        let zeros = (0..200).filter(|r| sim.sample_field(*r).unwrap().values[0] == 0.0).count();
        // P(no point covers 0) = exp(-0.5)
        assert!((zeros as f64 / 200.0 - (-0.5f64).exp()).abs() < 0.12, "{zeros}");
        assert!((0..200).all(|r| sim.sample_field(r).unwrap().exact));
    }

    #[test]
    fn order_stats_are_sorted_and_match_the_field() {
        let g = GridSpec::spanning(&[-1.0], &[1.0], 5);
        let s = box_scenario(WeightSpec::PowerMeasure { xi: 1.0 }, 1.0, g);
        let sim = Simulator::new(&s).unwrap();
        for rep in 0..20 {
            let o = sim.sample_order_stats(3, rep).unwrap();
            for j in 0..5 {
                assert!(o.stats[0][j] >= o.stats[1][j] && o.stats[1][j] >= o.stats[2][j]);
            }
            let f = sim.sample_field(rep).unwrap();
            for j in 0..5 {
                assert!(o.stats[0][j] == f.values[j] || !o.exact || !f.exact);
            }
        }
    }

    #[test]
    fn extremal_points_reconstruct_the_field() {
        let g = GridSpec::spanning(&[-1.0], &[1.0], 21);
        let s = box_scenario(WeightSpec::PowerMeasure { xi: 1.0 }, 1.0, g);
        let sim = Simulator::new(&s).unwrap();
        let f = sim.sample_field(3).unwrap();
        let e = extremal_points(&f, &s.shape).unwrap();
        assert!(e.len() <= f.points.len() && !e.is_empty());
        for (j, y) in f.grid.nodes().iter().enumerate() {
            let best = e.iter().map(|p| p.m * s.shape.value(&[y[0] - p.x[0]])).fold(0.0, f64::max);
            assert_eq!(best, f.values[j]);
        }
    }

    #[test]
    fn gaussian_samples_in_two_dimensions() {
        let shape = ShapeSpec::gaussian(vec![0.5, 0.3]).unwrap();
        let s = Scenario {
            shape,
            weight: WeightSpec::Pareto { xi: 2.0, sigma: 1.0 },
            lambda: 5.0,
            window: Window { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0] },
            grid: GridSpec::spanning(&[-0.5, -0.5], &[0.5, 0.5], 3),
            u0: 10.0,
            max_halvings: 40,
            reps: 1,
            seed: 5,
        };
        let sim = Simulator::new(&s).unwrap();
        for rep in 0..20 {
            let f = sim.sample_field(rep).unwrap();
            assert!(f.exact && f.values.iter().all(|v| *v > f.u_final));
        }
    }

    #[test]
    fn bigball_normalization() {
        let shape = ShapeSpec::indicator_box(vec![0.5], 1.0).unwrap();
        let n = bigball_norm(&shape, &WeightSpec::Pareto { xi: 2.0, sigma: 1.0 }, 1.0, 100.0).unwrap();
        assert!((n - 2f64.sqrt() * 10.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_mass_is_refused() {
        let shape = ShapeSpec::new(ShapeKind::LogDecay { gamma: 1.0, cap: 5.0 }, 1).unwrap();
        let s = Scenario {
            shape,
            weight: WeightSpec::Exponential { rate: 1.0 },
            lambda: 1.0,
            window: Window { lo: vec![-1.0], hi: vec![1.0] },
            grid: GridSpec::single(vec![0.0]),
            u0: 0.9,
            max_halvings: 4,
            reps: 1,
            seed: 1,
        };
        assert!(matches!(Simulator::new(&s), Err(EsnError::Contract(_))));
        let s = Scenario { u0: 8.0, ..s };
        let f = Simulator::new(&s).unwrap().sample_field(0).unwrap();
        // layers at or below alpha = 1 are never sampled
        assert!(f.u_final > 1.0);
    }
}
