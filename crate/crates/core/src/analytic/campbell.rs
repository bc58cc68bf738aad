//! Intensity of extremal points of the limit field by Monte Carlo.
//!
//! A point `(x0, m)` added to an independent copy of the field is extremal
//! unless `M >= m h(. - x0)`. On a grid this fails exactly when
//! `m > m* = min_y M(y) / h(y - x0)`, so each replication gives the whole
//! curve `m -> 1{m* < m}` at once and
//!
//! ```text
//! lambda~ = int (1 - P(M >= m h)) xi m^(-xi-1) dm
//! ```
//!
//! is integrated on the `m` grid, treating `1 - P` as 0 below the grid and 1
//! above it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::rng::{open01, stream};
use crate::shape::ShapeSpec;
use crate::simulate::{GridSpec, Scenario, Simulator, Window};
use crate::stats::mean_var;
use crate::weight::WeightSpec;

/// Stream layer for the random offsets, far from the simulator's layers.
const OFFSET_LAYER: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampbellConfig {
    pub reps: usize,
    /// Increasing mark grid.
    pub m_grid: Vec<f64>,
    pub window: Window,
    pub grid: GridSpec,
    pub seed: u64,
    pub max_halvings: usize,
    /// Bias guard: `h` beyond the margin must be below `tol * sup h`.
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampbellEstimate {
    pub lambda_tilde: f64,
    pub std_error: f64,
    /// 95% normal interval.
    pub ci: (f64, f64),
    pub m_grid: Vec<f64>,
    /// Estimated `1 - P(M >= m h)` at each grid mark.
    pub not_dominated: Vec<f64>,
    /// Mass of the normalized mark distribution on each grid interval, last entry above the grid.
    pub nu_weights: Vec<f64>,
    /// Offsets are drawn in this box; extremal points are counted there too.
    pub inner: Window,
    pub censored_reps: usize,
}

/// Smallest margin beyond which `h <= tol * sup h`.
pub fn guard_margin(shape: &ShapeSpec, tol: f64) -> f64 {
    if let Some(r) = shape.support_radius() {
        return r;
    }
    let target = tol * shape.sup_norm();
    let mut hi = shape.scale().max(1e-12);
    while shape.sup_beyond(hi) > target {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if shape.sup_beyond(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Per-interval weights `xi m^(-xi-1) dm` with trapezoid values of `q`, then the tail above the grid.
fn grid_integral(q: &[f64], m: &[f64], xi: f64) -> Vec<f64> {
    let mut out: Vec<f64> = (0..m.len() - 1)
        .map(|j| 0.5 * (q[j] + q[j + 1]) * (m[j].powf(-xi) - m[j + 1].powf(-xi)))
        .collect();
    out.push(q[m.len() - 1] * m[m.len() - 1].powf(-xi));
    out
}

/// Estimate the intensity of extremal points of the field with shape `shape`
/// and power measure `xi`.
pub fn campbell_intensity(shape: &ShapeSpec, xi: f64, cfg: &CampbellConfig) -> Result<CampbellEstimate> {
    let d = shape.dim();
    if cfg.reps == 0 || cfg.m_grid.len() < 2 || cfg.m_grid.windows(2).any(|w| !(w[1] > w[0])) || !(cfg.m_grid[0] > 0.0) {
        return contract("need reps >= 1 and an increasing positive mark grid with two or more points");
    }
    let rho = guard_margin(shape, cfg.tol);
    let (glo, ghi) = cfg.grid.bounding_box();
    let lo: Vec<f64> = glo.iter().map(|v| v + rho).collect();
    let hi: Vec<f64> = ghi.iter().map(|v| v - rho).collect();
    if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
        return contract(format!("grid too small: shape needs a margin of {rho} inside it"));
    }
    let inner = Window { lo, hi };
    let weight = WeightSpec::PowerMeasure { xi };
    let level = shape.xi_integral(xi, 1e-10)?;
    // 0.999 quantile of the marginal
    let u0 = (level / -(0.999f64).ln()).powf(1.0 / xi);
    let scn = Scenario {
        shape: shape.clone(),
        weight,
        lambda: 1.0,
        window: cfg.window.clone(),
        grid: cfg.grid.clone(),
        u0,
        max_halvings: cfg.max_halvings,
        reps: cfg.reps,
        seed: cfg.seed,
    };
    let sim = Simulator::new(&scn)?;
    let nodes = cfg.grid.nodes();
    let per_rep: Vec<(Vec<f64>, bool)> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|rep| -> Result<(Vec<f64>, bool)> {
            let f = sim.sample_field(rep)?;
            let mut rng = stream(cfg.seed, rep, OFFSET_LAYER);
            let x0: Vec<f64> = (0..d).map(|a| inner.lo[a] + open01(&mut rng) * (inner.hi[a] - inner.lo[a])).collect();
            let mut buf = vec![0.0; d];
            let mut m_star = f64::INFINITY;
            for (y, v) in nodes.iter().zip(&f.values) {
                for a in 0..d {
                    buf[a] = y[a] - x0[a];
                }
                let h = shape.value(&buf);
                if h > 0.0 {
                    m_star = m_star.min(v / h);
                }
            }
            let q: Vec<f64> = cfg.m_grid.iter().map(|m| if m_star < *m { 1.0 } else { 0.0 }).collect();
            Ok((q, f.exact))
        })
        .collect::<Result<_>>()?;
    let n = cfg.reps as f64;
    let k = cfg.m_grid.len();
    let mut counts = vec![0.0; k];
    let mut z = Vec::with_capacity(cfg.reps);
    for (q, _) in &per_rep {
        for j in 0..k {
            counts[j] += q[j];
        }
        z.push(grid_integral(q, &cfg.m_grid, xi).iter().sum::<f64>());
    }
    let not_dominated: Vec<f64> = counts.iter().map(|c| c / n).collect();
    let censored_reps = per_rep.iter().filter(|(_, e)| !e).count();
    let parts = grid_integral(&not_dominated, &cfg.m_grid, xi);
    let lambda_tilde: f64 = parts.iter().sum();
    let (_, var) = mean_var(&z);
    let std_error = (var / n).sqrt();
    let nu_weights = parts.iter().map(|p| if lambda_tilde > 0.0 { p / lambda_tilde } else { 0.0 }).collect();
    Ok(CampbellEstimate {
        lambda_tilde,
        std_error,
        ci: (lambda_tilde - 1.96 * std_error, lambda_tilde + 1.96 * std_error),
        m_grid: cfg.m_grid.clone(),
        not_dominated,
        nu_weights,
        inner,
        censored_reps,
    })
}
