//! Biharmonic map heat flow u_t = −T_e(u) with a frozen margin.
//!
//! Each step solves (I + dt·A) δ = −dt·T_e(uⁿ) for the increment on the free
//! nodes, where A = LᵀL and L is the grid Laplacian from free nodes to the
//! nodes where Δ_h u is defined. On free nodes A is the grid bilaplacian, so
//! the leading term is implicit and the rest of T_e explicit. The result is
//! projected back onto N.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid4::{integrate, laplacian, BallGrid4, Field, Region};
use crate::manifold::TargetManifold;
use crate::tension::{check_manifold_valued, manifold_distance, tension_extrinsic};

const CG_TOLERANCE: f64 = 1e-12;
const CG_MAX_ITERATIONS: usize = 2000;
/// Largest allowed relative energy increase in one step.
pub const DIVERGENCE_FACTOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    /// Time step; `None` means 0.1·h⁴.
    pub dt: Option<f64>,
    /// Steps must satisfy dt ≤ c_cfl·h⁴.
    pub c_cfl: f64,
    /// A snapshot (u and ∂u/∂t) is kept every this many steps.
    pub snapshot_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { dt: None, c_cfl: 1.0, snapshot_every: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct FlowSnapshot {
    pub step: usize,
    pub t: f64,
    pub u: Field,
    /// ∂u/∂t at this time: −T_e(u₀) for the initial snapshot, the backward
    /// difference of the last step otherwise.
    pub velocity: Field,
}

/// An f-approximate biharmonic map taken from the flow, f = −∂u/∂t.
#[derive(Debug, Clone)]
pub struct TimeSlice {
    pub step: usize,
    pub t: f64,
    pub u: Field,
    pub f: Field,
}

#[derive(Debug, Clone)]
pub struct FlowState {
    manifold: TargetManifold,
    config: FlowConfig,
    pub t: f64,
    pub step: usize,
    pub u: Field,
    /// (t, ∫|Δu|²)
    pub energy_trace: Vec<(f64, f64)>,
    /// (t, ∫|∂u/∂t|²)
    pub dissipation_trace: Vec<(f64, f64)>,
    pub snapshots: Vec<FlowSnapshot>,
    free: Vec<usize>,
    lap_nodes: Vec<usize>,
}

/// ∫|Δ_h u|² over the nodes where it is defined.
pub fn bienergy(u: &Field) -> Result<f64> {
    let lap = laplacian(u)?;
    integrate(&lap.map(1, |_, l, o| o[0] = l.iter().map(|v| v * v).sum()), &Region::Whole)
}

fn field_sq_integral(v: &Field) -> f64 {
    integrate(&v.map(1, |_, a, o| o[0] = a.iter().map(|x| x * x).sum()), &Region::Whole).unwrap_or(0.0)
}

impl FlowState {
    pub fn new(u0: Field, manifold: TargetManifold, config: FlowConfig) -> Result<Self> {
        if config.c_cfl <= 0.0 || config.snapshot_every == 0 {
            return Err(Error::ConfigInvalid("c_cfl and snapshot_every must be positive".into()));
        }
        check_manifold_valued(&u0, &manifold)?;
        let te = tension_extrinsic(&u0, &manifold)?.field;
        let grid = u0.grid().clone();
        let free: Vec<usize> = (0..grid.node_count()).filter(|&i| te.is_defined(i)).collect();
        let lap = laplacian(&u0)?;
        let lap_nodes: Vec<usize> = (0..grid.node_count()).filter(|&i| lap.is_defined(i)).collect();
        let velocity = fill_missing(&te.scale(-1.0), &u0);
        let e0 = bienergy(&u0)?;
        let d0 = field_sq_integral(&velocity);
        Ok(Self {
            manifold,
            config,
            t: 0.0,
            step: 0,
            energy_trace: vec![(0.0, e0)],
            dissipation_trace: vec![(0.0, d0)],
            snapshots: vec![FlowSnapshot { step: 0, t: 0.0, u: u0.clone(), velocity }],
            u: u0,
            free,
            lap_nodes,
        })
    }

    pub fn manifold(&self) -> &TargetManifold {
        &self.manifold
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn grid(&self) -> &Arc<BallGrid4> {
        self.u.grid()
    }

    pub fn free_node_count(&self) -> usize {
        self.free.len()
    }

    pub fn default_dt(&self) -> f64 {
        self.config.dt.unwrap_or(0.1 * self.grid().h().powi(4))
    }

    /// Advances by `dt` and appends to the traces.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let h4 = self.grid().h().powi(4);
        if !(dt > 0.0) || dt > self.config.c_cfl * h4 * (1.0 + 1e-12) {
            return Err(Error::ConfigInvalid(format!(
                "dt = {dt:e} exceeds c_cfl·h⁴ = {:e}",
                self.config.c_cfl * h4
            )));
        }
        let k = self.u.components();
        let te = tension_extrinsic(&self.u, &self.manifold)?.field;
        let mut next = self.u.clone();
        let mut proj = vec![0.0; k];
        let mut b = vec![0.0; self.free.len()];
        let mut x = vec![0.0; self.free.len()];
        for c in 0..k {
            for (slot, &idx) in b.iter_mut().zip(&self.free) {
                *slot = -dt * te.at(idx)[c];
            }
            x.fill(0.0);
            self.solve(dt, &b, &mut x)?;
            for (&idx, dv) in self.free.iter().zip(&x) {
                next.at_mut(idx)[c] += dv;
            }
        }
        for &idx in &self.free {
            let y = next.at(idx).to_vec();
            self.manifold.nearest_point_into(&y, &mut proj)?;
            next.at_mut(idx).copy_from_slice(&proj);
        }
        let velocity = next.sub(&self.u).scale(1.0 / dt);
        let energy = bienergy(&next)?;
        let before = self.energy_trace.last().map(|e| e.1).unwrap_or(energy);
        if energy > before * (1.0 + DIVERGENCE_FACTOR) || !energy.is_finite() {
            return Err(Error::StepDiverged { before, after: energy });
        }
        self.t += dt;
        self.step += 1;
        self.energy_trace.push((self.t, energy));
        self.dissipation_trace.push((self.t, field_sq_integral(&velocity)));
        self.u = next;
        if self.step % self.config.snapshot_every == 0 {
            self.snapshots.push(FlowSnapshot { step: self.step, t: self.t, u: self.u.clone(), velocity });
        }
        Ok(())
    }

    /// `steps` steps of the default size.
    pub fn run(&mut self, steps: usize) -> Result<()> {
        let dt = self.default_dt();
        for _ in 0..steps {
            self.step(dt)?;
        }
        Ok(())
    }

    /// 2∫₀ᵗ∫|∂u/∂t|² + ∫|Δu(t)|² − ∫|Δu₀|², with the time integral by the
    /// trapezoid rule over the dissipation trace.
    pub fn energy_identity_defect(&self) -> f64 {
        let d = &self.dissipation_trace;
        let dissipated: f64 = d.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
        let e0 = self.energy_trace.first().map(|e| e.1).unwrap_or(0.0);
        let e = self.energy_trace.last().map(|e| e.1).unwrap_or(0.0);
        2.0 * dissipated + e - e0
    }

    pub fn manifold_distance(&self) -> f64 {
        manifold_distance(&self.u, &self.manifold)
    }

    /// The snapshot with the smallest ∫|∂u/∂t|².
    pub fn select_time_slice(&self) -> Result<TimeSlice> {
        let trace: Vec<f64> = self.snapshots.iter().map(|s| field_sq_integral(&s.velocity)).collect();
        let i = argmin_dissipation(&trace)?;
        let s = &self.snapshots[i];
        Ok(TimeSlice { step: s.step, t: s.t, u: s.u.clone(), f: s.velocity.scale(-1.0) })
    }

    /// Conjugate gradients for (I + dt·LᵀL) x = b on the free nodes.
    fn solve(&self, dt: f64, b: &[f64], x: &mut [f64]) -> Result<()> {
        let grid = self.grid().clone();
        let nodes = grid.node_count();
        let st = grid.strides();
        let inv_h2 = 1.0 / (grid.h() * grid.h());
        let mut ext = vec![0.0; nodes];
        let mut w = vec![0.0; nodes];
        let mut apply = |v: &[f64], out: &mut [f64]| {
            for (&idx, val) in self.free.iter().zip(v) {
                ext[idx] = *val;
            }
            for &idx in &self.lap_nodes {
                let mut acc = -8.0 * ext[idx];
                for s in st {
                    acc += ext[idx + s] + ext[idx - s];
                }
                w[idx] = acc * inv_h2;
            }
            for (o, (&idx, val)) in out.iter_mut().zip(self.free.iter().zip(v)) {
                let mut acc = -8.0 * w[idx];
                for s in st {
                    acc += w[idx + s] + w[idx - s];
                }
                *o = val + dt * acc * inv_h2;
            }
        };
        let n = b.len();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            x.fill(0.0);
            return Ok(());
        }
        let mut r = vec![0.0; n];
        apply(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        for _ in 0..CG_MAX_ITERATIONS {
            if rr.sqrt() <= CG_TOLERANCE * bnorm {
                return Ok(());
            }
            apply(&p, &mut ap);
            let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rr_new: f64 = r.iter().map(|v| v * v).sum();
            for i in 0..n {
                p[i] = r[i] + rr_new / rr * p[i];
            }
            rr = rr_new;
        }
        Err(Error::SolverDiverged { iterations: CG_MAX_ITERATIONS, residual: rr.sqrt() / bnorm })
    }
}

/// Zero where `u` is defined but `v` is not; `v` elsewhere.
fn fill_missing(v: &Field, u: &Field) -> Field {
    let mut out = v.clone();
    for idx in 0..u.grid().node_count() {
        if u.is_defined(idx) && !v.is_defined(idx) {
            out.at_mut(idx).fill(0.0);
        }
    }
    out
}

/// Index of the smallest entry.
pub fn argmin_dissipation(trace: &[f64]) -> Result<usize> {
    trace
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or(Error::EmptyHistory)
}

/// Π(y₀ + ε g(x)) for a slowly varying trigonometric field g selected by
/// `variant`.
pub fn perturbed_constant(
    grid: &Arc<BallGrid4>,
    manifold: &TargetManifold,
    y0: &[f64],
    eps: f64,
    variant: usize,
) -> Result<Field> {
    let k = manifold.ambient_dim();
    let shift = variant as f64;
    let mut failure = None;
    let field = Field::from_fn(grid, k, |x, out| {
        let y: Vec<f64> = (0..k)
            .map(|c| {
                let a = 1.0 + 0.25 * (c as f64 + shift);
                let g = (a * x[c % 4] + 0.5 * shift * x[(c + 1) % 4] + 0.3 * c as f64).sin()
                    + 0.5 * (x[(c + 2) % 4] * (1.0 + 0.5 * shift)).cos();
                y0[c] + eps * g
            })
            .collect();
        if let Err(e) = manifold.nearest_point_into(&y, out) {
            failure = Some(e);
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(field),
    }
}
