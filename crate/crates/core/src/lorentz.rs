//! Decreasing rearrangement and Lorentz norms of sampled functions.
//!
//! Normalisation: ‖f‖_{p,q} = (∫₀^∞ (t^{1/p} f*(t))^q dt/t)^{1/q} and
//! ‖f‖_{p,∞} = sup_t t^{1/p} f*(t). With it ‖f‖_{p,p} = ‖f‖_p and
//! ‖χ_E‖_{p,q} = (p/q)^{1/q} |E|^{1/p}.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid4::{dist, hessian_norm, AnnulusField, Field, Region};

/// Nonnegative values with positive cell measures.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredSample {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl MeasuredSample {
    /// Takes absolute values; weights must be positive.
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if values.len() != weights.len() {
            return Err(Error::CellMismatch);
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::ConfigInvalid(format!("cell weight {w} is not positive")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InputMissing("non-finite sample value".into()));
        }
        Ok(Self { values: values.into_iter().map(f64::abs).collect(), weights })
    }

    /// Pointwise norm of `u` on the defined lattice nodes inside `region`,
    /// each carrying the cell volume h⁴.
    pub fn from_field(u: &Field, region: &Region) -> Result<Self> {
        let grid = u.grid().clone();
        let mut values = Vec::new();
        grid.for_each_node(|idx, x| {
            if u.is_defined(idx) && region.contains(&x) {
                values.push(u.at(idx).iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        });
        let w = grid.cell_volume();
        let n = values.len();
        Self::new(values, vec![w; n])
    }

    /// Pointwise norm on every quadrature node of an annulus grid.
    pub fn from_annulus(u: &AnnulusField) -> Result<Self> {
        let g = u.grid();
        let mut values = Vec::with_capacity(g.node_count());
        let mut weights = Vec::with_capacity(g.node_count());
        for j in 0..g.shell_count() {
            for q in 0..g.sphere().len() {
                values.push(u.at(j, q).iter().map(|v| v * v).sum::<f64>().sqrt());
                weights.push(g.weight(j, q));
            }
        }
        Self::new(values, weights)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// ‖f‖_p^p by direct quadrature.
    pub fn lp_power(&self, p: f64) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| w * v.powf(p)).sum()
    }
}

/// Step function f* = values[k] on [breakpoints[k−1], breakpoints[k]),
/// breakpoints[−1] = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Rearrangement {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl Rearrangement {
    /// Evaluates f*(t) (right-continuous; zero beyond the support).
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&b| b <= t);
        self.values.get(k).copied().unwrap_or(0.0)
    }

    /// |{f* > λ}|.
    pub fn distribution(&self, lambda: f64) -> f64 {
        let k = self.values.partition_point(|&v| v > lambda);
        if k == 0 {
            0.0
        } else {
            self.breakpoints[k - 1]
        }
    }
}

/// Sorts cells by decreasing value, merging equal values into one step.
pub fn rearrangement(s: &MeasuredSample) -> Result<Rearrangement> {
    if s.values.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut order: Vec<usize> = (0..s.values.len()).collect();
    order.sort_by(|&a, &b| s.values[b].total_cmp(&s.values[a]));
    let mut breakpoints = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut t = 0.0;
    for i in order {
        t += s.weights[i];
        let v = s.values[i];
        if values.last() == Some(&v) {
            *breakpoints.last_mut().unwrap() = t;
        } else {
            values.push(v);
            breakpoints.push(t);
        }
    }
    Ok(Rearrangement { breakpoints, values })
}

/// Second Lorentz exponent: finite q ≥ 1 or ∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LorentzQ {
    Finite(f64),
    Infinity,
}

impl LorentzQ {
    pub fn from_f64(q: f64) -> Self {
        if q.is_infinite() {
            LorentzQ::Infinity
        } else {
            LorentzQ::Finite(q)
        }
    }
}

/// ‖f‖_{p,q}, integrated exactly on the step function f*.
pub fn lorentz_norm(s: &MeasuredSample, p: f64, q: LorentzQ) -> Result<f64> {
    if !(p > 1.0) || matches!(q, LorentzQ::Finite(q) if !(q >= 1.0)) {
        let qv = match q {
            LorentzQ::Finite(q) => q,
            LorentzQ::Infinity => f64::INFINITY,
        };
        return Err(Error::BadExponents { p, q: qv });
    }
    let f = rearrangement(s)?;
    Ok(norm_of_rearrangement(&f, p, q))
}

fn norm_of_rearrangement(f: &Rearrangement, p: f64, q: LorentzQ) -> f64 {
    match q {
        LorentzQ::Infinity => f
            .breakpoints
            .iter()
            .zip(&f.values)
            .map(|(t, v)| t.powf(1.0 / p) * v)
            .fold(0.0, f64::max),
        LorentzQ::Finite(q) => {
            let e = q / p;
            let mut prev = 0.0f64;
            let mut acc = 0.0;
            for (t, v) in f.breakpoints.iter().zip(&f.values) {
                acc += v.powf(q) * (p / q) * (t.powf(e) - prev.powf(e));
                prev = *t;
            }
            acc.powf(1.0 / q)
        }
    }
}

/// (Σ f g w, ‖f‖_{2,1} ‖g‖_{2,∞}); the first never exceeds the second.
pub fn duality_check(f: &MeasuredSample, g: &MeasuredSample) -> Result<(f64, f64)> {
    if f.weights.len() != g.weights.len()
        || f.weights.iter().zip(&g.weights).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(b.abs()))
    {
        return Err(Error::CellMismatch);
    }
    let lhs = f.values.iter().zip(&g.values).zip(&f.weights).map(|((a, b), w)| a * b * w).sum();
    let rhs = lorentz_norm(f, 2.0, LorentzQ::Finite(1.0))? * lorentz_norm(g, 2.0, LorentzQ::Infinity)?;
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DyadicRow {
    pub rho: f64,
    pub lq_norm: f64,
    /// ρ^{2−4/q} ‖∇²u‖_{L^q(B_{2ρ}∖B_ρ)}, invariant under dilations.
    pub scale_invariant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DyadicWeakReport {
    pub q: f64,
    pub rows: Vec<DyadicRow>,
    /// Max of the scale-invariant column.
    pub eps_prime: f64,
    /// Weak-L² bound implied by the per-annulus L^q norms:
    /// sup_λ λ (Σ_ρ min(|A_ρ|, λ^{−q}‖∇²u‖^q_{L^q(A_ρ)}))^{1/2}.
    pub implied_bound: f64,
    /// ‖∇²u‖_{L^{2,∞}} over the union of the annuli, from the rearrangement.
    pub direct_weak_norm: f64,
}

/// Per-dyadic-annulus L^q norms of ∇²u around `center`, with ρ = r_in 2^k
/// and 2ρ ≤ r_out, and the weak-L² bound they imply through Chebyshev's
/// inequality on each annulus.
pub fn dyadic_weak_bound(u: &Field, center: [f64; 4], r_in: f64, r_out: f64, q: f64) -> Result<DyadicWeakReport> {
    if !(q > 2.0) {
        return Err(Error::BadExponents { p: 2.0, q });
    }
    let mut rhos = Vec::new();
    let mut rho = r_in;
    while 2.0 * rho <= r_out * (1.0 + 1e-12) {
        rhos.push(rho);
        rho *= 2.0;
    }
    if rhos.len() < 2 {
        return Err(Error::TooFewAnnuli { needed: 2, got: rhos.len() });
    }
    let hn = hessian_norm(u)?;
    let grid = hn.grid().clone();
    let cell = grid.cell_volume();
    let mut lq_pow = vec![0.0; rhos.len()];
    let mut measure = vec![0.0; rhos.len()];
    let mut union_vals = Vec::new();
    grid.for_each_node(|idx, x| {
        if !hn.is_defined(idx) {
            return;
        }
        let d = dist(&x, &center);
        if d < r_in || d >= *rhos.last().unwrap() * 2.0 {
            return;
        }
        let k = ((d / r_in).log2().floor() as usize).min(rhos.len() - 1);
        let v = hn.at(idx)[0];
        lq_pow[k] += v.powf(q) * cell;
        measure[k] += cell;
        union_vals.push(v);
    });
    if union_vals.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let rows: Vec<DyadicRow> = rhos
        .iter()
        .zip(&lq_pow)
        .map(|(rho, p)| {
            let lq_norm = p.powf(1.0 / q);
            DyadicRow { rho: *rho, lq_norm, scale_invariant: rho.powf(2.0 - 4.0 / q) * lq_norm }
        })
        .collect();
    let eps_prime = rows.iter().map(|r| r.scale_invariant).fold(0.0, f64::max);
    // the bound λ² Σ min(a, b λ^{−q}) is maximal at one of the kinks λ = (b/a)^{1/q}
    let bound_at = |lambda: f64| -> f64 {
        let s: f64 = measure.iter().zip(&lq_pow).map(|(a, b)| a.min(b * lambda.powf(-q))).sum();
        lambda * s.sqrt()
    };
    let implied_bound = measure
        .iter()
        .zip(&lq_pow)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| bound_at((b / a).powf(1.0 / q)))
        .fold(0.0, f64::max);
    let n = union_vals.len();
    let sample = MeasuredSample::new(union_vals, vec![cell; n])?;
    let direct_weak_norm = lorentz_norm(&sample, 2.0, LorentzQ::Infinity)?;
    Ok(DyadicWeakReport { q, rows, eps_prime, implied_bound, direct_weak_norm })
}
