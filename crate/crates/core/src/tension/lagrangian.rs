//! Energies E, I and the 4-form term of general Lagrangians ∫|Δu|² + u*Ω.

use serde::{Deserialize, Serialize};

use super::{check_manifold_valued, Variant};
use crate::error::{Error, Result};
use crate::grid4::{gradient, integrate, laplacian, Field, Region};
use crate::manifold::TargetManifold;

/// E(u) = ¼∫|Δu|² or I(u) = ¼∫|PΔu|² over the defined nodes.
pub fn lagrangian_energy(u: &Field, manifold: &TargetManifold, variant: Variant) -> Result<f64> {
    check_manifold_valued(u, manifold)?;
    let k = manifold.ambient_dim();
    let lap = laplacian(u)?;
    let density = u.zip_map(&lap, 1, |_, y, l, out| {
        out[0] = match variant {
            Variant::Extrinsic => l.iter().map(|v| v * v).sum(),
            Variant::Intrinsic => {
                let mut n = [0.0; 16];
                manifold.normal_into(y, &mut n[..k]);
                let ln: f64 = (0..k).map(|c| n[c] * l[c]).sum();
                (0..k).map(|c| (l[c] - ln * n[c]).powi(2)).sum()
            }
        };
    });
    Ok(0.25 * integrate(&density, &Region::Whole)?)
}

const PERMS: [([usize; 4], f64); 24] = [
    ([0, 1, 2, 3], 1.0), ([0, 1, 3, 2], -1.0), ([0, 2, 1, 3], -1.0), ([0, 2, 3, 1], 1.0),
    ([0, 3, 1, 2], 1.0), ([0, 3, 2, 1], -1.0), ([1, 0, 2, 3], -1.0), ([1, 0, 3, 2], 1.0),
    ([1, 2, 0, 3], 1.0), ([1, 2, 3, 0], -1.0), ([1, 3, 0, 2], -1.0), ([1, 3, 2, 0], 1.0),
    ([2, 0, 1, 3], 1.0), ([2, 0, 3, 1], -1.0), ([2, 1, 0, 3], -1.0), ([2, 1, 3, 0], 1.0),
    ([2, 3, 0, 1], 1.0), ([2, 3, 1, 0], -1.0), ([3, 0, 1, 2], -1.0), ([3, 0, 2, 1], 1.0),
    ([3, 1, 0, 2], 1.0), ([3, 1, 2, 0], -1.0), ([3, 2, 0, 1], -1.0), ([3, 2, 1, 0], 1.0),
];

/// A 4-form Ω = Σ ω_abcd(y) dy^a∧dy^b∧dy^c∧dy^d on R^k whose coefficients are
/// affine in y: ω(y) = ω⁰ + Σ_e y_e ω^e. Both arrays are fully antisymmetric.
/// Constant forms are closed; the linear part gives a constant dΩ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourForm {
    k: usize,
    /// k⁴ entries, ((a*k+b)*k+c)*k+d.
    constant: Vec<f64>,
    /// k⁵ entries, e*k⁴ + ((a*k+b)*k+c)*k+d.
    linear: Vec<f64>,
}

impl FourForm {
    pub fn zero(k: usize) -> Self {
        Self { k, constant: vec![0.0; k.pow(4)], linear: vec![0.0; k.pow(5)] }
    }

    pub fn ambient_dim(&self) -> usize {
        self.k
    }

    fn flat(&self, i: [usize; 4]) -> usize {
        ((i[0] * self.k + i[1]) * self.k + i[2]) * self.k + i[3]
    }

    fn check_indices(&self, i: [usize; 4]) -> Result<()> {
        let distinct = (0..4).all(|a| (a + 1..4).all(|b| i[a] != i[b]));
        if !distinct || i.iter().any(|&v| v >= self.k) {
            return Err(Error::ConfigInvalid(format!("bad 4-form indices {i:?} for k = {}", self.k)));
        }
        Ok(())
    }

    fn scatter(target: &mut [f64], k: usize, offset: usize, i: [usize; 4], coef: f64) {
        for (p, sign) in PERMS {
            let j = [i[p[0]], i[p[1]], i[p[2]], i[p[3]]];
            target[offset + ((j[0] * k + j[1]) * k + j[2]) * k + j[3]] += sign * coef;
        }
    }

    /// Adds coef · dy^a∧dy^b∧dy^c∧dy^d.
    pub fn with_term(mut self, indices: [usize; 4], coef: f64) -> Result<Self> {
        self.check_indices(indices)?;
        let k = self.k;
        Self::scatter(&mut self.constant, k, 0, indices, coef);
        Ok(self)
    }

    /// Adds coef · y_e dy^a∧dy^b∧dy^c∧dy^d.
    pub fn with_linear_term(mut self, e: usize, indices: [usize; 4], coef: f64) -> Result<Self> {
        self.check_indices(indices)?;
        if e >= self.k {
            return Err(Error::ConfigInvalid(format!("variable index {e} out of range")));
        }
        let k = self.k;
        Self::scatter(&mut self.linear, k, e * k.pow(4), indices, coef);
        Ok(self)
    }

    pub fn coefficient(&self, indices: [usize; 4]) -> f64 {
        self.constant[self.flat(indices)]
    }

    pub fn linear_coefficient(&self, e: usize, indices: [usize; 4]) -> f64 {
        self.linear[e * self.k.pow(4) + self.flat(indices)]
    }

    /// Exact antisymmetry of both coefficient arrays under every transposition.
    pub fn is_antisymmetric(&self) -> bool {
        let k = self.k;
        let k4 = k.pow(4);
        let arrays = std::iter::once(&self.constant[..]).chain(self.linear.chunks(k4));
        let mut ok = true;
        for arr in arrays {
            for flat in 0..k4 {
                let i = [flat / (k * k * k), (flat / (k * k)) % k, (flat / k) % k, flat % k];
                for (a, b) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
                    let mut j = i;
                    j.swap(a, b);
                    ok &= arr[flat] == -arr[self.flat(j)];
                }
            }
        }
        ok
    }

    /// Σ arr_abcd v0_a v1_b v2_c v3_d for one k⁴ block.
    fn contract(&self, arr: &[f64], v: [&[f64]; 4]) -> f64 {
        let k = self.k;
        let mut total = 0.0;
        for a in 0..k {
            if v[0][a] == 0.0 {
                continue;
            }
            let mut sa = 0.0;
            for b in 0..k {
                let mut sb = 0.0;
                for c in 0..k {
                    let base = ((a * k + b) * k + c) * k;
                    let sc: f64 = (0..k).map(|d| arr[base + d] * v[3][d]).sum();
                    sb += sc * v[2][c];
                }
                sa += sb * v[1][b];
            }
            total += sa * v[0][a];
        }
        total
    }

    /// Ω_y(v0, v1, v2, v3).
    pub fn eval(&self, y: &[f64], v: [&[f64]; 4]) -> f64 {
        let k4 = self.k.pow(4);
        let mut s = self.contract(&self.constant, v);
        for (e, ye) in y.iter().enumerate() {
            if *ye != 0.0 {
                s += ye * self.contract(&self.linear[e * k4..(e + 1) * k4], v);
            }
        }
        s
    }

    /// dΩ(v0, …, v4) = Σ_j (−1)^j (∂_{v_j} ω)(v0, …, v̂_j, …, v4).
    ///
    /// The arguments are put in a canonical order first and the sign of that
    /// permutation applied, so the result is exactly alternating in floating
    /// point: swapping two arguments negates it bit for bit, and a repeated
    /// argument gives exactly 0.
    pub fn exterior_derivative(&self, v: [&[f64]; 5]) -> f64 {
        let mut order = [0usize, 1, 2, 3, 4];
        let lex = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        };
        let mut negate = false;
        for i in 1..5 {
            let mut j = i;
            while j > 0 && lex(v[order[j - 1]], v[order[j]]).is_gt() {
                order.swap(j - 1, j);
                negate = !negate;
                j -= 1;
            }
        }
        if order.windows(2).any(|w| lex(v[w[0]], v[w[1]]).is_eq()) {
            return 0.0;
        }
        let sorted = order.map(|i| v[i]);
        let value = self.exterior_derivative_ordered(sorted);
        if negate {
            -value
        } else {
            value
        }
    }

    fn exterior_derivative_ordered(&self, v: [&[f64]; 5]) -> f64 {
        let k4 = self.k.pow(4);
        let mut total = 0.0;
        for j in 0..5 {
            let rest: Vec<&[f64]> = (0..5).filter(|&m| m != j).map(|m| v[m]).collect();
            let rest = [rest[0], rest[1], rest[2], rest[3]];
            let mut s = 0.0;
            for e in 0..self.k {
                if v[j][e] != 0.0 {
                    s += v[j][e] * self.contract(&self.linear[e * k4..(e + 1) * k4], rest);
                }
            }
            total += if j % 2 == 0 { s } else { -s };
        }
        total
    }

    /// H with dΩ(U, v0, v1, v2, v3) = U_i H^i(v0, v1, v2, v3), written into `out`.
    pub fn hamiltonian_into(&self, v: [&[f64]; 4], out: &mut [f64]) {
        let mut e = vec![0.0; self.k];
        for i in 0..self.k {
            e.fill(0.0);
            e[i] = 1.0;
            out[i] = self.exterior_derivative([&e, v[0], v[1], v[2], v[3]]);
        }
    }
}

/// H(∂₁u, ∂₂u, ∂₃u, ∂₄u) at every node.
pub fn hamiltonian_term(u: &Field, omega: &FourForm) -> Result<Field> {
    let k = omega.ambient_dim();
    if u.components() != k {
        return Err(Error::ConfigInvalid(format!(
            "4-form on R^{k} applied to a map with {} components",
            u.components()
        )));
    }
    let du = gradient(u)?;
    Ok(du.map(k, |_, d, out| {
        let cols: Vec<Vec<f64>> = (0..4).map(|i| (0..k).map(|c| d[c * 4 + i]).collect()).collect();
        omega.hamiltonian_into([&cols[0], &cols[1], &cols[2], &cols[3]], out);
    }))
}
