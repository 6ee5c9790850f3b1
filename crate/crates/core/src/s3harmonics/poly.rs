//! Homogeneous polynomials in four variables, dense in the monomial basis.

/// Exponent tuples of all monomials of total degree `l`, in a fixed order.
pub fn monomials(l: usize) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for a in (0..=l).rev() {
        for b in (0..=l - a).rev() {
            for c in (0..=l - a - b).rev() {
                out.push([a, b, c, l - a - b - c]);
            }
        }
    }
    out
}

fn monomial_index(list: &[[usize; 4]], e: &[usize; 4]) -> usize {
    list.iter().position(|m| m == e).expect("monomial present")
}

/// Matrix of the Laplacian from degree-l to degree-(l−2) coefficients,
/// row-major (rows: degree l−2 monomials).
pub fn laplacian_matrix(l: usize) -> (usize, usize, Vec<f64>) {
    let src = monomials(l);
    if l < 2 {
        return (0, src.len(), Vec::new());
    }
    let dst = monomials(l - 2);
    let (rows, cols) = (dst.len(), src.len());
    let mut mat = vec![0.0; rows * cols];
    for (j, e) in src.iter().enumerate() {
        for a in 0..4 {
            if e[a] >= 2 {
                let mut t = *e;
                t[a] -= 2;
                let i = monomial_index(&dst, &t);
                mat[i * cols + j] += (e[a] * (e[a] - 1)) as f64;
            }
        }
    }
    (rows, cols, mat)
}

/// Powers x_a^0..=x_a^l for each axis.
fn powers(x: &[f64; 4], l: usize) -> [Vec<f64>; 4] {
    std::array::from_fn(|a| {
        let mut p = Vec::with_capacity(l + 1);
        let mut v = 1.0;
        for _ in 0..=l {
            p.push(v);
            v *= x[a];
        }
        p
    })
}

/// Values of every monomial of degree `l` at `x`.
pub fn eval_monomials(list: &[[usize; 4]], l: usize, x: &[f64; 4]) -> Vec<f64> {
    let p = powers(x, l);
    list.iter().map(|e| p[0][e[0]] * p[1][e[1]] * p[2][e[2]] * p[3][e[3]]).collect()
}

/// Euclidean gradients of every monomial at `x`, as `[∂₀, ∂₁, ∂₂, ∂₃]`.
pub fn grad_monomials(list: &[[usize; 4]], l: usize, x: &[f64; 4]) -> Vec<[f64; 4]> {
    let p = powers(x, l);
    list.iter()
        .map(|e| {
            std::array::from_fn(|a| {
                if e[a] == 0 {
                    return 0.0;
                }
                let mut v = e[a] as f64;
                for b in 0..4 {
                    v *= if b == a { p[b][e[b] - 1] } else { p[b][e[b]] };
                }
                v
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts() {
        for l in 0..8 {
            assert_eq!(monomials(l).len(), (l + 1) * (l + 2) * (l + 3) / 6);
        }
    }

    #[test]
    fn laplacian_of_r_squared_is_eight() {
        let list = monomials(2);
        let (rows, cols, m) = laplacian_matrix(2);
        assert_eq!(rows, 1);
        let mut coef = vec![0.0; cols];
        for a in 0..4 {
            let mut e = [0; 4];
            e[a] = 2;
            coef[monomial_index(&list, &e)] = 1.0;
        }
        let out: f64 = (0..cols).map(|j| m[j] * coef[j]).sum();
        assert_eq!(out, 8.0);
    }

    #[test]
    fn gradient_matches_difference() {
        let list = monomials(3);
        let x = [0.3, -0.2, 0.5, 0.7];
        let g = grad_monomials(&list, 3, &x);
        let h = 1e-6;
        for a in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let vp = eval_monomials(&list, 3, &xp);
            let vm = eval_monomials(&list, 3, &xm);
            for k in 0..list.len() {
                assert!(((vp[k] - vm[k]) / (2.0 * h) - g[k][a]).abs() < 1e-8);
            }
        }
    }
}
