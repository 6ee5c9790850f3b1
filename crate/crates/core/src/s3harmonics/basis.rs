use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::poly::{eval_monomials, grad_monomials, laplacian_matrix, monomials};
use crate::error::{Error, Result};
use crate::grid4::S3Quadrature;

pub const MAX_DEGREE: usize = 12;

#[derive(Debug, Clone)]
struct DegreeBlock {
    monomials: Vec<[usize; 4]>,
    /// Row-major `(l+1)² × monomials.len()` coefficient matrix.
    coeffs: Vec<f64>,
    /// Euclidean Laplacian of each mode in degree l−2 monomials.
    lap_coeffs: Vec<f64>,
}

/// Orthonormal real spherical harmonics on S³ up to degree `l_max`, stored as
/// harmonic homogeneous polynomials.
#[derive(Debug, Clone)]
pub struct SphericalHarmonicBasis {
    l_max: usize,
    blocks: Vec<DegreeBlock>,
}

/// One row of the basis table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeSummary {
    pub l: usize,
    pub eigenvalue: f64,
    pub multiplicity: usize,
    /// L²(S³) norm of the Euclidean Laplacian of the degree-l polynomials,
    /// i.e. of Δ_S φ + l(l+2)φ.
    pub eigen_residual: f64,
    /// Max deviation of the Gram matrix from the identity.
    pub orthonormality_defect: f64,
}

pub fn eigenvalue(l: usize) -> f64 {
    0.0 - (l * (l + 2)) as f64
}

pub fn multiplicity(l: usize) -> usize {
    (l + 1) * (l + 1)
}

pub fn build_basis(l_max: usize) -> Result<SphericalHarmonicBasis> {
    build_basis_with(l_max, &S3Quadrature::default())
}

/// Builds the basis, orthonormalising under `quad`.
///
/// For each degree, every monomial is projected onto the kernel of the
/// Laplacian and the projections are Gram–Schmidt orthonormalised in monomial
/// order, so low-index modes are aligned with coordinate monomials
/// (the degree-one modes are x₁, …, x₄ up to normalisation).
pub fn build_basis_with(l_max: usize, quad: &S3Quadrature) -> Result<SphericalHarmonicBasis> {
    if l_max > MAX_DEGREE {
        return Err(Error::DegreeTooHigh(l_max));
    }
    let mut blocks = Vec::with_capacity(l_max + 1);
    for l in 0..=l_max {
        let mons = monomials(l);
        let nm = mons.len();
        let kernel = harmonic_kernel(l, nm);
        // sqrt(w)-weighted monomial values at the nodes, times the kernel projector
        let nq = quad.len();
        let mut mvals = DMatrix::zeros(nq, nm);
        for (q, (x, w)) in quad.points().iter().zip(quad.weights()).enumerate() {
            let sw = w.sqrt();
            for (j, v) in eval_monomials(&mons, l, x).into_iter().enumerate() {
                mvals[(q, j)] = sw * v;
            }
        }
        let projector = &kernel * kernel.transpose();
        let sampled = &mvals * &projector;
        let target = multiplicity(l);
        let mut accepted: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(target);
        for j in 0..nm {
            if accepted.len() == target {
                break;
            }
            let mut vals: Vec<f64> = sampled.column(j).iter().copied().collect();
            let mut coef: Vec<f64> = projector.column(j).iter().copied().collect();
            let start = dot(&vals, &vals).sqrt();
            if start < 1e-10 {
                continue;
            }
            for _ in 0..2 {
                for (qv, qc) in &accepted {
                    let d = dot(&vals, qv);
                    axpy(-d, qv, &mut vals);
                    axpy(-d, qc, &mut coef);
                }
            }
            let norm = dot(&vals, &vals).sqrt();
            if norm < 1e-8 * start {
                continue;
            }
            vals.iter_mut().for_each(|v| *v /= norm);
            coef.iter_mut().for_each(|v| *v /= norm);
            accepted.push((vals, coef));
        }
        debug_assert_eq!(accepted.len(), target);
        let coeffs: Vec<f64> = accepted.into_iter().flat_map(|(_, c)| c).collect();
        let (rows, cols, lap) = laplacian_matrix(l);
        let mut lap_coeffs = vec![0.0; target * rows];
        for k in 0..target {
            for i in 0..rows {
                lap_coeffs[k * rows + i] = (0..cols).map(|j| lap[i * cols + j] * coeffs[k * nm + j]).sum();
            }
        }
        blocks.push(DegreeBlock { monomials: mons, coeffs, lap_coeffs });
    }
    Ok(SphericalHarmonicBasis { l_max, blocks })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthonormal basis (columns) of the kernel of the degree-l Laplacian in
/// monomial coefficient space.
fn harmonic_kernel(l: usize, nm: usize) -> DMatrix<f64> {
    let (rows, cols, mat) = laplacian_matrix(l);
    if rows == 0 {
        return DMatrix::identity(nm, nm);
    }
    let a = DMatrix::from_row_slice(rows, cols, &mat);
    let ata = a.transpose() * &a;
    let eig = SymmetricEigen::new(ata);
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let keep = multiplicity(l);
    DMatrix::from_fn(cols, keep, |i, c| eig.eigenvectors[(i, order[c])])
}

impl SphericalHarmonicBasis {
    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Total number of modes, Σ (l+1)².
    pub fn len(&self) -> usize {
        (0..=self.l_max).map(multiplicity).sum()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// (l, k) label of every mode in evaluation order.
    pub fn modes(&self) -> Vec<(usize, usize)> {
        (0..=self.l_max).flat_map(|l| (0..multiplicity(l)).map(move |k| (l, k))).collect()
    }

    /// Offset of degree `l` in evaluation order.
    pub fn offset(&self, l: usize) -> usize {
        (0..l).map(multiplicity).sum()
    }

    /// Values of every mode at the unit vector `x`.
    pub fn eval(&self, x: &[f64; 4]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (l, b) in self.blocks.iter().enumerate() {
            let mv = eval_monomials(&b.monomials, l, x);
            let nm = mv.len();
            for k in 0..multiplicity(l) {
                out.push(b.coeffs[k * nm..(k + 1) * nm].iter().zip(&mv).map(|(c, v)| c * v).sum());
            }
        }
        out
    }

    /// Tangential gradients ∇_S φ at the unit vector `x`, in ambient
    /// coordinates: ∇p − l p x for the degree-l polynomial p.
    pub fn eval_gradient(&self, x: &[f64; 4]) -> Vec<[f64; 4]> {
        let mut out = Vec::with_capacity(self.len());
        for (l, b) in self.blocks.iter().enumerate() {
            let mv = eval_monomials(&b.monomials, l, x);
            let mg = grad_monomials(&b.monomials, l, x);
            let nm = mv.len();
            for k in 0..multiplicity(l) {
                let c = &b.coeffs[k * nm..(k + 1) * nm];
                let p: f64 = c.iter().zip(&mv).map(|(c, v)| c * v).sum();
                let g: [f64; 4] = std::array::from_fn(|a| {
                    c.iter().zip(&mg).map(|(c, g)| c * g[a]).sum::<f64>() - l as f64 * p * x[a]
                });
                out.push(g);
            }
        }
        out
    }

    /// Euclidean Laplacian of the mode polynomials at `x`; zero for exact
    /// harmonics.
    fn eval_euclidean_laplacian(&self, x: &[f64; 4]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (l, b) in self.blocks.iter().enumerate() {
            if l < 2 {
                out.extend(std::iter::repeat_n(0.0, multiplicity(l)));
                continue;
            }
            let mv = eval_monomials(&monomials(l - 2), l - 2, x);
            let nl = mv.len();
            for k in 0..multiplicity(l) {
                out.push(b.lap_coeffs[k * nl..(k + 1) * nl].iter().zip(&mv).map(|(c, v)| c * v).sum());
            }
        }
        out
    }

    /// Per-degree eigenvalue, multiplicity and numerical checks under `quad`.
    pub fn summary(&self, quad: &S3Quadrature) -> Vec<DegreeSummary> {
        let n = self.len();
        let nq = quad.len();
        let mut vals = DMatrix::zeros(nq, n);
        let mut resid = vec![0.0; n];
        for (q, (x, w)) in quad.points().iter().zip(quad.weights()).enumerate() {
            let sw = w.sqrt();
            for (i, v) in self.eval(x).into_iter().enumerate() {
                vals[(q, i)] = sw * v;
            }
            for (i, v) in self.eval_euclidean_laplacian(x).into_iter().enumerate() {
                resid[i] += w * v * v;
            }
        }
        let gram = vals.transpose() * &vals;
        (0..=self.l_max)
            .map(|l| {
                let off = self.offset(l);
                let mult = multiplicity(l);
                let mut defect: f64 = 0.0;
                for i in off..off + mult {
                    for j in 0..n {
                        let target = if i == j { 1.0 } else { 0.0 };
                        defect = defect.max((gram[(i, j)] - target).abs());
                    }
                }
                let eigen_residual = (off..off + mult).map(|i| resid[i]).fold(0.0, f64::max).sqrt();
                DegreeSummary {
                    l,
                    eigenvalue: eigenvalue(l),
                    multiplicity: mult,
                    eigen_residual,
                    orthonormality_defect: defect,
                }
            })
            .collect()
    }
}

/// One eigenvalue cluster of the Laplace–Beltrami operator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumCluster {
    /// Mean of the clustered eigenvalues.
    pub eigenvalue: f64,
    pub multiplicity: usize,
    /// Largest distance of a member from the mean.
    pub spread: f64,
}

/// Eigenvalues of Δ_S on the restrictions to S³ of all polynomials of degree
/// ≤ `l_max`, from the Galerkin pencil (−∫∇_Sp·∇_Sq, ∫pq) under `quad`.
/// No harmonic structure is assumed: the trial space is spanned by the
/// monomials of degree l_max and l_max − 1. Eigenvalues closer than `tol`
/// are grouped, largest first.
pub fn galerkin_spectrum(l_max: usize, quad: &S3Quadrature, tol: f64) -> Result<Vec<SpectrumCluster>> {
    if l_max > MAX_DEGREE {
        return Err(Error::DegreeTooHigh(l_max));
    }
    let degrees: Vec<usize> = if l_max == 0 { vec![0] } else { vec![l_max, l_max - 1] };
    let lists: Vec<Vec<[usize; 4]>> = degrees.iter().map(|&d| monomials(d)).collect();
    let n: usize = lists.iter().map(Vec::len).sum();
    let mut mass = DMatrix::<f64>::zeros(n, n);
    let mut stiff = DMatrix::<f64>::zeros(n, n);
    let mut vals = vec![0.0; n];
    let mut grads = vec![[0.0; 4]; n];
    for (x, w) in quad.points().iter().zip(quad.weights()) {
        let mut i = 0;
        for (list, &d) in lists.iter().zip(&degrees) {
            let v = eval_monomials(list, d, x);
            let g = grad_monomials(list, d, x);
            for (p, gp) in v.into_iter().zip(g) {
                vals[i] = p;
                grads[i] = std::array::from_fn(|a| gp[a] - d as f64 * p * x[a]);
                i += 1;
            }
        }
        for a in 0..n {
            for b in a..n {
                let gg: f64 = (0..4).map(|c| grads[a][c] * grads[b][c]).sum();
                mass[(a, b)] += w * vals[a] * vals[b];
                stiff[(a, b)] -= w * gg;
            }
        }
    }
    mass.fill_lower_triangle_with_upper_triangle();
    stiff.fill_lower_triangle_with_upper_triangle();
    let chol = mass
        .cholesky()
        .ok_or_else(|| Error::GridTooCoarse("quadrature too coarse for the Galerkin mass matrix".into()))?;
    let l = chol.l();
    let linv_a = l
        .solve_lower_triangular(&stiff)
        .ok_or_else(|| Error::GridTooCoarse("singular mass factor".into()))?;
    let reduced = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| Error::GridTooCoarse("singular mass factor".into()))?;
    let sym = 0.5 * (&reduced + reduced.transpose());
    let mut eig: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for e in eig {
        match clusters.last_mut() {
            Some(c) if (c[c.len() - 1] - e).abs() <= tol => c.push(e),
            _ => clusters.push(vec![e]),
        }
    }
    Ok(clusters
        .into_iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / c.len() as f64;
            let spread = c.iter().map(|e| (e - mean).abs()).fold(0.0, f64::max);
            SpectrumCluster { eigenvalue: mean, multiplicity: c.len(), spread }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_eigenvalues() {
        let b = build_basis(3).unwrap();
        assert_eq!(b.len(), 1 + 4 + 9 + 16);
        assert_eq!(eigenvalue(1), -3.0);
        assert_eq!(eigenvalue(2), -8.0);
        assert_eq!(multiplicity(2), 9);
        let s = b.summary(&S3Quadrature::default());
        for row in &s {
            assert!(row.orthonormality_defect < 1e-10, "{row:?}");
            assert!(row.eigen_residual < 1e-8, "{row:?}");
        }
    }

    #[test]
    fn degree_one_modes_are_coordinates() {
        let b = build_basis(1).unwrap();
        let x = [0.5, -0.5, 0.5, 0.5];
        let v = b.eval(&x);
        let norm = (std::f64::consts::PI.powi(2) / 2.0).sqrt();
        for a in 0..4 {
            assert!((v[1 + a] - x[a] / norm).abs() < 1e-12);
        }
    }

    #[test]
    fn galerkin_spectrum_of_the_cubic_space() {
        let spectrum = galerkin_spectrum(3, &S3Quadrature::default(), 1e-6).unwrap();
        let got: Vec<(f64, usize)> = spectrum.iter().map(|c| (c.eigenvalue, c.multiplicity)).collect();
        assert_eq!(got.len(), 4, "{spectrum:?}");
        for (l, (e, m)) in got.into_iter().enumerate() {
            assert!((e - eigenvalue(l)).abs() < 1e-9, "{spectrum:?}");
            assert_eq!(m, multiplicity(l));
        }
    }

    #[test]
    fn rejects_high_degree() {
        assert!(matches!(build_basis(13), Err(Error::DegreeTooHigh(13))));
    }
}
