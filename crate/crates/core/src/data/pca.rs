use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor2;

/// Mean and leading principal axes of a data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// d × k, orthonormal columns in descending variance order.
    pub components: Tensor2,
    /// Variance along each kept axis.
    pub explained_variance: Vec<f64>,
    /// Sum of all d eigenvalues.
    pub total_variance: f64,
}

pub fn pca_fit(data: &Tensor2, components: usize) -> Result<Pca> {
    let (n, d) = data.shape();
    if components == 0 || components > d {
        return Err(Error::Config(format!(
            "cannot keep {components} principal components of {d}-dimensional data"
        )));
    }
    if n <= components {
        return Err(Error::Config(format!(
            "PCA with {components} components needs more than {n} samples"
        )));
    }
    let mean: Vec<f64> = (0..d)
        .map(|c| (0..n).map(|r| data[(r, c)]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in 0..n {
        let row = data.row(r);
        for i in 0..d {
            let a = row[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += a * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut comp = Tensor2::zeros(d, components);
    for (k, &src) in order.iter().take(components).enumerate() {
        // Sign convention: largest-magnitude entry positive.
        let col = eig.eigenvectors.column(src);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            comp.row_mut(i)[k] = sign * col[i];
        }
    }
    Ok(Pca {
        mean,
        explained_variance: order
            .iter()
            .take(components)
            .map(|&i| eig.eigenvalues[i].max(0.0))
            .collect(),
        total_variance: eig.eigenvalues.iter().map(|v| v.max(0.0)).sum(),
        components: comp,
    })
}

impl Pca {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.cols()
    }

    /// Rows of `x` centred and projected onto the kept axes.
    pub fn transform(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim("pca_transform", self.components.shape_str(), x.shape_str()));
        }
        let mut centred = x.clone();
        for r in 0..centred.rows() {
            for (v, m) in centred.row_mut(r).iter_mut().zip(&self.mean) {
                *v -= m;
            }
        }
        centred.matmul(&self.components)
    }

    pub fn inverse_transform(&self, z: &Tensor2) -> Result<Tensor2> {
        let mut x = z.matmul_bt(&self.components)?;
        for r in 0..x.rows() {
            for (v, m) in x.row_mut(r).iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_is_rank_one() {
        let rows: Vec<[f64; 2]> = (0..20).map(|i| [i as f64, 2.0 * i as f64 + 1.0]).collect();
        let p = pca_fit(&Tensor2::from_rows(&rows).unwrap(), 1).unwrap();
        assert!(p.explained_variance[0] / p.total_variance > 0.9999);
    }

    #[test]
    fn full_reconstruction() {
        let rows: Vec<[f64; 3]> = (0..10)
            .map(|i| {
                let t = i as f64;
                [t.sin(), (2.0 * t).cos() + t, t * t * 0.1]
            })
            .collect();
        let x = Tensor2::from_rows(&rows).unwrap();
        let p = pca_fit(&x, 3).unwrap();
        let back = p.inverse_transform(&p.transform(&x).unwrap()).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-8);
        }
        let g = p.components.matmul_at(&p.components).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((g[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-6);
            }
        }
        let mean = Tensor2::from_vec(1, 3, p.mean.clone()).unwrap();
        assert!(p.transform(&mean).unwrap().data().iter().all(|v| v.abs() < 1e-12));
    }

    /// Cyclic Jacobi rotations on a small symmetric matrix; returns the
    /// eigenvalues in descending order.
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let (c, s) = (1.0 / (t * t + 1.0).sqrt(), t / (t * t + 1.0).sqrt());
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    }

    #[test]
    fn explained_variance_matches_jacobi_oracle() {
        let rows = [
            [2.0, 0.5, -1.0],
            [1.0, -0.3, 0.7],
            [-0.5, 1.2, 0.1],
            [0.3, 0.9, -2.2],
            [1.7, -1.1, 0.4],
        ];
        let x = Tensor2::from_rows(&rows).unwrap();
        let p = pca_fit(&x, 3).unwrap();
        let mean: Vec<f64> = (0..3).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / 5.0).collect();
        let cov: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / 4.0)
                    .collect()
            })
            .collect();
        let oracle = jacobi_eigenvalues(cov.clone());
        for (got, want) in p.explained_variance.iter().zip(&oracle) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        assert!((p.total_variance - oracle.iter().sum::<f64>()).abs() < 1e-10);
        // Each component is an eigenvector of the covariance for its value.
        for k in 0..3 {
            let v: Vec<f64> = (0..3).map(|i| p.components[(i, k)]).collect();
            for i in 0..3 {
                let av: f64 = (0..3).map(|j| cov[i][j] * v[j]).sum();
                assert!((av - oracle[k] * v[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn config_errors() {
        let x = Tensor2::zeros(5, 3);
        assert!(matches!(pca_fit(&x, 4), Err(Error::Config(_))));
        assert!(matches!(pca_fit(&x, 0), Err(Error::Config(_))));
    }
}
