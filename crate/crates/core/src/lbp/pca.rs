//! PCA reduction for high-dimensional histogram vectors.
//!
//! When the sample count is below the input dimension (the usual case for
//! 127440-dim vectors) the eigenproblem is solved on the samples' Gram
//! matrix and mapped back, so cost scales with samples, not dimension.

use nalgebra::{DMatrix, DVector};

use super::LbpError;

/// Mean and orthonormal basis of the leading principal components,
/// ordered by descending eigenvalue. Each basis row's largest-magnitude
/// entry is positive, which pins an otherwise arbitrary sign.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    input_dim: usize,
    output_dim: usize,
    mean: Vec<f64>,
    /// Row-major `output_dim x input_dim`, one component per row.
    basis: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.basis[i * self.input_dim..(i + 1) * self.input_dim]
    }
}

fn err(msg: impl Into<String>) -> LbpError {
    LbpError::Pca(msg.into())
}

/// Fit the leading `output_dim` principal components. Requires at least
/// `output_dim + 1` training vectors of equal dimension.
pub fn pca_fit(vectors: &[Vec<f32>], output_dim: usize) -> Result<PcaModel, LbpError> {
    if output_dim == 0 {
        return Err(err("output dimension must be positive"));
    }
    let n = vectors.len();
    if n < output_dim + 1 {
        return Err(err(format!(
            "need at least {} training vectors for {output_dim} components, got {n}",
            output_dim + 1
        )));
    }
    let dim = vectors[0].len();
    if dim == 0 {
        return Err(err("empty training vectors"));
    }
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(err("training vectors differ in dimension"));
    }
    if output_dim > dim {
        return Err(err(format!(
            "output dimension {output_dim} exceeds input dimension {dim}"
        )));
    }

    let mut mean = vec![0.0f64; dim];
    for v in vectors {
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += x as f64;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // centered data, row per sample
    let centered: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(&x, m)| x as f64 - m).collect())
        .collect();

    let mut components: Vec<Vec<f64>> = if dim <= n {
        // direct covariance eigenproblem, dim x dim
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for row in &centered {
            for i in 0..dim {
                for j in i..dim {
                    cov[(i, j)] += row[i] * row[j];
                }
            }
        }
        for i in 0..dim {
            for j in 0..i {
                cov[(i, j)] = cov[(j, i)];
            }
        }
        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        order
            .iter()
            .take(output_dim)
            .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
            .collect()
    } else {
        // Gram trick: eigenvectors u of X X^T map to components X^T u
        let mut gram = DMatrix::<f64>::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let dot: f64 = centered[a]
                    .iter()
                    .zip(&centered[b])
                    .map(|(x, y)| x * y)
                    .sum();
                gram[(a, b)] = dot;
                gram[(b, a)] = dot;
            }
        }
        let eig = gram.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut comps = Vec::with_capacity(output_dim);
        for &k in &order {
            if comps.len() == output_dim {
                break;
            }
            let u: DVector<f64> = eig.eigenvectors.column(k).into();
            let mut v = vec![0.0f64; dim];
            for (a, row) in centered.iter().enumerate() {
                let ua = u[a];
                for (vi, &x) in v.iter_mut().zip(row) {
                    *vi += ua * x;
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-9 {
                for x in &mut v {
                    *x /= norm;
                }
                comps.push(v);
            }
        }
        // degenerate data: complete the basis with orthonormalized axes
        if comps.len() < output_dim {
            'axes: for axis in 0..dim {
                if comps.len() == output_dim {
                    break;
                }
                let mut v = vec![0.0f64; dim];
                v[axis] = 1.0;
                for c in &comps {
                    let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                    for (vi, ci) in v.iter_mut().zip(c) {
                        *vi -= dot * ci;
                    }
                }
                let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-6 {
                    continue 'axes;
                }
                for x in &mut v {
                    *x /= norm;
                }
                comps.push(v);
            }
            if comps.len() < output_dim {
                return Err(err("could not complete a degenerate basis"));
            }
        }
        comps
    };

    // sign convention: largest-magnitude entry positive (first on ties)
    for comp in &mut components {
        let mut best = 0usize;
        for (i, &v) in comp.iter().enumerate() {
            if v.abs() > comp[best].abs() {
                best = i;
            }
        }
        if comp[best] < 0.0 {
            for v in comp.iter_mut() {
                *v = -*v;
            }
        }
    }

    let mut basis = Vec::with_capacity(output_dim * dim);
    for comp in &components {
        basis.extend_from_slice(comp);
    }
    Ok(PcaModel {
        input_dim: dim,
        output_dim,
        mean,
        basis,
    })
}

/// Project a vector onto the model's components.
pub fn pca_project(model: &PcaModel, v: &[f32]) -> Result<Vec<f32>, LbpError> {
    if v.len() != model.input_dim {
        return Err(err(format!(
            "vector dimension {} does not match model input {}",
            v.len(),
            model.input_dim
        )));
    }
    let centered: Vec<f64> = v
        .iter()
        .zip(&model.mean)
        .map(|(&x, m)| x as f64 - m)
        .collect();
    let mut out = Vec::with_capacity(model.output_dim);
    for k in 0..model.output_dim {
        let comp = model.component(k);
        let dot: f64 = comp.iter().zip(&centered).map(|(a, b)| a * b).sum();
        out.push(dot as f32);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn planted_subspace(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
        // all samples live in span{d1, d2} plus a fixed offset
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d1: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d2: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (0..n)
            .map(|_| {
                let a: f64 = rng.gen_range(-2.0..2.0);
                let b: f64 = rng.gen_range(-2.0..2.0);
                (0..dim)
                    .map(|i| (5.0 + a * d1[i] + b * d2[i]) as f32)
                    .collect()
            })
            .collect()
    }

    fn orthonormal(model: &PcaModel) {
        for i in 0..model.output_dim() {
            for j in 0..model.output_dim() {
                let dot: f64 = model
                    .component(i)
                    .iter()
                    .zip(model.component(j))
                    .map(|(a, b)| a * b)
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-6, "basis[{i}].basis[{j}] = {dot}");
            }
        }
    }

    #[test]
    fn two_dim_subspace_reconstructs_exactly() {
        for (n, dim) in [(12usize, 6usize), (5, 9)] {
            // covers both the covariance path (dim <= n) and the Gram path
            let data = planted_subspace(n, dim, 3);
            let model = pca_fit(&data, 2).unwrap();
            orthonormal(&model);
            for v in &data {
                let y = pca_project(&model, v).unwrap();
                // reconstruct mean + sum y_k * comp_k
                let mut rec: Vec<f64> = model.mean().to_vec();
                for (k, &yk) in y.iter().enumerate() {
                    for (r, c) in rec.iter_mut().zip(model.component(k)) {
                        *r += yk as f64 * c;
                    }
                }
                for (a, b) in v.iter().zip(&rec) {
                    assert!((*a as f64 - b).abs() < 1e-3, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn basis_rows_obey_sign_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<Vec<f32>> = (0..20)
            .map(|_| (0..7).map(|_| rng.gen_range(0.0..10.0)).collect())
            .collect();
        let model = pca_fit(&data, 4).unwrap();
        orthonormal(&model);
        for k in 0..4 {
            let comp = model.component(k);
            let mut best = 0usize;
            for (i, &v) in comp.iter().enumerate() {
                if v.abs() > comp[best].abs() {
                    best = i;
                }
            }
            assert!(comp[best] > 0.0, "component {k} sign flip missed");
        }
    }

    #[test]
    fn basis_vector_projects_to_unit_vector() {
        let data = planted_subspace(30, 8, 9);
        let model = pca_fit(&data, 2).unwrap();
        for k in 0..2 {
            let v: Vec<f32> = model
                .mean()
                .iter()
                .zip(model.component(k))
                .map(|(m, c)| (m + c) as f32)
                .collect();
            let y = pca_project(&model, &v).unwrap();
            for (i, &yi) in y.iter().enumerate() {
                let want = if i == k { 1.0 } else { 0.0 };
                assert!((yi - want).abs() < 1e-4, "y[{i}] = {yi}");
            }
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let data = planted_subspace(10, 20, 21);
        let a = pca_fit(&data, 3).unwrap();
        let b = pca_fit(&data, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validation_errors() {
        let data = planted_subspace(4, 6, 2);
        assert!(pca_fit(&data, 4).is_err()); // needs out_dim + 1 samples
        assert!(pca_fit(&data, 0).is_err());
        let tall = planted_subspace(9, 6, 2);
        assert!(pca_fit(&tall, 7).is_err()); // out_dim > input dim
        let mut ragged = planted_subspace(6, 6, 2);
        ragged[3].pop();
        assert!(pca_fit(&ragged, 2).is_err());
        let model = pca_fit(&planted_subspace(8, 6, 2), 2).unwrap();
        assert!(pca_project(&model, &[0.0; 5]).is_err());
    }
}
