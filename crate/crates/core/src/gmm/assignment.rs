use super::{kl_gaussian, Mixture};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    /// `permutation[i]` is the truth component matched to estimated component `i`.
    pub permutation: Vec<usize>,
    pub total_cost: f64,
    /// `KL(est_i ‖ truth_permutation[i])` for each estimated component `i`.
    pub per_pair_kl: Vec<f64>,
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method with
/// potentials, O(n³)). Returns `row → column` and the total cost.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    if cost.iter().any(|r| r.len() != n) {
        return Err(Error::Config("cost matrix must be square".into()));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::Config("cost matrix entries must be finite".into()));
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    // 1-based arrays; column 0 is a virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[col_owner[j] - 1] = j - 1;
    }
    let total = row_to_col.iter().enumerate().map(|(i, j)| cost[i][*j]).sum();
    Ok((row_to_col, total))
}

/// Optimal matching of estimated to true components under `KL(est_i ‖ truth_j)`.
pub fn match_components(est: &Mixture, truth: &Mixture) -> Result<AssignmentResult> {
    if est.k() != truth.k() {
        return Err(Error::Config(format!(
            "component count mismatch: estimate has {}, truth has {}",
            est.k(),
            truth.k()
        )));
    }
    let cost: Vec<Vec<f64>> = est
        .components()
        .iter()
        .map(|e| truth.components().iter().map(|t| kl_gaussian(e, t)).collect())
        .collect();
    let (permutation, _) = hungarian(&cost)?;
    let per_pair_kl: Vec<f64> = permutation.iter().enumerate().map(|(i, j)| cost[i][*j]).collect();
    Ok(AssignmentResult {
        total_cost: per_pair_kl.iter().sum(),
        permutation,
        per_pair_kl,
    })
}

/// Average matched component KL; ignores mixture weights.
pub fn mixture_distance(est: &Mixture, truth: &Mixture) -> Result<f64> {
    let m = match_components(est, truth)?;
    Ok(m.total_cost / est.k() as f64)
}
