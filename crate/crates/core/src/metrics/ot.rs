//! Exact discrete optimal transport.
//!
//! Two solvers:
//! * [`min_cost_assignment`]: shortest augmenting path with potentials, O(m^3);
//!   used when both measures are uniform over the same number of points.
//! * [`transport_simplex`]: the transportation simplex (MODI pivoting on a
//!   spanning-tree basis) for arbitrary marginals.

use crate::error::{Error, Result};

/// Solves a square assignment problem. Returns `assignment[row] = col` and the total cost.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> (Vec<usize>, f64) {
    assert_eq!(cost.len(), n * n, "cost matrix must be n x n");
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    // 1-based potentials; column 0 is a virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0usize;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let reduced = cost[(r - 1) * n + (c - 1)] - u[r] - v[c];
                if reduced < min_to[c] {
                    min_to[c] = reduced;
                    way[c] = col0;
                }
                if min_to[c] < delta {
                    delta = min_to[c];
                    col1 = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    min_to[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for c in 1..=n {
        assignment[owner[c] - 1] = c - 1;
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(r, &c)| cost[r * n + c])
        .sum();
    (assignment, total)
}

/// Optimal plan of a balanced transportation problem.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    /// Basic cells `(row, col, flow)`; non-basic cells carry zero flow.
    pub flows: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

const REDUCED_COST_EPS: f64 = 1e-12;

/// Minimises sum c_kl pi_kl subject to row sums `supply` and column sums `demand`.
///
/// Both marginals must be nonnegative with (numerically) equal totals.
pub fn transport_simplex(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<TransportPlan> {
    let m = supply.len();
    let n = demand.len();
    if m == 0 || n == 0 {
        return Err(Error::DegenerateWeights("empty marginal".into()));
    }
    assert_eq!(cost.len(), m * n, "cost matrix must be m x n");
    let total_s: f64 = supply.iter().sum();
    let total_d: f64 = demand.iter().sum();
    if !(total_s > 0.0) || (total_s - total_d).abs() > 1e-9 * total_s.max(1.0) {
        return Err(Error::DegenerateWeights(format!(
            "unbalanced marginals ({total_s} vs {total_d})"
        )));
    }

    let mut basis = north_west_corner(supply, demand);
    let nodes = m + n;
    let max_pivots = 50 * nodes * nodes + 100;
    let mut pivots = 0usize;
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    let mut is_basic = vec![false; m * n];
    for &(r, c, _) in &basis {
        is_basic[r * n + c] = true;
    }

    loop {
        potentials(&basis, cost, m, n, &mut u, &mut v);

        // Dantzig rule first; Bland's rule after many pivots to escape degenerate cycling.
        let bland = pivots > max_pivots / 2;
        let mut entering: Option<(usize, usize)> = None;
        let mut best = -REDUCED_COST_EPS;
        'scan: for r in 0..m {
            for c in 0..n {
                if is_basic[r * n + c] {
                    continue;
                }
                let reduced = cost[r * n + c] - u[r] - v[c];
                if reduced < best {
                    entering = Some((r, c));
                    if bland {
                        break 'scan;
                    }
                    best = reduced;
                }
            }
        }
        let Some((er, ec)) = entering else {
            break;
        };
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::SolverDidNotConverge(pivots));
        }

        // Path in the basis tree from column node `ec` to row node `er`.
        let path = tree_path(&basis, m, n, m + ec, er);
        // path[0] is incident to column ec and gets -theta, then alternate.
        let mut theta = f64::INFINITY;
        let mut leave_pos = usize::MAX;
        for (k, &b) in path.iter().enumerate() {
            if k % 2 == 0 && basis[b].2 < theta {
                theta = basis[b].2;
                leave_pos = b;
            }
        }
        for (k, &b) in path.iter().enumerate() {
            if k % 2 == 0 {
                basis[b].2 -= theta;
            } else {
                basis[b].2 += theta;
            }
        }
        let (lr, lc, _) = basis[leave_pos];
        is_basic[lr * n + lc] = false;
        is_basic[er * n + ec] = true;
        basis[leave_pos] = (er, ec, theta);
    }

    let cost_total = basis
        .iter()
        .map(|&(r, c, f)| f.max(0.0) * cost[r * n + c])
        .sum();
    Ok(TransportPlan {
        flows: basis,
        cost: cost_total,
    })
}

/// Staircase initial basis with exactly m + n - 1 cells.
fn north_west_corner(supply: &[f64], demand: &[f64]) -> Vec<(usize, usize, f64)> {
    let (m, n) = (supply.len(), demand.len());
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let mut cells = Vec::with_capacity(m + n - 1);
    let (mut r, mut c) = (0, 0);
    loop {
        let flow = s[r].min(d[c]);
        cells.push((r, c, flow));
        s[r] -= flow;
        d[c] -= flow;
        if r == m - 1 && c == n - 1 {
            break;
        }
        if c == n - 1 || (r < m - 1 && s[r] <= d[c]) {
            r += 1;
        } else {
            c += 1;
        }
    }
    // Put leftover rounding mass on the final cell.
    if let Some(last) = cells.last_mut() {
        last.2 += s[m - 1].max(0.0).min(d[n - 1].max(0.0));
    }
    cells
}

/// Row/column potentials with u_0 = 0 from c_rc = u_r + v_c on basic cells.
fn potentials(basis: &[(usize, usize, f64)], cost: &[f64], m: usize, n: usize, u: &mut [f64], v: &mut [f64]) {
    let adj = adjacency(basis, m, n);
    let mut seen = vec![false; m + n];
    let mut stack = vec![0usize];
    seen[0] = true;
    u[0] = 0.0;
    while let Some(node) = stack.pop() {
        for &b in &adj[node] {
            let (r, c, _) = basis[b];
            let other = if node < m { m + c } else { r };
            if seen[other] {
                continue;
            }
            seen[other] = true;
            if node < m {
                v[c] = cost[r * n + c] - u[r];
            } else {
                u[r] = cost[r * n + c] - v[c];
            }
            stack.push(other);
        }
    }
}

fn adjacency(basis: &[(usize, usize, f64)], m: usize, n: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); m + n];
    for (b, &(r, c, _)) in basis.iter().enumerate() {
        adj[r].push(b);
        adj[m + c].push(b);
    }
    adj
}

/// Basis cells on the unique tree path from node `from` to node `to`.
fn tree_path(basis: &[(usize, usize, f64)], m: usize, n: usize, from: usize, to: usize) -> Vec<usize> {
    let adj = adjacency(basis, m, n);
    let mut parent_edge = vec![usize::MAX; m + n];
    let mut seen = vec![false; m + n];
    let mut queue = std::collections::VecDeque::from([from]);
    seen[from] = true;
    while let Some(node) = queue.pop_front() {
        if node == to {
            break;
        }
        for &b in &adj[node] {
            let (r, c, _) = basis[b];
            let other = if node < m { m + c } else { r };
            if !seen[other] {
                seen[other] = true;
                parent_edge[other] = b;
                queue.push_back(other);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = to;
    while node != from {
        let b = parent_edge[node];
        path.push(b);
        let (r, c, _) = basis[b];
        node = if node < m { m + c } else { r };
    }
    path.reverse();
    path
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_small() {
        // Optimal: 0->1, 1->0, 2->2 with cost 1 + 2 + 2 = 5.
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let (assign, total) = min_cost_assignment(&cost, 3);
        assert_eq!(total, 5.0);
        assert_eq!(assign, vec![1, 0, 2]);
    }

    #[test]
    fn transport_matches_assignment_on_permutation_problem() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let third = 1.0 / 3.0;
        let plan = transport_simplex(&[third; 3], &[third; 3], &cost).unwrap();
        assert!((plan.cost - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn transport_rectangular() {
        // Supply (0.5, 0.5) at x = 0, 1; demand (0.25, 0.75) at y = 0, 1.
        let cost = [0.0, 1.0, 1.0, 0.0];
        let plan = transport_simplex(&[0.5, 0.5], &[0.25, 0.75], &cost).unwrap();
        assert!((plan.cost - 0.25).abs() < 1e-15);
        let total: f64 = plan.flows.iter().map(|f| f.2).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transport_rejects_unbalanced() {
        assert!(transport_simplex(&[1.0], &[0.5], &[0.0]).is_err());
    }
}
