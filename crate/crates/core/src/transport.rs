//! Exact solver for small balanced transportation problems.
//!
//! Successive shortest augmenting paths on the bipartite residual graph.
//! Problem sizes here are palette-by-palette (k <= ~8), so Bellman-Ford on a
//! dense graph is plenty.

/// Amounts below this are treated as exhausted.
const MASS_EPS: f64 = 1e-13;
/// Relaxations must beat the current label by this much; keeps float noise
/// from creating zero-cost predecessor cycles.
const RELAX_EPS: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub cost: f64,
    /// `flow[i][j]` is the mass moved from supply `i` to demand `j`.
    pub flow: Vec<Vec<f64>>,
}

/// Minimum-cost transport of `supply` onto `demand` under `cost[i][j]`.
///
/// Both marginals are rescaled to unit mass first, so small rounding drift in
/// palette weights does not leave mass stranded. Costs must be non-negative.
pub fn solve(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> TransportPlan {
    let n = supply.len();
    let m = demand.len();
    assert!(n > 0 && m > 0, "transport needs non-empty marginals");
    assert_eq!(cost.len(), n);
    assert!(cost.iter().all(|row| row.len() == m));

    let normalize = |w: &[f64]| {
        let total: f64 = w.iter().sum();
        w.iter().map(|x| x / total).collect::<Vec<_>>()
    };
    let mut left = normalize(supply);
    let mut right = normalize(demand);
    let mut flow = vec![vec![0.0; m]; n];

    // Node layout: supplies 0..n, demands n..n+m.
    let nodes = n + m;
    let max_rounds = 4 * nodes * nodes + 16;
    for _ in 0..max_rounds {
        if left.iter().all(|&x| x <= MASS_EPS) || right.iter().all(|&x| x <= MASS_EPS) {
            break;
        }
        let mut dist = vec![f64::INFINITY; nodes];
        let mut pred = vec![usize::MAX; nodes];
        for (i, &rem) in left.iter().enumerate() {
            if rem > MASS_EPS {
                dist[i] = 0.0;
            }
        }
        // Bellman-Ford; the residual graph has no negative cycles because
        // every augmentation follows a shortest path.
        for _ in 0..nodes {
            let mut changed = false;
            for i in 0..n {
                if dist[i].is_finite() {
                    for j in 0..m {
                        let cand = dist[i] + cost[i][j];
                        if cand < dist[n + j] - RELAX_EPS {
                            dist[n + j] = cand;
                            pred[n + j] = i;
                            changed = true;
                        }
                    }
                }
            }
            for j in 0..m {
                if dist[n + j].is_finite() {
                    for i in 0..n {
                        if flow[i][j] > MASS_EPS {
                            let cand = dist[n + j] - cost[i][j];
                            if cand < dist[i] - RELAX_EPS {
                                dist[i] = cand;
                                pred[i] = n + j;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let sink = (0..m)
            .filter(|&j| right[j] > MASS_EPS && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]).then(a.cmp(&b)));
        let Some(sink) = sink else { break };

        // Walk back to a supply node with remaining mass.
        let mut path = Vec::new();
        let mut node = n + sink;
        while pred[node] != usize::MAX {
            path.push((pred[node], node));
            node = pred[node];
            assert!(path.len() <= nodes, "cycle in shortest-path tree");
        }
        let source = node;
        let mut amount = left[source].min(right[sink]);
        for &(from, to) in &path {
            if from >= n {
                // Backward residual edge: demand `from` -> supply `to`.
                amount = amount.min(flow[to][from - n]);
            }
        }
        for &(from, to) in &path {
            if from < n {
                flow[from][to - n] += amount;
            } else {
                flow[to][from - n] -= amount;
            }
        }
        left[source] -= amount;
        right[sink] -= amount;
    }

    let mut total = 0.0;
    for (row, frow) in cost.iter().zip(&flow) {
        for (&c, &f) in row.iter().zip(frow) {
            if f > 0.0 {
                total += c * f;
            }
        }
    }
    TransportPlan { cost: total, flow }
}
