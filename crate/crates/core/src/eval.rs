//! All-rank top-K evaluation and sparsity-group reporting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::dense::DenseMatrix;
use crate::numerics::scalar::Scalar;

/// Mean metrics at one cutoff.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsAtK {
    pub recall: f64,
    pub precision: f64,
    pub ndcg: f64,
}

/// Per-sparsity-group breakdown.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupReport {
    /// Inclusive upper bound on train-interaction count, `None` for the
    /// unbounded last group.
    pub max_train_degree: Option<usize>,
    pub users: usize,
    /// Means per cutoff; omitted for empty groups.
    pub metrics: Option<BTreeMap<usize, MetricsAtK>>,
}

/// Evaluation over all users with non-empty test sets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub evaluated_users: usize,
    pub metrics: BTreeMap<usize, MetricsAtK>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub groups: Vec<GroupReport>,
}

impl EvalReport {
    /// Aligned-column text table of the report.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<12}", "cutoff"));
        for k in &self.ks {
            out.push_str(&format!("{:>12}", format!("@{k}")));
        }
        out.push('\n');
        for (label, pick) in [
            ("recall", 0usize),
            ("precision", 1),
            ("ndcg", 2),
        ] {
            out.push_str(&format!("{label:<12}"));
            for k in &self.ks {
                let m = &self.metrics[k];
                let v = match pick {
                    0 => m.recall,
                    1 => m.precision,
                    _ => m.ndcg,
                };
                out.push_str(&format!("{v:>12.6}"));
            }
            out.push('\n');
        }
        if !self.groups.is_empty() {
            out.push_str(&format!("\n{:<16}{:>8}", "group", "users"));
            for k in &self.ks {
                out.push_str(&format!("{:>12}", format!("recall@{k}")));
            }
            out.push('\n');
            for g in &self.groups {
                let label = match g.max_train_degree {
                    Some(b) => format!("deg<={b}"),
                    None => "rest".to_string(),
                };
                out.push_str(&format!("{label:<16}{:>8}", g.users));
                for k in &self.ks {
                    match &g.metrics {
                        Some(m) => out.push_str(&format!("{:>12.6}", m[k].recall)),
                        None => out.push_str(&format!("{:>12}", "-")),
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Rank every item per user: train items are masked to negative infinity
/// first, ties break toward the smaller item index. Returns the full item
/// permutation per user.
pub fn rank_all<S: Scalar>(scores: &DenseMatrix<S>, train_mask: &[Vec<usize>]) -> Result<Vec<Vec<usize>>> {
    if train_mask.len() != scores.rows() {
        return Err(Error::Shape("rank_all: one mask list per user required".into()));
    }
    let n_items = scores.cols();
    let mut ranked = Vec::with_capacity(scores.rows());
    for u in 0..scores.rows() {
        let mut masked: Vec<f64> = scores.row(u).iter().map(|v| v.as_f64()).collect();
        for &i in &train_mask[u] {
            if i >= n_items {
                return Err(Error::Shape(format!("mask item {i} out of range")));
            }
            masked[i] = f64::NEG_INFINITY;
        }
        let mut order: Vec<usize> = (0..n_items).collect();
        order.sort_by(|&a, &b| masked[b].total_cmp(&masked[a]).then(a.cmp(&b)));
        ranked.push(order);
    }
    Ok(ranked)
}

fn user_metrics(ranked: &[usize], test: &[usize], k: usize) -> MetricsAtK {
    let hits: Vec<usize> = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, item)| test.binary_search(item).is_ok())
        .map(|(rank0, _)| rank0 + 1)
        .collect();
    let dcg: f64 = hits.iter().map(|&rank| 1.0 / ((rank + 1) as f64).log2()).sum();
    let ideal_hits = k.min(test.len());
    let idcg: f64 = (1..=ideal_hits).map(|rank| 1.0 / ((rank + 1) as f64).log2()).sum();
    MetricsAtK {
        recall: hits.len() as f64 / test.len() as f64,
        precision: hits.len() as f64 / k as f64,
        ndcg: if idcg > 0.0 { dcg / idcg } else { 0.0 },
    }
}

/// Mean Recall/Precision/NDCG at each cutoff over users with non-empty test
/// sets. `test` holds sorted item lists per user.
pub fn metrics_at_k(
    ranked: &[Vec<usize>],
    test: &[Vec<usize>],
    ks: &[usize],
) -> Result<(BTreeMap<usize, MetricsAtK>, usize)> {
    if ranked.len() != test.len() {
        return Err(Error::Shape("metrics: ranked and test lengths differ".into()));
    }
    let n_items = ranked.first().map_or(0, Vec::len);
    for &k in ks {
        if k == 0 || k > n_items {
            return Err(Error::Config(format!("cutoff {k} outside 1..={n_items}")));
        }
    }
    let mut sums: BTreeMap<usize, MetricsAtK> = ks.iter().map(|&k| (k, MetricsAtK::default())).collect();
    let mut evaluated = 0usize;
    for (order, test_u) in ranked.iter().zip(test) {
        if test_u.is_empty() {
            continue;
        }
        debug_assert!(test_u.windows(2).all(|w| w[0] < w[1]), "test lists must be sorted");
        evaluated += 1;
        for &k in ks {
            let m = user_metrics(order, test_u, k);
            let s = sums.get_mut(&k).expect("cutoff present");
            s.recall += m.recall;
            s.precision += m.precision;
            s.ndcg += m.ndcg;
        }
    }
    if evaluated > 0 {
        for s in sums.values_mut() {
            s.recall /= evaluated as f64;
            s.precision /= evaluated as f64;
            s.ndcg /= evaluated as f64;
        }
    }
    Ok((sums, evaluated))
}

/// Full report with optional sparsity grouping by train-interaction count.
/// `group_bounds` are inclusive upper bounds, sorted ascending; a final
/// unbounded group catches the rest.
pub fn evaluate(
    ranked: &[Vec<usize>],
    test: &[Vec<usize>],
    train_degrees: &[usize],
    ks: &[usize],
    group_bounds: &[usize],
) -> Result<EvalReport> {
    let (metrics, evaluated_users) = metrics_at_k(ranked, test, ks)?;
    let mut groups = Vec::new();
    if !group_bounds.is_empty() {
        if group_bounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("group bounds must be strictly ascending".into()));
        }
        if train_degrees.len() != ranked.len() {
            return Err(Error::Shape("one train degree per user required".into()));
        }
        let n_groups = group_bounds.len() + 1;
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
        for (u, &deg) in train_degrees.iter().enumerate() {
            if test[u].is_empty() {
                continue;
            }
            let g = group_bounds.iter().position(|&b| deg <= b).unwrap_or(n_groups - 1);
            members[g].push(u);
        }
        for (g, users) in members.iter().enumerate() {
            let bound = group_bounds.get(g).copied();
            if users.is_empty() {
                groups.push(GroupReport {
                    max_train_degree: bound,
                    users: 0,
                    metrics: None,
                });
                continue;
            }
            let g_ranked: Vec<Vec<usize>> = users.iter().map(|&u| ranked[u].clone()).collect();
            let g_test: Vec<Vec<usize>> = users.iter().map(|&u| test[u].clone()).collect();
            let (m, count) = metrics_at_k(&g_ranked, &g_test, ks)?;
            debug_assert_eq!(count, users.len());
            groups.push(GroupReport {
                max_train_degree: bound,
                users: users.len(),
                metrics: Some(m),
            });
        }
    }
    Ok(EvalReport {
        ks: ks.to_vec(),
        evaluated_users,
        metrics,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::SeededRng;

    type M = DenseMatrix<f64>;

    #[test]
    fn rank_orders_by_score_then_index() {
        let scores = M::from_rows(&[vec![0.1, 0.9, 0.5]]).unwrap();
        let ranked = rank_all(&scores, &[vec![]]).unwrap();
        assert_eq!(ranked[0], vec![1, 2, 0]);
    }

    #[test]
    fn masking_top_item_promotes_second() {
        let scores = M::from_rows(&[vec![0.1, 0.9, 0.5]]).unwrap();
        let ranked = rank_all(&scores, &[vec![1]]).unwrap();
        assert_eq!(ranked[0][0], 2);
        assert_eq!(*ranked[0].last().unwrap(), 1);
    }

    #[test]
    fn rank_matches_full_sort_oracle_on_random_instances() {
        let mut rng = SeededRng::new(77);
        for _ in 0..5 {
            let scores = rng.gaussian_matrix::<f64>(30, 30);
            let mask: Vec<Vec<usize>> = (0..30)
                .map(|_| (0..30).filter(|_| rng.uniform() < 0.2).collect())
                .collect();
            let ranked = rank_all(&scores, &mask).unwrap();
            for u in 0..30 {
                let mut pairs: Vec<(f64, usize)> = (0..30)
                    .map(|i| {
                        let s = if mask[u].contains(&i) {
                            f64::NEG_INFINITY
                        } else {
                            scores.get(u, i)
                        };
                        (s, i)
                    })
                    .collect();
                pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                let want: Vec<usize> = pairs.into_iter().map(|(_, i)| i).collect();
                assert_eq!(ranked[u], want, "user {u}");
            }
        }
    }

    #[test]
    fn single_hit_at_rank_one() {
        let ranked = vec![vec![4, 0, 1, 2, 3]];
        let test = vec![vec![4]];
        let (m, n) = metrics_at_k(&ranked, &test, &[1]).unwrap();
        assert_eq!(n, 1);
        assert_eq!(m[&1], MetricsAtK { recall: 1.0, precision: 1.0, ndcg: 1.0 });
    }

    #[test]
    fn single_hit_at_rank_three_k_five() {
        let ranked = vec![vec![0, 1, 4, 2, 3]];
        let test = vec![vec![4]];
        let (m, _) = metrics_at_k(&ranked, &test, &[5]).unwrap();
        assert!((m[&5].recall - 1.0).abs() < 1e-12);
        assert!((m[&5].precision - 0.2).abs() < 1e-12);
        assert!((m[&5].ndcg - 0.5).abs() < 1e-12); // 1/log2(4)
    }

    #[test]
    fn no_hits_is_all_zeros() {
        let ranked = vec![vec![0, 1, 2, 3, 4]];
        let test = vec![vec![4]];
        let (m, _) = metrics_at_k(&ranked, &test, &[2]).unwrap();
        assert_eq!(m[&2], MetricsAtK::default());
    }

    #[test]
    fn recall_at_full_catalog_is_one() {
        let mut rng = SeededRng::new(3);
        let scores = rng.gaussian_matrix::<f64>(8, 10);
        let test: Vec<Vec<usize>> = (0..8)
            .map(|u| (0..10).filter(|i| (u + i) % 3 == 0).collect())
            .collect();
        let ranked = rank_all(&scores, &vec![vec![]; 8]).unwrap();
        let (m, _) = metrics_at_k(&ranked, &test, &[10]).unwrap();
        assert!((m[&10].recall - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ndcg_ignores_permutations_below_cutoff() {
        let test = vec![vec![2]];
        let a = vec![vec![2, 0, 1, 3, 4]];
        let b = vec![vec![2, 4, 3, 1, 0]];
        let (ma, _) = metrics_at_k(&a, &test, &[2]).unwrap();
        let (mb, _) = metrics_at_k(&b, &test, &[2]).unwrap();
        assert_eq!(ma[&2].ndcg, mb[&2].ndcg);
    }

    #[test]
    fn hit_count_identity_per_user() {
        let mut rng = SeededRng::new(4);
        let scores = rng.gaussian_matrix::<f64>(6, 12);
        let ranked = rank_all(&scores, &vec![vec![]; 6]).unwrap();
        for u in 0..6 {
            let test_u: Vec<usize> = (0..12).filter(|_| rng.uniform() < 0.4).collect();
            if test_u.is_empty() {
                continue;
            }
            let k = 5;
            let m = user_metrics(&ranked[u], &test_u, k);
            // precision * k = recall * |test|
            assert!((m.precision * k as f64 - m.recall * test_u.len() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn users_without_test_items_are_excluded() {
        let ranked = vec![vec![0, 1], vec![1, 0]];
        let test = vec![vec![], vec![1]];
        let (m, n) = metrics_at_k(&ranked, &test, &[1]).unwrap();
        assert_eq!(n, 1);
        assert_eq!(m[&1].recall, 1.0);
    }

    #[test]
    fn cutoff_beyond_catalog_is_config_error() {
        let ranked = vec![vec![0, 1]];
        let test = vec![vec![0]];
        assert!(matches!(metrics_at_k(&ranked, &test, &[3]), Err(Error::Config(_))));
    }

    #[test]
    fn grouping_buckets_by_train_degree() {
        let ranked = vec![vec![0, 1, 2], vec![1, 0, 2], vec![2, 1, 0]];
        let test = vec![vec![0], vec![0], vec![0]];
        let degrees = vec![3, 7, 20];
        let report = evaluate(&ranked, &test, &degrees, &[1], &[5, 10]).unwrap();
        assert_eq!(report.groups.len(), 3);
        assert_eq!(report.groups[0].users, 1); // degree 3 -> first group
        assert_eq!(report.groups[1].users, 1);
        assert_eq!(report.groups[2].users, 1);
    }

    #[test]
    fn empty_groups_report_count_zero_without_metrics() {
        let ranked = vec![vec![0, 1]];
        let test = vec![vec![0]];
        let report = evaluate(&ranked, &test, &[100], &[1], &[5, 10]).unwrap();
        assert_eq!(report.groups[0].users, 0);
        assert!(report.groups[0].metrics.is_none());
        assert_eq!(report.groups[2].users, 1);
    }

    #[test]
    fn group_means_weighted_by_counts_recover_global_mean() {
        let mut rng = SeededRng::new(9);
        let n_users = 25;
        let n_items = 15;
        let scores = rng.gaussian_matrix::<f64>(n_users, n_items);
        let test: Vec<Vec<usize>> = (0..n_users)
            .map(|_| (0..n_items).filter(|_| rng.uniform() < 0.3).collect())
            .collect();
        let degrees: Vec<usize> = (0..n_users).map(|_| rng.uniform_usize(30)).collect();
        let ranked = rank_all(&scores, &vec![vec![]; n_users]).unwrap();
        let report = evaluate(&ranked, &test, &degrees, &[5], &[5, 15]).unwrap();
        let mut weighted = 0.0;
        let mut count = 0usize;
        for g in &report.groups {
            if let Some(m) = &g.metrics {
                weighted += m[&5].recall * g.users as f64;
                count += g.users;
            }
        }
        assert_eq!(count, report.evaluated_users);
        assert!((weighted / count as f64 - report.metrics[&5].recall).abs() < 1e-10);
    }
}
