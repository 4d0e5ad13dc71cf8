use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::eval::Split;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UserMetrics {
    pub user: usize,
    pub hits: usize,
    pub ndcg: f64,
    pub recall: f64,
    pub hit_rate: f64,
    pub precision: f64,
}

/// Macro averages over test users, as fractions in `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub n: usize,
    pub ndcg: f64,
    pub recall: f64,
    pub hit_rate: f64,
    pub precision: f64,
    pub per_user: Vec<UserMetrics>,
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Binary-relevance metrics of one ranked list at cutoff `n`.
pub fn user_metrics(
    user: usize,
    ranked: &[usize],
    test: &BTreeSet<usize>,
    n: usize,
) -> UserMetrics {
    let mut hits = 0;
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().take(n).enumerate() {
        if test.contains(item) {
            hits += 1;
            dcg += discount(pos + 1);
        }
    }
    let idcg: f64 = (1..=n.min(test.len())).map(discount).sum();
    UserMetrics {
        user,
        hits,
        ndcg: if idcg > 0.0 { dcg / idcg } else { 0.0 },
        recall: if test.is_empty() {
            0.0
        } else {
            hits as f64 / test.len() as f64
        },
        hit_rate: if hits > 0 { 1.0 } else { 0.0 },
        precision: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
    }
}

/// Scores ranked lists (user global id → item global ids, best first)
/// against the split's test items. Users without a list count as empty.
pub fn metrics(
    recs: &BTreeMap<usize, Vec<usize>>,
    split: &Split,
    n: usize,
) -> Result<MetricReport> {
    if let Some(u) = recs.keys().find(|u| !split.test.contains_key(u)) {
        return Err(Error::UnknownEntity(format!(
            "user #{u} is not in the split"
        )));
    }
    let per_user: Vec<UserMetrics> = split
        .test
        .iter()
        .map(|(&u, test)| user_metrics(u, recs.get(&u).map_or(&[][..], Vec::as_slice), test, n))
        .collect();
    Ok(MetricReport::from_users(n, per_user))
}

impl MetricReport {
    pub fn from_users(n: usize, per_user: Vec<UserMetrics>) -> Self {
        let k = per_user.len().max(1) as f64;
        let mean = |f: fn(&UserMetrics) -> f64| per_user.iter().map(f).sum::<f64>() / k;
        MetricReport {
            n,
            ndcg: mean(|m| m.ndcg),
            recall: mean(|m| m.recall),
            hit_rate: mean(|m| m.hit_rate),
            precision: mean(|m| m.precision),
            per_user,
        }
    }

    /// Element-wise mean of several reports (per-user detail dropped).
    pub fn average(reports: &[MetricReport]) -> MetricReport {
        let k = reports.len().max(1) as f64;
        let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
        MetricReport {
            n: reports.first().map_or(0, |r| r.n),
            ndcg: mean(|r| r.ndcg),
            recall: mean(|r| r.recall),
            hit_rate: mean(|r| r.hit_rate),
            precision: mean(|r| r.precision),
            per_user: Vec::new(),
        }
    }
}

/// Expected metrics of recommending `n` items uniformly at random from the
/// items a user has not trained on.
pub fn random_baseline(split: &Split, num_items: usize, n: usize) -> MetricReport {
    let per_user = split
        .test
        .iter()
        .map(|(&u, test)| {
            let pool = num_items - split.train[&u].len();
            let t = test.len();
            let draws = n.min(pool);
            // P(no hit) = C(pool − t, draws) / C(pool, draws).
            let miss: f64 = (0..draws)
                .map(|k| (pool.saturating_sub(t + k)) as f64 / (pool - k) as f64)
                .product();
            let p = t as f64 / pool as f64;
            let idcg: f64 = (1..=n.min(t)).map(discount).sum();
            let dcg: f64 = (1..=draws).map(|r| p * discount(r)).sum();
            UserMetrics {
                user: u,
                hits: 0,
                ndcg: if idcg > 0.0 { dcg / idcg } else { 0.0 },
                recall: draws as f64 / pool as f64,
                hit_rate: 1.0 - miss,
                precision: if n == 0 {
                    0.0
                } else {
                    p * draws as f64 / n as f64
                },
            }
        })
        .collect();
    MetricReport::from_users(n, per_user)
}

/// Aligned text table, metrics as percentages.
pub fn format_table(rows: &[(String, MetricReport)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(7);
    let mut out = String::new();
    let n = rows.first().map_or(10, |r| r.1.n);
    let _ = writeln!(
        out,
        "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}",
        "variant",
        format!("NDCG@{n}"),
        format!("Rec@{n}"),
        format!("HR@{n}"),
        format!("Prec@{n}"),
    );
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>8.3}  {:>8.3}  {:>8.3}  {:>8.3}",
            label,
            100.0 * r.ndcg,
            100.0 * r.recall,
            100.0 * r.hit_rate,
            100.0 * r.precision
        );
    }
    out
}

/// Comma-separated form of [`format_table`] with a header row.
pub fn write_csv<W: Write>(w: W, rows: &[(String, MetricReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["variant", "n", "ndcg", "recall", "hit_rate", "precision"])?;
    for (label, r) in rows {
        w.write_record([
            label.clone(),
            r.n.to_string(),
            format!("{:.6}", 100.0 * r.ndcg),
            format!("{:.6}", 100.0 * r.recall),
            format!("{:.6}", 100.0 * r.hit_rate),
            format!("{:.6}", 100.0 * r.precision),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Per-user detail as CSV.
pub fn write_user_csv<W: Write>(w: W, report: &MetricReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["user", "hits", "ndcg", "recall", "hit_rate", "precision"])?;
    for m in &report.per_user {
        w.write_record([
            m.user.to_string(),
            m.hits.to_string(),
            format!("{:.6}", m.ndcg),
            format!("{:.6}", m.recall),
            format!("{:.6}", m.hit_rate),
            format!("{:.6}", m.precision),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn split_of(test: &[usize], train: &[usize]) -> Split {
        let mut s = Split::default();
        s.test.insert(0, test.iter().copied().collect());
        s.train.insert(0, train.iter().copied().collect());
        s
    }

    #[test]
    fn worked_example() {
        let test: BTreeSet<usize> = [3].into();
        let m = user_metrics(0, &[10, 11, 3, 12], &test, 10);
        assert_eq!(m.ndcg, 0.5);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.hit_rate, 1.0);
        assert_eq!(m.precision, 0.1);
    }

    #[test]
    fn perfect_and_empty() {
        let test: BTreeSet<usize> = [1, 2, 3].into();
        let m = user_metrics(0, &[3, 1, 2, 9], &test, 10);
        assert!((m.ndcg - 1.0).abs() < 1e-12);
        assert_eq!(m.hit_rate, 1.0);
        let e = user_metrics(0, &[], &test, 10);
        assert_eq!(
            (e.ndcg, e.recall, e.hit_rate, e.precision),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn unknown_user_is_an_error() {
        let s = split_of(&[1], &[2]);
        let recs: BTreeMap<usize, Vec<usize>> = [(7, vec![1])].into();
        assert!(metrics(&recs, &s, 10).is_err());
        let recs: BTreeMap<usize, Vec<usize>> = [(0, vec![1])].into();
        assert_eq!(metrics(&recs, &s, 10).unwrap().hit_rate, 1.0);
    }

    #[test]
    fn random_baseline_matches_hypergeometric() {
        // pool 9, one relevant item, 3 draws: P(hit) = 3/9.
        let s = split_of(&[1], &[0]);
        let r = random_baseline(&s, 10, 3);
        assert!((r.hit_rate - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.precision - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn table_and_csv() {
        let r = MetricReport {
            n: 10,
            hit_rate: 0.25,
            ..Default::default()
        };
        let table = format_table(&[("heuristic".into(), r.clone())]);
        assert!(table.contains("HR@10"));
        assert!(table.contains("25.000"));
        let mut buf = Vec::new();
        write_csv(&mut buf, &[("x".into(), r)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("variant,n,ndcg,recall,hit_rate,precision\n"));
    }

    proptest! {
        #[test]
        fn bounds_and_permutation_invariance(
            ranked in proptest::collection::vec(0usize..30, 0..15),
            test in proptest::collection::btree_set(0usize..30, 1..6),
            n in 1usize..12,
        ) {
            let mut ranked = ranked;
            let mut seen = BTreeSet::new();
            ranked.retain(|x| seen.insert(*x));
            let m = user_metrics(0, &ranked, &test, n);
            for v in [m.ndcg, m.recall, m.hit_rate, m.precision] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
            prop_assert!(m.precision <= m.hit_rate && m.recall <= m.hit_rate);

            // Reversing the non-relevant items below the last relevant one
            // leaves NDCG unchanged.
            let cut = ranked.iter().rposition(|x| test.contains(x)).map_or(0, |p| p + 1);
            let mut permuted = ranked.clone();
            permuted[cut..].reverse();
            prop_assert_eq!(user_metrics(0, &permuted, &test, n).ndcg, m.ndcg);
        }
    }
}
