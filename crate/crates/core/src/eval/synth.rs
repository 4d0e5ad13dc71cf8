//! Synthetic graphs with planted user preferences.
//!
//! Every user has a latent preferred brand and category. Purchase
//! probabilities are multiplied by `boost` once for a brand match and once
//! for a category match, so at high boost most purchases carry the user's
//! preference and paths through brands and categories become informative.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphBuilder};
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub users: usize,
    pub items: usize,
    pub brands: usize,
    pub categories: usize,
    pub features: usize,
    pub purchases_per_user: usize,
    /// Weight multiplier per matched preference.
    pub boost: f64,
    /// Probability that an item's category (and a user's preferred category)
    /// is the home category of its brand.
    pub affinity: f64,
    pub features_per_item: usize,
    pub mentions_per_user: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            users: 200,
            items: 300,
            brands: 10,
            categories: 12,
            features: 40,
            purchases_per_user: 10,
            boost: 8.0,
            affinity: 0.6,
            features_per_item: 2,
            mentions_per_user: 3,
        }
    }
}

/// Latent preferences, indexed by user / item local id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    pub user_brand: Vec<usize>,
    pub user_category: Vec<usize>,
    pub item_brand: Vec<usize>,
    pub item_category: Vec<usize>,
    /// Purchased items per user, as item local ids.
    pub purchases: Vec<Vec<usize>>,
}

impl GroundTruth {
    /// Fraction of all purchases that match the buyer's preferred brand or
    /// category.
    pub fn preference_share(&self) -> f64 {
        let (mut hit, mut total) = (0usize, 0usize);
        for (u, items) in self.purchases.iter().enumerate() {
            for &i in items {
                total += 1;
                if self.item_brand[i] == self.user_brand[u]
                    || self.item_category[i] == self.user_category[u]
                {
                    hit += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    }

    /// Purchases per brand.
    pub fn brand_counts(&self, brands: usize) -> Vec<usize> {
        let mut counts = vec![0; brands];
        for items in &self.purchases {
            for &i in items {
                counts[self.item_brand[i]] += 1;
            }
        }
        counts
    }
}

fn check(spec: &SynthSpec) -> Result<()> {
    let positive = [
        ("users", spec.users),
        ("items", spec.items),
        ("brands", spec.brands),
        ("categories", spec.categories),
        ("features", spec.features),
        ("purchases_per_user", spec.purchases_per_user),
    ];
    if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
        return Err(Error::Generator(format!("`{name}` must be positive")));
    }
    if spec.purchases_per_user > spec.items {
        return Err(Error::Generator(format!(
            "{} purchases per user requested but only {} items exist",
            spec.purchases_per_user, spec.items
        )));
    }
    if spec.features_per_item > spec.features || spec.mentions_per_user > spec.features {
        return Err(Error::Generator(
            "more features per entity than features".into(),
        ));
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(spec.boost > 0.0) || !(0.0..=1.0).contains(&spec.affinity) {
        return Err(Error::Generator(
            "boost must be positive and affinity in [0, 1]".into(),
        ));
    }
    Ok(())
}

/// Draws `k` distinct indices with probability proportional to `weights`,
/// one at a time.
fn weighted_without_replacement(weights: &[f64], k: usize, rng: &mut Rng) -> Vec<usize> {
    let mut w = weights.to_vec();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = w.iter().sum();
        let mut x = rng.gen::<f64>() * total;
        let mut pick = w
            .iter()
            .rposition(|&v| v > 0.0)
            .expect("positive weight left");
        for (i, &v) in w.iter().enumerate() {
            if v > 0.0 && x < v {
                pick = i;
                break;
            }
            x -= v;
        }
        out.push(pick);
        w[pick] = 0.0;
    }
    out.sort_unstable();
    out
}

fn distinct(pool: &[usize], k: usize, rng: &mut Rng) -> Vec<usize> {
    let k = k.min(pool.len());
    let mut picks: Vec<usize> = rand::seq::index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picks.sort_unstable();
    picks
}

/// Generates the graph and its ground truth.
pub fn gen_synth(spec: &SynthSpec, seed: u64) -> Result<(Graph, GroundTruth)> {
    check(spec)?;
    let mut r = rng::stream(seed, "synth");
    let home = |b: usize| b % spec.categories;

    let item_brand: Vec<usize> = (0..spec.items).map(|i| i % spec.brands).collect();
    let item_category: Vec<usize> = item_brand
        .iter()
        .map(|&b| {
            if r.gen_bool(spec.affinity) {
                home(b)
            } else {
                r.gen_range(0..spec.categories)
            }
        })
        .collect();
    let user_brand: Vec<usize> = (0..spec.users)
        .map(|_| r.gen_range(0..spec.brands))
        .collect();
    let user_category: Vec<usize> = user_brand
        .iter()
        .map(|&b| {
            if r.gen_bool(spec.affinity) {
                home(b)
            } else {
                r.gen_range(0..spec.categories)
            }
        })
        .collect();
    // Features belong to the category `f % categories`.
    let by_category: Vec<Vec<usize>> = (0..spec.categories)
        .map(|c| {
            (0..spec.features)
                .filter(|f| f % spec.categories == c)
                .collect()
        })
        .collect();
    let all_features: Vec<usize> = (0..spec.features).collect();
    let feature_pool = |c: usize| -> &[usize] {
        if by_category[c].is_empty() {
            &all_features
        } else {
            &by_category[c]
        }
    };

    let purchases: Vec<Vec<usize>> = (0..spec.users)
        .map(|u| {
            let weights: Vec<f64> = (0..spec.items)
                .map(|i| {
                    let m = i32::from(item_brand[i] == user_brand[u])
                        + i32::from(item_category[i] == user_category[u]);
                    spec.boost.powi(m)
                })
                .collect();
            weighted_without_replacement(&weights, spec.purchases_per_user, &mut r)
        })
        .collect();
    let item_features: Vec<Vec<usize>> = (0..spec.items)
        .map(|i| {
            distinct(
                feature_pool(item_category[i]),
                spec.features_per_item,
                &mut r,
            )
        })
        .collect();
    let user_mentions: Vec<Vec<usize>> = (0..spec.users)
        .map(|u| {
            let c = if r.gen_bool(spec.affinity) {
                user_category[u]
            } else {
                r.gen_range(0..spec.categories)
            };
            distinct(feature_pool(c), spec.mentions_per_user, &mut r)
        })
        .collect();

    let mut b = GraphBuilder::new();
    let ut = b.add_type("user");
    let it = b.add_type("item");
    let bt = b.add_type("brand");
    let ct = b.add_type("category");
    let ft = b.add_type("feature");
    let users: Vec<usize> = (0..spec.users)
        .map(|k| b.add_entity(ut, &format!("user_{k}")).map(|e| e.global_id))
        .collect::<Result<_>>()?;
    let items: Vec<usize> = (0..spec.items)
        .map(|k| b.add_entity(it, &format!("item_{k}")).map(|e| e.global_id))
        .collect::<Result<_>>()?;
    let brands: Vec<usize> = (0..spec.brands)
        .map(|k| b.add_entity(bt, &format!("brand_{k}")).map(|e| e.global_id))
        .collect::<Result<_>>()?;
    let cats: Vec<usize> = (0..spec.categories)
        .map(|k| {
            b.add_entity(ct, &format!("category_{k}"))
                .map(|e| e.global_id)
        })
        .collect::<Result<_>>()?;
    let feats: Vec<usize> = (0..spec.features)
        .map(|k| {
            b.add_entity(ft, &format!("feature_{k}"))
                .map(|e| e.global_id)
        })
        .collect::<Result<_>>()?;

    let pairs = [
        ("purchase", ut, it, "purchase_by"),
        ("produced_by", it, bt, "produces"),
        ("belongs_to", it, ct, "contains"),
        ("described_by", it, ft, "describes"),
        ("mention", ut, ft, "mentioned_by"),
    ];
    let mut rel = Vec::new();
    for (fwd, h, t, back) in pairs {
        rel.push((b.add_relation(fwd, h, t)?, b.add_relation(back, t, h)?));
    }
    let both = |b: &mut GraphBuilder, k: usize, h: usize, t: usize| -> Result<()> {
        b.add_triple(h, rel[k].0, t)?;
        b.add_triple(t, rel[k].1, h)?;
        Ok(())
    };
    for (u, bought) in purchases.iter().enumerate() {
        for &i in bought {
            both(&mut b, 0, users[u], items[i])?;
        }
    }
    for i in 0..spec.items {
        both(&mut b, 1, items[i], brands[item_brand[i]])?;
        both(&mut b, 2, items[i], cats[item_category[i]])?;
        for &f in &item_features[i] {
            both(&mut b, 3, items[i], feats[f])?;
        }
    }
    for (u, ms) in user_mentions.iter().enumerate() {
        for &f in ms {
            both(&mut b, 4, users[u], feats[f])?;
        }
    }
    let g = b.build("purchase")?;
    Ok((
        g,
        GroundTruth {
            user_brand,
            user_category,
            item_brand,
            item_category,
            purchases,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_preferences_dominate() {
        let (g, truth) = gen_synth(&SynthSpec::default(), 7).unwrap();
        assert_eq!(g.users().len(), 200);
        assert_eq!(g.items().len(), 300);
        assert!(
            truth.preference_share() >= 0.7,
            "{}",
            truth.preference_share()
        );
        for &u in g.users() {
            assert_eq!(g.interactions_of(g.entity(u)).len(), 10);
        }
    }

    #[test]
    fn no_boost_is_brand_uniform() {
        // Chi-square over 10 brands (9 degrees of freedom); 27.88 is the
        // 0.999 quantile.
        let spec = SynthSpec {
            boost: 1.0,
            ..Default::default()
        };
        let (_, truth) = gen_synth(&spec, 11).unwrap();
        let counts = truth.brand_counts(spec.brands);
        let total: usize = counts.iter().sum();
        let expect = total as f64 / spec.brands as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expect).powi(2) / expect)
            .sum();
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }

    #[test]
    fn deterministic_and_validated() {
        let spec = SynthSpec {
            users: 20,
            items: 30,
            ..Default::default()
        };
        assert_eq!(gen_synth(&spec, 1).unwrap(), gen_synth(&spec, 1).unwrap());
        assert_ne!(
            gen_synth(&spec, 1).unwrap().0,
            gen_synth(&spec, 2).unwrap().0
        );
        let bad = SynthSpec {
            purchases_per_user: 31,
            ..spec.clone()
        };
        assert!(matches!(gen_synth(&bad, 0), Err(Error::Generator(_))));
        let bad = SynthSpec { brands: 0, ..spec };
        assert!(gen_synth(&bad, 0).is_err());
    }

    #[test]
    fn both_directions_emitted() {
        let spec = SynthSpec {
            users: 10,
            items: 20,
            ..Default::default()
        };
        let (g, _) = gen_synth(&spec, 3).unwrap();
        for (fwd, back) in [
            ("purchase", "purchase_by"),
            ("mention", "mentioned_by"),
            ("produced_by", "produces"),
        ] {
            let (f, b) = (g.relation_id(fwd).unwrap(), g.relation_id(back).unwrap());
            for (h, r, t) in g.triples() {
                if r == f {
                    assert!(g.has_triple(g.entity(t), b, g.entity(h)));
                }
            }
        }
    }
}
