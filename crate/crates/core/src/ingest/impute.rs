use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::artifact::{Reader, Writer};
use crate::domain::Post;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericRule {
    Median,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoricalRule {
    Mode,
    /// Boolean fields fall back to `false`.
    Sentinel,
}

/// Numeric fields use `numeric`, `is_pro` uses `categorical`, geo always
/// becomes (0, 0) with a missing flag. Tags and captions default to empty at
/// parse time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputationPolicy {
    pub numeric: NumericRule,
    pub categorical: CategoricalRule,
}

impl Default for ImputationPolicy {
    fn default() -> Self {
        ImputationPolicy {
            numeric: NumericRule::Median,
            categorical: CategoricalRule::Sentinel,
        }
    }
}

const NUMERIC_FIELDS: [&str; 4] = ["geo_accuracy", "followers", "following", "user_post_count"];

fn numeric_value(p: &Post, field: &str) -> Option<f64> {
    match field {
        "geo_accuracy" => p.geo_accuracy.map(|v| v as f64),
        "followers" => p.followers.map(|v| v as f64),
        "following" => p.following.map(|v| v as f64),
        "user_post_count" => p.user_post_count.map(|v| v as f64),
        _ => unreachable!("unknown numeric field {field}"),
    }
}

/// Fill values, fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationStats {
    /// Per numeric field, in `NUMERIC_FIELDS` order.
    pub numeric: Vec<f64>,
    pub is_pro: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ImputationReport {
    pub counts: BTreeMap<String, usize>,
}

impl ImputationReport {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

#[derive(Debug, Clone)]
pub struct Imputed {
    pub posts: Vec<Post>,
    /// 1 where latitude/longitude were absent and replaced by (0, 0).
    pub geo_missing: Vec<bool>,
    pub report: ImputationReport,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

impl ImputationStats {
    /// Statistics from the rows where `train[i]` is set.
    pub fn fit(posts: &[Post], train: &[bool], policy: &ImputationPolicy) -> Result<Self> {
        assert_eq!(posts.len(), train.len());
        let rows = || posts.iter().zip(train).filter(|(_, &t)| t).map(|(p, _)| p);
        let mut numeric = Vec::with_capacity(NUMERIC_FIELDS.len());
        for field in NUMERIC_FIELDS {
            let v = match policy.numeric {
                NumericRule::Constant(c) => c,
                NumericRule::Median => {
                    let xs: Vec<f64> = rows().filter_map(|p| numeric_value(p, field)).collect();
                    if xs.is_empty() {
                        return Err(Error::Unimputable(field.to_string()));
                    }
                    median(xs)
                }
            };
            numeric.push(v);
        }
        let is_pro = match policy.categorical {
            CategoricalRule::Sentinel => false,
            CategoricalRule::Mode => {
                let (t, f) = rows().fold((0usize, 0usize), |(t, f), p| match p.is_pro {
                    Some(true) => (t + 1, f),
                    Some(false) => (t, f + 1),
                    None => (t, f),
                });
                if t + f == 0 {
                    return Err(Error::Unimputable("is_pro".into()));
                }
                t > f
            }
        };
        Ok(ImputationStats { numeric, is_pro })
    }

    pub fn apply(&self, posts: &[Post]) -> Imputed {
        let mut counts: BTreeMap<String, usize> = NUMERIC_FIELDS
            .iter()
            .chain(&["is_pro", "geo"])
            .map(|f| (f.to_string(), 0))
            .collect();
        let mut geo_missing = Vec::with_capacity(posts.len());
        let out = posts
            .iter()
            .map(|p| {
                let mut q = p.clone();
                let fill = |v: f64| v.round().max(0.0);
                if q.geo_accuracy.is_none() {
                    q.geo_accuracy = Some(fill(self.numeric[0]) as i64);
                    *counts.get_mut("geo_accuracy").unwrap() += 1;
                }
                if q.followers.is_none() {
                    q.followers = Some(fill(self.numeric[1]) as u64);
                    *counts.get_mut("followers").unwrap() += 1;
                }
                if q.following.is_none() {
                    q.following = Some(fill(self.numeric[2]) as u64);
                    *counts.get_mut("following").unwrap() += 1;
                }
                if q.user_post_count.is_none() {
                    q.user_post_count = Some(fill(self.numeric[3]) as u64);
                    *counts.get_mut("user_post_count").unwrap() += 1;
                }
                if q.is_pro.is_none() {
                    q.is_pro = Some(self.is_pro);
                    *counts.get_mut("is_pro").unwrap() += 1;
                }
                let missing = !p.has_geo();
                if missing {
                    q.latitude = Some(0.0);
                    q.longitude = Some(0.0);
                    *counts.get_mut("geo").unwrap() += 1;
                }
                geo_missing.push(missing);
                q
            })
            .collect();
        Imputed {
            posts: out,
            geo_missing,
            report: ImputationReport { counts },
        }
    }

    pub fn write(&self, w: &mut Writer) {
        w.f64s(&self.numeric);
        w.bool(self.is_pro);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        let numeric = r.f64s()?;
        if numeric.len() != NUMERIC_FIELDS.len() {
            return Err(r.err("imputation stats have wrong field count"));
        }
        Ok(ImputationStats {
            numeric,
            is_pro: r.bool()?,
        })
    }
}

/// Fit fill values on the training rows and apply them to every row.
pub fn impute(posts: &[Post], policy: &ImputationPolicy, train: &[bool]) -> Result<Imputed> {
    Ok(ImputationStats::fit(posts, train, policy)?.apply(posts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(id: &str, followers: Option<u64>) -> Post {
        Post {
            post_id: id.into(),
            followers,
            following: Some(1),
            user_post_count: Some(1),
            geo_accuracy: Some(3),
            is_pro: Some(false),
            latitude: Some(1.0),
            longitude: Some(2.0),
            ..Default::default()
        }
    }

    #[test]
    fn median_of_training_followers() {
        let ps = vec![
            post("a", Some(10)),
            post("b", Some(20)),
            post("c", Some(30)),
            post("d", None),
        ];
        let out = impute(&ps, &ImputationPolicy::default(), &[true; 4]).unwrap();
        assert_eq!(out.posts[3].followers, Some(20));
        assert_eq!(out.report.counts["followers"], 1);
    }

    #[test]
    fn nothing_missing_is_identity() {
        let ps = vec![post("a", Some(1)), post("b", Some(2))];
        let out = impute(&ps, &ImputationPolicy::default(), &[true, true]).unwrap();
        assert_eq!(out.posts, ps);
        assert_eq!(out.report.total(), 0);
        assert_eq!(out.geo_missing, [false, false]);
    }

    #[test]
    fn geo_flag_matches_original_absence() {
        let mut ps: Vec<Post> = (0..20).map(|i| post(&format!("p{i}"), Some(i))).collect();
        for (i, p) in ps.iter_mut().enumerate() {
            if i % 3 == 0 {
                p.latitude = None;
            }
            if i % 7 == 0 {
                p.longitude = None;
            }
        }
        let out = impute(&ps, &ImputationPolicy::default(), &[true; 20]).unwrap();
        for (i, (orig, imp)) in ps.iter().zip(&out.posts).enumerate() {
            let absent = orig.latitude.is_none() || orig.longitude.is_none();
            assert_eq!(out.geo_missing[i], absent, "row {i}");
            if absent {
                assert_eq!((imp.latitude, imp.longitude), (Some(0.0), Some(0.0)));
            } else {
                assert_eq!((imp.latitude, imp.longitude), (orig.latitude, orig.longitude));
            }
        }
    }

    #[test]
    fn stats_come_from_training_rows_only() {
        // a sentinel value in a non-training row must not reach the median
        let ps = vec![
            post("a", Some(5)),
            post("b", Some(7)),
            post("c", Some(1_000_000)),
            post("d", None),
        ];
        let out = impute(&ps, &ImputationPolicy::default(), &[true, true, false, false]).unwrap();
        assert_eq!(out.posts[3].followers, Some(6));
    }

    #[test]
    fn unimputable_when_absent_in_all_training_rows() {
        let ps = vec![post("a", None), post("b", None)];
        assert!(matches!(
            impute(&ps, &ImputationPolicy::default(), &[true, true]),
            Err(Error::Unimputable(f)) if f == "followers"
        ));
        let constant = ImputationPolicy {
            numeric: NumericRule::Constant(4.0),
            ..Default::default()
        };
        let out = impute(&ps, &constant, &[true, true]).unwrap();
        assert_eq!(out.posts[0].followers, Some(4));
    }

    #[test]
    fn categorical_rules() {
        let mut ps = vec![post("a", Some(1)), post("b", Some(1)), post("c", Some(1))];
        ps[0].is_pro = Some(true);
        ps[1].is_pro = Some(true);
        ps[2].is_pro = None;
        let mode = ImputationPolicy {
            categorical: CategoricalRule::Mode,
            ..Default::default()
        };
        assert_eq!(impute(&ps, &mode, &[true; 3]).unwrap().posts[2].is_pro, Some(true));
        assert_eq!(
            impute(&ps, &ImputationPolicy::default(), &[true; 3]).unwrap().posts[2].is_pro,
            Some(false)
        );
    }

    #[test]
    fn present_values_never_change() {
        let mut r = crate::rng::RngSeed(11).rng();
        let ps: Vec<Post> = (0..50)
            .map(|i| {
                let mut p = post(&format!("p{i}"), Some(r.below(1000) as u64));
                if r.uniform() < 0.3 {
                    p.followers = None;
                }
                if r.uniform() < 0.3 {
                    p.following = None;
                }
                if r.uniform() < 0.3 {
                    p.is_pro = None;
                }
                p
            })
            .collect();
        let train: Vec<bool> = (0..50).map(|i| i % 2 == 0).collect();
        let out = impute(&ps, &ImputationPolicy::default(), &train).unwrap();
        for (a, b) in ps.iter().zip(&out.posts) {
            if a.followers.is_some() {
                assert_eq!(a.followers, b.followers);
            }
            if a.following.is_some() {
                assert_eq!(a.following, b.following);
            }
            if a.is_pro.is_some() {
                assert_eq!(a.is_pro, b.is_pro);
            }
            assert_eq!(a.caption, b.caption);
        }
    }
}
