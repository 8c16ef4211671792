#![allow(dead_code, clippy::manual_clamp)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use contentcf::{ItemId, Rating, UserId};
use proptest::prelude::*;

/// Sparse ids so nothing can lean on ids being dense indices.
pub fn user_id(u: usize) -> u32 {
    3 * u as u32 + 1
}

pub fn item_id(i: usize) -> u32 {
    7 * i as u32 + 2
}

/// Random rating sets with up to `max_users` users and `max_items` items.
/// Always non-empty.
pub fn ratings_strategy(max_users: usize, max_items: usize) -> impl Strategy<Value = Vec<Rating>> {
    (1..=max_users, 1..=max_items, 0.15f64..0.95)
        .prop_flat_map(|(nu, ni, density)| {
            proptest::collection::vec(
                (proptest::bool::weighted(density), 1u8..=5),
                nu * ni,
            )
            .prop_map(move |cells| (ni, cells))
        })
        .prop_map(|(ni, cells)| {
            let mut out: Vec<Rating> = cells
                .iter()
                .enumerate()
                .filter(|(_, (keep, _))| *keep)
                .map(|(idx, &(_, v))| {
                    Rating::new(UserId(user_id(idx / ni)), ItemId(item_id(idx % ni)), v, 0).unwrap()
                })
                .collect();
            if out.is_empty() {
                out.push(Rating::new(UserId(user_id(0)), ItemId(item_id(0)), cells[0].1, 0).unwrap());
            }
            out
        })
}

/// Exhaustive reference implementation over a plain map.
pub struct Oracle {
    ratings: BTreeMap<u32, BTreeMap<u32, u8>>,
    means: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleNeighbor {
    pub user: u32,
    pub value: f64,
}

impl Oracle {
    pub fn new(ratings: &[Rating]) -> Self {
        let mut map: BTreeMap<u32, BTreeMap<u32, u8>> = BTreeMap::new();
        for r in ratings {
            map.entry(r.user.0).or_default().insert(r.item.0, r.value);
        }
        let means = map
            .iter()
            .map(|(&u, row)| {
                let total: u64 = row.values().map(|&v| v as u64).sum();
                (u, total as f64 / row.len() as f64)
            })
            .collect();
        Oracle { ratings: map, means }
    }

    pub fn users(&self) -> Vec<u32> {
        self.ratings.keys().copied().collect()
    }

    pub fn items(&self) -> Vec<u32> {
        let mut items: Vec<u32> = self.ratings.values().flat_map(|r| r.keys().copied()).collect();
        items.sort_unstable();
        items.dedup();
        items
    }

    pub fn mean(&self, u: u32) -> f64 {
        self.means[&u]
    }

    pub fn rating(&self, u: u32, i: u32) -> Option<u8> {
        self.ratings.get(&u).and_then(|r| r.get(&i)).copied()
    }

    /// (similarity, overlap) of `a` and `u`, `None` when they share nothing.
    pub fn similarity(&self, a: u32, u: u32, weights: Option<&BTreeMap<u32, f64>>) -> Option<(f64, usize)> {
        let (ra, ru) = (&self.ratings[&a], &self.ratings[&u]);
        let (ma, mu) = (self.mean(a), self.mean(u));
        let (mut num, mut da, mut du, mut n) = (0.0f64, 0.0f64, 0.0f64, 0usize);
        for (item, &va) in ra {
            let Some(&vu) = ru.get(item) else { continue };
            let w = weights.map_or(1.0, |w| w[item]);
            let x = w * (va as f64 - ma);
            let y = w * (vu as f64 - mu);
            num += x * y;
            da += x * x;
            du += y * y;
            n += 1;
        }
        if n == 0 {
            return None;
        }
        let raw = if da == 0.0 || du == 0.0 {
            0.0
        } else {
            let r = num / (da * du).sqrt();
            if r > 1.0 {
                1.0
            } else if r < -1.0 {
                -1.0
            } else {
                r
            }
        };
        let damp = if n > 50 { 1.0 } else { n as f64 / 50.0 };
        Some((raw * damp, n))
    }

    pub fn neighbors(
        &self,
        a: u32,
        t: u32,
        k: usize,
        weights: Option<&BTreeMap<u32, f64>>,
        min_sim: Option<f64>,
    ) -> Vec<OracleNeighbor> {
        let mut all = Vec::new();
        for (&u, row) in &self.ratings {
            if u == a || !row.contains_key(&t) {
                continue;
            }
            let Some((value, _)) = self.similarity(a, u, weights) else { continue };
            if let Some(floor) = min_sim {
                if value < floor {
                    continue;
                }
            }
            all.push(OracleNeighbor { user: u, value });
        }
        // insertion sort, value descending then user ascending
        for i in 1..all.len() {
            let mut j = i;
            while j > 0 {
                let (p, q) = (all[j - 1], all[j]);
                let swap = q.value > p.value || (q.value == p.value && q.user < p.user);
                if !swap {
                    break;
                }
                all.swap(j - 1, j);
                j -= 1;
            }
        }
        all.truncate(k);
        all
    }

    /// (prediction, fallback)
    pub fn predict(&self, a: u32, t: u32, neighbors: &[OracleNeighbor], signed: bool) -> (f64, bool) {
        let ma = self.mean(a);
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for n in neighbors {
            num += (self.rating(n.user, t).unwrap() as f64 - self.mean(n.user)) * n.value;
            den += if signed { n.value } else { n.value.abs() };
        }
        let clamp = |x: f64| x.max(1.0).min(5.0);
        if neighbors.is_empty() || den.abs() < 1e-9 {
            (clamp(ma), true)
        } else {
            (clamp(ma + num / den), false)
        }
    }
}

/// Location of the MovieLens-1M files: `ML1M_DIR`, else `data/ml-1m` at the
/// workspace root.
pub fn ml1m_dir() -> Result<PathBuf, String> {
    let dir = std::env::var_os("ML1M_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-1m"));
    if dir.join("ratings.dat").is_file() && dir.join("movies.dat").is_file() {
        Ok(dir)
    } else {
        Err(format!(
            "MovieLens-1M not found at {} (set ML1M_DIR to the directory holding ratings.dat and movies.dat)",
            dir.display()
        ))
    }
}
