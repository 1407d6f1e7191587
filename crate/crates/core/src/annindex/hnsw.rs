use std::cell::RefCell;
use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::dot_f32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HnswParams {
    /// Links per node on the upper layers; layer 0 keeps twice as many.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams {
            m: 24,
            ef_construction: 100,
            ef_search: 800,
        }
    }
}

/// Candidate ordered by similarity, then by lower node id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    sim: f32,
    node: u32,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Generation-stamped visited set reused across searches on a thread.
struct Visited {
    stamp: u32,
    marks: Vec<u32>,
}

impl Visited {
    fn reset(&mut self, n: usize) {
        if self.marks.len() < n {
            self.marks.resize(n, 0);
        }
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.stamp = 1;
        }
    }

    /// Marks `i`, returning whether it was unvisited.
    fn insert(&mut self, i: u32) -> bool {
        let m = &mut self.marks[i as usize];
        if *m == self.stamp {
            false
        } else {
            *m = self.stamp;
            true
        }
    }
}

thread_local! {
    static VISITED: RefCell<Visited> = const { RefCell::new(Visited { stamp: 0, marks: Vec::new() }) };
}

/// Hierarchical navigable small world graph over unit vectors, maximizing
/// dot product. Construction is sequential and driven by one seeded RNG, so
/// the graph is a pure function of (vectors, params, seed).
#[derive(Debug, Clone, PartialEq)]
pub struct Hnsw {
    pub(crate) params: HnswParams,
    pub(crate) entry: u32,
    pub(crate) max_level: usize,
    /// `links[node][level]`.
    pub(crate) links: Vec<Vec<Vec<u32>>>,
}

impl Hnsw {
    pub fn build(vectors: &[f32], dim: usize, params: HnswParams, seed: u64) -> Hnsw {
        let n = vectors.len() / dim.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ml = 1.0 / (params.m.max(2) as f64).ln();
        let mut g = Hnsw {
            params,
            entry: 0,
            max_level: 0,
            links: Vec::with_capacity(n),
        };
        let row = |i: u32| &vectors[i as usize * dim..(i as usize + 1) * dim];
        for i in 0..n as u32 {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            let level = ((-u.ln() * ml).floor() as usize).min(16);
            g.links.push(vec![Vec::new(); level + 1]);
            if i == 0 {
                g.max_level = level;
                continue;
            }
            let q = row(i);
            let mut ep = vec![g.entry];
            for l in (level + 1..=g.max_level).rev() {
                ep = vec![g.search_layer(q, &ep, 1, l, vectors, dim, n)[0].node];
            }
            for l in (0..=level.min(g.max_level)).rev() {
                let found = g.search_layer(q, &ep, params.ef_construction, l, vectors, dim, n);
                let cap = g.cap(l);
                let chosen = select_neighbors(&found, params.m, |a, b| dot_f32(row(a), row(b)));
                g.links[i as usize][l] = chosen.clone();
                for &nb in &chosen {
                    let list = &mut g.links[nb as usize][l];
                    list.push(i);
                    if list.len() > cap {
                        let base = row(nb);
                        let mut cands: Vec<Cand> = list
                            .iter()
                            .map(|&c| Cand {
                                sim: dot_f32(base, row(c)),
                                node: c,
                            })
                            .collect();
                        cands.sort_by(|a, b| b.cmp(a));
                        *list = select_neighbors(&cands, cap, |a, b| dot_f32(row(a), row(b)));
                    }
                }
                ep = found.iter().map(|c| c.node).collect();
            }
            if level > g.max_level {
                g.max_level = level;
                g.entry = i;
            }
        }
        g
    }

    fn cap(&self, level: usize) -> usize {
        if level == 0 {
            self.params.m * 2
        } else {
            self.params.m
        }
    }

    /// Best-first search on one layer; returns up to `ef` candidates sorted
    /// by similarity descending.
    #[allow(clippy::too_many_arguments)]
    fn search_layer(&self, q: &[f32], entry: &[u32], ef: usize, level: usize, vectors: &[f32], dim: usize, n: usize) -> Vec<Cand> {
        VISITED.with(|v| {
            let mut visited = v.borrow_mut();
            visited.reset(n);
            let sim = |i: u32| dot_f32(q, &vectors[i as usize * dim..(i as usize + 1) * dim]);
            let mut frontier: BinaryHeap<Cand> = BinaryHeap::new();
            let mut best: BinaryHeap<Reverse<Cand>> = BinaryHeap::new();
            for &e in entry {
                if visited.insert(e) {
                    let c = Cand { sim: sim(e), node: e };
                    frontier.push(c);
                    best.push(Reverse(c));
                }
            }
            while best.len() > ef {
                best.pop();
            }
            while let Some(c) = frontier.pop() {
                let worst = best.peek().map(|r| r.0.sim).unwrap_or(f32::NEG_INFINITY);
                if c.sim < worst && best.len() >= ef {
                    break;
                }
                let Some(nbrs) = self.links[c.node as usize].get(level) else { continue };
                for &nb in nbrs {
                    if !visited.insert(nb) {
                        continue;
                    }
                    let s = sim(nb);
                    let worst = best.peek().map(|r| r.0.sim).unwrap_or(f32::NEG_INFINITY);
                    if best.len() < ef || s > worst {
                        let cand = Cand { sim: s, node: nb };
                        frontier.push(cand);
                        best.push(Reverse(cand));
                        if best.len() > ef {
                            best.pop();
                        }
                    }
                }
            }
            let mut out: Vec<Cand> = best.into_iter().map(|r| r.0).collect();
            out.sort_by(|a, b| b.cmp(a));
            out
        })
    }

    /// Up to `ef` candidate node ids for `q`, most similar first.
    pub fn search(&self, q: &[f32], ef: usize, vectors: &[f32], dim: usize) -> Vec<u32> {
        let n = self.links.len();
        if n == 0 {
            return Vec::new();
        }
        let mut ep = vec![self.entry];
        for l in (1..=self.max_level).rev() {
            ep = vec![self.search_layer(q, &ep, 1, l, vectors, dim, n)[0].node];
        }
        self.search_layer(q, &ep, ef.max(1), 0, vectors, dim, n)
            .into_iter()
            .map(|c| c.node)
            .collect()
    }
}

/// Diversity heuristic: keep a candidate only if it is closer to the base
/// than to every neighbor already kept; top up with the best rejected ones.
fn select_neighbors(sorted: &[Cand], m: usize, sim: impl Fn(u32, u32) -> f32) -> Vec<u32> {
    let mut kept: Vec<u32> = Vec::with_capacity(m);
    let mut rejected = Vec::new();
    for c in sorted {
        if kept.len() >= m {
            break;
        }
        if kept.iter().all(|&k| sim(c.node, k) < c.sim) {
            kept.push(c.node);
        } else {
            rejected.push(c.node);
        }
    }
    for r in rejected {
        if kept.len() >= m {
            break;
        }
        kept.push(r);
    }
    kept
}
