//! Hierarchical navigable small-world graph over unit vectors.
//!
//! Distances are `1 - dot(a, b)`; callers normalise vectors before insertion.
//! Neighbour lists are selected with the diversity heuristic and topped up
//! with pruned candidates so every node keeps up to `M` (`2M` on layer 0)
//! links.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::rngs::StdRng;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Candidate {
    pub dist: f32,
    pub node: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub(crate) struct Graph {
    pub m: usize,
    pub ef_construction: usize,
    /// `links[node][layer]`
    pub links: Vec<Vec<Vec<u32>>>,
    pub entry: Option<u32>,
    pub max_level: usize,
}

impl Graph {
    pub fn new(m: usize, ef_construction: usize) -> Self {
        Self { m: m.max(2), ef_construction: ef_construction.max(1), links: Vec::new(), entry: None, max_level: 0 }
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            self.m * 2
        } else {
            self.m
        }
    }

    pub fn random_level(&self, rng: &mut StdRng) -> usize {
        let ml = 1.0 / (self.m as f64).ln();
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        ((-u.ln() * ml).floor() as usize).min(32)
    }

    /// Insert node `id` (must equal the current node count) whose vector is
    /// reachable through `vec_of`.
    pub fn insert<'a, F>(&mut self, id: u32, level: usize, vec_of: F)
    where
        F: Fn(u32) -> &'a [f32],
    {
        debug_assert_eq!(id as usize, self.links.len());
        self.links.push(vec![Vec::new(); level + 1]);
        let Some(mut ep) = self.entry else {
            self.entry = Some(id);
            self.max_level = level;
            return;
        };
        let q = vec_of(id);
        let dist = |n: u32| 1.0 - dot(q, vec_of(n));

        let mut ep_dist = dist(ep);
        for layer in (level + 1..=self.max_level).rev() {
            (ep, ep_dist) = self.greedy(ep, ep_dist, layer, &dist);
        }

        let mut entry_points = vec![Candidate { dist: ep_dist, node: ep }];
        for layer in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(&entry_points, self.ef_construction, layer, &dist);
            let chosen = self.select_neighbors(&found, self.max_links(layer), &vec_of);
            self.links[id as usize][layer] = chosen.iter().map(|c| c.node).collect();
            for c in &chosen {
                self.connect(c.node, id, layer, &vec_of);
            }
            entry_points = found;
        }

        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(id);
        }
    }

    fn connect<'a, F>(&mut self, from: u32, to: u32, layer: usize, vec_of: &F)
    where
        F: Fn(u32) -> &'a [f32],
    {
        let cap = self.max_links(layer);
        let list = &mut self.links[from as usize][layer];
        list.push(to);
        if list.len() <= cap {
            return;
        }
        let base = vec_of(from);
        let mut cands: Vec<Candidate> =
            list.iter().map(|&n| Candidate { dist: 1.0 - dot(base, vec_of(n)), node: n }).collect();
        cands.sort();
        let kept = self.select_neighbors(&cands, cap, vec_of);
        self.links[from as usize][layer] = kept.into_iter().map(|c| c.node).collect();
    }

    /// Diversity heuristic; `sorted` must be ascending by distance.
    fn select_neighbors<'a, F>(&self, sorted: &[Candidate], cap: usize, vec_of: &F) -> Vec<Candidate>
    where
        F: Fn(u32) -> &'a [f32],
    {
        let mut kept: Vec<Candidate> = Vec::with_capacity(cap);
        let mut pruned = Vec::new();
        for &c in sorted {
            if kept.len() >= cap {
                break;
            }
            let cv = vec_of(c.node);
            let dominated = kept.iter().any(|k| 1.0 - dot(cv, vec_of(k.node)) < c.dist);
            if dominated {
                pruned.push(c);
            } else {
                kept.push(c);
            }
        }
        for c in pruned {
            if kept.len() >= cap {
                break;
            }
            kept.push(c);
        }
        kept
    }

    fn greedy<D: Fn(u32) -> f32>(&self, mut ep: u32, mut ep_dist: f32, layer: usize, dist: &D) -> (u32, f32) {
        loop {
            let mut improved = false;
            for &n in &self.links[ep as usize][layer] {
                let d = dist(n);
                if d < ep_dist || (d == ep_dist && n < ep) {
                    ep = n;
                    ep_dist = d;
                    improved = true;
                }
            }
            if !improved {
                return (ep, ep_dist);
            }
        }
    }

    /// Beam search on one layer. Returns up to `ef` candidates, ascending.
    pub fn search_layer<D: Fn(u32) -> f32>(
        &self,
        entry_points: &[Candidate],
        ef: usize,
        layer: usize,
        dist: &D,
    ) -> Vec<Candidate> {
        let mut visited = vec![false; self.links.len()];
        let mut frontier: BinaryHeap<Reverse<Candidate>> = BinaryHeap::new();
        let mut best: BinaryHeap<Candidate> = BinaryHeap::new();
        for &c in entry_points {
            if !visited[c.node as usize] {
                visited[c.node as usize] = true;
                frontier.push(Reverse(c));
                best.push(c);
            }
        }
        while best.len() > ef {
            best.pop();
        }
        while let Some(Reverse(current)) = frontier.pop() {
            if let Some(worst) = best.peek() {
                if best.len() >= ef && current.dist > worst.dist {
                    break;
                }
            }
            for &n in &self.links[current.node as usize][layer] {
                if visited[n as usize] {
                    continue;
                }
                visited[n as usize] = true;
                let c = Candidate { dist: dist(n), node: n };
                if best.len() < ef || c < *best.peek().expect("non-empty") {
                    frontier.push(Reverse(c));
                    best.push(c);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        best.into_sorted_vec()
    }

    /// Approximate `ef` nearest neighbours of `query`.
    pub fn search<'a, F>(&self, query: &[f32], ef: usize, vec_of: F) -> Vec<Candidate>
    where
        F: Fn(u32) -> &'a [f32],
    {
        let Some(mut ep) = self.entry else {
            return Vec::new();
        };
        let dist = |n: u32| 1.0 - dot(query, vec_of(n));
        let mut ep_dist = dist(ep);
        for layer in (1..=self.max_level).rev() {
            (ep, ep_dist) = self.greedy(ep, ep_dist, layer, &dist);
        }
        self.search_layer(&[Candidate { dist: ep_dist, node: ep }], ef, 0, &dist)
    }
}
