//! Deterministic graph families used by tests, benchmarks and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph_io::Graph;

pub fn complete(n: usize) -> Graph {
    let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
    Graph::unweighted(n, edges).expect("valid complete graph")
}

pub fn path(n: usize) -> Graph {
    Graph::unweighted(n, (1..n).map(|i| (i - 1, i))).expect("valid path graph")
}

pub fn cycle(n: usize) -> Graph {
    Graph::unweighted(n, (0..n).map(|i| (i, (i + 1) % n))).expect("valid cycle graph")
}

/// `count` disjoint copies of `K_size`, vertices numbered block by block.
pub fn disjoint_cliques(count: usize, size: usize) -> Graph {
    let edges = (0..count).flat_map(|b| {
        let o = b * size;
        (0..size).flat_map(move |i| (i + 1..size).map(move |j| (o + i, o + j)))
    });
    Graph::unweighted(count * size, edges).expect("valid clique union")
}

/// Words of `bits` bits, adjacent when their Hamming distance is in `distances`.
pub fn hamming(bits: u32, distances: &[u32]) -> Graph {
    let n = 1usize << bits;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if distances.contains(&((i ^ j).count_ones())) {
                edges.push((i, j));
            }
        }
    }
    Graph::unweighted(n, edges).expect("valid Hamming graph")
}

/// `size`-subsets of `{0..ground}`, adjacent when they share exactly `meet` elements.
pub fn johnson(ground: u32, size: u32, meet: u32) -> Graph {
    assert!(ground <= 32, "ground set too large");
    let sets: Vec<u32> = (0..(1u64 << ground))
        .map(|m| m as u32)
        .filter(|m| m.count_ones() == size)
        .collect();
    let mut edges = Vec::new();
    for a in 0..sets.len() {
        for b in a + 1..sets.len() {
            if (sets[a] & sets[b]).count_ones() == meet {
                edges.push((a, b));
            }
        }
    }
    Graph::unweighted(sets.len(), edges).expect("valid Johnson graph")
}

/// Erdős–Rényi `G(n, p)` from a seeded stream.
pub fn gnp(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Graph::unweighted(n, edges).expect("valid random graph")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_sizes() {
        assert_eq!(complete(6).edge_count(), 15);
        assert_eq!(cycle(4).edge_count(), 4);
        assert_eq!(disjoint_cliques(2, 4).edge_count(), 12);
        assert_eq!(hamming(6, &[1]).edge_count(), 192);
        assert_eq!(hamming(6, &[1, 2, 3]).edge_count(), 1312);
        assert_eq!(hamming(9, &[8]).edge_count(), 2304);
        let j = johnson(8, 4, 3);
        assert_eq!((j.n(), j.edge_count()), (70, 560));
        let j = johnson(16, 2, 1);
        assert_eq!((j.n(), j.edge_count()), (120, 1680));
    }

    #[test]
    fn gnp_is_seeded() {
        assert_eq!(gnp(12, 0.5, 7), gnp(12, 0.5, 7));
    }
}
