//! Random test instances shared by unit tests, the verification suites and
//! the benches.

use nalgebra::DMatrix;
use rand::Rng;

use crate::htensor::HTensor;
use crate::tree::{DimensionTree, TreeShape};

/// Random hierarchical tensor with entries uniform in `[-1, 1)` and ranks
/// drawn uniformly from `1..=max_rank` (capped by what the children allow).
pub fn random_htensor<R: Rng>(rng: &mut R, sizes: &[usize], max_rank: usize, shape: TreeShape) -> HTensor {
    let tree = DimensionTree::new(sizes.len(), shape).unwrap();
    let mut ranks = vec![0; tree.len()];
    for id in tree.postorder() {
        let node = tree.node(id);
        ranks[id] = if id == 0 {
            1
        } else if node.is_leaf() {
            rng.random_range(1..=max_rank.min(sizes[node.lo]))
        } else {
            let (l, r) = node.children.unwrap();
            rng.random_range(1..=max_rank.min(ranks[l] * ranks[r]))
        };
    }
    let mut frames = vec![None; tree.len()];
    let mut transfers = vec![None; tree.len()];
    for (id, node) in tree.nodes().iter().enumerate() {
        match node.children {
            None => {
                frames[id] = Some(DMatrix::from_fn(sizes[node.lo], ranks[id], |_, _| {
                    rng.random_range(-1.0..1.0)
                }))
            }
            Some((l, r)) => {
                transfers[id] = Some(DMatrix::from_fn(ranks[l] * ranks[r], ranks[id], |_, _| {
                    rng.random_range(-1.0..1.0)
                }))
            }
        }
    }
    HTensor::new(tree, sizes.to_vec(), frames, transfers).unwrap()
}

/// Random hierarchical tensor with every non-root rank equal to
/// `min(rank, n_t)`, where `n_t` bounds the rank of the node's matricization.
pub fn fixed_rank_htensor<R: Rng>(rng: &mut R, sizes: &[usize], rank: usize, shape: TreeShape) -> HTensor {
    let tree = DimensionTree::new(sizes.len(), shape).unwrap();
    let total: usize = sizes.iter().product();
    let mut ranks = vec![1; tree.len()];
    for (id, node) in tree.nodes().iter().enumerate().skip(1) {
        let inner: usize = sizes[node.lo..node.hi].iter().product();
        ranks[id] = rank.min(inner).min(total / inner);
    }
    let mut frames = vec![None; tree.len()];
    let mut transfers = vec![None; tree.len()];
    for (id, node) in tree.nodes().iter().enumerate() {
        match node.children {
            None => {
                frames[id] = Some(DMatrix::from_fn(sizes[node.lo], ranks[id], |_, _| {
                    rng.random_range(-1.0..1.0)
                }))
            }
            Some((l, r)) => {
                transfers[id] = Some(DMatrix::from_fn(ranks[l] * ranks[r], ranks[id], |_, _| {
                    rng.random_range(-1.0..1.0)
                }))
            }
        }
    }
    HTensor::new(tree, sizes.to_vec(), frames, transfers).unwrap()
}
