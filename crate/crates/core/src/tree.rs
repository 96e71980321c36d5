//! Binary dimension trees over the modes `0..d`.
//!
//! Every node owns a contiguous range of modes, and leaves appear in increasing
//! mode order from left to right. The contiguity is what lets the dense
//! helpers in [`crate::htensor`] use plain column-major layouts (first mode
//! fastest) at every node.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TreeShape {
    /// Halve every mode set; the left child takes the larger half.
    #[default]
    Balanced,
    /// First child is a singleton, second child holds the remainder.
    Linear,
}

impl std::str::FromStr for TreeShape {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(TreeShape::Balanced),
            "linear" => Ok(TreeShape::Linear),
            other => invalid(format!("unknown tree shape `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    /// First mode of the node (inclusive).
    pub lo: usize,
    /// One past the last mode of the node.
    pub hi: usize,
    pub parent: Option<usize>,
    pub children: Option<(usize, usize)>,
}

impl TreeNode {
    pub fn modes(&self) -> std::ops::Range<usize> {
        self.lo..self.hi
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi == self.lo
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn contains(&self, mode: usize) -> bool {
        self.lo <= mode && mode < self.hi
    }
}

/// Nodes are stored in preorder, so the root is node 0 and every parent
/// precedes its children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionTree {
    order: usize,
    shape: TreeShape,
    nodes: Vec<TreeNode>,
    leaf_of_mode: Vec<usize>,
}

impl DimensionTree {
    pub fn new(order: usize, shape: TreeShape) -> Result<Self> {
        if order == 0 {
            return invalid("tree order must be at least 1");
        }
        let mut nodes = Vec::with_capacity(2 * order - 1);
        Self::grow(&mut nodes, 0, order, None, shape);
        let mut leaf_of_mode = vec![usize::MAX; order];
        for (id, node) in nodes.iter().enumerate() {
            if node.is_leaf() {
                leaf_of_mode[node.lo] = id;
            }
        }
        Ok(DimensionTree {
            order,
            shape,
            nodes,
            leaf_of_mode,
        })
    }

    fn grow(
        nodes: &mut Vec<TreeNode>,
        lo: usize,
        hi: usize,
        parent: Option<usize>,
        shape: TreeShape,
    ) -> usize {
        let id = nodes.len();
        nodes.push(TreeNode {
            lo,
            hi,
            parent,
            children: None,
        });
        if hi - lo > 1 {
            let mid = match shape {
                TreeShape::Balanced => lo + (hi - lo).div_ceil(2),
                TreeShape::Linear => lo + 1,
            };
            let left = Self::grow(nodes, lo, mid, Some(id), shape);
            let right = Self::grow(nodes, mid, hi, Some(id), shape);
            nodes[id].children = Some((left, right));
        }
        id
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn shape(&self) -> TreeShape {
        self.shape
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn leaf_of_mode(&self, mode: usize) -> usize {
        self.leaf_of_mode[mode]
    }

    pub fn sibling(&self, id: usize) -> Option<usize> {
        let parent = self.nodes[id].parent?;
        let (l, r) = self.nodes[parent].children.expect("parent has children");
        Some(if l == id { r } else { l })
    }

    /// Node ids in postorder (children before parents).
    pub fn postorder(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.reverse();
        order
    }

    pub fn depth(&self) -> usize {
        fn go(tree: &DimensionTree, id: usize) -> usize {
            match tree.nodes[id].children {
                None => 0,
                Some((l, r)) => 1 + go(tree, l).max(go(tree, r)),
            }
        }
        go(self, 0)
    }

    /// Checks the partition invariants; used by tests and deserialization.
    pub fn validate(&self) -> Result<()> {
        let root = &self.nodes[0];
        if root.lo != 0 || root.hi != self.order || root.parent.is_some() {
            return invalid("root must hold every mode");
        }
        let mut seen = vec![0usize; self.order];
        for (id, node) in self.nodes.iter().enumerate() {
            if node.is_empty() {
                return invalid(format!("node {id} is empty"));
            }
            match node.children {
                None => {
                    if node.len() != 1 {
                        return invalid(format!("leaf {id} holds {} modes", node.len()));
                    }
                    seen[node.lo] += 1;
                }
                Some((l, r)) => {
                    let (a, b) = (&self.nodes[l], &self.nodes[r]);
                    if a.lo != node.lo || a.hi != b.lo || b.hi != node.hi {
                        return invalid(format!("node {id} is not the union of its children"));
                    }
                    if a.parent != Some(id) || b.parent != Some(id) {
                        return invalid(format!("broken parent link below node {id}"));
                    }
                }
            }
        }
        if seen.iter().any(|&c| c != 1) {
            return invalid("every mode must appear in exactly one leaf");
        }
        Ok(())
    }
}
