//! Regime trees: binary partitions of the state-variable space with a GAS
//! coefficient block in every leaf and one shared ν.

mod grow;

pub(crate) use grow::sorted_quantiles;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::engine::{self, FilterOutput, GasParams, LeafParams, ModelSpec};
use crate::error::{Error, Result};
use crate::score::Family;
use crate::series::SeriesView;

pub use grow::{
    evaluate_candidate_split, grow, CandidateFit, threshold_grid, threshold_grid_at, tune_depth, GrowConfig,
    GrowOutput, GrowthRecord, QuantileGrid, TuneInput, TuneResult,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    /// `variable <= threshold` goes to `left`.
    Split {
        variable: String,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { leaf: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeTree {
    pub family: Family,
    /// Arena of nodes; index 0 is the root.
    pub nodes: Vec<Node>,
    pub leaves: Vec<LeafParams>,
    #[serde(default)]
    pub nu: Option<f64>,
}

/// Tree with variable names resolved to column positions.
#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    nodes: Vec<CNode>,
}

#[derive(Debug, Clone, Copy)]
enum CNode {
    Split {
        col: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(u32),
}

impl Compiled {
    #[inline]
    pub(crate) fn route(&self, row: &[f64]) -> u32 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                CNode::Leaf(l) => return l,
                CNode::Split {
                    col,
                    threshold,
                    left,
                    right,
                } => i = if row[col] <= threshold { left } else { right },
            }
        }
    }
}

impl RegimeTree {
    /// Depth-0 tree holding the baseline parameters.
    pub fn single(family: Family, params: &GasParams) -> Self {
        Self {
            family,
            nodes: vec![Node::Leaf { leaf: 0 }],
            leaves: params.leaves.clone(),
            nu: params.nu,
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn params(&self) -> GasParams {
        GasParams {
            leaves: self.leaves.clone(),
            nu: self.nu,
        }
    }

    pub fn set_params(&mut self, p: &GasParams) {
        self.leaves.clone_from(&p.leaves);
        self.nu = p.nu;
    }

    /// Maximum number of splits on a root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn variables(&self) -> BTreeSet<String> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { variable, .. } => Some(variable.clone()),
                Node::Leaf { .. } => None,
            })
            .collect()
    }

    /// Replaces leaf `leaf` by a split on `variable`; the left child keeps the
    /// leaf id and the right child gets the next free id.
    pub(crate) fn split_leaf(&mut self, leaf: usize, variable: &str, threshold: f64, right_params: LeafParams) {
        let pos = self
            .nodes
            .iter()
            .position(|n| matches!(n, Node::Leaf { leaf: l } if *l == leaf))
            .expect("leaf exists");
        let new_leaf = self.leaves.len();
        let left = self.nodes.len();
        self.nodes.push(Node::Leaf { leaf });
        self.nodes.push(Node::Leaf { leaf: new_leaf });
        self.nodes[pos] = Node::Split {
            variable: variable.to_string(),
            threshold,
            left,
            right: left + 1,
        };
        self.leaves.push(right_params);
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidParams("tree has no nodes".into()));
        }
        let mut seen_leaf = vec![false; self.leaves.len()];
        let mut visited = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() || visited[i] {
                return Err(Error::InvalidParams(format!("node {i} is missing or shared")));
            }
            visited[i] = true;
            match &self.nodes[i] {
                Node::Leaf { leaf } => {
                    if *leaf >= seen_leaf.len() || seen_leaf[*leaf] {
                        return Err(Error::InvalidParams(format!("leaf {leaf} is missing or shared")));
                    }
                    seen_leaf[*leaf] = true;
                }
                Node::Split { threshold, left, right, .. } => {
                    if threshold.is_nan() {
                        return Err(Error::InvalidParams("NaN threshold".into()));
                    }
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
        if seen_leaf.iter().any(|s| !s) {
            return Err(Error::InvalidParams("unreachable leaf parameters".into()));
        }
        self.params().validate(self.family)
    }

    pub(crate) fn compile(&self, names: &[String]) -> Result<Compiled> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n {
                Node::Leaf { leaf } => Ok(CNode::Leaf(*leaf as u32)),
                Node::Split {
                    variable,
                    threshold,
                    left,
                    right,
                } => {
                    let col = names.iter().position(|v| v == variable).ok_or_else(|| {
                        Error::MissingState {
                            variable: variable.clone(),
                            row: 0,
                        }
                    })?;
                    Ok(CNode::Split {
                        col,
                        threshold: *threshold,
                        left: *left,
                        right: *right,
                    })
                }
            })
            .collect::<Result<_>>()?;
        Ok(Compiled { nodes })
    }

    /// Leaf of one state vector; values at a threshold go left.
    pub fn assign_leaf(&self, names: &[String], row: &[f64]) -> Result<usize> {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { leaf } => return Ok(*leaf),
                Node::Split {
                    variable,
                    threshold,
                    left,
                    right,
                } => {
                    let v = names
                        .iter()
                        .position(|n| n == variable)
                        .and_then(|c| row.get(c))
                        .copied()
                        .filter(|v| !v.is_nan())
                        .ok_or_else(|| Error::MissingState {
                            variable: variable.clone(),
                            row: 0,
                        })?;
                    i = if v <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Leaf ids of every row of `z`.
    pub fn route_all(&self, names: &[String], z: &[Vec<f64>]) -> Result<Vec<u32>> {
        let compiled = self.compile(names)?;
        let used: Vec<(usize, &String)> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { variable, .. } => names.iter().position(|v| v == variable).map(|c| (c, variable)),
                Node::Leaf { .. } => None,
            })
            .collect();
        z.iter()
            .enumerate()
            .map(|(t, row)| {
                for &(c, var) in &used {
                    if row.get(c).is_none_or(|v| v.is_nan()) {
                        return Err(Error::MissingState {
                            variable: var.clone(),
                            row: t,
                        });
                    }
                }
                Ok(compiled.route(row))
            })
            .collect()
    }

    /// Filters `y` with the leaf blocks selected by `z`.
    pub fn filter(
        &self,
        y: SeriesView<'_>,
        names: &[String],
        z: &[Vec<f64>],
        f0: f64,
    ) -> Result<FilterOutput> {
        let ids = self.route_all(names, z)?;
        engine::filter(&ModelSpec::new(self.family), &self.params(), &ids, y, f0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }
}
