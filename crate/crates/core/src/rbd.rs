//! Reliability block diagrams and modes of operation.
//!
//! The top layer of the model combines subsystem reliabilities through a
//! series / parallel / k-out-of-n structure. Each admitted mode of operation
//! has its own diagram; the mode is tracked from power-on and shutdown events.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::conditioning::{DiagnosticsEvent, EventKind};
use crate::error::{Error, Result};
use crate::relcurve::ReliabilityCurve;
use crate::SubsystemId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RbdNode {
    Leaf(SubsystemId),
    Series(Vec<RbdNode>),
    Parallel(Vec<RbdNode>),
    KOfN { k: usize, children: Vec<RbdNode> },
}

impl RbdNode {
    pub fn leaf(id: u32) -> Self {
        RbdNode::Leaf(SubsystemId(id))
    }

    pub fn k_of_n(k: usize, children: Vec<RbdNode>) -> Self {
        RbdNode::KOfN { k, children }
    }

    /// Checks arities, k bounds, and that no subsystem appears twice.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        self.validate_into(&mut seen)
    }

    fn validate_into(&self, seen: &mut BTreeSet<SubsystemId>) -> Result<()> {
        let children = match self {
            RbdNode::Leaf(id) => {
                if !seen.insert(*id) {
                    return Err(Error::InvalidRbd(format!("leaf {id} appears more than once")));
                }
                return Ok(());
            }
            RbdNode::Series(c) | RbdNode::Parallel(c) => c,
            RbdNode::KOfN { k, children } => {
                if *k < 1 || *k > children.len() {
                    return Err(Error::InvalidRbd(format!(
                        "k = {k} outside 1..={} for a k-out-of-n block",
                        children.len()
                    )));
                }
                children
            }
        };
        if children.is_empty() {
            return Err(Error::InvalidRbd("composite block without children".into()));
        }
        children.iter().try_for_each(|c| c.validate_into(seen))
    }

    /// Subsystems referenced by the diagram, in tree order.
    pub fn leaves(&self) -> Vec<SubsystemId> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<SubsystemId>) {
        match self {
            RbdNode::Leaf(id) => out.push(*id),
            RbdNode::Series(c) | RbdNode::Parallel(c) | RbdNode::KOfN { children: c, .. } => {
                c.iter().for_each(|n| n.collect_leaves(out))
            }
        }
    }

    /// System reliability from independent leaf reliabilities.
    pub fn eval_point(&self, leaf_values: &BTreeMap<SubsystemId, f64>) -> Result<f64> {
        self.eval_with(&|id| leaf_values.get(&id).copied())
    }

    fn eval_with(&self, lookup: &dyn Fn(SubsystemId) -> Option<f64>) -> Result<f64> {
        let v = match self {
            RbdNode::Leaf(id) => {
                let v = lookup(*id).ok_or(Error::UnresolvedLeaf(*id))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidProbability {
                        what: "leaf reliability",
                        value: v,
                    });
                }
                v
            }
            RbdNode::Series(c) => c
                .iter()
                .try_fold(1.0, |acc, n| Ok::<_, Error>(acc * n.eval_with(lookup)?))?,
            RbdNode::Parallel(c) => {
                1.0 - c
                    .iter()
                    .try_fold(1.0, |acc, n| Ok::<_, Error>(acc * (1.0 - n.eval_with(lookup)?)))?
            }
            RbdNode::KOfN { k, children } => {
                let probs = children
                    .iter()
                    .map(|n| n.eval_with(lookup))
                    .collect::<Result<Vec<_>>>()?;
                at_least_k(*k, &probs)
            }
        };
        Ok(v.clamp(0.0, 1.0))
    }

    /// Pointwise evaluation over curves sharing one grid.
    pub fn eval_curve(
        &self,
        leaf_curves: &BTreeMap<SubsystemId, ReliabilityCurve>,
    ) -> Result<ReliabilityCurve> {
        let leaves = self.leaves();
        let first = leaves
            .first()
            .and_then(|id| leaf_curves.get(id))
            .ok_or_else(|| Error::UnresolvedLeaf(leaves.first().copied().unwrap_or(SubsystemId(0))))?;
        let grid = *first.grid();
        for id in &leaves {
            let c = leaf_curves.get(id).ok_or(Error::UnresolvedLeaf(*id))?;
            if c.grid() != &grid {
                return Err(Error::IncompatibleGrid(format!(
                    "curve for {id} does not share the grid of {}",
                    leaves[0]
                )));
            }
        }
        let values = (0..grid.len())
            .map(|i| self.eval_with(&|id| leaf_curves.get(&id).map(|c| c.sample(i))))
            .collect::<Result<Vec<_>>>()?;
        ReliabilityCurve::new(grid, values)
    }
}

/// Probability that at least `k` of the independent components work.
///
/// Builds the distribution of the number of working components one child at a time.
fn at_least_k(k: usize, probs: &[f64]) -> f64 {
    let mut dist = vec![0.0; probs.len() + 1];
    dist[0] = 1.0;
    for (n, &p) in probs.iter().enumerate() {
        for j in (0..=n + 1).rev() {
            let up = if j > 0 { dist[j - 1] * p } else { 0.0 };
            dist[j] = dist[j] * (1.0 - p) + up;
        }
    }
    dist[k..].iter().sum()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ModeId {
    Operating,
    Degraded { down: Vec<SubsystemId> },
    /// Fewer than `k` subsystems working: no diagram applies.
    SystemLoss { down: Vec<SubsystemId> },
}

impl ModeId {
    pub fn is_operating(&self) -> bool {
        matches!(self, ModeId::Operating)
    }

    pub fn label(&self) -> String {
        let ids = |d: &[SubsystemId]| d.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("+");
        match self {
            ModeId::Operating => "operating".into(),
            ModeId::Degraded { down } => format!("degraded({})", ids(down)),
            ModeId::SystemLoss { down } => format!("system_loss({})", ids(down)),
        }
    }
}

/// The current mode and its diagram.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeOfOperation {
    pub id: ModeId,
    pub down: BTreeSet<SubsystemId>,
    pub rbd: Option<RbdNode>,
}

impl ModeOfOperation {
    pub fn is_operating(&self) -> bool {
        self.id.is_operating()
    }
}

/// Mode catalogue of a k-out-of-n redundant system.
///
/// All subsystems up selects the k-out-of-n diagram. With some down but at
/// least `k` left, the diagram covers only the working ones (a series block
/// when exactly `k` remain). Below `k` the system is lost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeModel {
    subsystems: Vec<SubsystemId>,
    required: usize,
}

impl ModeModel {
    pub fn new(subsystems: Vec<SubsystemId>, required: usize) -> Result<Self> {
        let distinct: BTreeSet<_> = subsystems.iter().collect();
        if distinct.len() != subsystems.len() {
            return Err(Error::InvalidRbd("duplicate subsystem identifiers".into()));
        }
        if required < 1 || required > subsystems.len() {
            return Err(Error::InvalidRbd(format!(
                "required = {required} outside 1..={}",
                subsystems.len()
            )));
        }
        let mut subsystems = subsystems;
        subsystems.sort();
        Ok(Self {
            subsystems,
            required,
        })
    }

    /// The case-study layout: 2-out-of-3.
    pub fn two_out_of_three() -> Self {
        Self::new(vec![SubsystemId(1), SubsystemId(2), SubsystemId(3)], 2)
            .expect("2oo3 is a valid layout")
    }

    pub fn subsystems(&self) -> &[SubsystemId] {
        &self.subsystems
    }

    pub fn required(&self) -> usize {
        self.required
    }

    pub fn initial(&self) -> ModeOfOperation {
        self.mode_for(BTreeSet::new())
    }

    pub fn mode_for(&self, down: BTreeSet<SubsystemId>) -> ModeOfOperation {
        let up: Vec<_> = self
            .subsystems
            .iter()
            .copied()
            .filter(|s| !down.contains(s))
            .collect();
        let down_list: Vec<_> = down.iter().copied().collect();
        let leaves = || up.iter().map(|&s| RbdNode::Leaf(s)).collect::<Vec<_>>();
        let (id, rbd) = if down.is_empty() {
            (ModeId::Operating, Some(RbdNode::k_of_n(self.required, leaves())))
        } else if up.len() < self.required {
            (ModeId::SystemLoss { down: down_list }, None)
        } else if up.len() == self.required {
            (ModeId::Degraded { down: down_list }, Some(RbdNode::Series(leaves())))
        } else {
            (
                ModeId::Degraded { down: down_list },
                Some(RbdNode::k_of_n(self.required, leaves())),
            )
        };
        ModeOfOperation { id, down, rbd }
    }

    /// Folds the window's events into the mode.
    ///
    /// Any shutdown or startup timeout takes the subsystem out, a power-on
    /// brings it back. Entering system loss is reported through
    /// [`ModeUpdate::system_loss_at`].
    pub fn select_mode(&self, current: &ModeOfOperation, events: &[DiagnosticsEvent]) -> ModeUpdate {
        let mut down = current.down.clone();
        let mut lost = matches!(current.id, ModeId::SystemLoss { .. });
        let mut system_loss_at = None;
        for ev in events {
            if !self.subsystems.contains(&ev.subsystem) {
                continue;
            }
            match ev.kind {
                EventKind::PowerOn => {
                    down.remove(&ev.subsystem);
                }
                EventKind::Shutdown { .. } | EventKind::StartupTimeout => {
                    down.insert(ev.subsystem);
                }
            }
            let now_lost = self.subsystems.len() - down.len() < self.required;
            if now_lost && !lost && system_loss_at.is_none() {
                system_loss_at = Some(ev.t);
            }
            lost = now_lost;
        }
        ModeUpdate {
            mode: self.mode_for(down),
            system_loss_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeUpdate {
    pub mode: ModeOfOperation,
    /// Time of the event that dropped the system below `k` working subsystems.
    pub system_loss_at: Option<f64>,
}
