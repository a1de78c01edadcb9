//! Small identifier newtypes shared across modules.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::NodeId;

/// An access point. Access points are simulation nodes, so the id is the
/// node id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WapId(pub u32);

impl WapId {
    pub fn node(self) -> NodeId {
        NodeId(self.0)
    }
}

impl From<NodeId> for WapId {
    fn from(n: NodeId) -> Self {
        WapId(n.0)
    }
}

impl fmt::Display for WapId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "wap{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowId(pub u32);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}
