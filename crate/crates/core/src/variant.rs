//! Ablation registry.
//!
//! Each variant switches off one or more pieces of the full reasoning unit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Appearance stream only, one GAT, no punishment, no constraints.
    Ag,
    /// Motion stream only, one GAT, no punishment, no constraints.
    Mg,
    /// Streams merged by a two-layer perceptron, then one GAT.
    Fg,
    /// One GAT per stream, no common graphs.
    BiGraph,
    /// Four-graph network without query punishment.
    MvGraph,
    /// `Fg` plus query punishment.
    Pfg,
    /// Full model with the two correlation graphs sharing parameters.
    ShareDvgr,
    /// Full model with uniform question attention.
    SimpleDvgr,
    DualVgr,
}

/// Which feature streams a variant reasons over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Streams {
    Appearance,
    Motion,
    /// Appearance and motion merged into one stream up front.
    Fused,
    Both,
}

/// Graph layout inside one reasoning step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Graphs {
    /// One GAT per stream.
    Single,
    /// Specific + common GAT per stream with view fusion.
    MultiView,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Ag,
        Variant::Mg,
        Variant::Fg,
        Variant::BiGraph,
        Variant::MvGraph,
        Variant::Pfg,
        Variant::ShareDvgr,
        Variant::SimpleDvgr,
        Variant::DualVgr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ag => "AG",
            Variant::Mg => "MG",
            Variant::Fg => "FG",
            Variant::BiGraph => "Bigraph",
            Variant::MvGraph => "MVgraph",
            Variant::Pfg => "PFG",
            Variant::ShareDvgr => "shareDVGR",
            Variant::SimpleDvgr => "simpleDualVGR",
            Variant::DualVgr => "DualVGR",
        }
    }

    pub fn streams(self) -> Streams {
        match self {
            Variant::Ag => Streams::Appearance,
            Variant::Mg => Streams::Motion,
            Variant::Fg | Variant::Pfg => Streams::Fused,
            _ => Streams::Both,
        }
    }

    pub fn graphs(self) -> Graphs {
        match self {
            Variant::MvGraph | Variant::ShareDvgr | Variant::SimpleDvgr | Variant::DualVgr => Graphs::MultiView,
            _ => Graphs::Single,
        }
    }

    pub fn punishment(self) -> bool {
        matches!(self, Variant::Pfg | Variant::ShareDvgr | Variant::SimpleDvgr | Variant::DualVgr)
    }

    /// Learned question self-attention; `false` means uniform weights.
    pub fn question_attention(self) -> bool {
        self != Variant::SimpleDvgr
    }

    pub fn shared_common_graph(self) -> bool {
        self == Variant::ShareDvgr
    }

    /// Consistency and disparity terms exist only with common graphs.
    pub fn has_constraints(self) -> bool {
        self.graphs() == Graphs::MultiView
    }

    pub fn registry() -> String {
        Self::ALL.iter().map(|v| v.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?}; registry: {}", Self::registry())))
    }
}
