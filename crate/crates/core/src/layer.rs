use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the nine typed partitions of a knowledge base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LayerId {
    S0,
    L0,
    L1,
    L2,
    L3,
    L4,
    L5,
    L6,
    L7,
}

impl LayerId {
    pub const ALL: [LayerId; 9] = [
        LayerId::S0,
        LayerId::L0,
        LayerId::L1,
        LayerId::L2,
        LayerId::L3,
        LayerId::L4,
        LayerId::L5,
        LayerId::L6,
        LayerId::L7,
    ];

    pub fn role(self) -> &'static str {
        match self {
            LayerId::S0 => "Source",
            LayerId::L0 => "Grounding",
            LayerId::L1 => "Predicates",
            LayerId::L2 => "Ontology",
            LayerId::L3 => "Operators",
            LayerId::L4 => "PolicySchemas",
            LayerId::L5 => "MonitorsRecovery",
            LayerId::L6 => "Experience",
            LayerId::L7 => "Goals",
        }
    }

    /// Top-level section of the KB document that holds this layer.
    pub fn section(self) -> &'static str {
        match self {
            LayerId::S0 => "source",
            LayerId::L0 => "grounding",
            LayerId::L1 => "logic",
            LayerId::L2 => "semantic",
            LayerId::L3 => "causal",
            LayerId::L4 => "procedural",
            LayerId::L5 => "resilience",
            LayerId::L6 => "experience",
            LayerId::L7 => "goals",
        }
    }

    pub fn from_section(section: &str) -> Option<LayerId> {
        LayerId::ALL.into_iter().find(|l| l.section() == section)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LayerId::S0 => "S0",
            LayerId::L0 => "L0",
            LayerId::L1 => "L1",
            LayerId::L2 => "L2",
            LayerId::L3 => "L3",
            LayerId::L4 => "L4",
            LayerId::L5 => "L5",
            LayerId::L6 => "L6",
            LayerId::L7 => "L7",
        }
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LayerId::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown layer `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_layers_with_fixed_roles() {
        assert_eq!(LayerId::ALL.len(), 9);
        let roles: Vec<_> = LayerId::ALL.iter().map(|l| l.role()).collect();
        assert_eq!(
            roles,
            [
                "Source",
                "Grounding",
                "Predicates",
                "Ontology",
                "Operators",
                "PolicySchemas",
                "MonitorsRecovery",
                "Experience",
                "Goals"
            ]
        );
        for l in LayerId::ALL {
            assert_eq!(l.as_str().parse::<LayerId>().unwrap(), l);
            assert_eq!(LayerId::from_section(l.section()), Some(l));
        }
    }
}
