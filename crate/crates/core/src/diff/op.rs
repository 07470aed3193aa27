use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kb::EntryType;
use crate::layer::LayerId;

/// The closed edit vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    AddPredicate,
    ModifyThreshold,
    AddRule,
    ModifyRuleGuard,
    ModifyPriority,
    AddSkill,
    ExtendSkillBody,
    AddObjectFact,
    AddTaskSchema,
    AddOperatorSchema,
    AddPolicySchema,
    AddMonitor,
    AddRecoveryRule,
    AppendExperience,
    AddGoalFact,
    DeclareSourceBinding,
}

impl Op {
    pub const ALL: [Op; 16] = [
        Op::AddPredicate,
        Op::ModifyThreshold,
        Op::AddRule,
        Op::ModifyRuleGuard,
        Op::ModifyPriority,
        Op::AddSkill,
        Op::ExtendSkillBody,
        Op::AddObjectFact,
        Op::AddTaskSchema,
        Op::AddOperatorSchema,
        Op::AddPolicySchema,
        Op::AddMonitor,
        Op::AddRecoveryRule,
        Op::AppendExperience,
        Op::AddGoalFact,
        Op::DeclareSourceBinding,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Op::AddPredicate => "add_predicate",
            Op::ModifyThreshold => "modify_threshold",
            Op::AddRule => "add_rule",
            Op::ModifyRuleGuard => "modify_rule_guard",
            Op::ModifyPriority => "modify_priority",
            Op::AddSkill => "add_skill",
            Op::ExtendSkillBody => "extend_skill_body",
            Op::AddObjectFact => "add_object_fact",
            Op::AddTaskSchema => "add_task_schema",
            Op::AddOperatorSchema => "add_operator_schema",
            Op::AddPolicySchema => "add_policy_schema",
            Op::AddMonitor => "add_monitor",
            Op::AddRecoveryRule => "add_recovery_rule",
            Op::AppendExperience => "append_experience",
            Op::AddGoalFact => "add_goal_fact",
            Op::DeclareSourceBinding => "declare_source_binding",
        }
    }

    /// Whether the op creates a new entry rather than changing an existing one.
    pub fn is_add(self) -> bool {
        !matches!(
            self,
            Op::ModifyThreshold
                | Op::ModifyRuleGuard
                | Op::ModifyPriority
                | Op::ExtendSkillBody
                | Op::AddGoalFact
        )
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Op::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| "unknown op".to_string())
    }
}

/// Operations each layer admits, with the checks the applier runs for them.
pub fn admission_matrix() -> BTreeMap<LayerId, Vec<(Op, &'static str)>> {
    use LayerId::*;
    BTreeMap::from([
        (S0, vec![(Op::DeclareSourceBinding, "a new source contract is declared; existing contracts are read-only")]),
        (
            L0,
            vec![(
                Op::DeclareSourceBinding,
                "extractor binds a contract observation field and exports only fields it can compute",
            )],
        ),
        (
            L1,
            vec![
                (Op::AddPredicate, "typed arguments resolve to grounded fields or existing predicates"),
                (Op::ModifyThreshold, "threshold exists, stays within its declared bounds"),
            ],
        ),
        (L2, vec![(Op::AddObjectFact, "object class is known or declared; facts are typed affordances")]),
        (
            L3,
            vec![
                (Op::AddOperatorSchema, "preconditions and effects resolve to predicates; bound skill type-checks"),
                (Op::AddSkill, "command templates use declared parameters and match contract actions"),
                (Op::ExtendSkillBody, "appended steps use declared parameters and match contract actions"),
            ],
        ),
        (
            L4,
            vec![
                (Op::AddRule, "guard resolves to predicates; action names a skill; priority explicit or assigned"),
                (Op::ModifyRuleGuard, "target rule exists; new guard resolves to predicates"),
                (Op::ModifyPriority, "target rule exists; priority is an integer"),
                (Op::AddPolicySchema, "every rule guard resolves; applies_to names contract task families"),
            ],
        ),
        (
            L5,
            vec![
                (Op::AddMonitor, "trigger, repair target and protected scope are declared"),
                (Op::AddRecoveryRule, "trigger, repair target and protected scope are declared"),
            ],
        ),
        (L6, vec![(Op::AppendExperience, "evidence id, focused metric, protected metric and status are present")]),
        (
            L7,
            vec![
                (Op::AddTaskSchema, "decomposition names operators or policy schemas; terminal condition exists"),
                (Op::AddGoalFact, "target goal schema exists; fact is typed and new"),
            ],
        ),
    ])
}

pub fn admits(layer: LayerId, op: Op) -> bool {
    admission_matrix()
        .get(&layer)
        .is_some_and(|ops| ops.iter().any(|(o, _)| *o == op))
}

/// Entry types an op may create or modify.
pub fn target_types(op: Op) -> &'static [EntryType] {
    match op {
        Op::AddPredicate | Op::ModifyThreshold => &[EntryType::Predicate],
        Op::AddRule => &[EntryType::Rule],
        Op::ModifyRuleGuard | Op::ModifyPriority => &[EntryType::Rule, EntryType::PolicySchema],
        Op::AddPolicySchema => &[EntryType::PolicySchema],
        Op::AddSkill | Op::ExtendSkillBody => &[EntryType::Skill],
        Op::AddOperatorSchema => &[EntryType::Operator],
        Op::AddObjectFact => &[EntryType::ObjectFact, EntryType::SpatialPrior],
        Op::AddMonitor => &[EntryType::Monitor],
        Op::AddRecoveryRule => &[EntryType::Recovery],
        Op::AppendExperience => &[EntryType::Experience],
        Op::AddTaskSchema | Op::AddGoalFact => &[EntryType::GoalSchema],
        Op::DeclareSourceBinding => &[EntryType::SourceContract, EntryType::Grounding],
    }
}
