use std::collections::BTreeSet;

use serde::Serialize;

use super::{
    EntryContent, ExtractorKind, GoalSchemaDef, KbEntry, KnowledgeBase, MonitorDef, PredicateDef,
    RuleDef, SemType, SkillDef,
};
use crate::cond::{ConditionExpr, MAX_DEPTH};
use crate::ident::{is_identifier, is_symbol};
use crate::kb::ArgSource;
use crate::layer::LayerId;
use crate::value::Value;

/// Grounded fields each extractor can expose.
pub fn extractor_fields(kind: ExtractorKind) -> &'static [&'static str] {
    match kind {
        ExtractorKind::Location => &[
            "current.present",
            "current.id",
            "current.class",
            "current.open_state",
            "current.searched",
        ],
        ExtractorKind::Inventory => &[
            "inventory.count",
            "held.id",
            "held.class",
            "held.is_target",
            "held.task_processed",
        ],
        ExtractorKind::Contents => &[
            "current.takeable_target_count",
            "current.unprocessed_target_count",
            "search.known_target_elsewhere",
            "goal.placed_count",
            "goal.remaining",
        ],
        ExtractorKind::Frontier => &[
            "search.unsearched_count",
            "search.unvisited_count",
            "goal.recep_known",
        ],
        ExtractorKind::Semantics => &[
            "current.tool_for",
            "current.is_task_tool",
            "current.is_goal",
            "current.has_lamp",
            "lamp.known",
            "tool.known",
        ],
        ExtractorKind::Task => &[
            "task.bound",
            "task.family",
            "task.uses_deposit",
            "task.uses_light",
            "task.uses_process",
            "task.process_verb",
            "task.count",
            "task.target",
            "task.recep",
        ],
        ExtractorKind::Status => &[
            "lamp.used",
            "policy.inadmissible",
            "policy.bind_failed",
            "policy.no_rule",
            "step.index",
        ],
    }
}

pub const OBJECT_FACT_KEYS: [&str; 5] =
    ["kind", "openable", "tool_for", "light_source", "takeable"];
pub const GOAL_FACT_KEYS: [&str; 4] = ["uses_deposit", "uses_light", "process_verb", "count"];
pub const PROCESS_VERBS: [&str; 3] = ["clean", "heat", "cool"];
pub const GOAL_SLOTS: [&str; 3] = ["target", "recep", "lamp"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct CheckResult {
    pub diagnostics: Vec<Diagnostic>,
}

impl CheckResult {
    pub fn ok() -> Self {
        CheckResult::default()
    }

    pub fn is_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.diagnostics.push(Diagnostic {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn extend(&mut self, other: CheckResult) {
        self.diagnostics.extend(other.diagnostics);
    }

    pub fn has_message(&self, needle: &str) -> bool {
        self.diagnostics.iter().any(|d| d.message.contains(needle))
    }
}

/// Checks one entry against the schema registered for its type in `layer`.
pub fn type_check_entry(entry: &KbEntry, layer: LayerId) -> CheckResult {
    let mut out = CheckResult::ok();
    let t = entry.entry_type();
    let base = entry.doc_path();
    if entry.layer != layer {
        out.push(
            &base,
            format!(
                "entry declared in {} but checked against {layer}",
                entry.layer
            ),
        );
    }
    if t.layer() != layer {
        out.push(
            &base,
            format!("entry type {} not admitted in layer {layer}", t.as_str()),
        );
    }
    let name = entry.content.name();
    if !name.is_empty() && entry.key != t.qualify(name) {
        out.push(
            format!("{base}.key"),
            format!("key `{}` does not match `{}`", entry.key, t.qualify(name)),
        );
    }
    let c = &mut Checker {
        out: &mut out,
        base: &base,
    };
    match &entry.content {
        EntryContent::SourceContract(s) => {
            c.name("source", "contract source", &s.source, is_identifier);
            if s.observation_fields.is_empty() {
                c.diag("observation_fields", "no observation fields declared");
            }
            if s.actions.is_empty() {
                c.diag("actions", "no actions declared");
            }
            for (i, a) in s.actions.iter().enumerate() {
                if a.trim().is_empty() {
                    c.diag(&format!("actions.{i}"), "empty action form");
                }
            }
            for (field, list) in [
                ("object_classes", &s.object_classes),
                ("receptacle_classes", &s.receptacle_classes),
                ("task_families", &s.task_families),
            ] {
                for (i, x) in list.iter().enumerate() {
                    if !is_identifier(x) {
                        c.diag(&format!("{field}.{i}"), format!("invalid identifier `{x}`"));
                    }
                }
            }
        }
        EntryContent::Grounding(g) => {
            if g.source_field.is_empty() {
                c.diag("source_field", "source field missing");
            }
            let allowed = extractor_fields(g.extractor);
            for (i, f) in g.fields.iter().enumerate() {
                if !allowed.contains(&f.as_str()) {
                    c.diag(
                        &format!("fields.{i}"),
                        format!("extractor does not provide field `{f}`"),
                    );
                }
            }
        }
        EntryContent::Predicate(p) => c.predicate(p),
        EntryContent::ObjectFact(o) => {
            c.name("class", "object class", &o.class, is_identifier);
            for (k, v) in &o.facts {
                let path = format!("facts.{k}");
                match (k.as_str(), v) {
                    ("openable" | "light_source" | "takeable", Value::Bool(_)) => {}
                    ("tool_for", Value::Str(s)) if PROCESS_VERBS.contains(&s.as_str()) => {}
                    ("kind", Value::Str(s)) if s == "object" || s == "receptacle" => {}
                    (k, _) if OBJECT_FACT_KEYS.contains(&k) => {
                        c.diag(&path, format!("invalid value for fact `{k}`"))
                    }
                    _ => c.diag(&path, format!("unknown fact `{k}`")),
                }
            }
        }
        EntryContent::SpatialPrior(p) => {
            c.name("class", "object class", &p.class, is_identifier);
            if p.ranked.is_empty() {
                c.diag("ranked", "spatial prior ranks no receptacles");
            }
            for (i, r) in p.ranked.iter().enumerate() {
                if !is_identifier(r) {
                    c.diag(&format!("ranked.{i}"), format!("invalid class `{r}`"));
                }
            }
        }
        EntryContent::Operator(o) => {
            c.name("name", "operator", &o.name, is_identifier);
            for (i, p) in o.preconditions.iter().enumerate() {
                if !is_identifier(p) {
                    c.diag(
                        &format!("preconditions.{i}"),
                        format!("invalid predicate reference `{p}`"),
                    );
                }
            }
            for (i, e) in o.effects.iter().enumerate() {
                let ok = e.strip_prefix(['+', '-']).is_some_and(is_identifier);
                if !ok {
                    c.diag(
                        &format!("effects.{i}"),
                        format!("effect `{e}` must be +predicate or -predicate"),
                    );
                }
            }
            if !is_symbol(&o.bound_skill.skill) {
                c.diag("bound_skill.skill", "bound skill missing");
            }
        }
        EntryContent::Skill(s) => c.skill(s),
        EntryContent::Rule(r) => c.rule("", r),
        EntryContent::PolicySchema(s) => {
            c.name("name", "policy schema", &s.name, is_symbol);
            if s.rules.is_empty() {
                c.diag("rules", "policy schema declares no rules");
            }
            let mut seen = BTreeSet::new();
            for (i, r) in s.rules.iter().enumerate() {
                if !seen.insert(r.name.as_str()) {
                    c.diag(
                        &format!("rules.{i}.name"),
                        format!("duplicate rule name `{}`", r.name),
                    );
                }
                c.rule(&format!("rules.{i}."), r);
            }
            for (i, f) in s.applies_to.iter().enumerate() {
                if !is_identifier(f) {
                    c.diag(
                        &format!("applies_to.{i}"),
                        format!("invalid task family `{f}`"),
                    );
                }
            }
        }
        EntryContent::Monitor(m) => c.monitor("monitor", m),
        EntryContent::Recovery(m) => c.monitor("recovery", m),
        EntryContent::Experience(e) => {
            for (field, label, v) in [
                ("evidence_id", "evidence id", &e.evidence_id),
                ("focused_before", "focused metric", &e.focused_before),
                ("focused_after", "focused metric", &e.focused_after),
                ("protected_before", "protected metric", &e.protected_before),
                ("protected_after", "protected metric", &e.protected_after),
            ] {
                if v.trim().is_empty() {
                    c.diag(field, format!("{label} missing"));
                }
            }
            if !e.evidence_id.is_empty() && !is_symbol(&e.evidence_id) {
                c.diag("evidence_id", "invalid evidence id");
            }
        }
        EntryContent::GoalSchema(g) => c.goal(g),
    }
    out
}

struct Checker<'a> {
    out: &'a mut CheckResult,
    base: &'a str,
}

impl Checker<'_> {
    fn diag(&mut self, field: &str, message: impl Into<String>) {
        let path = if field.is_empty() {
            self.base.to_string()
        } else {
            format!("{}.{field}", self.base)
        };
        self.out.push(path, message);
    }

    fn name(&mut self, field: &str, what: &str, name: &str, grammar: fn(&str) -> bool) {
        if name.trim().is_empty() {
            self.diag(field, format!("{what} name missing"));
        } else if !grammar(name) {
            self.diag(field, format!("invalid {what} name `{name}`"));
        }
    }

    fn cond(&mut self, field: &str, cond: &ConditionExpr) {
        if cond.depth() > MAX_DEPTH {
            self.diag(
                field,
                format!("condition nesting exceeds depth {MAX_DEPTH}"),
            );
        }
    }

    fn predicate(&mut self, p: &PredicateDef) {
        self.name("name", "predicate", &p.name, is_identifier);
        let mut declared = BTreeSet::new();
        for (i, param) in p.params.iter().enumerate() {
            if !is_identifier(&param.name) {
                self.diag(&format!("params.{i}.name"), "invalid parameter name");
            }
            if !declared.insert(param.name.as_str()) {
                self.diag(
                    &format!("params.{i}.name"),
                    format!("duplicate parameter `{}`", param.name),
                );
            }
        }
        self.cond("eval_rule", &p.eval_rule);
        for used in p.eval_rule.params() {
            let ok = declared.contains(used) || (used == "threshold" && p.threshold.is_some());
            if !ok {
                self.diag("eval_rule", format!("unbound parameter `${used}`"));
            }
        }
        if let Some(t) = &p.threshold {
            if !(t.min.is_finite() && t.max.is_finite() && t.value.is_finite()) {
                self.diag("threshold", "threshold must be finite");
            } else if t.min > t.max {
                self.diag("threshold", "threshold bounds inverted");
            } else if t.value < t.min || t.value > t.max {
                self.diag("threshold.value", "threshold out of bounds");
            }
        }
    }

    fn skill(&mut self, s: &SkillDef) {
        self.name("name", "skill", &s.name, is_symbol);
        let mut declared = BTreeSet::new();
        for (i, p) in s.params.iter().enumerate() {
            if !is_identifier(&p.name) {
                self.diag(&format!("params.{i}.name"), "invalid parameter name");
            }
            if !declared.insert(p.name.as_str()) {
                self.diag(
                    &format!("params.{i}.name"),
                    format!("duplicate parameter `{}`", p.name),
                );
            }
            if (p.source == ArgSource::TaskVerb) != (p.sem_type == SemType::None) {
                self.diag(
                    &format!("params.{i}.sem_type"),
                    "task_verb arguments have semantic type none",
                );
            }
        }
        if s.body.is_empty() {
            self.diag("body", "skill body is empty");
        }
        for (i, step) in s.body.iter().enumerate() {
            if let Some(w) = &step.when {
                self.cond(&format!("body.{i}.when"), w);
                if !w.params().is_empty() {
                    self.diag(&format!("body.{i}.when"), "step guards take no parameters");
                }
            }
            match template_slots(&step.command) {
                Err(e) => self.diag(&format!("body.{i}.command"), e),
                Ok(slots) => {
                    if step.command.trim().is_empty() {
                        self.diag(&format!("body.{i}.command"), "empty command template");
                    }
                    for slot in slots {
                        if !declared.contains(slot) {
                            self.diag(
                                &format!("body.{i}.command"),
                                format!("undeclared slot `{{{slot}}}`"),
                            );
                        }
                    }
                }
            }
        }
    }

    fn rule(&mut self, prefix: &str, r: &RuleDef) {
        self.name(&format!("{prefix}name"), "rule", &r.name, is_symbol);
        self.cond(&format!("{prefix}cond"), &r.cond);
        if r.cond.has_comparisons() {
            self.diag(
                &format!("{prefix}cond"),
                "rule conditions may only reference predicates",
            );
        }
        if !r.cond.params().is_empty() {
            self.diag(
                &format!("{prefix}cond"),
                "rule conditions take no parameters",
            );
        }
        if r.action.trim().is_empty() {
            self.diag(&format!("{prefix}action"), "rule action missing");
        } else if !is_symbol(&r.action) {
            self.diag(
                &format!("{prefix}action"),
                format!("invalid action schema `{}`", r.action),
            );
        }
    }

    fn monitor(&mut self, what: &str, m: &MonitorDef) {
        self.name("name", what, &m.name, is_symbol);
        self.cond("trigger", &m.trigger);
        if !m.trigger.params().is_empty() {
            self.diag("trigger", "triggers take no parameters");
        }
        if m.repair_target.trim().is_empty() {
            self.diag("repair_target", "repair target missing");
        }
        if m.protected_scope.trim().is_empty() {
            self.diag("protected_scope", "protected scope missing");
        }
    }

    fn goal(&mut self, g: &GoalSchemaDef) {
        self.name("name", "goal schema", &g.name, is_symbol);
        if !is_identifier(&g.task_family) {
            self.diag("task_family", "task family missing");
        }
        match template_slots(&g.pattern) {
            Err(e) => self.diag("pattern", e),
            Ok(slots) => {
                if g.pattern.trim().is_empty() {
                    self.diag("pattern", "goal pattern missing");
                }
                for s in slots {
                    if !GOAL_SLOTS.contains(&s) {
                        self.diag("pattern", format!("unknown goal slot `{{{s}}}`"));
                    }
                }
            }
        }
        if g.decomposition.is_empty() {
            self.diag("decomposition", "decomposition is empty");
        }
        self.cond("terminal_condition", &g.terminal_condition);
        if !g.terminal_condition.params().is_empty() {
            self.diag(
                "terminal_condition",
                "terminal conditions take no parameters",
            );
        }
        for (k, v) in &g.facts {
            let path = format!("facts.{k}");
            match (k.as_str(), v) {
                ("uses_deposit" | "uses_light", Value::Bool(_)) => {}
                ("process_verb", Value::Str(s)) if PROCESS_VERBS.contains(&s.as_str()) => {}
                ("count", Value::Int(n)) if *n >= 1 => {}
                (k, _) if GOAL_FACT_KEYS.contains(&k) => {
                    self.diag(&path, format!("invalid value for fact `{k}`"))
                }
                _ => self.diag(&path, format!("unknown fact `{k}`")),
            }
        }
    }
}

/// Type-checks every entry of a KB.
pub fn type_check_kb(kb: &KnowledgeBase) -> CheckResult {
    let mut out = CheckResult::ok();
    for e in kb.entries() {
        out.extend(type_check_entry(e, e.layer));
    }
    out
}

/// Slot names appearing as `{name}` in a template.
pub fn template_slots(template: &str) -> Result<Vec<&str>, String> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| "unclosed `{` in template".to_string())?;
        let slot = &after[..close];
        if !is_identifier(slot) {
            return Err(format!("invalid slot `{{{slot}}}`"));
        }
        out.push(slot);
        rest = &after[close + 1..];
    }
    if rest.contains('}') {
        return Err("unmatched `}` in template".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{ProvenanceRecord, Threshold};

    fn rule_entry(name: &str, cond: &str, action: &str) -> KbEntry {
        let rule = RuleDef {
            name: name.into(),
            priority: 90,
            cond: cond.parse().unwrap(),
            action: action.into(),
            rationale: String::new(),
            expected_effect: String::new(),
        };
        KbEntry {
            layer: LayerId::L4,
            key: format!("rule.{name}"),
            content: EntryContent::Rule(rule),
            provenance: vec![ProvenanceRecord::scaffold()],
        }
    }

    #[test]
    fn open_goal_recep_checks() {
        let e = rule_entry(
            "OpenGoalRecep",
            "all(task_uses_deposit, ready_to_deposit, at_goal_recep, current_openable_closed)",
            "OPEN",
        );
        assert!(type_check_entry(&e, LayerId::L4).is_ok());
        let wrong_layer = type_check_entry(&e, LayerId::L1);
        assert!(!wrong_layer.is_ok());
    }

    #[test]
    fn empty_rule_name() {
        let e = rule_entry("", "always", "LOOK");
        let r = type_check_entry(&e, LayerId::L4);
        assert!(r.has_message("rule name missing"), "{r:?}");
        assert!(r.diagnostics.iter().any(|d| d.path.ends_with(".name")));
    }

    #[test]
    fn rule_conditions_are_predicate_only() {
        let e = rule_entry("Peek", "inventory.count = 0", "LOOK");
        assert!(type_check_entry(&e, LayerId::L4).has_message("may only reference predicates"));
    }

    #[test]
    fn threshold_bounds() {
        let p = PredicateDef {
            name: "confident".into(),
            params: vec![],
            eval_rule: "search.unsearched_count > $threshold".parse().unwrap(),
            threshold: Some(Threshold {
                value: 1.5,
                min: 0.0,
                max: 1.0,
            }),
        };
        let e = KbEntry::new(EntryContent::Predicate(p.clone()), vec![]);
        let r = type_check_entry(&e, LayerId::L1);
        assert!(r.has_message("threshold out of bounds"));
        assert_eq!(
            r.diagnostics[0].path,
            "logic.predicates.confident.threshold.value"
        );

        let mut ok = p;
        ok.threshold = Some(Threshold {
            value: 0.5,
            min: 0.0,
            max: 1.0,
        });
        assert!(type_check_entry(
            &KbEntry::new(EntryContent::Predicate(ok), vec![]),
            LayerId::L1
        )
        .is_ok());
    }

    #[test]
    fn deep_conditions_rejected() {
        let mut src = "a".to_string();
        for _ in 0..9 {
            src = format!("not({src})");
        }
        let e = rule_entry("Deep", &src, "LOOK");
        assert!(type_check_entry(&e, LayerId::L4).has_message("depth"));
    }

    #[test]
    fn template_slot_parsing() {
        assert_eq!(
            template_slots("move {obj} to {recep}").unwrap(),
            ["obj", "recep"]
        );
        assert!(template_slots("open {recep").is_err());
        assert!(template_slots("look").unwrap().is_empty());
    }
}
