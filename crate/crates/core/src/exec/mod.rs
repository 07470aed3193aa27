//! The deterministic symbolic executor: grounding, goal binding, first-match
//! rule selection, monitors, skill binding and the admissible-command
//! fallback, with a decision trace for every emitted command.

mod ground;
mod trace;
mod view;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::cond::{ConditionExpr, EvalContext};
use crate::env::{display_id, HouseholdEnv, TaskBank, TaskSpec};
use crate::kb::{
    template_slots, EntryContent, ExtractorKind, GoalSchemaDef, KbEntry, KnowledgeBase, MonitorDef,
    ObjectFact, OperatorDef, PolicySchemaDef, PredicateDef, RuleDef, SemType, SkillDef,
    SpatialPrior,
};
use crate::layer::LayerId;
use crate::value::Value;

pub use ground::{ground_with, GroundedState, GroundingError, OpenState};
pub use trace::{
    read_trajectories, write_trajectories, DecisionTrace, EntryRef, Outcome, Role, RuleEval,
    StepRecord, SubgoalProgress, TrajectoryHeader, TrajectoryRecord,
};
pub use view::PolicyFlags;
use view::View;

/// Nesting bound for predicate-to-predicate calls.
const MAX_PREDICATE_DEPTH: usize = 16;
/// Commands emitted in this many previous steps count as tried for the last fallback stage.
const FALLBACK_WINDOW: usize = 4;

/// A structured observation: named fields as declared by the source contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub fields: BTreeMap<String, Value>,
}

impl Observation {
    pub fn new(feedback: impl Into<String>, admissible: Vec<String>) -> Self {
        let mut fields = BTreeMap::new();
        fields.insert("feedback".to_string(), Value::Str(feedback.into()));
        fields.insert(
            "admissible_commands".to_string(),
            Value::List(admissible.into_iter().map(Value::Str).collect()),
        );
        Observation { fields }
    }

    pub fn feedback(&self) -> Option<&str> {
        self.fields.get("feedback").and_then(Value::as_str)
    }

    pub fn admissible(&self) -> Option<Vec<String>> {
        match self.fields.get("admissible_commands")? {
            Value::List(items) => Some(
                items
                    .iter()
                    .filter_map(|v| v.as_str().map(str::to_string))
                    .collect(),
            ),
            _ => None,
        }
    }

    pub fn digest(&self) -> String {
        crate::hash::short_digest(serde_json::to_string(self).expect("observation serializes"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub done: bool,
    /// The environment's own success verdict.
    pub success: bool,
    /// Whether the command was accepted.
    pub admissible: bool,
}

/// A text environment the executor can drive.
pub trait Environment {
    fn reset(&mut self) -> Observation;
    fn step(&mut self, command: &str) -> StepOutcome;
    fn task_id(&self) -> &str;
    /// Commands rejected since the last reset.
    fn rejected_commands(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("executable error: {0}")]
pub struct ExecutableError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("arity error: predicate `{name}` expects {expected} arguments, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("bind error: skill `{skill}` has no groundable step")]
    Bind { skill: String },
}

/// The L7 goal schema bound to the episode's goal text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskBinding {
    pub schema_key: String,
    pub family: String,
    pub slots: BTreeMap<String, String>,
    pub facts: BTreeMap<String, Value>,
}

impl TaskBinding {
    pub fn uses_deposit(&self) -> bool {
        self.facts
            .get("uses_deposit")
            .and_then(Value::as_bool)
            .unwrap_or(false)
    }

    pub fn uses_light(&self) -> bool {
        self.facts
            .get("uses_light")
            .and_then(Value::as_bool)
            .unwrap_or(false)
    }

    pub fn process_verb(&self) -> Option<&str> {
        self.facts.get("process_verb").and_then(Value::as_str)
    }

    pub fn count(&self) -> i64 {
        match self.facts.get("count") {
            Some(Value::Int(n)) => *n,
            _ => 1,
        }
    }
}

struct CompiledRule<'kb> {
    entry: &'kb KbEntry,
    schema: Option<&'kb PolicySchemaDef>,
    rule: &'kb RuleDef,
}

struct CompiledGoal<'kb> {
    entry: &'kb KbEntry,
    def: &'kb GoalSchemaDef,
    regex: Regex,
    slots: Vec<String>,
    literal_len: usize,
}

/// A knowledge base compiled for execution. Borrowing the KB immutably
/// keeps it frozen for the executor's lifetime.
pub struct Executor<'kb> {
    kb: &'kb KnowledgeBase,
    kb_hash: String,
    contract_key: Option<&'kb str>,
    declared_observation: BTreeSet<String>,
    extractors: Vec<(ExtractorKind, String)>,
    extractor_keys: Vec<&'kb str>,
    fields: BTreeSet<String>,
    predicates: BTreeMap<&'kb str, (&'kb str, &'kb PredicateDef)>,
    facts: BTreeMap<&'kb str, (&'kb str, &'kb ObjectFact)>,
    priors: BTreeMap<&'kb str, (&'kb str, &'kb SpatialPrior)>,
    skills: BTreeMap<&'kb str, (&'kb str, &'kb SkillDef)>,
    operators: Vec<&'kb OperatorDef>,
    rules: Vec<CompiledRule<'kb>>,
    monitors: Vec<(&'kb str, &'kb MonitorDef)>,
    recoveries: Vec<(&'kb str, &'kb MonitorDef)>,
    goals: Vec<CompiledGoal<'kb>>,
}

fn goal_regex(pattern: &str) -> Result<(Regex, Vec<String>, usize), String> {
    let mut re = String::from("^");
    let mut slots = Vec::new();
    let mut literal_len = 0;
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| format!("unclosed slot in pattern `{pattern}`"))?
            + open;
        re.push_str(&regex::escape(&rest[..open]));
        literal_len += open;
        re.push_str("([a-z][a-z0-9_]*?)");
        slots.push(rest[open + 1..close].to_string());
        rest = &rest[close + 1..];
    }
    re.push_str(&regex::escape(rest));
    literal_len += rest.len();
    re.push('$');
    Regex::new(&re)
        .map(|r| (r, slots, literal_len))
        .map_err(|e| e.to_string())
}

impl<'kb> Executor<'kb> {
    pub fn new(kb: &'kb KnowledgeBase) -> Result<Self, ExecutableError> {
        let mut exec = Executor {
            kb,
            kb_hash: kb.hash(),
            contract_key: None,
            declared_observation: BTreeSet::new(),
            extractors: Vec::new(),
            extractor_keys: Vec::new(),
            fields: BTreeSet::new(),
            predicates: BTreeMap::new(),
            facts: BTreeMap::new(),
            priors: BTreeMap::new(),
            skills: BTreeMap::new(),
            operators: Vec::new(),
            rules: Vec::new(),
            monitors: Vec::new(),
            recoveries: Vec::new(),
            goals: Vec::new(),
        };
        let mut extractors: Vec<(ExtractorKind, String, &str)> = Vec::new();
        for e in kb.entries() {
            let key = e.key.as_str();
            match &e.content {
                EntryContent::SourceContract(c) => {
                    exec.contract_key = Some(key);
                    exec.declared_observation
                        .extend(c.observation_fields.keys().cloned());
                }
                EntryContent::Grounding(g) => {
                    extractors.push((g.extractor, g.source_field.clone(), key));
                    exec.fields.extend(g.fields.iter().cloned());
                }
                EntryContent::Predicate(p) => {
                    exec.predicates.insert(&p.name, (key, p));
                }
                EntryContent::ObjectFact(o) => {
                    exec.facts.insert(&o.class, (key, o));
                }
                EntryContent::SpatialPrior(p) => {
                    exec.priors.insert(&p.class, (key, p));
                }
                EntryContent::Skill(s) => {
                    exec.skills.insert(&s.name, (key, s));
                }
                EntryContent::Operator(o) => exec.operators.push(o),
                EntryContent::Monitor(m) => exec.monitors.push((key, m)),
                EntryContent::Recovery(r) => exec.recoveries.push((key, r)),
                EntryContent::GoalSchema(g) => {
                    let (regex, slots, literal_len) = goal_regex(&g.pattern)
                        .map_err(|m| ExecutableError(format!("goal schema `{}`: {m}", g.name)))?;
                    exec.goals.push(CompiledGoal {
                        entry: e,
                        def: g,
                        regex,
                        slots,
                        literal_len,
                    });
                }
                _ => {}
            }
        }
        extractors.sort_by_key(|(k, _, _)| *k);
        exec.extractor_keys = extractors.iter().map(|(_, _, k)| *k).collect();
        exec.extractors = extractors.into_iter().map(|(k, s, _)| (k, s)).collect();

        for (entry, schema, rule) in kb.all_rules() {
            if !exec.skills.contains_key(rule.action.as_str()) {
                return Err(ExecutableError(format!(
                    "rule `{}` names missing skill `{}`",
                    rule.name, rule.action
                )));
            }
            exec.rules.push(CompiledRule {
                entry,
                schema,
                rule,
            });
        }
        // Stable sort keeps declaration order among equal priorities.
        exec.rules
            .sort_by_key(|r| std::cmp::Reverse(r.rule.priority));
        for (_, m) in exec.monitors.iter().chain(&exec.recoveries) {
            if !exec.skills.contains_key(m.repair_target.as_str()) {
                return Err(ExecutableError(format!(
                    "`{}` names missing repair skill `{}`",
                    m.name, m.repair_target
                )));
            }
        }
        Ok(exec)
    }

    pub fn kb(&self) -> &'kb KnowledgeBase {
        self.kb
    }

    pub fn kb_hash(&self) -> &str {
        &self.kb_hash
    }

    pub fn exported_fields(&self) -> &BTreeSet<String> {
        &self.fields
    }

    pub fn operators(&self) -> &[&'kb OperatorDef] {
        &self.operators
    }

    /// Applies every L0 extractor to an observation.
    pub fn ground(
        &self,
        observation: &Observation,
        prev: &GroundedState,
    ) -> Result<GroundedState, GroundingError> {
        if observation.feedback().is_none() {
            return Err(GroundingError("feedback".into()));
        }
        ground_with(
            observation,
            prev,
            &self.extractors,
            &self.declared_observation,
        )
    }

    /// Binds the goal text to an L7 schema: longest literal pattern wins,
    /// then declaration order.
    pub fn bind_goal(&self, goal: &str) -> Option<TaskBinding> {
        let mut best: Option<(&CompiledGoal, regex::Captures)> = None;
        for g in &self.goals {
            if let Some(caps) = g.regex.captures(goal) {
                if best
                    .as_ref()
                    .is_none_or(|(b, _)| g.literal_len > b.literal_len)
                {
                    best = Some((g, caps));
                }
            }
        }
        let (g, caps) = best?;
        let slots = g
            .slots
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), caps[i + 1].to_string()))
            .collect();
        Some(TaskBinding {
            schema_key: g.entry.key.clone(),
            family: g.def.task_family.clone(),
            slots,
            facts: g.def.facts.clone(),
        })
    }

    fn goal_def(&self, binding: &TaskBinding) -> Option<&CompiledGoal<'kb>> {
        self.goals
            .iter()
            .find(|g| g.entry.key == binding.schema_key)
    }

    /// Evaluates a named predicate against a state.
    pub fn eval_predicate(
        &self,
        name: &str,
        state: &GroundedState,
        binding: Option<&TaskBinding>,
        args: &[Value],
    ) -> Result<bool, ExecError> {
        let (_, def) = self
            .predicates
            .get(name)
            .ok_or_else(|| ExecError::UnknownPredicate(name.to_string()))?;
        if def.params.len() != args.len() {
            return Err(ExecError::Arity {
                name: name.to_string(),
                expected: def.params.len(),
                got: args.len(),
            });
        }
        let view = View::new(self, state, binding);
        let mut ctx = Ctx::new(&view);
        Ok(ctx.predicate(name, args).unwrap_or(false))
    }

    /// Value of an exported field.
    pub fn field(
        &self,
        path: &str,
        state: &GroundedState,
        binding: Option<&TaskBinding>,
    ) -> Option<Value> {
        View::new(self, state, binding).field(path)
    }

    fn eval_cond(
        &self,
        cond: &ConditionExpr,
        view: &View,
        rec: &mut Vec<(String, bool)>,
        keys: &mut BTreeSet<EntryRef>,
    ) -> bool {
        let mut ctx = Ctx::new(view);
        let out = cond.eval(&mut ctx, &|_| None);
        rec.extend(ctx.record);
        keys.extend(ctx.keys);
        out
    }

    fn rule_active(&self, r: &CompiledRule, binding: Option<&TaskBinding>) -> bool {
        match r.schema {
            Some(s) if !s.applies_to.is_empty() => {
                binding.is_some_and(|b| s.applies_to.contains(&b.family))
            }
            _ => true,
        }
    }

    /// First-match selection: highest priority satisfied rule, earliest
    /// declared on ties. Returns the fired rule's index among
    /// [`Executor::rule_order`] and the evaluations of every tested rule.
    pub fn select_action(
        &self,
        state: &GroundedState,
        binding: Option<&TaskBinding>,
    ) -> (Option<usize>, Vec<RuleEval>, BTreeSet<EntryRef>) {
        let view = View::new(self, state, binding);
        let mut evals = Vec::new();
        let mut keys = BTreeSet::new();
        for (i, r) in self.rules.iter().enumerate() {
            if !self.rule_active(r, binding) {
                continue;
            }
            keys.insert(EntryRef::new(r.entry.layer, &r.entry.key));
            let mut preds = Vec::new();
            let fired = self.eval_cond(&r.rule.cond, &view, &mut preds, &mut keys);
            evals.push(RuleEval {
                rule: r.rule.name.clone(),
                priority: r.rule.priority,
                fired,
                predicates: preds,
            });
            if fired {
                keys.extend(view.used.into_inner());
                return (Some(i), evals, keys);
            }
        }
        keys.extend(view.used.into_inner());
        (None, evals, keys)
    }

    /// Rule names in evaluation order (priority descending, declaration order on ties).
    pub fn rule_order(&self) -> Vec<(&'kb str, i64)> {
        self.rules
            .iter()
            .map(|r| (r.rule.name.as_str(), r.rule.priority))
            .collect()
    }

    /// Whether the named rule may fire for this binding (policy schemas are gated by task family).
    pub fn rule_is_active(&self, index: usize, binding: Option<&TaskBinding>) -> bool {
        self.rules
            .get(index)
            .is_some_and(|r| self.rule_active(r, binding))
    }

    /// Evaluates one rule's guard without recording.
    pub fn rule_holds(
        &self,
        index: usize,
        state: &GroundedState,
        binding: Option<&TaskBinding>,
    ) -> bool {
        let view = View::new(self, state, binding);
        let mut ctx = Ctx::new(&view);
        self.rules[index].rule.cond.eval(&mut ctx, &|_| None)
    }

    /// Grounded command candidates for a skill, in preference order.
    pub fn bind_skill(
        &self,
        skill: &str,
        state: &GroundedState,
        binding: Option<&TaskBinding>,
    ) -> Result<Vec<String>, ExecError> {
        let view = View::new(self, state, binding);
        self.bind_in(skill, &view).map(|(c, _)| c)
    }

    fn bind_in(
        &self,
        skill: &str,
        view: &View,
    ) -> Result<(Vec<String>, BTreeSet<EntryRef>), ExecError> {
        let (key, def) = self
            .skills
            .get(skill)
            .ok_or_else(|| ExecError::UnknownSkill(skill.to_string()))?;
        let mut keys = BTreeSet::from([EntryRef::new(LayerId::L3, key)]);
        for step in &def.body {
            if let Some(when) = &step.when {
                if !self.eval_cond(when, view, &mut Vec::new(), &mut keys) {
                    continue;
                }
            }
            let mut commands = vec![step.command.clone()];
            for slot in template_slots(&step.command).unwrap_or_default() {
                let Some(param) = def.params.iter().find(|p| p.name == slot) else {
                    commands.clear();
                    break;
                };
                let values: Vec<String> = view
                    .candidates(param.source)
                    .into_iter()
                    .map(|v| {
                        if param.sem_type == SemType::None {
                            v
                        } else {
                            display_id(&v)
                        }
                    })
                    .collect();
                let pattern = format!("{{{slot}}}");
                commands = commands
                    .iter()
                    .flat_map(|c| values.iter().map(|v| c.replace(&pattern, v)))
                    .collect();
            }
            if !commands.is_empty() {
                keys.extend(view.used.borrow().iter().cloned());
                return Ok((commands, keys));
            }
        }
        Err(ExecError::Bind {
            skill: skill.to_string(),
        })
    }

    pub fn start(&self) -> Episode<'_, 'kb> {
        Episode {
            exec: self,
            state: GroundedState::initial(),
            binding: None,
            recent: VecDeque::new(),
            fired_skills: BTreeSet::new(),
            fired_schemas: BTreeSet::new(),
        }
    }

    /// Runs one episode to success, terminal condition, dead end or horizon.
    pub fn run(
        &self,
        env: &mut dyn Environment,
        goal: &str,
        seed: u64,
        horizon: usize,
    ) -> TrajectoryRecord {
        self.run_observed(env, goal, seed, horizon, &mut |_| {})
    }

    /// Like [`Executor::run`], calling `observer` after every executed step.
    pub fn run_observed(
        &self,
        env: &mut dyn Environment,
        goal: &str,
        seed: u64,
        horizon: usize,
        observer: &mut dyn FnMut(&StepView),
    ) -> TrajectoryRecord {
        let mut record = TrajectoryRecord {
            task_id: env.task_id().to_string(),
            goal: goal.to_string(),
            kb_hash: self.kb_hash.clone(),
            seed,
            horizon,
            steps: Vec::new(),
            success: false,
            outcome: Outcome::Horizon,
            step_count: 0,
            invalid_action_count: 0,
            recovery_count: 0,
            subgoal_progress: SubgoalProgress {
                satisfied: 0,
                total: 0,
            },
        };
        let mut ep = self.start();
        let mut obs = env.reset();
        if ep.observe(&obs).is_err() {
            record.outcome = Outcome::GroundingError;
            return record;
        }
        for t in 0..horizon {
            ep.state.step_index = t;
            let decision = ep.decide();
            let (command, trace) = match decision {
                Decision::Emit { command, trace } => (command, trace),
                Decision::Terminal { .. } => {
                    record.outcome = Outcome::Terminal;
                    break;
                }
                Decision::DeadEnd { .. } => {
                    record.outcome = Outcome::DeadEnd;
                    break;
                }
            };
            let state_digest = ep.state.digest();
            let outcome = env.step(&command);
            if trace.invalid {
                record.invalid_action_count += 1;
            }
            if trace.recovered {
                record.recovery_count += 1;
            }
            if outcome.admissible {
                ep.note_accepted(&trace);
            }
            record.steps.push(StepRecord {
                step: t,
                observation_digest: obs.digest(),
                state_digest,
                response: outcome
                    .observation
                    .feedback()
                    .unwrap_or_default()
                    .to_string(),
                command,
                trace,
                accepted: outcome.admissible,
            });
            obs = outcome.observation;
            let before = ep.state.clone();
            if ep.observe(&obs).is_err() {
                record.outcome = Outcome::GroundingError;
                break;
            }
            let last = record.steps.last().expect("step just pushed");
            observer(&StepView {
                before: &before,
                after: &ep.state,
                binding: ep.binding.as_ref(),
                step: last,
            });
            if outcome.done {
                record.success = outcome.success;
                if outcome.success {
                    record.outcome = Outcome::Success;
                }
                break;
            }
        }
        record.step_count = record.steps.len();
        record.subgoal_progress = ep.subgoal_progress();
        record
    }
}

/// Evaluation context that records predicate results and L1 keys.
struct Ctx<'v, 'a, 'kb> {
    view: &'v View<'a, 'kb>,
    depth: usize,
    record: Vec<(String, bool)>,
    keys: BTreeSet<EntryRef>,
}

impl<'v, 'a, 'kb> Ctx<'v, 'a, 'kb> {
    fn new(view: &'v View<'a, 'kb>) -> Self {
        Ctx {
            view,
            depth: 0,
            record: Vec::new(),
            keys: BTreeSet::new(),
        }
    }
}

impl EvalContext for Ctx<'_, '_, '_> {
    fn field(&mut self, path: &str) -> Option<Value> {
        self.view.field(path)
    }

    fn predicate(&mut self, name: &str, args: &[Value]) -> Option<bool> {
        let (key, def) = *self.view.exec.predicates.get(name)?;
        self.keys.insert(EntryRef::new(LayerId::L1, key));
        if def.params.len() != args.len() || self.depth >= MAX_PREDICATE_DEPTH {
            return Some(false);
        }
        let params = |p: &str| -> Option<Value> {
            if let Some(i) = def.params.iter().position(|d| d.name == p) {
                return Some(args[i].clone());
            }
            match (p, &def.threshold) {
                ("threshold", Some(t)) => Some(Value::Float(t.value)),
                _ => None,
            }
        };
        self.depth += 1;
        let v = def.eval_rule.eval(self, &params);
        self.depth -= 1;
        let label = if args.is_empty() {
            name.to_string()
        } else {
            format!(
                "{name}({})",
                args.iter()
                    .map(|a| a.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        };
        self.record.push((label, v));
        Some(v)
    }
}

/// One executed step as seen by a [`Executor::run_observed`] observer.
pub struct StepView<'a> {
    pub before: &'a GroundedState,
    pub after: &'a GroundedState,
    pub binding: Option<&'a TaskBinding>,
    pub step: &'a StepRecord,
}

/// What the policy does at one step.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Emit {
        command: String,
        trace: DecisionTrace,
    },
    Terminal {
        trace: DecisionTrace,
    },
    DeadEnd {
        trace: DecisionTrace,
    },
}

impl Decision {
    pub fn trace(&self) -> &DecisionTrace {
        match self {
            Decision::Emit { trace, .. }
            | Decision::Terminal { trace }
            | Decision::DeadEnd { trace } => trace,
        }
    }

    pub fn command(&self) -> Option<&str> {
        match self {
            Decision::Emit { command, .. } => Some(command),
            _ => None,
        }
    }
}

/// Per-episode executor state.
pub struct Episode<'e, 'kb> {
    exec: &'e Executor<'kb>,
    state: GroundedState,
    binding: Option<TaskBinding>,
    recent: VecDeque<String>,
    fired_skills: BTreeSet<String>,
    fired_schemas: BTreeSet<String>,
}

impl<'e, 'kb> Episode<'e, 'kb> {
    pub fn state(&self) -> &GroundedState {
        &self.state
    }

    pub fn binding(&self) -> Option<&TaskBinding> {
        self.binding.as_ref()
    }

    pub fn observe(&mut self, observation: &Observation) -> Result<(), GroundingError> {
        let step = self.state.step_index;
        self.state = self.exec.ground(observation, &self.state)?;
        self.state.step_index = step;
        if self.binding.is_none() {
            if let Some(goal) = &self.state.goal_text {
                self.binding = self.exec.bind_goal(goal);
            }
        }
        Ok(())
    }

    pub fn set_step(&mut self, step: usize) {
        self.state.step_index = step;
    }

    fn note_accepted(&mut self, trace: &DecisionTrace) {
        if trace.recovered {
            return;
        }
        if let Some(skill) = &trace.skill {
            self.fired_skills.insert(skill.clone());
        }
        for r in trace.role_entries(Role::Select) {
            if r.layer == LayerId::L4 && r.key.starts_with("schema.") {
                if let Some(ev) = trace.rule_evals.iter().find(|e| e.fired) {
                    if self
                        .exec
                        .rules
                        .iter()
                        .any(|c| c.entry.key == r.key && c.rule.name == ev.rule)
                    {
                        self.fired_schemas
                            .insert(r.key.trim_start_matches("schema.").to_string());
                    }
                }
            }
        }
    }

    /// Fraction of the bound goal schema's decomposition whose operator,
    /// skill or policy schema was carried out with an accepted command.
    pub fn subgoal_progress(&self) -> SubgoalProgress {
        let Some(goal) = self.binding.as_ref().and_then(|b| self.exec.goal_def(b)) else {
            return SubgoalProgress {
                satisfied: 0,
                total: 0,
            };
        };
        let satisfied = goal
            .def
            .decomposition
            .iter()
            .filter(|d| {
                let op_skill = self
                    .exec
                    .operators
                    .iter()
                    .find(|o| o.name == **d)
                    .map(|o| o.bound_skill.skill.as_str());
                op_skill.is_some_and(|s| self.fired_skills.contains(s))
                    || self.fired_skills.contains(*d)
                    || self.fired_schemas.contains(*d)
            })
            .count();
        SubgoalProgress {
            satisfied,
            total: goal.def.decomposition.len(),
        }
    }

    /// Runs the policy for the current state. Never calls an editor.
    pub fn decide(&mut self) -> Decision {
        let exec = self.exec;
        let mut trace = DecisionTrace::new(self.state.step_index);
        if let Some(k) = exec.contract_key {
            trace.add(Role::Ground, EntryRef::new(LayerId::S0, k));
        }
        trace.extend(
            Role::Ground,
            exec.extractor_keys
                .iter()
                .map(|k| EntryRef::new(LayerId::L0, k)),
        );

        let binding = self.binding.as_ref();
        let mut view = View::new(exec, &self.state, binding);

        if let Some(goal) = binding.and_then(|b| exec.goal_def(b)) {
            trace.add(Role::Select, EntryRef::new(LayerId::L7, &goal.entry.key));
            let mut preds = Vec::new();
            let mut keys = BTreeSet::new();
            if exec.eval_cond(&goal.def.terminal_condition, &view, &mut preds, &mut keys) {
                trace.extend(Role::Select, keys);
                trace.fired_rule = "terminal".into();
                return Decision::Terminal { trace };
            }
            trace.extend(Role::Select, keys);
        }

        let mut action: Option<&str> = None;
        for (key, m) in &exec.monitors {
            trace.add(Role::Monitor, EntryRef::new(LayerId::L5, key));
            let mut keys = BTreeSet::new();
            let fired = exec.eval_cond(&m.trigger, &view, &mut Vec::new(), &mut keys);
            trace.extend(Role::Monitor, keys);
            if fired {
                trace.fired_rule = format!("monitor:{}", m.name);
                action = Some(m.repair_target.as_str());
                break;
            }
        }

        if action.is_none() {
            let (fired, evals, keys) = exec.select_action(&self.state, binding);
            trace.extend(Role::Select, keys);
            trace.rule_evals = evals;
            if let Some(i) = fired {
                trace.fired_rule = exec.rules[i].rule.name.clone();
                action = Some(exec.rules[i].rule.action.as_str());
            }
        }

        let mut candidates = Vec::new();
        if let Some(skill) = action {
            trace.skill = Some(skill.to_string());
            match exec.bind_in(skill, &view) {
                Ok((c, keys)) => {
                    trace.extend(Role::Bind, keys);
                    candidates = c;
                }
                Err(_) => trace.add(Role::Bind, EntryRef::new(LayerId::L3, exec.skills[skill].0)),
            }
        }
        trace.candidates = candidates.clone();

        let admissible = &self.state.admissible_commands;
        let primary = candidates.first();
        if let Some(cmd) = primary.filter(|c| admissible.contains(c)) {
            return self.emit(cmd.clone(), trace);
        }

        view.flags = PolicyFlags {
            inadmissible: primary.is_some(),
            bind_failed: action.is_some() && primary.is_none(),
            no_rule: action.is_none(),
        };
        trace.invalid = primary.is_some();
        let mut recovery: Option<&MonitorDef> = None;
        for (key, r) in &exec.recoveries {
            let mut keys = BTreeSet::new();
            let fired = exec.eval_cond(&r.trigger, &view, &mut Vec::new(), &mut keys);
            if fired {
                trace.add(Role::Recover, EntryRef::new(LayerId::L5, key));
                trace.extend(Role::Recover, keys);
                recovery = Some(r);
                break;
            }
        }
        let Some(recovery) = recovery else {
            return match primary {
                Some(cmd) => self.emit(cmd.clone(), trace),
                None => Decision::DeadEnd { trace },
            };
        };
        trace.recovered = true;
        if action.is_none() {
            trace.fired_rule = "fallback".into();
        }

        if let Some(cmd) = candidates.iter().skip(1).find(|c| admissible.contains(c)) {
            return self.emit(cmd.clone(), trace);
        }
        if let Ok((repair, keys)) = exec.bind_in(&recovery.repair_target, &view) {
            if let Some(cmd) = repair.iter().find(|c| admissible.contains(c)) {
                trace.extend(Role::Recover, keys);
                return self.emit(cmd.clone(), trace);
            }
        }
        let tried: BTreeSet<&String> = candidates.iter().chain(self.recent.iter()).collect();
        let mut sorted: Vec<&String> = admissible.iter().collect();
        sorted.sort();
        match sorted.into_iter().find(|c| !tried.contains(c)) {
            Some(cmd) => {
                let cmd = cmd.clone();
                self.emit(cmd, trace)
            }
            None => Decision::DeadEnd { trace },
        }
    }

    fn emit(&mut self, command: String, mut trace: DecisionTrace) -> Decision {
        trace.emitted_command = command.clone();
        self.recent.push_back(command.clone());
        if self.recent.len() > FALLBACK_WINDOW {
            self.recent.pop_front();
        }
        Decision::Emit { command, trace }
    }
}

/// Runs one task of the household environment.
pub fn run_episode(
    kb: &KnowledgeBase,
    task: &TaskSpec,
    horizon: usize,
) -> Result<TrajectoryRecord, ExecutableError> {
    let exec = Executor::new(kb)?;
    Ok(run_task(&exec, task, horizon))
}

pub fn run_task(exec: &Executor, task: &TaskSpec, horizon: usize) -> TrajectoryRecord {
    let mut env = HouseholdEnv::new(task);
    exec.run(&mut env, &task.goal, task.seed, horizon)
}

/// Runs every task of a bank; episodes run in parallel and are returned in bank order.
pub fn run_bank(
    kb: &KnowledgeBase,
    bank: &TaskBank,
    horizon: usize,
) -> Result<Vec<TrajectoryRecord>, ExecutableError> {
    let exec = Executor::new(kb)?;
    Ok(bank
        .tasks
        .par_iter()
        .map(|t| run_task(&exec, t, horizon))
        .collect())
}
