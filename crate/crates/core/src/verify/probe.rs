//! Diagnostic probes used by layer ablations: plan coverage, KB queries,
//! operator effects and the invalid-command stress probe.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::env::{Family, HouseholdEnv, TaskBank, TaskSpec};
use crate::exec::{
    Environment, ExecutableError, Executor, GroundedState, Observation, StepOutcome, StepView,
    TaskBinding,
};
use crate::kb::{EntryContent, KnowledgeBase, ParamDecl, SemType};
use crate::value::Value;

/// Tasks whose goal binds to an L7 schema with a fully resolvable decomposition.
pub fn plan_coverage(kb: &KnowledgeBase, bank: &TaskBank) -> (usize, usize) {
    let Ok(exec) = Executor::new(kb) else {
        return (0, bank.len());
    };
    let mut names: BTreeSet<&str> = BTreeSet::new();
    for e in kb.entries() {
        match &e.content {
            EntryContent::Operator(o) => names.insert(&o.name),
            EntryContent::Skill(s) => names.insert(&s.name),
            EntryContent::PolicySchema(s) => names.insert(&s.name),
            _ => false,
        };
    }
    let covered = bank
        .tasks
        .iter()
        .filter(|t| {
            exec.bind_goal(&t.goal).is_some_and(|b| {
                kb.goal_schemas().any(|(e, g)| {
                    e.key == b.schema_key
                        && !g.decomposition.is_empty()
                        && g.decomposition.iter().all(|d| names.contains(d.as_str()))
                })
            })
        })
        .count();
    (covered, bank.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Query {
    /// Predicate value at one probe state.
    Predicate {
        name: String,
        args: Vec<Value>,
        state: usize,
        expected: bool,
    },
    /// One ontology fact of a class.
    Fact {
        class: String,
        fact: String,
        expected: Value,
    },
    /// Spatial prior ranking of a class.
    Prior {
        class: String,
        expected: Vec<String>,
    },
}

/// KB query checks with expected answers taken from a reference KB.
#[derive(Debug, Clone)]
pub struct QuerySuite {
    /// Probe states as (task, certificate prefix length).
    states: Vec<(TaskSpec, usize)>,
    pub queries: Vec<Query>,
}

fn probe_args(params: &[ParamDecl], task: &TaskSpec) -> Vec<Value> {
    params
        .iter()
        .map(|p| match p.sem_type {
            SemType::Object => Value::from(task.target_class.as_str()),
            SemType::Receptacle => Value::from(task.recep_class.as_str()),
            SemType::Tool | SemType::None => {
                Value::from(task.family.process_verb().unwrap_or("heat"))
            }
        })
        .collect()
}

/// Grounds the probe state reached by replaying a certificate prefix.
fn probe_state<'e, 'kb>(
    exec: &'e Executor<'kb>,
    task: &TaskSpec,
    prefix: usize,
) -> crate::exec::Episode<'e, 'kb> {
    let mut env = HouseholdEnv::new(task);
    let mut ep = exec.start();
    let _ = ep.observe(&env.reset());
    for cmd in task.certificate.iter().take(prefix) {
        let out = env.step(cmd);
        let _ = ep.observe(&out.observation);
    }
    ep
}

impl QuerySuite {
    /// Three probe states: the midpoint of the first task of up to three
    /// families in the bank, falling back to the first tasks.
    pub fn build(reference: &KnowledgeBase, bank: &TaskBank) -> Result<Self, ExecutableError> {
        let mut picked: Vec<&TaskSpec> = Vec::new();
        let mut families: BTreeSet<Family> = BTreeSet::new();
        for t in &bank.tasks {
            if picked.len() < 3 && families.insert(t.family) {
                picked.push(t);
            }
        }
        for t in &bank.tasks {
            if picked.len() >= 3 {
                break;
            }
            if !picked.iter().any(|p| p.id == t.id) {
                picked.push(t);
            }
        }
        let states: Vec<(TaskSpec, usize)> = picked
            .iter()
            .map(|t| ((*t).clone(), t.certificate.len() / 2))
            .collect();

        let exec = Executor::new(reference)?;
        let mut queries = Vec::new();
        for e in reference.entries() {
            match &e.content {
                EntryContent::Predicate(p) => {
                    for (i, (task, prefix)) in states.iter().enumerate() {
                        let ep = probe_state(&exec, task, *prefix);
                        let args = probe_args(&p.params, task);
                        let expected = exec
                            .eval_predicate(&p.name, ep.state(), ep.binding(), &args)
                            .unwrap_or(false);
                        queries.push(Query::Predicate {
                            name: p.name.clone(),
                            args,
                            state: i,
                            expected,
                        });
                    }
                }
                EntryContent::ObjectFact(o) => {
                    for (fact, v) in &o.facts {
                        queries.push(Query::Fact {
                            class: o.class.clone(),
                            fact: fact.clone(),
                            expected: v.clone(),
                        });
                    }
                }
                EntryContent::SpatialPrior(p) => queries.push(Query::Prior {
                    class: p.class.clone(),
                    expected: p.ranked.clone(),
                }),
                _ => {}
            }
        }
        Ok(QuerySuite { states, queries })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Number of queries `kb` answers as the reference did.
    pub fn run(&self, kb: &KnowledgeBase) -> usize {
        let exec = Executor::new(kb).ok();
        let episodes: Vec<_> = match &exec {
            Some(x) => self
                .states
                .iter()
                .map(|(t, p)| Some(probe_state(x, t, *p)))
                .collect(),
            None => self.states.iter().map(|_| None).collect(),
        };
        self.queries
            .iter()
            .filter(|q| match q {
                Query::Predicate { name, args, state, expected } => match (&exec, &episodes[*state]) {
                    (Some(x), Some(ep)) => x.eval_predicate(name, ep.state(), ep.binding(), args).ok() == Some(*expected),
                    _ => false,
                },
                Query::Fact { class, fact, expected } => kb.entries().iter().any(|e| {
                    matches!(&e.content, EntryContent::ObjectFact(o) if &o.class == class && o.facts.get(fact) == Some(expected))
                }),
                Query::Prior { class, expected } => kb.entries().iter().any(|e| {
                    matches!(&e.content, EntryContent::SpatialPrior(p) if &p.class == class && &p.ranked == expected)
                }),
            })
            .count()
    }
}

/// Query checks of `kb` against answers from `reference`.
pub fn query_probe(
    reference: &KnowledgeBase,
    kb: &KnowledgeBase,
    bank: &TaskBank,
) -> Result<(usize, usize), ExecutableError> {
    let suite = QuerySuite::build(reference, bank)?;
    Ok((suite.run(kb), suite.len()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OperatorEffect {
    pub operator: String,
    pub effects: usize,
    /// Executed steps of the bound skill with every precondition true.
    pub instances: usize,
    /// Instances after which every declared effect held.
    pub confirmed: usize,
}

impl OperatorEffect {
    /// An operator passes when it declares an effect and some instance confirms it.
    pub fn passed(&self) -> bool {
        self.effects > 0 && self.confirmed > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EffectProbe {
    pub operators: Vec<OperatorEffect>,
}

impl EffectProbe {
    pub fn passed(&self) -> usize {
        self.operators.iter().filter(|o| o.passed()).count()
    }

    pub fn total(&self) -> usize {
        self.operators.len()
    }
}

fn signed(effect: &str) -> (&str, bool) {
    match effect.strip_prefix('-') {
        Some(p) => (p, false),
        None => (effect.trim_start_matches('+'), true),
    }
}

/// Checks declared operator effects against grounded states observed
/// while running `kb` on `bank`.
pub fn effect_probe(
    kb: &KnowledgeBase,
    bank: &TaskBank,
    horizon: usize,
) -> Result<EffectProbe, ExecutableError> {
    let exec = Executor::new(kb)?;
    let ops = exec.operators().to_vec();
    let mut stats: Vec<OperatorEffect> = ops
        .iter()
        .map(|o| OperatorEffect {
            operator: o.name.clone(),
            effects: o.effects.len(),
            instances: 0,
            confirmed: 0,
        })
        .collect();
    fn holds(
        exec: &Executor,
        name: &str,
        state: &GroundedState,
        binding: Option<&TaskBinding>,
    ) -> bool {
        exec.eval_predicate(name, state, binding, &[])
            .unwrap_or(false)
    }
    for task in &bank.tasks {
        let mut env = HouseholdEnv::new(task);
        exec.run_observed(
            &mut env,
            &task.goal,
            task.seed,
            horizon,
            &mut |v: &StepView| {
                if !v.step.accepted || v.step.trace.recovered {
                    return;
                }
                let Some(skill) = v.step.trace.skill.as_deref() else {
                    return;
                };
                for (o, s) in ops.iter().zip(stats.iter_mut()) {
                    if o.bound_skill.skill != skill
                        || !o
                            .preconditions
                            .iter()
                            .all(|p| holds(&exec, p, v.before, v.binding))
                    {
                        continue;
                    }
                    s.instances += 1;
                    if o.effects.iter().all(|e| {
                        let (p, want) = signed(e);
                        holds(&exec, p, v.after, v.binding) == want
                    }) {
                        s.confirmed += 1;
                    }
                }
            },
        );
    }
    Ok(EffectProbe { operators: stats })
}

/// Household episode with one command hidden from the admissible list and
/// refused whenever issued.
struct JammedEnv {
    inner: HouseholdEnv,
    jammed: String,
    refused: usize,
}

impl JammedEnv {
    fn filter(&self, obs: Observation) -> Observation {
        let feedback = obs.feedback().unwrap_or_default().to_string();
        let admissible = obs
            .admissible()
            .unwrap_or_default()
            .into_iter()
            .filter(|c| *c != self.jammed)
            .collect();
        Observation::new(feedback, admissible)
    }
}

impl Environment for JammedEnv {
    fn reset(&mut self) -> Observation {
        self.refused = 0;
        let obs = self.inner.reset();
        self.filter(obs)
    }

    fn step(&mut self, command: &str) -> StepOutcome {
        if command == self.jammed {
            self.refused += 1;
            let obs = Observation::new("Nothing happens.", self.inner.admissible());
            return StepOutcome {
                observation: self.filter(obs),
                done: false,
                success: false,
                admissible: false,
            };
        }
        let mut out = self.inner.step(command);
        out.observation = self.filter(out.observation);
        out
    }

    fn task_id(&self) -> &str {
        self.inner.task_id()
    }

    fn rejected_commands(&self) -> usize {
        self.inner.rejected_commands() + self.refused
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StressProbe {
    pub task_id: Option<String>,
    pub jammed: Option<String>,
    pub success: bool,
}

/// Reruns the first cleanly solved task with one avoidable navigation
/// command jammed: the first `go to` the policy issued whose receptacle
/// the solver certificate never mentions. Passes when the episode still
/// succeeds.
pub fn stress_probe(
    kb: &KnowledgeBase,
    bank: &TaskBank,
    horizon: usize,
) -> Result<StressProbe, ExecutableError> {
    let exec = Executor::new(kb)?;
    for task in &bank.tasks {
        let mut env = HouseholdEnv::new(task);
        let clean = exec.run(&mut env, &task.goal, task.seed, horizon);
        if !clean.success {
            continue;
        }
        let jam = clean.steps.iter().map(|s| s.command.as_str()).find(|c| {
            c.strip_prefix("go to ").is_some_and(|r| {
                !task
                    .certificate
                    .iter()
                    .any(|k| k.ends_with(r) || k.contains(&format!("{r} ")))
            })
        });
        let Some(jam) = jam else { continue };
        let mut env = JammedEnv {
            inner: HouseholdEnv::new(task),
            jammed: jam.to_string(),
            refused: 0,
        };
        let run = exec.run(&mut env, &task.goal, task.seed, horizon);
        return Ok(StressProbe {
            task_id: Some(task.id.clone()),
            jammed: Some(jam.to_string()),
            success: run.success,
        });
    }
    Ok(StressProbe {
        task_id: None,
        jammed: None,
        success: false,
    })
}
