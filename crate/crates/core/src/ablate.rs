//! Layer ablations: intervention KBs that remove or neutralize one layer
//! of a frozen KB, plus the report row they are scored by.

use serde::Serialize;

use crate::cond::ConditionExpr;
use crate::env::TaskBank;
use crate::exec::ExecutableError;
use crate::kb::{EntryContent, KnowledgeBase};
use crate::layer::LayerId;
use crate::verify::{effect_probe, evaluate_bank, plan_coverage, query_probe, stress_probe};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown ablation variant `{variant}` for layer {layer}")]
pub struct UnknownVariant {
    pub layer: LayerId,
    pub variant: String,
}

/// Variants accepted per layer; the first is the default.
pub fn variants(layer: LayerId) -> &'static [&'static str] {
    match layer {
        LayerId::S0 => &["cut_source"],
        LayerId::L0 => &["disable_grounding"],
        LayerId::L1 => &["all_false"],
        LayerId::L2 => &["remove_ontology", "remove_priors"],
        LayerId::L3 => &["remove_effects", "remove_operators"],
        LayerId::L4 => &["look_only"],
        LayerId::L5 => &["disable_recovery", "disable_monitors"],
        LayerId::L6 => &["clear_experience"],
        LayerId::L7 => &["remove_goals"],
    }
}

/// Builds the intervention KB. The result skips the reference-closure
/// check and is marked non-deployable; `kb` itself is not touched.
pub fn ablate_layer(
    kb: &KnowledgeBase,
    layer: LayerId,
    variant: &str,
) -> Result<KnowledgeBase, UnknownVariant> {
    let known = variants(layer);
    let variant = if variant == "default" {
        known[0]
    } else {
        variant
    };
    if !known.contains(&variant) {
        return Err(UnknownVariant {
            layer,
            variant: variant.to_string(),
        });
    }
    let mut out = kb.clone();
    match variant {
        "all_false" => {
            for e in out.entries_mut() {
                if let EntryContent::Predicate(p) = &mut e.content {
                    if p.name != "always" {
                        p.eval_rule = ConditionExpr::never();
                    }
                }
            }
        }
        "remove_priors" => out.retain(|e| !matches!(e.content, EntryContent::SpatialPrior(_))),
        "remove_effects" => {
            for e in out.entries_mut() {
                if let EntryContent::Operator(o) = &mut e.content {
                    o.effects.clear();
                }
            }
        }
        "remove_operators" => out.retain(|e| !matches!(e.content, EntryContent::Operator(_))),
        "look_only" => {
            out.retain(|e| match &e.content {
                EntryContent::Rule(r) => r.action == "LOOK",
                EntryContent::PolicySchema(_) => false,
                _ => true,
            });
        }
        "disable_recovery" => out.retain(|e| !matches!(e.content, EntryContent::Recovery(_))),
        "disable_monitors" => out.retain(|e| !matches!(e.content, EntryContent::Monitor(_))),
        _ => out.retain(|e| e.layer != layer),
    }
    out.metadata.non_deployable = true;
    Ok(out)
}

/// One row of an ablation report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AblationRow {
    pub layer: Option<LayerId>,
    pub variant: String,
    pub kb_hash: String,
    pub bank: String,
    pub seed: u64,
    pub exec: (u64, u64),
    pub query: (usize, usize),
    pub plan: (usize, usize),
    pub effect_probe: (usize, usize),
    pub stress_probe: (usize, usize),
}

impl AblationRow {
    /// Scores `kb`, with query answers taken from `reference`. A KB that
    /// cannot be loaded scores zero executions and zero probes.
    pub fn measure(
        reference: &KnowledgeBase,
        kb: &KnowledgeBase,
        layer: Option<LayerId>,
        variant: &str,
        bank: &TaskBank,
        horizon: usize,
    ) -> Result<Self, ExecutableError> {
        let exec = match evaluate_bank(kb, bank, horizon) {
            Ok(e) => (e.metrics.successes, e.metrics.total),
            Err(_) => (0, bank.len() as u64),
        };
        let effect = effect_probe(kb, bank, horizon)
            .map(|p| (p.passed(), p.total()))
            .unwrap_or((0, 0));
        let stress = stress_probe(kb, bank, horizon)
            .map(|p| (p.success as usize, 1))
            .unwrap_or((0, 1));
        Ok(AblationRow {
            layer,
            variant: variant.to_string(),
            kb_hash: kb.hash(),
            bank: bank.name.clone(),
            seed: bank.seed,
            exec,
            query: query_probe(reference, kb, bank)?,
            plan: plan_coverage(kb, bank),
            effect_probe: effect,
            stress_probe: stress,
        })
    }

    pub fn to_line(&self) -> String {
        let f = |(a, b): (usize, usize)| format!("{a}/{b}");
        format!(
            "layer={} variant={} exec={}/{} query={} plan={} effect_probe={} stress_probe={} kb={} bank={} seed={}",
            self.layer.map_or("full".to_string(), |l| l.to_string()),
            self.variant,
            self.exec.0,
            self.exec.1,
            f(self.query),
            f(self.plan),
            f(self.effect_probe),
            f(self.stress_probe),
            &self.kb_hash[..12],
            self.bank,
            self.seed,
        )
    }
}

/// Effect probe total for the full KB is the operator count; an ablated
/// KB with no operators reports 0/0, so callers compare against the
/// reference count.
pub fn full_row(
    kb: &KnowledgeBase,
    bank: &TaskBank,
    horizon: usize,
) -> Result<AblationRow, ExecutableError> {
    AblationRow::measure(kb, kb, None, "none", bank, horizon)
}
