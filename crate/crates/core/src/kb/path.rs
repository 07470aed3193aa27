use serde::Serialize;
use serde_json::Value as Json;

use super::{to_document, EntryType, KnowledgeBase};
use crate::layer::LayerId;

/// The node a dot path addresses, with the layer and entry that own it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeLocation {
    pub path: String,
    pub layer: Option<LayerId>,
    pub entry_type: Option<EntryType>,
    /// Qualified key of the entry containing the node, if any.
    pub entry_key: Option<String>,
    pub node: Json,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[error("path `{path}`: missing segment `{segment}` (position {position})")]
pub struct PathError {
    pub path: String,
    pub segment: String,
    pub position: usize,
}

/// Resolves a dot path such as `procedural.rules` or
/// `semantic.spatial_priors.cup` against the KB document. Below an entry,
/// segments address fields of its content directly (`logic.predicates.p.threshold`);
/// list elements are addressed by `key`, `name` or index.
pub fn resolve_path(kb: &KnowledgeBase, path: &str) -> Result<NodeLocation, PathError> {
    resolve_in(&to_document(kb), path)
}

pub(crate) fn resolve_in(doc: &Json, path: &str) -> Result<NodeLocation, PathError> {
    let segments: Vec<&str> = if path.is_empty() {
        Vec::new()
    } else {
        path.split('.').collect()
    };
    let mut node = doc;
    let mut layer = None;
    let mut entry_type = None;
    let mut entry_key = None;
    for (i, seg) in segments.iter().enumerate() {
        let missing = || PathError {
            path: path.to_string(),
            segment: seg.to_string(),
            position: i,
        };
        let next = if i == 2 && entry_type.is_some() {
            let found = child(node, seg).ok_or_else(missing)?;
            entry_key = entry_type.map(|t: EntryType| t.qualify(seg));
            found
        } else if i == 3 && entry_key.is_some() {
            node.get("content")
                .and_then(|c| child(c, seg))
                .or_else(|| child(node, seg))
                .ok_or_else(missing)?
        } else {
            child(node, seg).ok_or_else(missing)?
        };
        if i == 0 {
            layer = LayerId::from_section(seg);
        }
        if i == 1 {
            entry_type = layer.and_then(|l| EntryType::from_container(l, seg));
        }
        node = next;
    }
    Ok(NodeLocation {
        path: path.to_string(),
        layer,
        entry_type,
        entry_key,
        node: node.clone(),
    })
}

fn child<'a>(node: &'a Json, seg: &str) -> Option<&'a Json> {
    match node {
        Json::Object(m) => m.get(seg),
        Json::Array(items) => items
            .iter()
            .find(|x| {
                let named = |f: &str| x.get(f).and_then(Json::as_str) == Some(seg);
                named("key")
                    || named("name")
                    || x.get("content")
                        .and_then(|c| c.get("name"))
                        .and_then(Json::as_str)
                        == Some(seg)
            })
            .or_else(|| seg.parse::<usize>().ok().and_then(|i| items.get(i))),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_segment_named() {
        let kb = KnowledgeBase::new("t");
        let ok = resolve_path(&kb, "procedural.rules").unwrap();
        assert_eq!(ok.node, Json::Array(vec![]));
        assert_eq!(ok.layer, Some(LayerId::L4));
        let err = resolve_path(&kb, "procedural.nonexistent").unwrap_err();
        assert_eq!(err.segment, "nonexistent");
        assert_eq!(err.position, 1);
    }
}
