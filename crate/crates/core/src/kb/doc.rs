use std::collections::BTreeSet;
use std::fmt;

use serde::de::{self, DeserializeSeed, Deserializer, MapAccess, SeqAccess, Visitor};
use serde_json::{Map, Value as Json};

use super::{
    resolve_references, type_check_entry, EntryContent, EntryType, KbEntry, KbMetadata,
    KnowledgeBase, ProvenanceRecord, ReferenceReport,
};
use crate::layer::LayerId;

pub const FORMAT: &str = "typedkb/1";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("dangling references: {0}")]
    DanglingReference(ReferenceReport),
}

impl ParseError {
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::Syntax { .. } => "syntax",
            ParseError::Schema { .. } => "schema",
            ParseError::DanglingReference(_) => "dangling-reference",
        }
    }

    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ParseError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// The KB as a JSON document with every section and container present.
pub fn to_document(kb: &KnowledgeBase) -> Json {
    let mut root = Map::new();
    root.insert("format".into(), Json::from(FORMAT));
    root.insert("version".into(), Json::from(kb.version));
    root.insert(
        "metadata".into(),
        serde_json::to_value(&kb.metadata).expect("metadata is representable as JSON"),
    );
    for layer in LayerId::ALL {
        let mut section = Map::new();
        for t in EntryType::ALL.into_iter().filter(|t| t.layer() == layer) {
            let items = kb
                .entries()
                .iter()
                .filter(|e| e.layer == layer && e.entry_type() == t);
            let container = if t.is_list() {
                Json::Array(items.map(|e| entry_json(e, true)).collect())
            } else {
                Json::Object(
                    items
                        .map(|e| (e.name().to_string(), entry_json(e, false)))
                        .collect(),
                )
            };
            section.insert(t.container().into(), container);
        }
        root.insert(layer.section().into(), Json::Object(section));
    }
    Json::Object(root)
}

pub(crate) fn entry_json(e: &KbEntry, with_key: bool) -> Json {
    let mut m = Map::new();
    if with_key {
        m.insert("key".into(), Json::from(e.name()));
    }
    m.insert("content".into(), e.content.to_json());
    m.insert(
        "provenance".into(),
        serde_json::to_value(&e.provenance).expect("provenance is representable as JSON"),
    );
    Json::Object(m)
}

/// Deterministic rendering: sorted keys, lists in declared order, two-space
/// indentation, trailing newline.
pub fn canonical_serialize(kb: &KnowledgeBase) -> String {
    let mut s = serde_json::to_string_pretty(&to_document(kb)).expect("document serializes");
    s.push('\n');
    s
}

/// Parses a KB document (JSON, or YAML when the text does not start with
/// `{`). Succeeds only when every entry type-checks and every reference
/// resolves; KBs flagged non-deployable skip the reference-closure check.
pub fn parse_kb(text: &str) -> Result<KnowledgeBase, ParseError> {
    let doc = read_document(text)?;
    let kb = from_document(&doc)?;
    if !kb.metadata.non_deployable {
        let report = resolve_references(&kb);
        if !report.is_empty() {
            return Err(ParseError::DanglingReference(report));
        }
    }
    Ok(kb)
}

/// Reads JSON or YAML text into a JSON value, rejecting duplicate map keys.
pub(crate) fn read_document(text: &str) -> Result<Json, ParseError> {
    if text.trim_start().starts_with('{') {
        if let Err(e) = serde_json::from_str::<de::IgnoredAny>(text) {
            return Err(ParseError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            });
        }
        let mut d = serde_json::Deserializer::from_str(text);
        NoDuplicates {
            path: String::new(),
        }
        .deserialize(&mut d)
        .map_err(|e| dup_error(&e.to_string()))?;
        serde_json::from_str(text).map_err(|e| ParseError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    } else {
        let yaml_syntax = |e: serde_yaml::Error| {
            let (line, column) = e.location().map_or((0, 0), |l| (l.line(), l.column()));
            ParseError::Syntax {
                line,
                column,
                message: e.to_string(),
            }
        };
        serde_yaml::from_str::<serde_yaml::Value>(text).map_err(yaml_syntax)?;
        NoDuplicates {
            path: String::new(),
        }
        .deserialize(serde_yaml::Deserializer::from_str(text))
        .map_err(|e| dup_error(&e.to_string()))?;
        serde_yaml::from_str(text).map_err(|e| ParseError::schema("", e.to_string()))
    }
}

fn dup_error(message: &str) -> ParseError {
    match message.split_once("|") {
        Some((path, msg)) => ParseError::schema(path, msg.split(" at line").next().unwrap_or(msg)),
        None => ParseError::schema("", message),
    }
}

/// Walks any document and fails on the first repeated map key.
struct NoDuplicates {
    path: String,
}

impl<'de> DeserializeSeed<'de> for NoDuplicates {
    type Value = ();

    fn deserialize<D: Deserializer<'de>>(self, d: D) -> Result<(), D::Error> {
        d.deserialize_any(self)
    }
}

impl<'de> Visitor<'de> for NoDuplicates {
    type Value = ();

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a structured document")
    }

    fn visit_bool<E>(self, _: bool) -> Result<(), E> {
        Ok(())
    }
    fn visit_i64<E>(self, _: i64) -> Result<(), E> {
        Ok(())
    }
    fn visit_u64<E>(self, _: u64) -> Result<(), E> {
        Ok(())
    }
    fn visit_f64<E>(self, _: f64) -> Result<(), E> {
        Ok(())
    }
    fn visit_str<E>(self, _: &str) -> Result<(), E> {
        Ok(())
    }
    fn visit_unit<E>(self) -> Result<(), E> {
        Ok(())
    }
    fn visit_none<E>(self) -> Result<(), E> {
        Ok(())
    }
    fn visit_some<D: Deserializer<'de>>(self, d: D) -> Result<(), D::Error> {
        d.deserialize_any(self)
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<(), A::Error> {
        let mut i = 0usize;
        while seq
            .next_element_seed(NoDuplicates {
                path: join(&self.path, &i.to_string()),
            })?
            .is_some()
        {
            i += 1;
        }
        Ok(())
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<(), A::Error> {
        let mut seen = BTreeSet::new();
        while let Some(key) = map.next_key::<KeyText>()? {
            let path = join(&self.path, &key.0);
            if !seen.insert(key.0.clone()) {
                return Err(de::Error::custom(format!(
                    "{path}|duplicate key `{}`",
                    key.0
                )));
            }
            map.next_value_seed(NoDuplicates { path })?;
        }
        Ok(())
    }
}

/// Any scalar map key rendered as text.
struct KeyText(String);

impl<'de> serde::Deserialize<'de> for KeyText {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = KeyText;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a scalar key")
            }
            fn visit_str<E>(self, v: &str) -> Result<KeyText, E> {
                Ok(KeyText(v.to_string()))
            }
            fn visit_bool<E>(self, v: bool) -> Result<KeyText, E> {
                Ok(KeyText(v.to_string()))
            }
            fn visit_i64<E>(self, v: i64) -> Result<KeyText, E> {
                Ok(KeyText(v.to_string()))
            }
            fn visit_u64<E>(self, v: u64) -> Result<KeyText, E> {
                Ok(KeyText(v.to_string()))
            }
            fn visit_f64<E>(self, v: f64) -> Result<KeyText, E> {
                Ok(KeyText(v.to_string()))
            }
        }
        d.deserialize_any(V)
    }
}

fn join(base: &str, seg: &str) -> String {
    if base.is_empty() {
        seg.to_string()
    } else {
        format!("{base}.{seg}")
    }
}

/// Builds a KB from a document value, type-checking every entry.
pub(crate) fn from_document(doc: &Json) -> Result<KnowledgeBase, ParseError> {
    let root = doc
        .as_object()
        .ok_or_else(|| ParseError::schema("", "document must be a map"))?;
    for key in root.keys() {
        let known = matches!(key.as_str(), "format" | "version" | "metadata")
            || LayerId::from_section(key).is_some();
        if !known {
            return Err(ParseError::schema(key, "unknown top-level field"));
        }
    }
    match root.get("format").and_then(Json::as_str) {
        Some(FORMAT) => {}
        Some(other) => {
            return Err(ParseError::schema(
                "format",
                format!("unsupported format `{other}`"),
            ))
        }
        None => return Err(ParseError::schema("format", "format missing")),
    }
    let version = root
        .get("version")
        .ok_or_else(|| ParseError::schema("version", "version missing"))?
        .as_u64()
        .ok_or_else(|| ParseError::schema("version", "version must be a non-negative integer"))?;
    let metadata: KbMetadata = match root.get("metadata") {
        Some(m) => serde_path_to_error::deserialize(m).map_err(|e| {
            ParseError::schema(
                join("metadata", &e.path().to_string()),
                e.inner().to_string(),
            )
        })?,
        None => return Err(ParseError::schema("metadata", "metadata missing")),
    };
    let mut kb = KnowledgeBase::new(&metadata.name);
    kb.version = version;
    kb.metadata = metadata;

    for layer in LayerId::ALL {
        let section_name = layer.section();
        let Some(section) = root.get(section_name) else {
            continue;
        };
        let section = section
            .as_object()
            .ok_or_else(|| ParseError::schema(section_name, "section must be a map"))?;
        for (container, items) in section {
            let path = format!("{section_name}.{container}");
            let t = EntryType::from_container(layer, container).ok_or_else(|| {
                ParseError::schema(
                    &path,
                    format!("layer {layer} has no container `{container}`"),
                )
            })?;
            let mut raw: Vec<(String, String, &Json)> = Vec::new();
            if t.is_list() {
                let list = items
                    .as_array()
                    .ok_or_else(|| ParseError::schema(&path, "container must be a list"))?;
                for (i, item) in list.iter().enumerate() {
                    let item_path = format!("{path}.{i}");
                    let name = item.get("key").and_then(Json::as_str).ok_or_else(|| {
                        ParseError::schema(format!("{item_path}.key"), "entry key missing")
                    })?;
                    raw.push((name.to_string(), item_path, item));
                }
            } else {
                let map = items
                    .as_object()
                    .ok_or_else(|| ParseError::schema(&path, "container must be a map"))?;
                for (name, item) in map {
                    raw.push((name.clone(), format!("{path}.{name}"), item));
                }
            }
            for (name, item_path, item) in raw {
                let entry = read_entry(layer, t, &name, &item_path, item)?;
                kb.insert(entry)
                    .map_err(|d| ParseError::schema(&item_path, d.to_string()))?;
            }
        }
    }
    for e in kb.entries() {
        let r = type_check_entry(e, e.layer);
        if let Some(first) = r.diagnostics.first() {
            let all: Vec<String> = r.diagnostics.iter().map(|d| d.message.clone()).collect();
            return Err(ParseError::schema(&first.path, all.join("; ")));
        }
    }
    Ok(kb)
}

fn read_entry(
    layer: LayerId,
    t: EntryType,
    name: &str,
    path: &str,
    item: &Json,
) -> Result<KbEntry, ParseError> {
    let obj = item
        .as_object()
        .ok_or_else(|| ParseError::schema(path, "entry must be a map"))?;
    for k in obj.keys() {
        let allowed = matches!(k.as_str(), "content" | "provenance") || (t.is_list() && k == "key");
        if !allowed {
            return Err(ParseError::schema(
                format!("{path}.{k}"),
                "unknown entry field",
            ));
        }
    }
    let content_json = obj
        .get("content")
        .ok_or_else(|| ParseError::schema(format!("{path}.content"), "content missing"))?;
    let content = EntryContent::from_json(t, content_json)
        .map_err(|(p, m)| ParseError::schema(join(&format!("{path}.content"), &p), m))?;
    let provenance: Vec<ProvenanceRecord> = match obj.get("provenance") {
        Some(p) => serde_path_to_error::deserialize(p).map_err(|e| {
            ParseError::schema(
                join(&format!("{path}.provenance"), &e.path().to_string()),
                e.inner().to_string(),
            )
        })?,
        None => Vec::new(),
    };
    Ok(KbEntry {
        layer,
        key: t.qualify(name),
        content,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_kb_round_trips() {
        let kb = KnowledgeBase::new("empty");
        let text = canonical_serialize(&kb);
        assert!(text.ends_with("}\n"));
        let back = parse_kb(&text).unwrap();
        assert_eq!(back, kb);
        assert_eq!(canonical_serialize(&back), text);
    }

    #[test]
    fn syntax_errors_carry_location() {
        let err = parse_kb("{\n  \"format\": \"typedkb/1\",\n  \"version\": ").unwrap_err();
        match err {
            ParseError::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_keys_rejected() {
        let text =
            r#"{"format": "typedkb/1", "version": 0, "version": 1, "metadata": {"name": "x"}}"#;
        let err = parse_kb(text).unwrap_err();
        assert_eq!(err.kind(), "schema");
        assert!(err.to_string().contains("duplicate key"), "{err}");
    }

    #[test]
    fn yaml_input_accepted() {
        let text = "format: typedkb/1\nversion: 2\nmetadata:\n  name: y\n";
        let kb = parse_kb(text).unwrap();
        assert_eq!(kb.version, 2);
        let dup = "format: typedkb/1\nversion: 2\nversion: 3\nmetadata:\n  name: y\n";
        assert!(parse_kb(dup).is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let text =
            r#"{"format": "typedkb/1", "version": 0, "metadata": {"name": "x"}, "extra": 1}"#;
        assert!(matches!(parse_kb(text), Err(ParseError::Schema { path, .. }) if path == "extra"));
    }
}
