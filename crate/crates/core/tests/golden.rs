use std::path::PathBuf;

use typedkb::fixtures::{scaffold_kb, solved_kb};
use typedkb::{canonical_serialize, parse_kb, KnowledgeBase};

fn check(name: &str, kb: KnowledgeBase) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/kb")
        .join(name);
    let text = canonical_serialize(&kb);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap();
    assert_eq!(golden, text, "{name} drifted; rerun with UPDATE_GOLDEN=1");
    assert_eq!(parse_kb(&golden).unwrap().hash(), kb.hash());
}

#[test]
fn scaffold_matches_golden() {
    check("scaffold.kb.json", scaffold_kb());
}

#[test]
fn solved_matches_golden() {
    check("solved.kb.json", solved_kb());
}
