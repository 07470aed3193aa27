//! Identifier grammars.
//!
//! Predicates, fields, classes and facts use snake-case identifiers
//! (`[a-z][a-z0-9_]*`). Rule, skill and schema names are symbols, which also
//! admit upper-case letters (`OpenGoalRecep`, `OPEN`). Both are capped at 64
//! characters and are case-sensitive.

pub const MAX_IDENT_LEN: usize = 64;

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    s.len() <= MAX_IDENT_LEN
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

pub fn is_symbol(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    s.len() <= MAX_IDENT_LEN && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// A dotted field path such as `current.open_state`; every segment is an identifier.
pub fn is_field_path(s: &str) -> bool {
    !s.is_empty() && s.split('.').all(is_identifier)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifier_grammar() {
        assert!(is_identifier("holds_target"));
        assert!(is_identifier("a1"));
        assert!(!is_identifier("Holds"));
        assert!(!is_identifier("1abc"));
        assert!(!is_identifier(""));
        assert!(!is_identifier(&"a".repeat(65)));
        assert!(is_identifier(&"a".repeat(64)));
    }

    #[test]
    fn symbol_grammar() {
        assert!(is_symbol("OpenGoalRecep"));
        assert!(is_symbol("OPEN"));
        assert!(is_symbol("GOTO_TOOL"));
        assert!(!is_symbol("_x"));
        assert!(!is_symbol("a-b"));
    }

    #[test]
    fn field_paths() {
        assert!(is_field_path("current.open_state"));
        assert!(!is_field_path("current..x"));
        assert!(!is_field_path("Current.x"));
    }
}
