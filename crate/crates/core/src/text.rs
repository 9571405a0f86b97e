//! Tokenization shared by the query log, intent filters and lexical scorers.

/// Reserved end-of-query token. Tokenization can never produce it because
/// leading and trailing non-alphanumeric characters are stripped.
pub const END_TOKEN: &str = "</q>";

/// Lowercases, splits on whitespace runs and strips leading/trailing
/// punctuation from every token. Tokens that become empty are dropped.
/// No stemming: the intent filters rely on exact surface forms.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let token = raw
                .trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase();
            (!token.is_empty()).then_some(token)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_strips() {
        assert_eq!(tokenize("  Penguins,  HOCKEY!  "), vec!["penguins", "hockey"]);
        assert_eq!(tokenize(".com"), vec!["com"]);
        assert_eq!(tokenize("e-mail's"), vec!["e-mail's"]);
        assert!(tokenize(" -- ... ").is_empty());
    }

    #[test]
    fn end_token_is_unreachable() {
        assert!(!tokenize(END_TOKEN).iter().any(|t| t == END_TOKEN));
    }

    #[test]
    fn unicode_case_folding() {
        assert_eq!(tokenize("ÉCOLE Straße"), vec!["école", "straße"]);
    }
}
