//! Property-based checks over arbitrary (including non-ASCII) inputs.

use iterbeam_core::eval::{normalize_text, token_f1};
use iterbeam_core::markup::{escape_doc, unescape_doc};
use proptest::prelude::*;

proptest! {
    #[test]
    fn escape_doc_round_trips(text in "\\PC{0,200}") {
        prop_assert_eq!(unescape_doc(&escape_doc(&text)), text);
    }

    #[test]
    fn escaped_docs_never_leak_delimiters(text in "\\PC{0,200}") {
        let escaped = escape_doc(&text);
        prop_assert!(!escaped.contains("</paragraph>"));
        prop_assert!(!escaped.contains("@@"));
    }

    #[test]
    fn normalize_text_is_idempotent(text in "\\PC{0,200}") {
        let once = normalize_text(&text);
        prop_assert_eq!(normalize_text(&once), once);
    }

    #[test]
    fn token_f1_is_symmetric_and_bounded(a in "\\PC{0,80}", b in "\\PC{0,80}") {
        let f = token_f1(&a, &b);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - token_f1(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn token_f1_of_a_string_with_itself_is_exact(a in "\\PC{0,80}") {
        prop_assert_eq!(token_f1(&a, &a), 1.0);
    }
}
