//! Pulling the answer out of a raw completion.

use super::prompt::Scheme;
use crate::programs::{parse_program, parse_sql, Derivation};
use regex::Regex;
use std::sync::LazyLock;

static DEFAULT_ANCHOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)answer is").expect("valid regex"));

#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub answer: String,
    pub derivation: Option<Derivation>,
    /// No derivation could be parsed from a PoT completion.
    pub unparseable: bool,
}

pub fn extract_answer(raw: &str, scheme: Scheme) -> Extracted {
    extract_answer_with(raw, scheme, &DEFAULT_ANCHOR)
}

/// Like [`extract_answer`] with a custom CoT anchor.
pub fn extract_answer_with(raw: &str, scheme: Scheme, cot_anchor: &Regex) -> Extracted {
    match scheme {
        Scheme::Direct => plain(raw.trim().to_string()),
        Scheme::CoT => plain(cot_answer(raw, cot_anchor)),
        Scheme::PoT => match derivation_suffix(raw) {
            Some(d) => Extracted { answer: String::new(), derivation: Some(d), unparseable: false },
            None => Extracted { answer: String::new(), derivation: None, unparseable: true },
        },
    }
}

fn plain(answer: String) -> Extracted {
    Extracted { answer, derivation: None, unparseable: false }
}

fn cot_answer(raw: &str, anchor: &Regex) -> String {
    let tail = match anchor.find_iter(raw).last() {
        Some(m) => &raw[m.end()..],
        None => raw.trim().lines().last().unwrap_or(""),
    };
    let tail = tail.trim().trim_start_matches(':').trim();
    tail.strip_suffix('.').unwrap_or(tail).trim().to_string()
}

/// Longest suffix of the completion that parses as a program or SQL query.
fn derivation_suffix(raw: &str) -> Option<Derivation> {
    let text = raw.trim().trim_end_matches(['`', '.']).trim_end();
    let mut prev: Option<char> = None;
    for (i, c) in text.char_indices() {
        let boundary = prev.is_none_or(|p| !(p.is_alphanumeric() || p == '_' || p == '#'));
        prev = Some(c);
        if !boundary || !c.is_ascii_alphabetic() {
            continue;
        }
        let candidate = &text[i..];
        if let Ok(p) = parse_program(candidate) {
            return Some(Derivation::Program(p));
        }
        if let Ok(s) = parse_sql(candidate) {
            return Some(Derivation::Sql(s));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_trims() {
        assert_eq!(extract_answer(" Paris ", Scheme::Direct).answer, "Paris");
    }

    #[test]
    fn cot_takes_text_after_last_marker() {
        let raw = "The answer is not obvious. Adding 40 and 2... Therefore, the Answer is 42.";
        assert_eq!(extract_answer(raw, Scheme::CoT).answer, "42");
    }

    #[test]
    fn cot_falls_back_to_last_line() {
        assert_eq!(extract_answer("reasoning\n  17 \n", Scheme::CoT).answer, "17");
    }

    #[test]
    fn cot_custom_anchor() {
        let anchor = Regex::new("(?i)final:").unwrap();
        assert_eq!(extract_answer_with("x. Final: yes.", Scheme::CoT, &anchor).answer, "yes");
    }

    #[test]
    fn pot_finds_program_suffix() {
        let e = extract_answer("Program: subtract(10, 4)", Scheme::PoT);
        assert_eq!(e.derivation.unwrap().to_string(), "subtract(10, 4)");
        let e = extract_answer("We compute:\nadd(1, 2),\nmultiply(#0, 3).", Scheme::PoT);
        assert_eq!(e.derivation.unwrap().to_string(), "add(1, 2), multiply(#0, 3)");
    }

    #[test]
    fn pot_finds_sql() {
        let e = extract_answer("```\nSELECT COUNT(Name) WHERE Age > 30\n```", Scheme::PoT);
        assert!(matches!(e.derivation, Some(Derivation::Sql(_))));
    }

    #[test]
    fn pot_flags_unparseable() {
        let e = extract_answer("I cannot tell.", Scheme::PoT);
        assert!(e.unparseable && e.derivation.is_none());
    }
}
