//! Numeric literal handling shared by the program executors, SQL filters and
//! answer normalization.

/// Parses a cell or literal as a number.
///
/// `$` and thousands commas are dropped; a trailing `%` divides by 100.
/// Anything else must be a plain decimal: optional sign, digits, optional
/// fraction.
pub fn parse_numeric(text: &str) -> Option<f64> {
    let trimmed = text.trim();
    let (body, percent) = match trimmed.strip_suffix('%') {
        Some(rest) => (rest, true),
        None => (trimmed, false),
    };
    let cleaned: String = body.chars().filter(|c| *c != '$' && *c != ',').collect();
    let value = parse_plain_decimal(cleaned.trim())?;
    Some(if percent { value / 100.0 } else { value })
}

/// Like [`parse_numeric`] but a trailing `%` is stripped without scaling.
pub fn parse_numeric_stripped(text: &str) -> Option<f64> {
    let cleaned: String = text.trim().chars().filter(|c| !matches!(c, '$' | ',' | '%')).collect();
    parse_plain_decimal(cleaned.trim())
}

fn parse_plain_decimal(s: &str) -> Option<f64> {
    let digits = s.strip_prefix(['-', '+']).unwrap_or(s);
    let mut seen_digit = false;
    let mut seen_dot = false;
    for c in digits.chars() {
        match c {
            '0'..='9' => seen_digit = true,
            '.' if !seen_dot => seen_dot = true,
            _ => return None,
        }
    }
    if !seen_digit {
        return None;
    }
    s.parse::<f64>().ok()
}

/// Canonical text form of a number: integers without a fractional part,
/// everything else in shortest round-trip form.
pub fn format_number(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if value.is_finite() && value.fract() == 0.0 && value.abs() < 1e15 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}
