use num_rational::Ratio;

/// Exact rational value of a plain decimal literal such as `42.5` or `0.001`.
/// Returns `None` for anything else or when the value would not fit in `i128`.
pub fn parse_decimal(text: &str) -> Option<Ratio<i128>> {
    let text = text.trim();
    let (int, frac) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if int.len() + frac.len() > 30 {
        return None;
    }
    let digits = format!("{}{}", int, frac);
    let numer: i128 = digits.parse().ok()?;
    let denom = 10i128.checked_pow(frac.len() as u32)?;
    Some(Ratio::new(numer, denom))
}

/// Exact value of a finite non-negative `f64` via its shortest round-trip
/// decimal form.
pub fn ratio_of_f64(v: f64) -> Option<Ratio<i128>> {
    if !v.is_finite() || v < 0.0 {
        return None;
    }
    parse_decimal(&format!("{}", v))
}

/// `a == b` up to relative tolerance `tol`.
pub fn approx_eq(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}
