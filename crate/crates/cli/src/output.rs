//! Deterministic number formatting for printed and CSV output.

/// Formats with 6 significant digits and a locale-independent decimal point.
/// Zero prints as `0.000000`.
pub fn sig6(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0.000000".to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (5 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}
