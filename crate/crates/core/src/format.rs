//! Text formatting shared by the CSV writers.

/// Format with 17 significant digits, enough to round-trip any `f64`.
pub fn sig17(x: f64) -> String {
    if x == 0.0 {
        // keep the sign of negative zero out of the files
        return "0.0000000000000000e0".to_string();
    }
    format!("{x:.16e}")
}
