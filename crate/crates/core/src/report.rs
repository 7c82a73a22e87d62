//! Plain-text formatting shared by the exporters.

/// Scientific notation with 17 significant digits, enough to round-trip any
/// `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `10^log10_value` in scientific notation without evaluating the
/// power, so values far below the `f64` range stay representable as text.
pub fn fmt_pow10(log10_value: f64) -> String {
    if !log10_value.is_finite() {
        return fmt17(10f64.powf(log10_value));
    }
    let exp = log10_value.floor();
    let mut mantissa = 10f64.powf(log10_value - exp);
    let mut exp = exp as i64;
    if mantissa >= 10.0 {
        mantissa /= 10.0;
        exp += 1;
    }
    format!("{mantissa:.16}e{exp}")
}
