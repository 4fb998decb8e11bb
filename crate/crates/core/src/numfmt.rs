//! Text formatting for reals written to CSV files.

/// Formats `x` with 9 significant digits in the style of C's `%.9g`:
/// fixed notation for moderate exponents, scientific otherwise, with
/// trailing zeros removed.
pub fn sig9(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_percent_g() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(1.0), "1");
        assert_eq!(sig9(-2.5), "-2.5");
        assert_eq!(sig9(0.1), "0.1");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(123456789.0), "123456789");
        assert_eq!(sig9(1234567890.0), "1.23456789e9");
        assert_eq!(sig9(1e-7), "1e-7");
        assert_eq!(sig9(0.000123), "0.000123");
        assert_eq!(sig9(2.0f64.sqrt() - 0.5), "0.914213562");
    }

    #[test]
    fn rounding_carries_into_exponent() {
        assert_eq!(sig9(9.9999999999), "10");
        assert_eq!(sig9(999999999.9), "1e9");
    }

    #[test]
    fn reparse_is_within_nine_digits() {
        for &x in &[std::f64::consts::PI, -1e-300, 6.02214076e23, 0.5 + 1e-12] {
            let y: f64 = sig9(x).parse().unwrap();
            assert!(((x - y) / x).abs() < 1e-8, "{x} -> {y}");
        }
    }
}
