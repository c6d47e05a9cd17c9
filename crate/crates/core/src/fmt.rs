//! Number formatting shared by the CSV and JSON writers.

/// Formats `x` with 12 significant digits, in fixed notation when that stays
/// short and in scientific notation otherwise.
pub fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exponent) {
        let decimals = (11 - exponent).max(0) as usize;
        let s = format!("{x:.decimals$}");
        trim_zeros(&s)
    } else {
        let s = format!("{x:.11e}");
        match s.split_once('e') {
            Some((mantissa, exp)) => format!("{}e{exp}", trim_zeros(mantissa)),
            None => s,
        }
    }
}

/// Rounds `x` to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        assert_eq!(sig12(0.217_460_123_456_789), "0.217460123457");
        assert_eq!(sig12(1.0), "1");
        assert_eq!(sig12(-2.5), "-2.5");
        assert_eq!(sig12(1.234e-9), "1.234e-9");
        assert_eq!(sig12(123_456.789_012_345_6), "123456.789012");
        assert_eq!(sig12(0.0), "0");
        assert_eq!(sig12(f64::NAN), "NaN");
        assert_eq!(round12(0.1 + 0.2), 0.3);
    }

    #[test]
    fn round_trips_to_twelve_digits() {
        for x in [
            std::f64::consts::PI,
            1e-300,
            6.02214076e23,
            -0.000123456789012345,
        ] {
            let back: f64 = sig12(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-11);
        }
    }
}
