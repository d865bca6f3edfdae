use crate::error::{Error, Result};

/// Received power from the channel impulse response power `C`, preamble
/// accumulation count `N`, and hardware constant `A` (dB):
/// `10 * log10(C * 2^17 / N^2) - A`, in dBm.
///
/// The constants come from radio firmware and are therefore inputs, not
/// defaults.
pub fn received_power(c: f64, n: f64, a: f64) -> Result<f64> {
    if c <= 0.0 || !c.is_finite() {
        return Err(Error::invalid(format!("CIR power must be > 0, got {c}")));
    }
    if n <= 0.0 || !n.is_finite() {
        return Err(Error::invalid(format!("preamble count must be > 0, got {n}")));
    }
    Ok(10.0 * (c * (1u64 << 17) as f64 / (n * n)).log10() - a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unity_ratio_gives_minus_a() {
        let n = 128.0f64;
        let c = n * n / (1u64 << 17) as f64;
        let p = received_power(c, n, 121.74).unwrap();
        assert!((p - (-121.74)).abs() < 1e-12);
    }

    #[test]
    fn ten_x_ratio_gives_plus_ten() {
        let n = 64.0f64;
        let c = 10.0 * n * n / (1u64 << 17) as f64;
        let p = received_power(c, n, 0.0).unwrap();
        assert!((p - 10.0).abs() < 1e-12);
    }

    #[test]
    fn vendor_style_values() {
        // 10 * log10(2.5e-5 * 131072 / 16384) - 121.74 = -158.7297
        let p = received_power(2.5e-5, 128.0, 121.74).unwrap();
        assert!((p - (-158.7297)).abs() < 1e-4, "{p}");
    }

    #[test]
    fn rejects_nonpositive_inputs() {
        assert!(received_power(0.0, 128.0, 0.0).is_err());
        assert!(received_power(1.0, 0.0, 0.0).is_err());
        assert!(received_power(-1.0, 128.0, 0.0).is_err());
    }
}
