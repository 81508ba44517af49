use serde::{Deserialize, Serialize};

/// Floor/ceiling applied to predicted probabilities inside the likelihood.
pub const PROB_EPS: f64 = 1e-9;

/// Gaussian plume onset-probability parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlumeParams {
    #[serde(rename = "A")]
    pub amplitude: f64,
    pub x0: f64,
    pub y0: f64,
    pub sigma_y0: f64,
    pub d_y: f64,
    pub lambda: f64,
}

impl Default for PlumeParams {
    fn default() -> Self {
        Self {
            amplitude: 0.5,
            x0: 0.0,
            y0: 0.0,
            sigma_y0: 1.0,
            d_y: 1.0,
            lambda: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlumeBounds {
    #[serde(rename = "A")]
    pub amplitude: (f64, f64),
    pub sigma_y0: (f64, f64),
    pub d_y: (f64, f64),
    pub lambda: (f64, f64),
}

impl Default for PlumeBounds {
    fn default() -> Self {
        Self {
            amplitude: (0.0, 1.0),
            sigma_y0: (0.2, 5.0),
            d_y: (0.55, 2.0),
            lambda: (0.02, 1.0),
        }
    }
}

impl PlumeBounds {
    pub fn contains(&self, p: &PlumeParams) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        within(p.amplitude, self.amplitude)
            && within(p.sigma_y0, self.sigma_y0)
            && within(p.d_y, self.d_y)
            && within(p.lambda, self.lambda)
    }

    pub(crate) fn as_arrays(&self) -> ([f64; 4], [f64; 4]) {
        (
            [self.amplitude.0, self.sigma_y0.0, self.d_y.0, self.lambda.0],
            [self.amplitude.1, self.sigma_y0.1, self.d_y.1, self.lambda.1],
        )
    }
}

#[inline]
pub fn ramp(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `x^0.8` for `x >= 0`, polished with one Newton step on `y^5 = x^4` so
/// that exact powers such as `32^0.8 = 16` come out exact.
#[inline]
fn pow_four_fifths(x: f64) -> f64 {
    let y = x.powf(0.8);
    if y == 0.0 || !(x < 1e60) {
        return y;
    }
    let x2 = x * x;
    let y2 = y * y;
    y - (y2 * y2 * y - x2 * x2) / (5.0 * y2 * y2)
}

/// Cross-stream spread `sigma_y0 + d_y * R(x)^0.8`.
#[inline]
pub fn sigma_y(x: f64, params: &PlumeParams) -> f64 {
    params.sigma_y0 + params.d_y * pow_four_fifths(ramp(x - params.x0))
}

/// Onset probability of the plume model at `(x, y)`; zero upwind of the
/// source.
#[inline]
pub fn plume_probability(x: f64, y: f64, params: &PlumeParams) -> f64 {
    let xr = x - params.x0;
    if xr < 0.0 {
        return 0.0;
    }
    let s = sigma_y(x, params);
    let dy = y - params.y0;
    params.amplitude * (-dy * dy / (2.0 * s * s)).exp() * (-params.lambda * ramp(xr)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn ramp_cases() {
        assert_eq!(ramp(-1.0), 0.0);
        assert_eq!(ramp(0.0), 0.0);
        assert_eq!(ramp(2.5), 2.5);
    }

    #[test]
    fn four_fifths_power() {
        assert_eq!(pow_four_fifths(32.0), 16.0);
        assert_eq!(pow_four_fifths(1024.0), 256.0);
        assert_eq!(pow_four_fifths(0.0), 0.0);
        for &x in &[0.001, 0.37, 2.0, 17.5, 55.0, 1e4] {
            let r = pow_four_fifths(x) / x.powf(0.8);
            assert!((r - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn spread_cases() {
        let p = PlumeParams { sigma_y0: 1.0, d_y: 0.5, ..Default::default() };
        assert_eq!(sigma_y(0.0, &p), 1.0);
        assert_eq!(sigma_y(-5.0, &p), 1.0);
        assert_eq!(sigma_y(32.0, &p), 9.0);
    }

    #[test]
    fn probability_cases() {
        let p = PlumeParams { amplitude: 0.7, y0: 1.5, ..Default::default() };
        assert_eq!(plume_probability(-0.1, 1.5, &p), 0.0);
        assert_eq!(plume_probability(0.0, 1.5, &p), 0.7);
        // sigma_y(1) = sigma_y0 + d_y = 1 with sigma_y0 = 0.2, d_y = 0.8
        let q = PlumeParams { amplitude: 1.0, y0: 0.0, sigma_y0: 0.2, d_y: 0.8, lambda: 0.0, x0: 0.0 };
        assert_abs_diff_eq!(plume_probability(1.0, 1.0, &q), (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(plume_probability(1.0, 1.0, &q), 0.6065306597, epsilon = 1e-10);
    }

    fn params_strategy() -> impl Strategy<Value = PlumeParams> {
        (0.0f64..1.0, 0.2f64..5.0, 0.55f64..2.0, 0.02f64..1.0, -3.0f64..3.0).prop_map(
            |(a, s, d, l, y0)| PlumeParams { amplitude: a, x0: 0.0, y0, sigma_y0: s, d_y: d, lambda: l },
        )
    }

    proptest! {
        #[test]
        fn centerline_is_argmax(p in params_strategy(), x in 0.0f64..60.0, dy in -20.0f64..20.0) {
            prop_assert!(plume_probability(x, p.y0 + dy, &p) <= plume_probability(x, p.y0, &p));
        }

        #[test]
        fn centerline_decays_downwind(p in params_strategy(), x in 0.0f64..60.0, step in 0.0f64..10.0) {
            prop_assert!(plume_probability(x + step, p.y0, &p) <= plume_probability(x, p.y0, &p));
        }
    }
}
