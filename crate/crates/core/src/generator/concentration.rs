//! Logit-space concentration dynamics.

/// Margin kept from the sensor bounds before taking logits.
pub const LOGIT_EPS: f64 = 0.1;

/// Logit inputs beyond this magnitude saturate; keeps `inv_logit`
/// strictly inside the bounds in floating point.
const Z_SATURATION: f64 = 30.0;

/// `ln((C - c_min) / (c_max - C))` with `C` first clamped into
/// `[c_min + LOGIT_EPS, c_max - LOGIT_EPS]`.
#[inline]
pub fn logit(c: f64, c_min: f64, c_max: f64) -> f64 {
    let c = c.clamp(c_min + LOGIT_EPS, c_max - LOGIT_EPS);
    ((c - c_min) / (c_max - c)).ln()
}

/// `c_min + (c_max - c_min) / (1 + exp(-z))`; always strictly inside
/// `(c_min, c_max)`.
#[inline]
pub fn inv_logit(z: f64, c_min: f64, c_max: f64) -> f64 {
    let z = z.clamp(-Z_SATURATION, Z_SATURATION);
    c_min + (c_max - c_min) / (1.0 + (-z).exp())
}

/// Maps a concentration-space standard deviation to logit space as half
/// the logit width of `[C - WSD, C + WSD]`, both ends kept `LOGIT_EPS`
/// inside the bounds.
#[inline]
pub fn logit_noise_sigma(c_obs: f64, wsd: f64, c_min: f64, c_max: f64) -> f64 {
    let upper = (c_obs + wsd).min(c_max - LOGIT_EPS);
    let lower = (c_obs - wsd).max(c_min + LOGIT_EPS);
    ((logit(upper, c_min, c_max) - logit(lower, c_min, c_max)) / 2.0).max(0.0)
}

/// Distance-dependent noise scale `sigma_noise * (1 + exp(-d / 50))`.
#[inline]
pub fn distance_noise_scale(sigma_noise: f64, distance_m: f64) -> f64 {
    sigma_noise * (1.0 + (-distance_m / 50.0).exp())
}

/// Two-sample logit history of the AR(2) chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArHistory {
    pub z_prev1: f64,
    pub z_prev2: f64,
}

impl ArHistory {
    pub fn at(z: f64) -> Self {
        Self { z_prev1: z, z_prev2: z }
    }

    /// `z_t = ar1 (z_{t-1} - z_obs) + ar2 (z_{t-2} - z_obs) + z_obs + noise`,
    /// then shifts the history.
    #[inline]
    pub fn advance(&mut self, z_obs: f64, ar1: f64, ar2: f64, noise: f64) -> f64 {
        let z = ar1 * (self.z_prev1 - z_obs) + ar2 * (self.z_prev2 - z_obs) + z_obs + noise;
        self.z_prev2 = self.z_prev1;
        self.z_prev1 = z;
        z
    }
}

/// Roots `(re, im)` of the AR(2) characteristic polynomial
/// `1 - ar1 z - ar2 z^2`.
pub fn ar_characteristic_roots(ar1: f64, ar2: f64) -> Vec<(f64, f64)> {
    if ar2 == 0.0 {
        return if ar1 == 0.0 { vec![] } else { vec![(1.0 / ar1, 0.0)] };
    }
    // ar2 z^2 + ar1 z - 1 = 0
    let disc = ar1 * ar1 + 4.0 * ar2;
    let re = -ar1 / (2.0 * ar2);
    if disc >= 0.0 {
        let s = disc.sqrt() / (2.0 * ar2);
        vec![(re + s, 0.0), (re - s, 0.0)]
    } else {
        let s = (-disc).sqrt() / (2.0 * ar2.abs());
        vec![(re, s), (re, -s)]
    }
}

/// True when every characteristic root lies strictly outside the unit circle.
pub fn ar_is_stationary(ar1: f64, ar2: f64) -> bool {
    ar_characteristic_roots(ar1, ar2)
        .iter()
        .all(|(re, im)| re.hypot(*im) > 1.0)
}
