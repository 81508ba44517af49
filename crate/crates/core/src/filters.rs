//! Discrete smoothing filters shared by the field fit and the generator.
//!
//! Boundaries use half-sample symmetric reflection (`d c b a | a b c d`),
//! under which a normalized symmetric kernel conserves the total mass of
//! its input.

/// Normalized Gaussian kernel truncated at `4 * sigma` (radius rounded to
/// the nearest sample). Returns `[1.0]` for `sigma == 0`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma + 0.5) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= total);
    k
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let j = i.rem_euclid(period);
    if j >= n {
        (period - 1 - j) as usize
    } else {
        j as usize
    }
}

fn convolve_strided(
    input: &[f64],
    output: &mut [f64],
    kernel: &[f64],
    start: usize,
    len: usize,
    stride: usize,
) {
    let radius = (kernel.len() / 2) as isize;
    for i in 0..len {
        let mut acc = 0.0;
        for (k, w) in kernel.iter().enumerate() {
            let j = reflect(i as isize + k as isize - radius, len);
            acc += w * input[start + j * stride];
        }
        output[start + i * stride] = acc;
    }
}

/// 1-D Gaussian filter with reflective boundaries.
pub fn gaussian_filter_1d(signal: &[f64], sigma: f64) -> Vec<f64> {
    if signal.is_empty() || sigma <= 0.0 {
        return signal.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let mut out = vec![0.0; signal.len()];
    convolve_strided(signal, &mut out, &kernel, 0, signal.len(), 1);
    out
}

/// Separable 2-D Gaussian filter on a row-major `ny x nx` grid
/// (`values[iy * nx + ix]`), reflective boundaries on both axes.
pub fn gaussian_filter_2d(values: &[f64], nx: usize, ny: usize, sigma: f64) -> Vec<f64> {
    assert_eq!(values.len(), nx * ny, "grid shape mismatch");
    if sigma <= 0.0 || values.is_empty() {
        return values.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let mut tmp = vec![0.0; values.len()];
    for iy in 0..ny {
        convolve_strided(values, &mut tmp, &kernel, iy * nx, nx, 1);
    }
    let mut out = vec![0.0; values.len()];
    for ix in 0..nx {
        convolve_strided(&tmp, &mut out, &kernel, ix, ny, nx);
    }
    out
}

/// Centered rolling mean. For even windows the window covers
/// `[i - w/2, i + w/2 - 1]`; windows are truncated at the ends and the mean
/// is taken over the samples present.
pub fn centered_rolling_mean(signal: &[f64], window: usize) -> Vec<f64> {
    let n = signal.len();
    if window <= 1 || n == 0 {
        return signal.to_vec();
    }
    let back = window / 2;
    let fwd = window - back - 1;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(back);
            let hi = (i + fwd).min(n - 1);
            let s: f64 = signal[lo..=hi].iter().sum();
            s / (hi - lo + 1) as f64
        })
        .collect()
}

/// Trailing rolling mean over up to `window` samples ending at each index.
pub fn trailing_rolling_mean(signal: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..signal.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let s: f64 = signal[lo..=i].iter().sum();
            s / (i + 1 - lo) as f64
        })
        .collect()
}
