//! Learnable per-neuron axonal delays with linear interpolation between
//! neighbouring steps, so the shifted train is differentiable in the delay.
//!
//! With `k = ⌊d/dt⌋` and `φ = d/dt − k`:
//! `out[t] = (1 − φ)·s[t−k] + φ·s[t−k−1]`, and
//! `∂out[t]/∂d = (s[t−k−1] − s[t−k]) / dt`.

/// Delay actually applied: clipped to `[0, (steps − 1)·dt]`.
pub fn effective_delay(d: f64, steps: usize, dt: f64) -> f64 {
    d.clamp(0.0, (steps.saturating_sub(1)) as f64 * dt)
}

fn split(d: f64, steps: usize, dt: f64) -> (usize, f64) {
    let x = effective_delay(d, steps, dt) / dt;
    let k = x.floor();
    (k as usize, x - k)
}

fn at(s: &[f64], t: isize, j: usize, n: usize) -> f64 {
    if t < 0 {
        0.0
    } else {
        s[t as usize * n + j]
    }
}

/// Shifts each neuron's train (`steps × n`, row-major) by its own delay.
pub fn apply_delay(s: &[f64], delays: &[f64], steps: usize, dt: f64) -> Vec<f64> {
    let n = delays.len();
    let mut out = vec![0.0; steps * n];
    for (j, &d) in delays.iter().enumerate() {
        let (k, phi) = split(d, steps, dt);
        for t in k..steps {
            let t = t as isize;
            let k = k as isize;
            out[t as usize * n + j] = (1.0 - phi) * at(s, t - k, j, n) + phi * at(s, t - k - 1, j, n);
        }
    }
    out
}

/// Backward of [`apply_delay`]: returns `(∂L/∂s, ∂L/∂d)` given `∂L/∂out`.
///
/// The clip is treated as identity so a delay pushed outside the window can
/// still move back.
pub fn apply_delay_backward(
    s: &[f64],
    grad_out: &[f64],
    delays: &[f64],
    steps: usize,
    dt: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = delays.len();
    let mut ds = vec![0.0; steps * n];
    let mut dd = vec![0.0; n];
    for (j, &d) in delays.iter().enumerate() {
        let (k, phi) = split(d, steps, dt);
        let mut acc = 0.0;
        for t in k..steps {
            let g = grad_out[t * n + j];
            if g == 0.0 {
                continue;
            }
            let src = t - k;
            ds[src * n + j] += (1.0 - phi) * g;
            if src >= 1 {
                ds[(src - 1) * n + j] += phi * g;
            }
            let (ti, ki) = (t as isize, k as isize);
            acc += g * (at(s, ti - ki - 1, j, n) - at(s, ti - ki, j, n)) / dt;
        }
        dd[j] = acc;
    }
    (ds, dd)
}
