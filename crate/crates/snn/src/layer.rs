//! One feed-forward layer of leaky integrate-and-fire neurons.
//!
//! Per step: `u[t] = β·u[t−1]·(1 − s[t−1]) + W·x[t]`, `s[t] = H(u[t] − ϑ)`
//! with `β = exp(−dt/τ)` shared by the layer. A non-spiking layer is a plain
//! leaky integrator (`s ≡ 0`, no reset).

use serde::{Deserialize, Serialize};

use crate::surrogate::SpikeFn;

/// Layer input over time, `steps × n_in`.
#[derive(Clone, Copy)]
pub enum Drive<'a> {
    /// Binary input given as the active indices at each step.
    Sparse(&'a [Vec<usize>]),
    /// Real-valued input, row-major `steps × n_in`.
    Dense(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifLayer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_in × n_out`: row `i` holds the fan-out of input `i`.
    pub weights: Vec<f64>,
    /// Optimized in log space so Adam steps are relative changes of τ.
    pub log_tau: f64,
    pub learn_tau: bool,
    pub threshold: f64,
    pub spiking: bool,
}

/// Membranes and spikes of one layer, row-major `steps × n_out`.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub u: Vec<f64>,
    pub s: Vec<f64>,
}

pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub log_tau: f64,
    /// ∂L/∂x, only for dense drives when requested.
    pub input: Option<Vec<f64>>,
}

impl LifLayer {
    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    pub fn beta(&self, dt: f64) -> f64 {
        (-dt / self.tau()).exp()
    }

    fn add_current(&self, drive: Drive<'_>, t: usize, out: &mut [f64]) {
        let n = self.n_out;
        let mut add_row = |i: usize, v: f64| {
            let row = &self.weights[i * n..(i + 1) * n];
            for (o, w) in out.iter_mut().zip(row) {
                *o += v * w;
            }
        };
        match drive {
            Drive::Sparse(active) => active[t].iter().for_each(|&i| add_row(i, 1.0)),
            Drive::Dense(x) => {
                for (i, &v) in x[t * self.n_in..(t + 1) * self.n_in].iter().enumerate() {
                    if v != 0.0 {
                        add_row(i, v);
                    }
                }
            }
        }
    }

    pub fn forward(&self, drive: Drive<'_>, steps: usize, dt: f64, spike: SpikeFn) -> LayerTrace {
        let n = self.n_out;
        let beta = self.beta(dt);
        let mut u = vec![0.0; steps * n];
        let mut s = vec![0.0; steps * n];
        let mut current = vec![0.0; n];
        for t in 0..steps {
            current.fill(0.0);
            self.add_current(drive, t, &mut current);
            for o in 0..n {
                let carried = if t > 0 {
                    let k = (t - 1) * n + o;
                    beta * u[k] * (1.0 - s[k])
                } else {
                    0.0
                };
                let v = carried + current[o];
                u[t * n + o] = v;
                if self.spiking {
                    s[t * n + o] = spike.forward(v - self.threshold);
                }
            }
        }
        LayerTrace { u, s }
    }

    /// Reverse pass through time.
    ///
    /// `grad_s` is ∂L/∂s from downstream (spiking layers), `grad_u` a direct
    /// ∂L/∂u (e.g. a loss on final membranes).
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        drive: Drive<'_>,
        trace: &LayerTrace,
        grad_s: Option<&[f64]>,
        grad_u: Option<&[f64]>,
        need_input_grad: bool,
        steps: usize,
        dt: f64,
        spike: SpikeFn,
    ) -> LayerGrad {
        let n = self.n_out;
        let beta = self.beta(dt);
        let (u, s) = (&trace.u, &trace.s);
        let mut dw = vec![0.0; self.weights.len()];
        let mut dbeta = 0.0;
        let mut dx = match (need_input_grad, drive) {
            (true, Drive::Dense(_)) => Some(vec![0.0; steps * self.n_in]),
            _ => None,
        };
        let mut a = vec![0.0; n];
        let mut a_next = vec![0.0; n];
        for t in (0..steps).rev() {
            let mut any = false;
            for o in 0..n {
                let k = t * n + o;
                let mut g = grad_u.map_or(0.0, |d| d[k]);
                if self.spiking {
                    // s[t] feeds downstream and the reset of u[t+1]
                    let gs = grad_s.map_or(0.0, |d| d[k]) - a_next[o] * beta * u[k];
                    g += gs * spike.backward(u[k] - self.threshold);
                }
                g += a_next[o] * beta * (1.0 - s[k]);
                if t > 0 {
                    let p = k - n;
                    dbeta += g * u[p] * (1.0 - s[p]);
                }
                any |= g != 0.0;
                a[o] = g;
            }
            if any {
                let mut acc_row = |i: usize, v: f64| {
                    for (d, g) in dw[i * n..(i + 1) * n].iter_mut().zip(&a) {
                        *d += v * g;
                    }
                };
                match drive {
                    Drive::Sparse(active) => active[t].iter().for_each(|&i| acc_row(i, 1.0)),
                    Drive::Dense(x) => {
                        for (i, &v) in x[t * self.n_in..(t + 1) * self.n_in].iter().enumerate() {
                            if v != 0.0 {
                                acc_row(i, v);
                            }
                        }
                    }
                }
                if let Some(dx) = dx.as_mut() {
                    for i in 0..self.n_in {
                        let row = &self.weights[i * n..(i + 1) * n];
                        dx[t * self.n_in + i] = row.iter().zip(&a).map(|(w, g)| w * g).sum();
                    }
                }
            }
            std::mem::swap(&mut a, &mut a_next);
        }
        // dβ/dlogτ = β·dt/τ
        let log_tau = if self.learn_tau {
            dbeta * beta * dt / self.tau()
        } else {
            0.0
        };
        LayerGrad {
            weights: dw,
            log_tau,
            input: dx,
        }
    }
}
