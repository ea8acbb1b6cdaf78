//! Classification losses and their gradients.

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|&v| v - lse).collect()
}

/// Softmax cross-entropy; returns the loss and ∂loss/∂z.
pub fn softmax_cross_entropy(z: &[f64], label: usize) -> (f64, Vec<f64>) {
    let logp = log_softmax(z);
    let mut grad: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
    grad[label] -= 1.0;
    (-logp[label], grad)
}

/// Cross-entropy over the readout membranes at the last step.
pub fn final_potential_ce(final_membranes: &[f64], label: usize) -> (f64, Vec<f64>) {
    softmax_cross_entropy(final_membranes, label)
}

/// Softmax over temperature-scaled output spike counts.
pub fn spikemax(counts: &[f64], label: usize, temperature: f64) -> (f64, Vec<f64>) {
    let scaled: Vec<f64> = counts.iter().map(|c| c / temperature).collect();
    let (loss, g) = softmax_cross_entropy(&scaled, label);
    (loss, g.into_iter().map(|v| v / temperature).collect())
}
