//! Synthetic timing-coded tasks.
//!
//! * ISI task: two classes of spike-pair trains that differ in the
//!   intra-pair interval, with overlapping pair rates so that counting spikes
//!   alone tops out at 75%.
//! * Coincidence task: three groups of neurons toggle ON/OFF per window; the
//!   class is which two groups share a state.

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::spike::{SpikeDataset, SpikeTrainSample, TransformRecord, Variant};

/// Closed-open real interval `[lo, hi)` used for uniform draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample(&self, rng: &mut seed::Rng) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..self.hi)
        } else {
            self.lo
        }
    }

    fn overlaps(&self, other: &Range) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsiTaskParams {
    pub num_neurons: usize,
    pub duration_ms: f64,
    /// Pair rates (pairs/s) per class.
    pub rate_ranges: [Range; 2],
    /// Intra-pair intervals (ms) per class.
    pub isi_ranges: [Range; 2],
    pub dt_ms: f64,
}

impl Default for IsiTaskParams {
    fn default() -> Self {
        Self {
            num_neurons: 10,
            duration_ms: 1000.0,
            rate_ranges: [Range::new(4.0, 12.0), Range::new(8.0, 16.0)],
            isi_ranges: [Range::new(5.0, 15.0), Range::new(20.0, 40.0)],
            dt_ms: 1.0,
        }
    }
}

impl IsiTaskParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |r: &Range| r.lo > 0.0 && r.hi >= r.lo;
        if self.num_neurons == 0 || !(self.duration_ms > 0.0) || !(self.dt_ms > 0.0) {
            return Err(Error::InvalidArgument("ISI task sizes must be positive".into()));
        }
        if !self.rate_ranges.iter().chain(&self.isi_ranges).all(positive) {
            return Err(Error::InvalidArgument("ISI task ranges must be positive".into()));
        }
        if self.isi_ranges[0].overlaps(&self.isi_ranges[1]) {
            return Err(Error::InvalidArgument("ISI ranges of the two classes overlap".into()));
        }
        Ok(())
    }
}

/// Number of spike pairs for a rate `r` (pairs/s) over `duration_ms`.
pub fn isi_pair_count(rate: f64, duration_ms: f64) -> usize {
    // guard against products such as 0.29 * 100 landing just below an integer
    (rate * duration_ms / 1000.0 + 1e-9).floor().max(0.0) as usize
}

/// Intra-pair gap in steps for an ISI of `delta` ms.
pub fn isi_steps(delta: f64) -> usize {
    (delta.floor() as usize).max(1)
}

const PAIR_RETRY_BUDGET: usize = 10_000;

/// Draws one ISI-task sample. Rate and ISI are drawn once per sample; every
/// neuron then carries the same number of non-overlapping spike pairs.
pub fn gen_isi_sample(class: usize, params: &IsiTaskParams, seed: u64) -> Result<SpikeTrainSample> {
    if class > 1 {
        return Err(Error::InvalidArgument(format!("ISI class must be 0 or 1, got {class}")));
    }
    let mut rng = seed::rng(seed);
    let rate = params.rate_ranges[class].sample(&mut rng);
    let delta = params.isi_ranges[class].sample(&mut rng);
    isi_sample_with(class, rate, delta, params, &mut rng)
}

/// ISI sample with a fixed rate and interval.
pub fn isi_sample_with(
    class: usize,
    rate: f64,
    delta: f64,
    params: &IsiTaskParams,
    rng: &mut seed::Rng,
) -> Result<SpikeTrainSample> {
    let pairs = isi_pair_count(rate, params.duration_ms);
    let gap = isi_steps(delta);
    let steps = crate::spike::num_steps(params.duration_ms, params.dt_ms);
    if gap >= steps {
        return Err(Error::Generation(format!(
            "pair gap {gap} does not fit in {steps} steps (r={rate}, δ={delta})"
        )));
    }
    let mut neurons = Vec::with_capacity(params.num_neurons);
    for _ in 0..params.num_neurons {
        let mut starts: Vec<usize> = Vec::with_capacity(pairs);
        let mut attempts = 0;
        while starts.len() < pairs {
            attempts += 1;
            if attempts > PAIR_RETRY_BUDGET {
                return Err(Error::Generation(format!(
                    "could not place {pairs} pairs with gap {gap} (r={rate}, δ={delta})"
                )));
            }
            let s = rng.gen_range(0..steps - gap);
            // closed intervals [s, s+gap] must be disjoint
            if starts.iter().all(|&o| s + gap < o || o + gap < s) {
                starts.push(s);
            }
        }
        starts.sort_unstable();
        let train = starts
            .iter()
            .flat_map(|&s| [s as f64 * params.dt_ms, (s + gap) as f64 * params.dt_ms])
            .collect();
        neurons.push(train);
    }
    Ok(SpikeTrainSample::from_parts(neurons, class, params.duration_ms))
}

pub const MU_ON0: f64 = 12.0;
pub const MU_OFF0: f64 = 2.0;
pub const MU_AVG: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinTaskParams {
    pub num_neurons: usize,
    pub window_steps: usize,
    /// First and last valid slot offsets inside a window.
    pub slot_offsets: (usize, usize),
    pub lambda: f64,
    pub duration_steps: usize,
    pub step_ms: f64,
}

impl Default for CoinTaskParams {
    fn default() -> Self {
        Self {
            num_neurons: 60,
            window_steps: 10,
            slot_offsets: (2, 6),
            lambda: 0.0,
            duration_steps: 100,
            step_ms: 1.0,
        }
    }
}

impl CoinTaskParams {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn group_size(&self) -> usize {
        self.num_neurons / 3
    }

    pub fn duration_ms(&self) -> f64 {
        self.duration_steps as f64 * self.step_ms
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_neurons == 0 || self.num_neurons % 3 != 0 {
            return Err(Error::InvalidArgument(format!(
                "coincidence task needs a positive multiple of 3 neurons, got {}",
                self.num_neurons
            )));
        }
        let (a, b) = self.slot_offsets;
        if a > b || b >= self.window_steps || self.window_steps == 0 {
            return Err(Error::InvalidArgument("slot offsets must lie inside a window".into()));
        }
        if self.duration_steps < self.window_steps || !(self.step_ms > 0.0) {
            return Err(Error::InvalidArgument("duration shorter than one window".into()));
        }
        interpolate_mu(self.lambda).map(|_| ())
    }
}

/// ON/OFF mean group activations at synchrony overlap `lambda`.
pub fn interpolate_mu(lambda: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda must be in [0, 1], got {lambda}")));
    }
    let on = (1.0 - lambda) * MU_ON0 + lambda * MU_AVG;
    let off = (1.0 - lambda) * MU_OFF0 + lambda * MU_AVG;
    Ok((on, off))
}

/// Which two groups share a state for each class.
pub const fn synchronous_groups(class: usize) -> [usize; 2] {
    match class {
        0 => [0, 1],
        1 => [0, 2],
        _ => [1, 2],
    }
}

/// Group states for one window: the class pair takes `toggle`, the third
/// group takes its complement.
pub fn window_states(class: usize, toggle: bool) -> [bool; 3] {
    let pair = synchronous_groups(class);
    let mut states = [!toggle; 3];
    for g in pair {
        states[g] = toggle;
    }
    states
}

/// Activation count: Poisson with mean `mu`, clipped to the group size.
fn draw_count(mu: f64, group: usize, rng: &mut seed::Rng) -> usize {
    if mu <= 0.0 {
        return 0;
    }
    let k: f64 = Poisson::new(mu).expect("positive mean").sample(rng);
    (k as usize).min(group)
}

pub fn gen_coin_sample(class: usize, params: &CoinTaskParams, seed: u64) -> Result<SpikeTrainSample> {
    if class > 2 {
        return Err(Error::InvalidArgument(format!("coincidence class must be 0..=2, got {class}")));
    }
    params.validate()?;
    let (mu_on, mu_off) = interpolate_mu(params.lambda)?;
    let mut rng = seed::rng(seed);
    let group = params.group_size();
    let (lo, hi) = params.slot_offsets;
    let mut neurons = vec![Vec::new(); params.num_neurons];
    for w in 0..params.duration_steps / params.window_steps {
        let start = w * params.window_steps;
        let toggle: bool = rng.gen();
        for (g, on) in window_states(class, toggle).into_iter().enumerate() {
            let k = draw_count(if on { mu_on } else { mu_off }, group, &mut rng);
            for j in index::sample(&mut rng, group, k) {
                let slot = start + rng.gen_range(lo..=hi);
                neurons[g * group + j].push(slot as f64 * params.step_ms);
            }
        }
    }
    Ok(SpikeTrainSample::from_parts(neurons, class, params.duration_ms()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Isi(IsiTaskParams),
    Coin(CoinTaskParams),
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Isi(_) => "isi",
            Task::Coin(_) => "coin",
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Task::Isi(_) => 2,
            Task::Coin(_) => 3,
        }
    }

    pub fn num_neurons(&self) -> usize {
        match self {
            Task::Isi(p) => p.num_neurons,
            Task::Coin(p) => p.num_neurons,
        }
    }

    /// Bin width the task is meant to be simulated at.
    pub fn dt_ms(&self) -> f64 {
        match self {
            Task::Isi(p) => p.dt_ms,
            Task::Coin(p) => p.step_ms,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Task::Isi(p) => p.validate(),
            Task::Coin(p) => p.validate(),
        }
    }

    pub fn sample(&self, class: usize, seed: u64) -> Result<SpikeTrainSample> {
        match self {
            Task::Isi(p) => gen_isi_sample(class, p, seed),
            Task::Coin(p) => gen_coin_sample(class, p, seed),
        }
    }

    fn record(&self, split: &str, size: usize, master: u64) -> TransformRecord {
        let rec = TransformRecord::new(format!("gen_{}", self.name()))
            .param("split", split)
            .param("size", size as u64);
        let rec = match self {
            Task::Isi(p) => rec.param("params", serde_json::to_value(p).expect("serializable")),
            Task::Coin(p) => rec
                .param("lambda", p.lambda)
                .param("params", serde_json::to_value(p).expect("serializable")),
        };
        rec.seed(master)
    }
}

/// Split names and the key each split contributes to per-sample seeds.
pub const SPLITS: [(&str, u64); 2] = [("train", 0), ("test", 1)];

/// Generates one split with balanced, interleaved labels: sample `m` has
/// class `m mod C` and is drawn from seed `(master, split_key, m)`.
pub fn gen_split(task: &Task, split: &str, size: usize, master: u64) -> Result<SpikeDataset> {
    task.validate()?;
    if size == 0 {
        return Err(Error::InvalidArgument("split size must be at least 1".into()));
    }
    let key = SPLITS
        .iter()
        .find(|(name, _)| *name == split)
        .map(|&(_, k)| k)
        .unwrap_or_else(|| seed::tag(split));
    let classes = task.num_classes();
    let samples = (0..size)
        .into_par_iter()
        .map(|m| task.sample(m % classes, seed::derive(master, &[key, m as u64])))
        .collect::<Result<Vec<_>>>()?;
    SpikeDataset::new(
        samples,
        task.num_neurons(),
        classes,
        Variant::Synthetic,
        vec![task.record(split, size, master)],
    )
}

/// Train and test splits from one master seed.
pub fn gen_dataset(
    task: &Task,
    train_size: usize,
    test_size: usize,
    master: u64,
) -> Result<(SpikeDataset, SpikeDataset)> {
    Ok((
        gen_split(task, "train", train_size, master)?,
        gen_split(task, "test", test_size, master)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spike::spike_counts;

    #[test]
    fn pair_count_examples() {
        assert_eq!(isi_pair_count(3.0, 1000.0), 3);
        assert_eq!(isi_pair_count(0.9, 1000.0), 0);
        assert_eq!(isi_pair_count(7.0, 500.0), 3);
    }

    #[test]
    fn isi_steps_examples() {
        assert_eq!(isi_steps(0.5), 1);
        assert_eq!(isi_steps(15.0), 15);
        assert_eq!(isi_steps(15.9), 15);
        assert_eq!(isi_steps(0.0), 1);
    }

    #[test]
    fn fixed_rate_and_isi_give_exact_pairs() {
        let params = IsiTaskParams::default();
        let mut rng = seed::rng(3);
        let s = isi_sample_with(1, 4.0, 20.0, &params, &mut rng).unwrap();
        for train in s.neurons() {
            assert_eq!(train.len(), 8);
            for pair in train.chunks(2) {
                assert_eq!(pair[1] - pair[0], 20.0);
            }
        }
    }

    #[test]
    fn unplaceable_pairs_fail() {
        let params = IsiTaskParams {
            duration_ms: 100.0,
            ..IsiTaskParams::default()
        };
        let mut rng = seed::rng(0);
        let err = isi_sample_with(1, 60.0, 30.0, &params, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Generation(_)), "{err}");
    }

    #[test]
    fn same_seed_same_sample() {
        let p = IsiTaskParams::default();
        assert_eq!(gen_isi_sample(0, &p, 11).unwrap(), gen_isi_sample(0, &p, 11).unwrap());
        let c = CoinTaskParams::default();
        assert_eq!(gen_coin_sample(2, &c, 11).unwrap(), gen_coin_sample(2, &c, 11).unwrap());
    }

    #[test]
    fn mu_interpolation() {
        assert_eq!(interpolate_mu(0.0).unwrap(), (12.0, 2.0));
        assert_eq!(interpolate_mu(1.0).unwrap(), (5.0, 5.0));
        assert_eq!(interpolate_mu(0.5).unwrap(), (8.5, 3.5));
        assert!(interpolate_mu(1.5).is_err());
        assert!(interpolate_mu(-0.1).is_err());
    }

    #[test]
    fn window_states_follow_class_pairs() {
        assert_eq!(window_states(0, true), [true, true, false]);
        assert_eq!(window_states(1, true), [true, false, true]);
        assert_eq!(window_states(2, false), [true, false, false]);
    }

    #[test]
    fn coin_spikes_stay_in_subwindows() {
        let p = CoinTaskParams::default();
        let s = gen_coin_sample(0, &p, 5).unwrap();
        for train in s.neurons() {
            for &t in train {
                let off = (t as usize) % p.window_steps;
                assert!((2..=6).contains(&off), "offset {off}");
            }
            // at most one spike per window per neuron
            let mut windows: Vec<usize> = train.iter().map(|&t| t as usize / 10).collect();
            windows.dedup();
            assert_eq!(windows.len(), train.len());
        }
    }

    #[test]
    fn coin_rejects_bad_group_split() {
        let p = CoinTaskParams {
            num_neurons: 61,
            ..CoinTaskParams::default()
        };
        assert!(gen_coin_sample(0, &p, 0).is_err());
    }

    #[test]
    fn splits_are_balanced_and_disjoint() {
        let task = Task::Isi(IsiTaskParams::default());
        let (train, test) = gen_dataset(&task, 80, 20, 1).unwrap();
        assert_eq!(train.class_sizes(), vec![40, 40]);
        assert_eq!(test.class_sizes(), vec![10, 10]);
        assert_ne!(train.samples()[0], test.samples()[0]);
        assert_eq!(train.variant(), Variant::Synthetic);
        assert!(spike_counts(&train.samples()[0]).iter().all(|&c| c % 2 == 0));
    }

    #[test]
    fn coin_lambda_is_logged() {
        let task = Task::Coin(CoinTaskParams::with_lambda(0.25));
        let ds = gen_split(&task, "train", 3, 2).unwrap();
        assert_eq!(ds.transform_log()[0].params["lambda"], 0.25);
    }
}
