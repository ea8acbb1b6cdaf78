//! Whole → Part → Norm count normalization of event datasets.
//!
//! *Part* keeps only neurons that fire at least `theta` times in every
//! remaining sample, removing a few samples instead of a neuron when the
//! offending samples are rare. Classes are then downsampled to equal size.
//! *Norm* subsamples every neuron's train to the same count in every sample,
//! which leaves spike timing as the only usable cue.

use std::path::{Path, PathBuf};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::spike::{self, SpikeDataset, SpikeTrainSample, TransformRecord, Variant};

#[cfg(feature = "hdf5")]
pub mod shd;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub theta: usize,
    pub epsilon: f64,
    pub class_floor: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            theta: 2,
            epsilon: 0.01,
            class_floor: 0.5,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.theta < 1 {
            return Err(Error::InvalidArgument("theta must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.class_floor) {
            return Err(Error::InvalidArgument(format!(
                "class floor must be in [0, 1], got {}",
                self.class_floor
            )));
        }
        Ok(())
    }
}

/// A sample removed during filtering and the neuron whose sparsity caused it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedSample {
    pub sample: usize,
    pub neuron: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub params: FilterParams,
    /// Original indices of the neurons kept, ascending.
    pub retained_neurons: Vec<usize>,
    /// Samples deleted to keep a neuron, with the neuron that triggered it.
    pub removed_samples: Vec<RemovedSample>,
    /// Samples dropped by class balancing.
    pub downsampled_samples: Vec<usize>,
    pub class_sizes_before: Vec<usize>,
    pub class_sizes_after_filter: Vec<usize>,
    pub class_sizes_after: Vec<usize>,
    /// Per-neuron minimum count over the input samples, all neurons.
    pub min_counts: Vec<usize>,
    /// Per retained neuron minimum count over the Part samples.
    pub part_min_counts: Vec<usize>,
}

/// Per-neuron minimum spike count over all samples.
pub fn min_spike_counts(dataset: &SpikeDataset) -> Result<Vec<usize>> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("min counts of an empty dataset".into()));
    }
    let mut mins = vec![usize::MAX; dataset.num_neurons()];
    for s in dataset.samples() {
        for (m, train) in mins.iter_mut().zip(s.neurons()) {
            *m = (*m).min(train.len());
        }
    }
    Ok(mins)
}

fn counts_matrix(dataset: &SpikeDataset) -> Vec<Vec<usize>> {
    dataset.samples().iter().map(spike::spike_counts).collect()
}

/// Neuron and sample filtering followed by class balancing.
///
/// Sample deletions are decided in one pass over all sparse neurons, cheapest
/// first (fewest affected samples, then neuron index), and applied together;
/// neurons still below `theta` afterwards are dropped.
pub fn whole_to_part(
    dataset: &SpikeDataset,
    params: FilterParams,
    seed: u64,
) -> Result<(SpikeDataset, FilterReport)> {
    params.validate()?;
    let min_counts = min_spike_counts(dataset)?;
    let counts = counts_matrix(dataset);
    let m_total = dataset.len();
    let labels = dataset.labels();
    let before = dataset.class_sizes();
    let floor: Vec<f64> = before
        .iter()
        .map(|&n| params.class_floor * n as f64)
        .collect();

    // candidate neurons whose sparse samples are rare enough to delete
    let mut candidates: Vec<(usize, Vec<usize>)> = (0..dataset.num_neurons())
        .filter(|&i| min_counts[i] < params.theta)
        .filter_map(|i| {
            let affected: Vec<usize> = (0..m_total)
                .filter(|&m| counts[m][i] < params.theta)
                .collect();
            ((affected.len() as f64) / (m_total as f64) < params.epsilon).then_some((i, affected))
        })
        .collect();
    candidates.sort_by_key(|(i, affected)| (affected.len(), *i));

    let mut removed = vec![false; m_total];
    let mut sizes = before.clone();
    let mut removed_samples = Vec::new();
    for (neuron, affected) in candidates {
        let fresh: Vec<usize> = affected.into_iter().filter(|&m| !removed[m]).collect();
        let mut trial = sizes.clone();
        for &m in &fresh {
            trial[labels[m]] -= 1;
        }
        let keeps_floor = trial
            .iter()
            .zip(&before)
            .zip(&floor)
            .all(|((&after, &orig), &fl)| orig == 0 || (after > 0 && after as f64 >= fl));
        if keeps_floor {
            sizes = trial;
            for m in fresh {
                removed[m] = true;
                removed_samples.push(RemovedSample { sample: m, neuron });
            }
        }
    }
    removed_samples.sort_by_key(|r| r.sample);

    let kept: Vec<usize> = (0..m_total).filter(|&m| !removed[m]).collect();
    let retained: Vec<usize> = (0..dataset.num_neurons())
        .filter(|&i| kept.iter().all(|&m| counts[m][i] >= params.theta))
        .collect();
    if retained.is_empty() {
        return Err(Error::Pipeline(format!(
            "no neuron reaches theta = {} in every retained sample",
            params.theta
        )));
    }
    let after_filter = sizes;

    let (balanced, downsampled) = balance_classes(&kept, &labels, dataset.num_classes(), seed);
    let mut after = vec![0; dataset.num_classes()];
    for &m in &balanced {
        after[labels[m]] += 1;
    }

    let samples: Vec<SpikeTrainSample> = balanced
        .iter()
        .map(|&m| dataset.samples()[m].select_neurons(&retained))
        .collect();
    let part_min_counts = retained
        .iter()
        .map(|&i| balanced.iter().map(|&m| counts[m][i]).min().unwrap_or(0))
        .collect();

    let record = TransformRecord::new("whole_to_part")
        .param("theta", params.theta as u64)
        .param("epsilon", params.epsilon)
        .param("class_floor", params.class_floor)
        .param("retained_neurons", retained.len() as u64)
        .seed(seed);
    let part = dataset.derive(samples, retained.len(), Variant::Part, record)?;
    let report = FilterReport {
        params,
        retained_neurons: retained,
        removed_samples,
        downsampled_samples: downsampled,
        class_sizes_before: before,
        class_sizes_after_filter: after_filter,
        class_sizes_after: after,
        min_counts,
        part_min_counts,
    };
    Ok((part, report))
}

/// Downsamples every non-empty class to the smallest non-empty class size.
/// Returns kept indices (input order preserved) and dropped indices.
fn balance_classes(
    kept: &[usize],
    labels: &[usize],
    num_classes: usize,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for &m in kept {
        by_class[labels[m]].push(m);
    }
    let target = by_class
        .iter()
        .map(Vec::len)
        .filter(|&n| n > 0)
        .min()
        .unwrap_or(0);
    let mut rng = seed::rng(seed::derive(seed, &[seed::tag("balance")]));
    let mut keep = vec![false; labels.len()];
    for members in &by_class {
        for j in index::sample(&mut rng, members.len(), target.min(members.len())) {
            keep[members[j]] = true;
        }
    }
    kept.iter().partition(|&&m| keep[m])
}

/// Subsamples each neuron's train to exactly `targets[i]` spikes.
pub fn subsample_to(dataset: &SpikeDataset, targets: &[usize], seed: u64) -> Result<SpikeDataset> {
    if targets.len() != dataset.num_neurons() {
        return Err(Error::InvalidArgument(format!(
            "{} targets for {} neurons",
            targets.len(),
            dataset.num_neurons()
        )));
    }
    let samples = dataset
        .samples()
        .par_iter()
        .enumerate()
        .map(|(m, s)| {
            let mut rng = seed::rng(seed::derive(seed, &[m as u64, seed::tag("norm")]));
            let neurons = s
                .neurons()
                .iter()
                .zip(targets)
                .enumerate()
                .map(|(i, (train, &c))| {
                    if train.len() < c {
                        return Err(Error::Invariant(format!(
                            "sample {m} neuron {i} has {} spikes, needs {c}",
                            train.len()
                        )));
                    }
                    let mut picked = index::sample(&mut rng, train.len(), c).into_vec();
                    picked.sort_unstable();
                    Ok(picked.into_iter().map(|j| train[j]).collect())
                })
                .collect::<Result<Vec<Vec<f64>>>>()?;
            Ok(SpikeTrainSample::from_parts(neurons, s.label(), s.duration_ms()))
        })
        .collect::<Result<Vec<_>>>()?;
    let record = TransformRecord::new("part_to_norm")
        .param("targets", serde_json::to_value(targets)?)
        .seed(seed);
    dataset.derive(samples, dataset.num_neurons(), Variant::Norm, record)
}

/// Part → Norm using the dataset's own per-neuron minimum counts.
pub fn part_to_norm(dataset: &SpikeDataset, seed: u64) -> Result<SpikeDataset> {
    let targets = min_spike_counts(dataset)?;
    subsample_to(dataset, &targets, seed)
}

/// Applies a training split's neuron selection to another split. Samples
/// with fewer than `max(theta, c'_i)` spikes on any retained neuron are
/// dropped, then classes are balanced.
pub fn apply_train_filter(
    dataset: &SpikeDataset,
    train: &FilterReport,
    seed: u64,
) -> Result<(SpikeDataset, Vec<usize>)> {
    if let Some(&i) = train
        .retained_neurons
        .iter()
        .find(|&&i| i >= dataset.num_neurons())
    {
        return Err(Error::InvalidArgument(format!(
            "retained neuron {i} outside {} neurons",
            dataset.num_neurons()
        )));
    }
    let need: Vec<usize> = train
        .part_min_counts
        .iter()
        .map(|&c| c.max(train.params.theta))
        .collect();
    let labels = dataset.labels();
    let (kept, dropped): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&m| {
        let s = &dataset.samples()[m];
        train
            .retained_neurons
            .iter()
            .zip(&need)
            .all(|(&i, &c)| s.neurons()[i].len() >= c)
    });
    let (balanced, _) = balance_classes(&kept, &labels, dataset.num_classes(), seed);
    let samples = balanced
        .iter()
        .map(|&m| dataset.samples()[m].select_neurons(&train.retained_neurons))
        .collect();
    let record = TransformRecord::new("train_filter")
        .param("theta", train.params.theta as u64)
        .param("epsilon", train.params.epsilon)
        .param("retained_neurons", train.retained_neurons.len() as u64)
        .param("dropped_samples", dropped.len() as u64)
        .seed(seed);
    let part = dataset.derive(samples, train.retained_neurons.len(), Variant::Part, record)?;
    Ok((part, dropped))
}

pub struct PipelineOutput {
    pub whole: SpikeDataset,
    pub part: SpikeDataset,
    pub norm: SpikeDataset,
    pub report: FilterReport,
    /// Test-split samples dropped for violating the training constraints.
    pub dropped: Vec<usize>,
}

/// Runs Whole → Part → Norm. Without `train_report` the split derives its own
/// filter; with it, the training split's neurons and counts are reused.
pub fn run(
    whole: SpikeDataset,
    params: FilterParams,
    seed: u64,
    train_report: Option<&FilterReport>,
) -> Result<PipelineOutput> {
    let part_seed = seed::derive(seed, &[seed::tag("part")]);
    let norm_seed = seed::derive(seed, &[seed::tag("norm")]);
    match train_report {
        None => {
            let (part, report) = whole_to_part(&whole, params, part_seed)?;
            let norm = subsample_to(&part, &report.part_min_counts, norm_seed)?;
            Ok(PipelineOutput {
                whole,
                part,
                norm,
                report,
                dropped: Vec::new(),
            })
        }
        Some(train) => {
            let (part, dropped) = apply_train_filter(&whole, train, part_seed)?;
            let norm = subsample_to(&part, &train.part_min_counts, norm_seed)?;
            let report = FilterReport {
                params: train.params,
                retained_neurons: train.retained_neurons.clone(),
                removed_samples: Vec::new(),
                downsampled_samples: Vec::new(),
                class_sizes_before: whole.class_sizes(),
                class_sizes_after_filter: Vec::new(),
                class_sizes_after: part.class_sizes(),
                min_counts: min_spike_counts(&whole)?,
                part_min_counts: train.part_min_counts.clone(),
            };
            Ok(PipelineOutput {
                whole,
                part,
                norm,
                report,
                dropped,
            })
        }
    }
}

/// File names written by [`write_outputs`].
pub fn output_paths(dir: &Path, split: &str) -> [PathBuf; 4] {
    [
        dir.join(format!("{split}_whole.sea.ndjson")),
        dir.join(format!("{split}_part.sea.ndjson")),
        dir.join(format!("{split}_norm.sea.ndjson")),
        dir.join(format!("{split}_report.json")),
    ]
}

pub fn write_outputs(out: &PipelineOutput, dir: &Path, split: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let [whole, part, norm, report] = output_paths(dir, split);
    spike::save(&out.whole, &whole)?;
    spike::save(&out.part, &part)?;
    spike::save(&out.norm, &norm)?;
    let tmp = report.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(&out.report)?)?;
    std::fs::rename(tmp, report)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<FilterReport> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Builds a dataset from a samples × neurons count table; spikes are
    /// spread evenly so counts are the only thing that matters.
    fn from_counts(table: &[Vec<usize>], labels: &[usize], classes: usize) -> SpikeDataset {
        let samples = table
            .iter()
            .zip(labels)
            .map(|(row, &l)| {
                let neurons = row
                    .iter()
                    .map(|&c| (0..c).map(|k| k as f64 * 10.0 + 1.0).collect())
                    .collect();
                SpikeTrainSample::new(neurons, l, 1000.0).unwrap()
            })
            .collect();
        SpikeDataset::new(samples, table[0].len(), classes, Variant::Whole, vec![]).unwrap()
    }

    #[test]
    fn min_counts_examples() {
        let ds = from_counts(&[vec![3, 5], vec![2, 9]], &[0, 0], 1);
        assert_eq!(min_spike_counts(&ds).unwrap(), vec![2, 5]);
        let ds = from_counts(&[vec![3, 0], vec![2, 9]], &[0, 0], 1);
        assert_eq!(min_spike_counts(&ds).unwrap()[1], 0);
        let empty = SpikeDataset::new(vec![], 2, 1, Variant::Whole, vec![]).unwrap();
        assert!(min_spike_counts(&empty).is_err());
    }

    #[test]
    fn frequent_sparsity_drops_neuron() {
        let table = vec![vec![3, 3, 3], vec![3, 3, 0], vec![3, 3, 3], vec![3, 3, 3]];
        let ds = from_counts(&table, &[0, 0, 1, 1], 2);
        let (part, report) = whole_to_part(&ds, FilterParams::default(), 0).unwrap();
        assert_eq!(report.retained_neurons, vec![0, 1]);
        assert!(report.removed_samples.is_empty());
        assert_eq!(part.len(), 4);
        assert_eq!(part.num_neurons(), 2);
        assert_eq!(part.variant(), Variant::Part);
    }

    #[test]
    fn rare_sparsity_removes_sample() {
        let mut table = vec![vec![4, 2]; 200];
        table[17][1] = 1;
        let labels: Vec<usize> = (0..200).map(|m| m % 2).collect();
        let ds = from_counts(&table, &labels, 2);
        let (part, report) = whole_to_part(&ds, FilterParams::default(), 0).unwrap();
        assert_eq!(report.retained_neurons, vec![0, 1]);
        assert_eq!(report.removed_samples, vec![RemovedSample { sample: 17, neuron: 1 }]);
        assert_eq!(report.class_sizes_after_filter, vec![100, 99]);
        // balanced afterwards
        assert_eq!(report.class_sizes_after, vec![99, 99]);
        assert_eq!(part.len(), 198);
        assert_eq!(report.part_min_counts, vec![4, 2]);
    }

    #[test]
    fn class_floor_blocks_deletions() {
        // 150 samples of class 0 plus one class-1 sample; neuron 1 is silent
        // in the lone class-1 sample, so deleting it would empty that class
        let mut table = vec![vec![3, 3]; 151];
        table[150][1] = 0;
        let mut labels = vec![0; 151];
        labels[150] = 1;
        let ds = from_counts(&table, &labels, 2);
        let (_, report) = whole_to_part(&ds, FilterParams::default(), 0).unwrap();
        assert!(report.removed_samples.is_empty());
        assert_eq!(report.retained_neurons, vec![0]);
    }

    #[test]
    fn no_survivors_is_an_error() {
        let ds = from_counts(&[vec![0, 1], vec![1, 0]], &[0, 0], 1);
        assert!(matches!(
            whole_to_part(&ds, FilterParams::default(), 0),
            Err(Error::Pipeline(_))
        ));
    }

    #[test]
    fn bad_params_rejected() {
        let ds = from_counts(&[vec![3]], &[0], 1);
        let bad = FilterParams {
            epsilon: 1.0,
            ..FilterParams::default()
        };
        assert!(whole_to_part(&ds, bad, 0).is_err());
        let bad = FilterParams {
            theta: 0,
            ..FilterParams::default()
        };
        assert!(whole_to_part(&ds, bad, 0).is_err());
    }

    #[test]
    fn norm_subsamples_sorted_subsets() {
        let s = SpikeTrainSample::new(vec![vec![1.0, 5.0, 9.0, 40.0]], 0, 100.0).unwrap();
        let ds = SpikeDataset::new(vec![s], 1, 1, Variant::Part, vec![]).unwrap();
        for seed in 0..10 {
            let out = subsample_to(&ds, &[2], seed).unwrap();
            let t = &out.samples()[0].neurons()[0];
            assert_eq!(t.len(), 2);
            assert!(t[0] < t[1]);
            assert!(t.iter().all(|x| [1.0, 5.0, 9.0, 40.0].contains(x)));
        }
    }

    #[test]
    fn norm_rejects_short_trains() {
        let s = SpikeTrainSample::new(vec![vec![1.0]], 0, 100.0).unwrap();
        let ds = SpikeDataset::new(vec![s], 1, 1, Variant::Part, vec![]).unwrap();
        assert!(matches!(subsample_to(&ds, &[2], 0), Err(Error::Invariant(_))));
    }

    #[test]
    fn norm_counts_constant() {
        let table = vec![vec![4, 2, 7], vec![5, 3, 2], vec![2, 9, 3], vec![6, 2, 2]];
        let ds = from_counts(&table, &[0, 1, 0, 1], 2);
        let out = run(ds, FilterParams::default(), 5, None).unwrap();
        let first = spike::spike_counts(&out.norm.samples()[0]);
        assert_eq!(first, out.report.part_min_counts);
        for s in out.norm.samples() {
            assert_eq!(spike::spike_counts(s), first);
        }
        let sizes: usize = out.report.class_sizes_after.iter().sum();
        assert_eq!(sizes, out.part.len());
        let ops: Vec<&str> = out.norm.transform_log().iter().map(|r| r.op.as_str()).collect();
        assert_eq!(ops, ["whole_to_part", "part_to_norm"]);
        assert_eq!(out.norm.transform_log()[0].params["theta"], 2);
    }

    #[test]
    fn test_split_reuses_train_filter() {
        let train = from_counts(
            &[vec![4, 0, 3], vec![5, 1, 3], vec![3, 0, 4], vec![6, 2, 5]],
            &[0, 1, 0, 1],
            2,
        );
        let out = run(train, FilterParams::default(), 1, None).unwrap();
        assert_eq!(out.report.retained_neurons, vec![0, 2]);
        let test = from_counts(
            &[vec![9, 9, 9], vec![2, 9, 9], vec![9, 0, 3], vec![3, 5, 3]],
            &[0, 1, 0, 1],
            2,
        );
        let t = run(test, FilterParams::default(), 1, Some(&out.report)).unwrap();
        // sample 1 has 2 < c'_0 = 3 spikes on neuron 0
        assert_eq!(t.dropped, vec![1]);
        assert_eq!(t.norm.num_neurons(), 2);
        for s in t.norm.samples() {
            assert_eq!(spike::spike_counts(s), out.report.part_min_counts);
        }
    }
}
