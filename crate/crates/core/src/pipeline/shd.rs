//! Reader (and fixture writer) for the Heidelberg spiking audio HDF5 layout:
//! ragged `spikes/times` in seconds, ragged `spikes/units` channel ids and a
//! flat `labels` array.

use std::path::Path;

use hdf5_metno as hdf5;
use hdf5::types::{FloatSize, TypeDescriptor, VarLenArray};

use crate::error::{Error, Result};
use crate::spike::{SpikeDataset, SpikeTrainSample, TransformRecord, Variant};

pub const NUM_CHANNELS: usize = 700;
pub const DURATION_MS: f64 = 1000.0;

fn h5(e: hdf5::Error) -> Error {
    Error::Format(e.to_string())
}

fn dataset(file: &hdf5::File, name: &str) -> Result<hdf5::Dataset> {
    file.dataset(name)
        .map_err(|_| Error::Format(format!("missing dataset `{name}`")))
}

fn read_times(ds: &hdf5::Dataset) -> Result<Vec<Vec<f64>>> {
    let td = ds.dtype().and_then(|t| t.to_descriptor()).map_err(h5)?;
    let to_vec = |v: Vec<VarLenArray<f32>>| v.iter().map(|a| a.iter().map(|&x| f64::from(x)).collect()).collect();
    match td {
        TypeDescriptor::VarLenArray(inner) => match *inner {
            TypeDescriptor::Float(FloatSize::U8) => Ok(ds
                .read_raw::<VarLenArray<f64>>()
                .map_err(h5)?
                .iter()
                .map(|a| a.to_vec())
                .collect()),
            TypeDescriptor::Float(FloatSize::U4) => Ok(to_vec(ds.read_raw().map_err(h5)?)),
            TypeDescriptor::Float(FloatSize::U2) => Ok(ds
                .read_raw::<VarLenArray<half::f16>>()
                .map_err(h5)?
                .iter()
                .map(|a| a.iter().map(|x| x.to_f64()).collect())
                .collect()),
            other => Err(Error::Format(format!("spikes/times has element type {other:?}"))),
        },
        other => Err(Error::Format(format!("spikes/times is not ragged: {other:?}"))),
    }
}

fn read_units(ds: &hdf5::Dataset) -> Result<Vec<Vec<i64>>> {
    let td = ds.dtype().and_then(|t| t.to_descriptor()).map_err(h5)?;
    macro_rules! widen {
        ($t:ty) => {
            Ok(ds
                .read_raw::<VarLenArray<$t>>()
                .map_err(h5)?
                .iter()
                .map(|a| a.iter().map(|&x| x as i64).collect())
                .collect())
        };
    }
    use hdf5::types::IntSize;
    match td {
        TypeDescriptor::VarLenArray(inner) => match *inner {
            TypeDescriptor::Unsigned(IntSize::U1) => widen!(u8),
            TypeDescriptor::Unsigned(IntSize::U2) => widen!(u16),
            TypeDescriptor::Unsigned(IntSize::U4) => widen!(u32),
            TypeDescriptor::Unsigned(IntSize::U8) => widen!(u64),
            TypeDescriptor::Integer(IntSize::U1) => widen!(i8),
            TypeDescriptor::Integer(IntSize::U2) => widen!(i16),
            TypeDescriptor::Integer(IntSize::U4) => widen!(i32),
            TypeDescriptor::Integer(IntSize::U8) => widen!(i64),
            other => Err(Error::Format(format!("spikes/units has element type {other:?}"))),
        },
        other => Err(Error::Format(format!("spikes/units is not ragged: {other:?}"))),
    }
}

/// Reads one split file. Times are converted to milliseconds and events at
/// or after 1000 ms are dropped.
pub fn import_shd_hdf5(path: &Path, split: &str) -> Result<SpikeDataset> {
    let file = hdf5::File::open(path).map_err(h5)?;
    let times = read_times(&dataset(&file, "spikes/times")?)?;
    let units = read_units(&dataset(&file, "spikes/units")?)?;
    let labels: Vec<i64> = dataset(&file, "labels")?.read_raw().map_err(h5)?;
    if times.len() != units.len() || times.len() != labels.len() {
        return Err(Error::Format(format!(
            "length mismatch: {} times, {} units, {} labels",
            times.len(),
            units.len(),
            labels.len()
        )));
    }
    let mut num_classes = 0;
    let mut dropped = 0u64;
    let mut samples = Vec::with_capacity(labels.len());
    for (m, ((t, u), &label)) in times.iter().zip(&units).zip(&labels).enumerate() {
        if t.len() != u.len() {
            return Err(Error::Format(format!("sample {m}: {} times vs {} units", t.len(), u.len())));
        }
        if label < 0 {
            return Err(Error::Data(format!("sample {m}: negative label {label}")));
        }
        let mut neurons = vec![Vec::new(); NUM_CHANNELS];
        for (&sec, &unit) in t.iter().zip(u) {
            if unit < 0 || unit as usize >= NUM_CHANNELS {
                return Err(Error::Data(format!("sample {m}: unit id {unit} outside 0..{NUM_CHANNELS}")));
            }
            let ms = sec * 1000.0;
            if !ms.is_finite() || ms < 0.0 {
                return Err(Error::Data(format!("sample {m}: bad spike time {sec}")));
            }
            if ms >= DURATION_MS {
                dropped += 1;
                continue;
            }
            neurons[unit as usize].push(ms);
        }
        num_classes = num_classes.max(label as usize + 1);
        samples.push(SpikeTrainSample::from_unsorted(neurons, label as usize, DURATION_MS)?);
    }
    let record = TransformRecord::new("import_hdf5")
        .param("source", path.display().to_string())
        .param("split", split)
        .param("dropped_late_events", dropped);
    SpikeDataset::new(samples, NUM_CHANNELS, num_classes, Variant::Whole, vec![record])
}

/// Writes a dataset in the same layout (times as float32 seconds, units as
/// uint16). Intended for fixtures and exporting normalized variants.
pub fn write_shd_hdf5(dataset: &SpikeDataset, path: &Path) -> Result<()> {
    let file = hdf5::File::create(path).map_err(h5)?;
    let group = file.create_group("spikes").map_err(h5)?;
    let mut times = Vec::with_capacity(dataset.len());
    let mut units = Vec::with_capacity(dataset.len());
    for s in dataset.samples() {
        let mut events: Vec<(f64, u16)> = s
            .neurons()
            .iter()
            .enumerate()
            .flat_map(|(i, train)| train.iter().map(move |&t| (t, i as u16)))
            .collect();
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let t: Vec<f32> = events.iter().map(|&(t, _)| (t / 1000.0) as f32).collect();
        let u: Vec<u16> = events.iter().map(|&(_, u)| u).collect();
        times.push(VarLenArray::from_slice(&t));
        units.push(VarLenArray::from_slice(&u));
    }
    group
        .new_dataset_builder()
        .with_data(&times)
        .create("times")
        .map_err(h5)?;
    group
        .new_dataset_builder()
        .with_data(&units)
        .create("units")
        .map_err(h5)?;
    let labels: Vec<u16> = dataset.labels().iter().map(|&l| l as u16).collect();
    file.new_dataset_builder()
        .with_data(&labels)
        .create("labels")
        .map_err(h5)?;
    Ok(())
}
