//! Expert dataset files.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic     4 bytes  "DIEX"
//! version   u32      1
//! metric    u8       metric kind id
//! shape     u8       0 = flat, 1 = grid
//! reserved  u16      0
//! dims      3 x u32  flat: (n, 0, 0); grid: (channels, height, width)
//! count     u64      number of records
//! pairs     count x (s, s') as f32 arrays of the state length
//! ids       count x u32 expert id per record
//! ```

use std::io::{Read, Write};

use super::{ExpertError, Result};
use crate::distance::{MetricKind, StateShape};
use crate::envs::StateVec;

pub const DATASET_MAGIC: [u8; 4] = *b"DIEX";
pub const DATASET_VERSION: u32 = 1;

/// Contents of a dataset file before it is turned into an
/// [`ExpertDataset`](super::ExpertDataset).
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub metric: MetricKind,
    pub shape: StateShape,
    pub transitions: Vec<(StateVec, StateVec)>,
    pub expert_ids: Vec<u32>,
}

impl DatasetFile {
    pub fn new(metric: MetricKind, shape: StateShape) -> Self {
        DatasetFile {
            metric,
            shape,
            transitions: Vec::new(),
            expert_ids: Vec::new(),
        }
    }

    /// Append another file's records; shapes and metrics must agree.
    pub fn merge(&mut self, other: DatasetFile) -> Result<()> {
        if other.metric != self.metric || other.shape != self.shape {
            return Err(ExpertError::MetricMismatch {
                expected: format!("{:?} {:?}", self.metric, self.shape),
                found: format!("{:?} {:?}", other.metric, other.shape),
            });
        }
        self.transitions.extend(other.transitions);
        self.expert_ids.extend(other.expert_ids);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

pub fn write_dataset<W: Write>(file: &DatasetFile, mut out: W) -> Result<()> {
    let n = file.shape.len();
    if file.expert_ids.len() != file.transitions.len() {
        return Err(ExpertError::IdCount(file.expert_ids.len(), file.transitions.len()));
    }
    let (tag, dims) = match file.shape {
        StateShape::Flat(n) => (0u8, [n as u32, 0, 0]),
        StateShape::Grid {
            channels,
            height,
            width,
        } => (1u8, [channels as u32, height as u32, width as u32]),
    };
    let mut buf = Vec::with_capacity(32 + file.len() * (8 * n + 4));
    buf.extend_from_slice(&DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.push(file.metric.id());
    buf.push(tag);
    buf.extend_from_slice(&0u16.to_le_bytes());
    for d in dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    buf.extend_from_slice(&(file.len() as u64).to_le_bytes());
    for (s, s2) in &file.transitions {
        if s.len() != n || s2.len() != n {
            return Err(ExpertError::Format(format!(
                "state of length {} in a dataset of length {n}",
                if s.len() != n { s.len() } else { s2.len() }
            )));
        }
        for v in s.iter().chain(s2) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    for id in &file.expert_ids {
        buf.extend_from_slice(&id.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn take<const N: usize>(bytes: &[u8], at: &mut usize) -> Result<[u8; N]> {
    let chunk = bytes
        .get(*at..*at + N)
        .ok_or_else(|| ExpertError::Format("truncated".into()))?;
    *at += N;
    Ok(chunk.try_into().unwrap())
}

pub fn read_dataset<R: Read>(mut input: R) -> Result<DatasetFile> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let at = &mut 0;
    if take::<4>(&bytes, at)? != DATASET_MAGIC {
        return Err(ExpertError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&bytes, at)?);
    if version != DATASET_VERSION {
        return Err(ExpertError::Format(format!("unsupported version {version}")));
    }
    let [metric_id, tag] = take::<2>(&bytes, at)?;
    take::<2>(&bytes, at)?;
    let metric = MetricKind::from_id(metric_id)
        .ok_or_else(|| ExpertError::Format(format!("unknown metric id {metric_id}")))?;
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = u32::from_le_bytes(take(&bytes, at)?) as usize;
    }
    let shape = match tag {
        0 => StateShape::Flat(dims[0]),
        1 => StateShape::Grid {
            channels: dims[0],
            height: dims[1],
            width: dims[2],
        },
        t => return Err(ExpertError::Format(format!("unknown shape tag {t}"))),
    };
    let count = u64::from_le_bytes(take(&bytes, at)?) as usize;
    let n = shape.len();
    let expected = count
        .checked_mul(8 * n + 4)
        .ok_or_else(|| ExpertError::Format("record count overflows".into()))?;
    if bytes.len() - *at != expected {
        return Err(ExpertError::Format(format!(
            "{} payload bytes, header implies {expected}",
            bytes.len() - *at
        )));
    }
    let mut floats = |len: usize| -> Result<StateVec> {
        (0..len)
            .map(|_| take::<4>(&bytes, at).map(f32::from_le_bytes))
            .collect()
    };
    let mut transitions = Vec::with_capacity(count);
    for _ in 0..count {
        let s = floats(n)?;
        let s2 = floats(n)?;
        transitions.push((s, s2));
    }
    let expert_ids = (0..count)
        .map(|_| take::<4>(&bytes, at).map(u32::from_le_bytes))
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetFile {
        metric,
        shape,
        transitions,
        expert_ids,
    })
}
