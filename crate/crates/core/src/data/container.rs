//! Binary dataset container and plain-text export.
//!
//! Layout (little endian):
//!
//! ```text
//! magic "DYCFDSET" | version u32 | classes u32 | n_counts u64 | counts u64* |
//! seed u64 | n_instances u64 |
//!   { id u64 | split u8 | label u32 | points u32 | xyz f64 * 3·points }* |
//! crc32 u32 over everything before it
//! ```
//!
//! Labels of unlabeled instances are stored so that evaluation survives a
//! round trip.

use std::fmt::Write as _;
use std::path::Path;

use crate::codec::{Reader, Writer};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::types::{Instance, PointCloud, Split};

const MAGIC: &[u8; 8] = b"DYCFDSET";
pub const VERSION: u32 = 1;

fn split_code(s: Split) -> u8 {
    match s {
        Split::Labeled => 0,
        Split::Unlabeled => 1,
        Split::Test => 2,
    }
}

fn split_from(code: u8) -> Result<Split> {
    match code {
        0 => Ok(Split::Labeled),
        1 => Ok(Split::Unlabeled),
        2 => Ok(Split::Test),
        other => Err(Error::Format(format!("unknown split tag {other}"))),
    }
}

pub fn to_bytes(d: &Dataset) -> Vec<u8> {
    let mut w = Writer::new(MAGIC, VERSION);
    w.u32(d.classes as u32);
    w.u64(d.counts.len() as u64);
    for &c in &d.counts {
        w.u64(c as u64);
    }
    w.u64(d.seed);
    w.u64(d.instances.len() as u64);
    for inst in &d.instances {
        w.u64(inst.id);
        w.u8(split_code(inst.split));
        w.u32(inst.evaluation_label() as u32);
        w.u32(inst.cloud.len() as u32);
        for p in inst.cloud.points() {
            for &v in p {
                w.f64(v);
            }
        }
    }
    w.finish()
}

pub fn from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::open(bytes, MAGIC, VERSION, "dataset")?;
    let classes = r.u32()? as usize;
    let n_counts = r.u64()? as usize;
    if n_counts != classes {
        return Err(Error::Format(format!("{n_counts} class counts for {classes} classes")));
    }
    let counts = (0..n_counts).map(|_| r.u64().map(|c| c as usize)).collect::<Result<Vec<_>>>()?;
    let seed = r.u64()?;
    let n = r.u64()? as usize;
    let mut instances = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let id = r.u64()?;
        let split = split_from(r.u8()?)?;
        let label = r.u32()? as usize;
        if label >= classes {
            return Err(Error::ClassOutOfRange { index: label, classes });
        }
        let points = r.u32()? as usize;
        let pts = (0..points)
            .map(|_| Ok([r.f64()?, r.f64()?, r.f64()?]))
            .collect::<Result<Vec<_>>>()?;
        instances.push(Instance::new(id, PointCloud::new(pts)?, label, split));
    }
    r.finish()?;
    Ok(Dataset { classes, counts, seed, instances })
}

pub fn save(d: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(d))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Dataset> {
    from_bytes(&std::fs::read(path)?)
}

/// One instance per line: `id split label x0 y0 z0 x1 ...`. Unlabeled
/// instances print `-` as their label.
pub fn to_text(d: &Dataset) -> String {
    let mut out = String::new();
    for inst in &d.instances {
        let label = inst.label().map_or_else(|| "-".to_string(), |l| l.to_string());
        write!(out, "{} {} {}", inst.id, inst.split.as_str(), label).expect("write to string");
        for p in inst.cloud.points() {
            write!(out, " {} {} {}", p[0], p[1], p[2]).expect("write to string");
        }
        out.push('\n');
    }
    out
}
