//! Plot-ready `(t, value, reference)` files extracted from run traces.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mfc_core::simkit::{read_trace_rows, TraceRow};

use crate::output::write_atomic;

pub struct Channel {
    pub name: &'static str,
    value: fn(&TraceRow) -> Option<f64>,
    reference: fn(&TraceRow) -> Option<f64>,
}

fn zero(_: &TraceRow) -> Option<f64> {
    Some(0.0)
}

fn none(_: &TraceRow) -> Option<f64> {
    None
}

pub const CHANNELS: &[Channel] = &[
    Channel {
        name: "e_y",
        value: |r| Some(r.y_err),
        reference: zero,
    },
    Channel {
        name: "e_psi",
        value: |r| Some(r.e_psi),
        reference: zero,
    },
    Channel {
        name: "e_vx",
        value: |r| Some(r.e_vx),
        reference: zero,
    },
    Channel {
        name: "vx",
        value: |r| Some(r.vx),
        reference: |r| Some(r.vx_d),
    },
    Channel {
        name: "x",
        value: |r| Some(r.x),
        reference: |r| Some(r.x_d),
    },
    Channel {
        name: "y",
        value: |r| Some(r.y),
        reference: |r| Some(r.y_d),
    },
    Channel {
        name: "psi",
        value: |r| Some(r.psi),
        reference: |r| Some(r.psi_ref),
    },
    Channel {
        name: "torque",
        value: |r| Some(r.torque),
        reference: none,
    },
    Channel {
        name: "steer",
        value: |r| Some(r.steer),
        reference: none,
    },
    Channel {
        name: "f1",
        value: |r| r.f1,
        reference: none,
    },
    Channel {
        name: "f2",
        value: |r| r.f2,
        reference: none,
    },
    Channel {
        name: "z2",
        value: |r| r.z2,
        reference: |r| r.z2_ref,
    },
];

pub fn channel_names() -> Vec<&'static str> {
    CHANNELS.iter().map(|c| c.name).collect()
}

/// Channels by name; an empty request selects all of them.
pub fn select(names: &[String]) -> Result<Vec<&'static Channel>> {
    if names.is_empty() {
        return Ok(CHANNELS.iter().collect());
    }
    names
        .iter()
        .map(|n| match CHANNELS.iter().find(|c| c.name == n.trim()) {
            Some(c) => Ok(c),
            None => bail!(
                "unknown channel `{n}`; available: {}",
                channel_names().join(", ")
            ),
        })
        .collect()
}

/// Writes one channel; rows where the value is undefined are skipped.
pub fn write_channel(rows: &[TraceRow], ch: &Channel, w: &mut dyn Write) -> Result<()> {
    writeln!(w, "t,value,reference")?;
    for r in rows {
        if let Some(v) = (ch.value)(r) {
            let reference = (ch.reference)(r).map(|x| x.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{}", r.t, v, reference)?;
        }
    }
    Ok(())
}

/// Writes `<dir>/<channel>.csv` for each selected channel.
pub fn emit(rows: &[TraceRow], names: &[String], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for ch in select(names)? {
        let path = dir.join(format!("{}.csv", ch.name));
        write_atomic(&path, |w| write_channel(rows, ch, w))?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let file = File::open(path).with_context(|| format!("cannot open trace {}", path.display()))?;
    read_trace_rows(BufReader::new(file))
        .with_context(|| format!("cannot parse trace {}", path.display()))
}
