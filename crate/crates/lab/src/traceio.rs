//! Trace export: one `region,index,op` line per event, all decimal, no
//! header. Regions are numbered 0 for L0 and `level * 256 + table` for a
//! table; ops are 0 read, 1 write, 2 read-modify-write.

use std::io::{BufRead, Write};

use pyramid_oram::{Region, TraceEvent, TraceOp};

use crate::error::{LabError, Result};

pub fn export(events: &[TraceEvent], mut out: impl Write) -> Result<()> {
    for e in events {
        writeln!(out, "{},{},{}", e.region.code(), e.index, e.op.code())?;
    }
    out.flush()?;
    Ok(())
}

pub fn import(input: impl BufRead) -> Result<Vec<TraceEvent>> {
    let mut events = Vec::new();
    for (no, line) in input.lines().enumerate() {
        let line = line?;
        let bad = || LabError::Schema(format!("trace line {}: {line:?}", no + 1));
        let mut f = line.split(',');
        let (Some(r), Some(i), Some(o), None) = (f.next(), f.next(), f.next(), f.next()) else {
            return Err(bad());
        };
        let region = r.parse().ok().and_then(Region::from_code).ok_or_else(bad)?;
        let index = i.parse().map_err(|_| bad())?;
        let op = o.parse().ok().and_then(TraceOp::from_code).ok_or_else(bad)?;
        events.push(TraceEvent { region, index, op });
    }
    Ok(events)
}
