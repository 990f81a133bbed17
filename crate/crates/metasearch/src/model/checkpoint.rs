//! Checkpoint persistence.
//!
//! Parameter file: `MALN1` magic, encoder config as canonical JSON, the
//! segment table, then the little-endian f64 payload. Optimizer state lives in
//! a sibling file (`MALO1`) under the same layout rules.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::optim::{OptimHyper, OptimizerKind, OptimizerState};
use crate::model::params::{EncoderConfig, ParamLayout, ParameterVector, Segment};

pub const PARAM_MAGIC: &[u8; 5] = b"MALN1";
pub const OPTIM_MAGIC: &[u8; 5] = b"MALO1";

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn write_segment_table<W: Write>(w: &mut W, layout: &ParamLayout) -> Result<()> {
    write_u32(w, layout.segments.len() as u32)?;
    for seg in &layout.segments {
        let name = seg.name.as_bytes();
        write_u32(w, name.len() as u32)?;
        w.write_all(name)?;
        write_u64(w, seg.rows as u64)?;
        write_u64(w, seg.cols as u64)?;
    }
    Ok(())
}

fn read_segment_table<R: Read>(r: &mut R) -> Result<ParamLayout> {
    let count = read_u32(r)? as usize;
    let mut segments = Vec::with_capacity(count);
    let mut offset = 0usize;
    for _ in 0..count {
        let name_len = read_u32(r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let rows = read_u64(r)? as usize;
        let cols = read_u64(r)? as usize;
        segments.push(Segment {
            name: String::from_utf8(name)
                .map_err(|_| Error::corpus("invalid segment name encoding"))?,
            rows,
            cols,
            offset,
        });
        offset += rows * cols;
    }
    Ok(ParamLayout {
        segments,
        total: offset,
    })
}

fn write_f64_array<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    write_u64(w, values.len() as u64)?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64_array<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let len = read_u64(r)? as usize;
    let mut out = vec![0.0; len];
    let mut b = [0u8; 8];
    for v in &mut out {
        r.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    Ok(out)
}

pub fn save_checkpoint(
    path: &Path,
    cfg: &EncoderConfig,
    params: &ParameterVector,
) -> Result<()> {
    params.assert_finite()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(PARAM_MAGIC)?;
    let json = serde_json::to_vec(cfg)?;
    write_u32(&mut w, json.len() as u32)?;
    w.write_all(&json)?;
    write_segment_table(&mut w, &params.layout)?;
    write_f64_array(&mut w, &params.values)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(EncoderConfig, ParameterVector)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != PARAM_MAGIC {
        return Err(Error::corpus(format!(
            "{}: not a parameter checkpoint (bad magic)",
            path.display()
        )));
    }
    let json_len = read_u32(&mut r)? as usize;
    let mut json = vec![0u8; json_len];
    r.read_exact(&mut json)?;
    let cfg: EncoderConfig = serde_json::from_slice(&json)?;
    let layout = read_segment_table(&mut r)?;
    let values = read_f64_array(&mut r)?;
    if values.len() != layout.total {
        return Err(Error::corpus("checkpoint payload/segment-table mismatch"));
    }
    if layout != ParamLayout::from_config(&cfg) {
        return Err(Error::corpus(
            "checkpoint segment table does not match its encoder config",
        ));
    }
    let params = ParameterVector { values, layout };
    params.assert_finite()?;
    Ok((cfg, params))
}

pub fn save_optimizer_state(path: &Path, layout: &ParamLayout, state: &OptimizerState) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(OPTIM_MAGIC)?;
    #[derive(serde::Serialize)]
    struct Header<'a> {
        kind: OptimizerKind,
        step_count: u64,
        hyper: &'a OptimHyper,
    }
    let json = serde_json::to_vec(&Header {
        kind: state.kind,
        step_count: state.step_count,
        hyper: &state.hyper,
    })?;
    write_u32(&mut w, json.len() as u32)?;
    w.write_all(&json)?;
    write_segment_table(&mut w, layout)?;
    write_f64_array(&mut w, &state.first_moment)?;
    write_f64_array(&mut w, &state.second_moment)?;
    w.flush()?;
    Ok(())
}

pub fn load_optimizer_state(path: &Path) -> Result<(ParamLayout, OptimizerState)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != OPTIM_MAGIC {
        return Err(Error::corpus(format!(
            "{}: not an optimizer state file (bad magic)",
            path.display()
        )));
    }
    #[derive(serde::Deserialize)]
    struct Header {
        kind: OptimizerKind,
        step_count: u64,
        hyper: OptimHyper,
    }
    let json_len = read_u32(&mut r)? as usize;
    let mut json = vec![0u8; json_len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    let layout = read_segment_table(&mut r)?;
    let first_moment = read_f64_array(&mut r)?;
    let second_moment = read_f64_array(&mut r)?;
    Ok((
        layout,
        OptimizerState {
            kind: header.kind,
            step_count: header.step_count,
            hyper: header.hyper,
            first_moment,
            second_moment,
        },
    ))
}
