//! Line-delimited trajectory files.
//!
//! The first line is a header `{"state_dim":..,"action_count":..}`; every
//! following line is one step `{"episode":..,"step":..,"state":[..],"action":..}`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{BetError, Result};
use crate::pool::{ActionId, Experience, ExperiencePool, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolHeader {
    pub state_dim: usize,
    pub action_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepRecord {
    episode: u64,
    step: u64,
    state: Vec<f64>,
    action: usize,
}

pub fn write_trajectories<W: Write>(pool: &ExperiencePool, mut out: W) -> Result<()> {
    let header = PoolHeader { state_dim: pool.state_dim(), action_count: pool.action_count() };
    serde_json::to_writer(&mut out, &header).map_err(json_io)?;
    out.write_all(b"\n")?;
    for e in pool {
        let rec = StepRecord {
            episode: e.episode,
            step: e.step,
            state: e.state.to_vec(),
            action: e.action.0,
        };
        serde_json::to_writer(&mut out, &rec).map_err(json_io)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectories<R: BufRead>(input: R) -> Result<ExperiencePool> {
    let mut header: Option<PoolHeader> = None;
    let mut experiences = Vec::new();
    let mut offset = 0usize;
    for line in input.split(b'\n') {
        let line = line?;
        let line_start = offset;
        offset += line.len() + 1;
        let text = trim_cr(&line);
        if text.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match header {
            None => header = Some(parse_line(text, line_start)?),
            Some(h) => {
                let rec: StepRecord = parse_line(text, line_start)?;
                if rec.state.len() != h.state_dim {
                    return Err(BetError::EpisodeDimension {
                        episode: rec.episode,
                        step: rec.step,
                        expected: h.state_dim,
                        got: rec.state.len(),
                    });
                }
                let state = StateVector::new(rec.state)
                    .map_err(|_| BetError::NonFinite { episode: rec.episode, step: rec.step })?;
                experiences.push(Experience {
                    state,
                    action: ActionId(rec.action),
                    episode: rec.episode,
                    step: rec.step,
                });
            }
        }
    }
    let header = header.ok_or_else(|| BetError::Empty("trajectory file has no header".into()))?;
    ExperiencePool::new(header.state_dim, header.action_count, experiences)
}

fn trim_cr(line: &[u8]) -> &[u8] {
    line.strip_suffix(b"\r").unwrap_or(line)
}

fn parse_line<T: for<'de> Deserialize<'de>>(text: &[u8], line_start: usize) -> Result<T> {
    serde_json::from_slice(text).map_err(|e| BetError::Parse {
        offset: line_start + e.column().saturating_sub(1),
        message: e.to_string(),
    })
}

fn json_io(e: serde_json::Error) -> BetError {
    BetError::Io(std::io::Error::other(e))
}

/// Writes any serializable records as one JSON object per line.
pub fn write_records<W: Write, T: Serialize>(records: &[T], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(json_io)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads bare states, one JSON array per line.
pub fn read_states<R: BufRead>(input: R) -> Result<Vec<StateVector>> {
    let mut states = Vec::new();
    let mut offset = 0usize;
    for line in input.split(b'\n') {
        let line = line?;
        let start = offset;
        offset += line.len() + 1;
        let text = trim_cr(&line);
        if text.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let values: Vec<f64> = parse_line(text, start)?;
        states.push(StateVector::new(values)?);
    }
    Ok(states)
}
