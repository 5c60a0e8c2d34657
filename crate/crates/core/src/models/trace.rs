//! JSONL verification traces.
//!
//! A trace is a header line `{"header": true, "d": .., "v": ..}` followed by
//! one record per verified position:
//! `{"step": .., "hidden": [..d], "draft_probs": [..V], "draft_token": ..}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Capabilities;
use crate::error::{Error, Result};
use crate::math::ProbDist;
use crate::mc_head::{HeadWeights, HiddenState};

/// `|sum(draft_probs) - 1|` allowed in a trace file.
pub const TRACE_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub header: bool,
    pub d: usize,
    pub v: usize,
}

impl TraceHeader {
    pub fn new(d: usize, v: usize) -> Self {
        Self { header: true, d, v }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub step: u64,
    pub hidden: HiddenState,
    pub draft_probs: Vec<f64>,
    pub draft_token: usize,
}

impl TraceRecord {
    pub fn draft_dist(&self) -> Result<ProbDist> {
        ProbDist::with_tolerance(self.draft_probs.clone(), TRACE_NORM_TOLERANCE)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    /// Absent only for a completely empty file.
    pub header: Option<TraceHeader>,
    pub records: Vec<TraceRecord>,
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut trace = Trace::default();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let Some(header) = trace.header else {
            let h: TraceHeader =
                serde_json::from_str(&line).map_err(|e| parse_err(lineno, format!("expected header line: {e}")))?;
            if !h.header {
                return Err(parse_err(lineno, "header line must have \"header\": true".into()));
            }
            trace.header = Some(h);
            continue;
        };
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        validate_record(&header, &rec, trace.records.last().map(|r| r.step))?;
        trace.records.push(rec);
    }
    Ok(trace)
}

fn validate_record(header: &TraceHeader, rec: &TraceRecord, prev_step: Option<u64>) -> Result<()> {
    let step = rec.step;
    let fail = |msg: String| Err(Error::Validation(format!("step {step}: {msg}")));
    if let Some(prev) = prev_step {
        if step <= prev {
            return fail(format!("steps must be strictly increasing (previous {prev})"));
        }
    }
    if rec.hidden.dim() != header.d {
        return fail(format!(
            "hidden has {} entries, header declares d = {}",
            rec.hidden.dim(),
            header.d
        ));
    }
    if rec.draft_probs.len() != header.v {
        return fail(format!(
            "draft_probs has {} entries, header declares v = {}",
            rec.draft_probs.len(),
            header.v
        ));
    }
    if rec.draft_token >= header.v {
        return fail(format!(
            "draft_token {} outside vocabulary {}",
            rec.draft_token, header.v
        ));
    }
    if let Err(e) = rec.draft_dist() {
        return fail(format!("draft_probs invalid: {e}"));
    }
    Ok(())
}

pub fn write_trace(path: impl AsRef<Path>, header: &TraceHeader, records: &[TraceRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", json_line(header)).map_err(io)?;
    for rec in records {
        writeln!(out, "{}", json_line(rec)).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("trace values serialise")
}

/// A trace bound to the LM head that produced its hidden states.
#[derive(Debug, Clone)]
pub struct TraceReplay {
    pub trace: Trace,
    pub head: HeadWeights,
}

impl TraceReplay {
    pub fn new(trace: Trace, head: HeadWeights) -> Result<Self> {
        let Some(header) = trace.header else {
            return Err(Error::Validation("trace has no header".into()));
        };
        if header.d != head.dim() || header.v != head.vocab() {
            return Err(Error::Validation(format!(
                "trace declares d = {}, v = {} but the configured head is d = {}, v = {}",
                header.d,
                header.v,
                head.dim(),
                head.vocab()
            )));
        }
        Ok(Self { trace, head })
    }

    pub fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_hidden_state: true,
            is_replay: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn record(step: u64) -> TraceRecord {
        TraceRecord {
            step,
            hidden: HiddenState::new(vec![0.1, -0.2 / 3.0]).unwrap(),
            draft_probs: vec![0.1, 0.2, 0.7000000000000001],
            draft_token: 2,
        }
    }

    #[test]
    fn empty_file_is_empty_trace() {
        let dir = tempfile::tempdir().unwrap();
        let t = load_trace(write_raw(&dir, "e.jsonl", "")).unwrap();
        assert!(t.header.is_none());
        assert!(t.records.is_empty());
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let recs = vec![record(3), record(5)];
        write_trace(&p, &TraceHeader::new(2, 3), &recs).unwrap();
        let t = load_trace(&p).unwrap();
        assert_eq!(t.header, Some(TraceHeader::new(2, 3)));
        assert_eq!(t.records, recs);
    }

    #[test]
    fn unnormalised_probs_name_the_step() {
        let dir = tempfile::tempdir().unwrap();
        let body = "{\"header\":true,\"d\":1,\"v\":2}\n{\"step\":4,\"hidden\":[0.5],\"draft_probs\":[0.4,0.5],\"draft_token\":0}\n";
        let err = load_trace(write_raw(&dir, "t.jsonl", body)).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("step 4"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let body = "{\"header\":true,\"d\":1,\"v\":2}\n{\"step\":1,\"hidden\":[0.5],\"draft_probs\":[0.5,0.5],\"draft_token\":0}\n{\"step\":2,\"hidden\":[0.5]\n";
        match load_trace(write_raw(&dir, "t.jsonl", body)).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_fields_and_order_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let extra = "{\"header\":true,\"d\":1,\"v\":2}\n{\"step\":1,\"hidden\":[0.5],\"draft_probs\":[0.5,0.5],\"draft_token\":0,\"x\":1}\n";
        assert!(matches!(
            load_trace(write_raw(&dir, "a.jsonl", extra)),
            Err(Error::Parse { line: 2, .. })
        ));
        let order = "{\"header\":true,\"d\":1,\"v\":2}\n{\"step\":2,\"hidden\":[0.5],\"draft_probs\":[0.5,0.5],\"draft_token\":0}\n{\"step\":2,\"hidden\":[0.5],\"draft_probs\":[0.5,0.5],\"draft_token\":0}\n";
        assert!(matches!(
            load_trace(write_raw(&dir, "b.jsonl", order)),
            Err(Error::Validation(_))
        ));
        let no_header = "{\"step\":2,\"hidden\":[0.5],\"draft_probs\":[0.5,0.5],\"draft_token\":0}\n";
        assert!(matches!(
            load_trace(write_raw(&dir, "c.jsonl", no_header)),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn replay_checks_shape() {
        let t = Trace {
            header: Some(TraceHeader::new(2, 3)),
            records: vec![],
        };
        assert!(TraceReplay::new(t.clone(), HeadWeights::identity(3)).is_err());
        let head = HeadWeights::new(3, 2, vec![0.0; 6]).unwrap();
        let r = TraceReplay::new(t, head).unwrap();
        assert!(r.capabilities().is_replay);
    }
}
