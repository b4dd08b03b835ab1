//! Packet trace parsing and the two aggregations into batch traces: by time
//! bin (batch = packets per bin) and by packet size (small/large labels).

use std::io::BufRead;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulate::Trace;
use crate::stats;

/// Frame size bounds for Ethernet captures, in bytes.
pub const ETHERNET_SIZES: (f64, f64) = (64.0, 1518.0);
/// Default aggregation bin width in seconds.
pub const DEFAULT_BIN: f64 = 1e-3;
/// Default largest batch in a bin.
pub const DEFAULT_CAP: usize = 4;
/// Default small/large size threshold in bytes.
pub const DEFAULT_THRESHOLD: f64 = 100.0;
/// Timestamp resolution; zero gaps are raised to this.
pub const RESOLUTION: f64 = 1e-6;

/// Relative slack so that timestamps on a bin edge land in that bin.
const BIN_FUZZ: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RawPacketTrace {
    /// Arrival times in seconds, nondecreasing.
    pub timestamps: Vec<f64>,
    /// Packet sizes in bytes.
    pub sizes: Vec<f64>,
}

impl RawPacketTrace {
    pub fn new(timestamps: Vec<f64>, sizes: Vec<f64>) -> Result<Self> {
        let raw = Self { timestamps, sizes };
        raw.validate(false)?;
        Ok(raw)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Sorted finite timestamps, matching lengths and, with `ethernet`,
    /// sizes within [`ETHERNET_SIZES`].
    pub fn validate(&self, ethernet: bool) -> Result<()> {
        if self.timestamps.len() != self.sizes.len() {
            return Err(Error::InvalidTrace(format!(
                "{} timestamps but {} sizes",
                self.timestamps.len(),
                self.sizes.len()
            )));
        }
        if self.is_empty() {
            return Err(Error::InvalidTrace("no packets".into()));
        }
        for (i, &t) in self.timestamps.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidTrace(format!("timestamp {t} at packet {i}")));
            }
            if i > 0 && t < self.timestamps[i - 1] {
                return Err(Error::InvalidTrace(format!("timestamps decrease at packet {i}")));
            }
        }
        for (i, &s) in self.sizes.iter().enumerate() {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::InvalidTrace(format!("size {s} at packet {i}")));
            }
            if ethernet && (s < ETHERNET_SIZES.0 || s > ETHERNET_SIZES.1) {
                return Err(Error::InvalidTrace(format!("size {s} at packet {i} outside Ethernet frame bounds")));
            }
        }
        Ok(())
    }

    /// Two columns (seconds, bytes) separated by whitespace or a comma.
    /// Blank lines, `#` comments and a non-numeric first line are skipped.
    pub fn parse<R: BufRead>(reader: R, ethernet: bool) -> Result<Self> {
        let mut raw = Self::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let s = line.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let mut cols = s.split(|c: char| c == ',' || c.is_whitespace()).filter(|c| !c.is_empty());
            let (Some(a), Some(b)) = (cols.next(), cols.next()) else {
                return Err(Error::Parse { line: i + 1, message: "expected two columns".into() });
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(t), Ok(sz)) => {
                    raw.timestamps.push(t);
                    raw.sizes.push(sz);
                }
                _ if raw.is_empty() && i == 0 => continue,
                _ => return Err(Error::Parse { line: i + 1, message: format!("not numeric: '{s}'") }),
            }
        }
        raw.validate(ethernet)?;
        Ok(raw)
    }
}

/// Bin aggregation output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Format1 {
    pub trace: Trace,
    /// Occupied bins.
    pub events: usize,
    pub packets: usize,
}

/// Packets sharing a bin of width `bin` (index `floor(t / bin)`) form one
/// event whose batch size is their count. Gaps are differences of occupied
/// bin indices times `bin`; the first gap is measured from the origin and
/// is at least one bin. Bins holding more than `cap` packets are rejected.
pub fn aggregate_format1(raw: &RawPacketTrace, bin: f64, cap: usize) -> Result<Format1> {
    raw.validate(false)?;
    if !(bin > 0.0) || !bin.is_finite() {
        return Err(Error::infeasible("bin > 0", bin));
    }
    if cap == 0 {
        return Err(Error::infeasible("cap >= 1", 0.0));
    }
    let mut bins: Vec<(u64, usize)> = Vec::new();
    for &ts in &raw.timestamps {
        let idx = (ts / bin + BIN_FUZZ).floor() as u64;
        match bins.last_mut() {
            Some((last, n)) if *last == idx => *n += 1,
            _ => bins.push((idx, 1)),
        }
    }
    let over: Vec<(u64, usize)> = bins.iter().copied().filter(|&(_, n)| n > cap).collect();
    if let Some(&(idx, n)) = over.first() {
        return Err(Error::InvalidTrace(format!(
            "{} bins hold more than {cap} packets (first: bin {idx} with {n})",
            over.len()
        )));
    }
    let mut t = Vec::with_capacity(bins.len());
    let mut b = Vec::with_capacity(bins.len());
    let mut prev = None;
    for &(idx, n) in &bins {
        let gap = match prev {
            None => idx.max(1),
            Some(p) => idx - p,
        };
        t.push(gap as f64 * bin);
        b.push(n);
        prev = Some(idx);
    }
    let events = t.len();
    let trace = Trace::new(t, b)?;
    Ok(Format1 { trace: Trace { origin: Some(format!("format I, bin {bin}")), ..trace }, events, packets: raw.len() })
}

/// Size-label aggregation output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Format2 {
    pub trace: Trace,
    /// Gaps raised from zero to [`RESOLUTION`].
    pub floored: usize,
}

/// One event per packet: label 1 below `threshold` bytes, 2 otherwise. Gaps
/// are timestamp differences, the first measured from the origin.
pub fn aggregate_format2(raw: &RawPacketTrace, threshold: f64) -> Result<Format2> {
    raw.validate(false)?;
    if !threshold.is_finite() {
        return Err(Error::infeasible("finite threshold", threshold));
    }
    let mut prev = 0.0;
    let mut floored = 0;
    let mut t = Vec::with_capacity(raw.len());
    for &ts in &raw.timestamps {
        let mut gap = ts - prev;
        if gap < RESOLUTION {
            gap = RESOLUTION;
            floored += 1;
        }
        t.push(gap);
        prev = ts;
    }
    let b = raw.sizes.iter().map(|&s| if s < threshold { 1 } else { 2 }).collect();
    let trace = Trace::new(t, b)?;
    Ok(Format2 { trace: Trace { origin: Some(format!("format II, threshold {threshold}")), ..trace }, floored })
}

/// Summary of the inter-event times and batch sizes of a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub cv: f64,
    pub min: f64,
    pub max: f64,
    /// Lag-1 autocorrelation of the inter-event times.
    pub rho1: Option<f64>,
    /// Empirical `P(B = k)` for `k = 1..=max batch`.
    pub batch_pmf: Vec<f64>,
}

pub fn summarize(trace: &Trace) -> TraceSummary {
    let x = &trace.t;
    let mean = stats::mean(x);
    let mut pmf = vec![0.0; trace.max_batch()];
    for &b in &trace.b {
        pmf[b - 1] += 1.0;
    }
    pmf.iter_mut().for_each(|p| *p /= trace.len() as f64);
    TraceSummary {
        n: trace.len(),
        mean,
        median: stats::median(x),
        cv: stats::variance(x).sqrt() / mean,
        min: x.iter().copied().fold(f64::INFINITY, f64::min),
        max: x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        rho1: stats::autocorrelation(x, 1),
        batch_pmf: pmf,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(ts: &[f64], sz: &[f64]) -> RawPacketTrace {
        RawPacketTrace::new(ts.to_vec(), sz.to_vec()).unwrap()
    }

    #[test]
    fn shared_bin_is_one_event() {
        let r = raw(&[0.0101, 0.01012, 0.0105], &[64.0; 3]);
        let f = aggregate_format1(&r, 1e-3, 4).unwrap();
        assert_eq!(f.trace.b, vec![3]);
        assert!((f.trace.t[0] - 0.010).abs() < 1e-15);
    }

    #[test]
    fn empty_stretch_is_one_gap() {
        let r = raw(&[0.0005, 0.0012, 0.0062, 0.0063], &[64.0; 4]);
        let f = aggregate_format1(&r, 1e-3, 4).unwrap();
        // Bins 0, 1, 6: first gap floored to one bin.
        assert_eq!(f.trace.b, vec![1, 1, 2]);
        let want = [1e-3, 1e-3, 5e-3];
        for (a, b) in f.trace.t.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(f.trace.b.iter().sum::<usize>(), r.len());
    }

    #[test]
    fn bin_edges_and_cap() {
        // 0.003 / 0.001 is 2.9999999999999996 in binary.
        let r = raw(&[0.003, 0.0031], &[64.0; 2]);
        assert_eq!(aggregate_format1(&r, 1e-3, 4).unwrap().trace.b, vec![2]);
        let r = raw(&[0.1; 5], &[64.0; 5]);
        assert!(matches!(aggregate_format1(&r, 1e-3, 4), Err(Error::InvalidTrace(_))));
        assert!(aggregate_format1(&r, 0.0, 4).is_err());
    }

    #[test]
    fn size_labels() {
        let r = raw(&[0.1, 0.2, 0.2], &[64.0, 1518.0, 99.0]);
        let f = aggregate_format2(&r, 100.0).unwrap();
        assert_eq!(f.trace.b, vec![1, 2, 1]);
        assert_eq!(f.floored, 1);
        assert_eq!(f.trace.t[2], RESOLUTION);
        assert!(aggregate_format2(&r, 64.0).unwrap().trace.b[..2] == [2, 2]);
    }

    #[test]
    fn parsing() {
        let text = "time,size\n0.5 64\n# note\n\n0.75,1500\n";
        let r = RawPacketTrace::parse(text.as_bytes(), true).unwrap();
        assert_eq!(r.timestamps, vec![0.5, 0.75]);
        assert!(RawPacketTrace::parse("0.5 64\n0.4 64\n".as_bytes(), false).is_err());
        assert!(RawPacketTrace::parse("0.5 20\n".as_bytes(), true).is_err());
        assert!(matches!(RawPacketTrace::parse("0.5 64\nx y\n".as_bytes(), false), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn summary() {
        let tr = Trace::new(vec![1.0, 2.0, 3.0, 4.0], vec![1, 2, 1, 1]).unwrap();
        let s = summarize(&tr);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 4.0);
        assert_eq!(s.batch_pmf, vec![0.75, 0.25]);
    }
}
