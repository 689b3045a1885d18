//! Binned two-channel photocount traces and their text formats.
//!
//! Channel 0 is the subtraction detector (counts `k`), channel 1 the
//! observation detector (counts `n`).
//!
//! Binned trace:
//!
//! ```text
//! #subthermal-trace v1 tau_ns=10000
//! 0,1
//! 2,0
//! ```
//!
//! Raw time tags:
//!
//! ```text
//! #subthermal-events v1
//! 0,1250
//! 1,1300
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};

pub const TRACE_HEADER: &str = "#subthermal-trace v1";
pub const EVENTS_HEADER: &str = "#subthermal-events v1";

/// Photocounts of one time bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Bin {
    /// Counts on the subtraction detector.
    pub k: u32,
    /// Counts on the observation detector.
    pub n: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinnedTrace {
    pub bins: Vec<Bin>,
    pub tau_ns: u64,
    /// Free-form provenance; not serialized.
    pub meta: BTreeMap<String, String>,
}

impl BinnedTrace {
    pub fn new(bins: Vec<Bin>, tau_ns: u64) -> Result<Self> {
        if tau_ns == 0 {
            return Err(invalid("tau_ns", "bin width must be positive"));
        }
        Ok(Self {
            bins,
            tau_ns,
            meta: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACE_HEADER} tau_ns={}", self.tau_ns)?;
        for b in &self.bins {
            writeln!(out, "{},{}", b.k, b.n)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.ok_or_else(|| format_err(1, "empty file"))?;
        let tau_ns = parse_trace_header(&header)?;
        let mut bins = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line_no = i + 2;
            let (k, n) = parse_pair::<u32, u32>(&line, line_no)?;
            bins.push(Bin { k, n });
        }
        Self::new(bins, tau_ns).map_err(|e| format_err(1, e.to_string()))
    }
}

fn format_err(line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        message: message.into(),
    }
}

fn parse_trace_header(header: &str) -> Result<u64> {
    let rest = header
        .trim_end()
        .strip_prefix(TRACE_HEADER)
        .and_then(|r| r.strip_prefix(" tau_ns="))
        .ok_or_else(|| format_err(1, format!("expected `{TRACE_HEADER} tau_ns=<int>`")))?;
    match rest.parse::<u64>() {
        Ok(tau) if tau > 0 => Ok(tau),
        _ => Err(format_err(1, format!("bad tau_ns value `{rest}`"))),
    }
}

fn parse_pair<A: std::str::FromStr, B: std::str::FromStr>(line: &str, line_no: usize) -> Result<(A, B)> {
    let line = line.trim_end();
    let (a, b) = line
        .split_once(',')
        .ok_or_else(|| format_err(line_no, format!("expected two comma-separated fields, got `{line}`")))?;
    let a = a
        .parse()
        .map_err(|_| format_err(line_no, format!("bad first field `{a}`")))?;
    let b = b
        .parse()
        .map_err(|_| format_err(line_no, format!("bad second field `{b}`")))?;
    Ok((a, b))
}

/// Raw detector time tags in nanoseconds, one ascending list per channel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimeTags {
    pub channels: [Vec<u64>; 2],
}

impl TimeTags {
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{EVENTS_HEADER}")?;
        for (ch, stamps) in self.channels.iter().enumerate() {
            for t in stamps {
                writeln!(out, "{ch},{t}")?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the events format. Lines of the two channels may interleave, but
    /// each channel's timestamps must be nondecreasing.
    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.ok_or_else(|| format_err(1, "empty file"))?;
        if header.trim_end() != EVENTS_HEADER {
            return Err(format_err(1, format!("expected `{EVENTS_HEADER}`")));
        }
        let mut tags = TimeTags::default();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line_no = i + 2;
            let (ch, t) = parse_pair::<usize, u64>(&line, line_no)?;
            let stamps = tags
                .channels
                .get_mut(ch)
                .ok_or_else(|| format_err(line_no, format!("channel must be 0 or 1, got {ch}")))?;
            if stamps.last().is_some_and(|&prev| t < prev) {
                return Err(format_err(line_no, format!("timestamp {t} decreases on channel {ch}")));
            }
            stamps.push(t);
        }
        Ok(tags)
    }
}

/// Counts events per channel in consecutive windows `[j tau, (j+1) tau)`.
///
/// With `span_ns` given, only the `span_ns / tau_ns` complete windows are
/// kept and later events are dropped. Without it the record is taken to end
/// with the window holding the last event.
pub fn bin_timestamps(tags: &TimeTags, tau_ns: u64, span_ns: Option<u64>) -> Result<BinnedTrace> {
    if tau_ns == 0 {
        return Err(invalid("tau_ns", "bin width must be positive"));
    }
    for (channel, stamps) in tags.channels.iter().enumerate() {
        if let Some(index) = stamps.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::UnsortedTimestamps {
                channel,
                index: index + 1,
            });
        }
    }
    let n_bins = match span_ns {
        Some(span) => span / tau_ns,
        None => tags
            .channels
            .iter()
            .filter_map(|s| s.last())
            .max()
            .map_or(0, |&t| t / tau_ns + 1),
    } as usize;
    let mut bins = vec![Bin::default(); n_bins];
    for (channel, stamps) in tags.channels.iter().enumerate() {
        for &t in stamps {
            let j = (t / tau_ns) as usize;
            let Some(bin) = bins.get_mut(j) else { break };
            if channel == 0 {
                bin.k += 1;
            } else {
                bin.n += 1;
            }
        }
    }
    BinnedTrace::new(bins, tau_ns)
}

/// Keeps every `period`-th bin, starting with the first.
pub fn thin_bins(trace: &BinnedTrace, period: usize) -> Result<BinnedTrace> {
    if period == 0 {
        return Err(invalid("period_bins", "thinning period must be at least 1"));
    }
    let mut out = BinnedTrace {
        bins: trace.bins.iter().step_by(period).copied().collect(),
        tau_ns: trace.tau_ns,
        meta: trace.meta.clone(),
    };
    out.meta.insert("thin_period_bins".into(), period.to_string());
    Ok(out)
}

/// Totals of one group of `M` consecutive bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupRecord {
    /// Sum of `k` over all `M` bins.
    pub k_total: u64,
    /// Sum of `n` over the first `m` bins.
    pub n_partial: u64,
}

/// Splits the trace into consecutive groups of `total_modes` bins, dropping
/// an incomplete trailing group.
pub fn group_records(
    trace: &BinnedTrace,
    total_modes: usize,
    observed_modes: usize,
) -> Result<Vec<GroupRecord>> {
    if total_modes == 0 || observed_modes == 0 {
        return Err(invalid("M", "group sizes must be at least 1"));
    }
    if observed_modes > total_modes {
        return Err(invalid(
            "m",
            format!("observed modes {observed_modes} exceed total modes {total_modes}"),
        ));
    }
    Ok(trace
        .bins
        .chunks_exact(total_modes)
        .map(|group| GroupRecord {
            k_total: group.iter().map(|b| u64::from(b.k)).sum(),
            n_partial: group[..observed_modes].iter().map(|b| u64::from(b.n)).sum(),
        })
        .collect())
}

/// `n_partial` of every record whose `k_total` equals `k`.
pub fn condition_on(records: &[GroupRecord], k: u64) -> Vec<u64> {
    records
        .iter()
        .filter(|r| r.k_total == k)
        .map(|r| r.n_partial)
        .collect()
}

/// Groups bins by `M`, keeps groups with exactly `K` subtraction counts and
/// returns the observation counts summed over their first `m` bins.
pub fn group_and_condition(
    trace: &BinnedTrace,
    total_modes: usize,
    observed_modes: usize,
    k: u64,
) -> Result<Vec<u64>> {
    Ok(condition_on(&group_records(trace, total_modes, observed_modes)?, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(pairs: &[(u32, u32)]) -> BinnedTrace {
        BinnedTrace::new(pairs.iter().map(|&(k, n)| Bin { k, n }).collect(), 10_000).unwrap()
    }

    #[test]
    fn empty_events_give_empty_trace() {
        let t = bin_timestamps(&TimeTags::default(), 10_000, None).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn single_event_single_bin() {
        let tags = TimeTags {
            channels: [vec![], vec![5_000]],
        };
        let t = bin_timestamps(&tags, 10_000, None).unwrap();
        assert_eq!(t.bins, vec![Bin { k: 0, n: 1 }]);
    }

    #[test]
    fn explicit_span_drops_partial_window() {
        let tags = TimeTags {
            channels: [vec![1, 15_000], vec![9_999, 10_000, 25_000]],
        };
        let t = bin_timestamps(&tags, 10_000, Some(25_000)).unwrap();
        assert_eq!(t.bins, vec![Bin { k: 1, n: 1 }, Bin { k: 1, n: 1 }]);
    }

    #[test]
    fn unsorted_rejected() {
        let tags = TimeTags {
            channels: [vec![5, 3], vec![]],
        };
        assert!(matches!(
            bin_timestamps(&tags, 10, None),
            Err(Error::UnsortedTimestamps { channel: 0, index: 1 })
        ));
    }

    #[test]
    fn thinning() {
        let t = trace(&[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]);
        assert_eq!(thin_bins(&t, 1).unwrap().bins, t.bins);
        let th = thin_bins(&t, 2).unwrap();
        assert_eq!(th.bins, vec![Bin { k: 0, n: 1 }, Bin { k: 2, n: 3 }, Bin { k: 4, n: 5 }]);
        for period in 1..8 {
            assert_eq!(thin_bins(&t, period).unwrap().len(), t.len().div_ceil(period));
        }
        assert!(thin_bins(&t, 0).is_err());
    }

    #[test]
    fn grouping_and_conditioning() {
        let t = trace(&[(1, 5), (0, 7), (2, 1), (0, 1), (0, 3), (0, 4), (9, 9)]);
        let recs = group_records(&t, 2, 1).unwrap();
        assert_eq!(
            recs,
            vec![
                GroupRecord { k_total: 1, n_partial: 5 },
                GroupRecord { k_total: 2, n_partial: 1 },
                GroupRecord { k_total: 0, n_partial: 3 },
            ]
        );
        assert_eq!(group_and_condition(&t, 2, 2, 0).unwrap(), vec![7]);
        assert!(group_and_condition(&t, 2, 1, 50).unwrap().is_empty());
        assert!(group_and_condition(&t, 2, 3, 0).is_err());

        let zero_k = trace(&[(0, 3), (0, 0), (0, 2)]);
        assert_eq!(group_and_condition(&zero_k, 1, 1, 0).unwrap(), vec![3, 0, 2]);
    }

    #[test]
    fn trace_format_round_trip() {
        let t = trace(&[(0, 1), (3, 0)]);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "#subthermal-trace v1 tau_ns=10000\n0,1\n3,0\n");
        assert_eq!(BinnedTrace::read(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn trace_format_errors_name_the_line() {
        let bad_header = "#subthermal-trace v2 tau_ns=10\n0,1\n";
        assert!(matches!(BinnedTrace::read(bad_header.as_bytes()), Err(Error::Format { line: 1, .. })));
        let bad_row = "#subthermal-trace v1 tau_ns=10\n0,1\n0;1\n";
        assert!(matches!(BinnedTrace::read(bad_row.as_bytes()), Err(Error::Format { line: 3, .. })));
        let negative = "#subthermal-trace v1 tau_ns=10\n-1,1\n";
        assert!(matches!(BinnedTrace::read(negative.as_bytes()), Err(Error::Format { line: 2, .. })));
        let zero_tau = "#subthermal-trace v1 tau_ns=0\n";
        assert!(matches!(BinnedTrace::read(zero_tau.as_bytes()), Err(Error::Format { line: 1, .. })));
    }

    #[test]
    fn events_format() {
        let text = "#subthermal-events v1\n1,100\n0,50\n1,100\n0,70\n";
        let tags = TimeTags::read(text.as_bytes()).unwrap();
        assert_eq!(tags.channels, [vec![50, 70], vec![100, 100]]);
        let mut buf = Vec::new();
        tags.write(&mut buf).unwrap();
        assert_eq!(TimeTags::read(buf.as_slice()).unwrap(), tags);

        let decreasing = "#subthermal-events v1\n0,50\n0,40\n";
        assert!(matches!(TimeTags::read(decreasing.as_bytes()), Err(Error::Format { line: 3, .. })));
        let bad_channel = "#subthermal-events v1\n2,50\n";
        assert!(matches!(TimeTags::read(bad_channel.as_bytes()), Err(Error::Format { line: 2, .. })));
    }

    proptest::proptest! {
        #[test]
        fn trace_round_trips(pairs in proptest::collection::vec((0u32..50, 0u32..50), 0..200), tau in 1u64..1_000_000) {
            let t = BinnedTrace::new(pairs.iter().map(|&(k, n)| Bin { k, n }).collect(), tau).unwrap();
            let mut buf = Vec::new();
            t.write(&mut buf).unwrap();
            proptest::prop_assert_eq!(BinnedTrace::read(buf.as_slice()).unwrap(), t);
        }

        #[test]
        fn thinning_length(len in 0usize..500, period in 1usize..60) {
            let t = trace(&vec![(0, 1); len]);
            proptest::prop_assert_eq!(thin_bins(&t, period).unwrap().len(), len.div_ceil(period));
        }

        #[test]
        fn conditioning_partitions_groups(
            pairs in proptest::collection::vec((0u32..3, 0u32..5), 0..300),
            big in 1usize..6,
            small in 1usize..6,
        ) {
            let small = small.min(big);
            let records = group_records(&trace(&pairs), big, small).unwrap();
            proptest::prop_assert_eq!(records.len(), pairs.len() / big);
            let max_k = records.iter().map(|r| r.k_total).max().unwrap_or(0);
            let sizes: usize = (0..=max_k).map(|k| condition_on(&records, k).len()).sum();
            proptest::prop_assert_eq!(sizes, records.len());
        }
    }
}
