//! Event-log ingestion and per-interval host-process count matrices.
//!
//! An event log is UTF-8 text with one record per line:
//! `host_id,process_name,date,count`. Lines starting with `#` are comments.
//! Each record says how many times a host executed a process on a given day
//! (the day index doubles as the stream's interval index).

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// One `(host, process, date, count)` execution tuple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub host_id: String,
    pub process_name: String,
    /// Interval index (days since stream start).
    pub date: u64,
    /// Number of executions during that interval.
    pub count: u64,
}

/// Sparse non-negative count matrix for a single interval.
///
/// Rows are hosts, columns are processes, both in sorted identifier order so
/// the layout is reproducible across runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostProcessMatrix {
    pub interval: u64,
    pub hosts: Vec<String>,
    pub processes: Vec<String>,
    values: BTreeMap<(usize, usize), u64>,
}

impl HostProcessMatrix {
    pub fn n_hosts(&self) -> usize {
        self.hosts.len()
    }

    pub fn n_processes(&self) -> usize {
        self.processes.len()
    }

    pub fn get(&self, host: usize, process: usize) -> u64 {
        self.values.get(&(host, process)).copied().unwrap_or(0)
    }

    /// Sum of all stored counts.
    pub fn total(&self) -> u64 {
        self.values.values().sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.values.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    /// Dense copy for factorization.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.hosts.len(), self.processes.len()));
        for (&(i, j), &v) in &self.values {
            m[[i, j]] = v as f64;
        }
        m
    }
}

/// Parses an event log from a reader. Line numbers are 1-based.
pub fn parse_event_log<R: BufRead>(reader: R) -> Result<Vec<EventRecord>> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: format!("unreadable line: {e}"),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        records.push(parse_line(trimmed, line_no)?);
    }
    Ok(records)
}

fn parse_line(line: &str, line_no: usize) -> Result<EventRecord> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 4 {
        return Err(Error::Parse {
            line: line_no,
            message: format!("expected 4 comma-separated fields, found {}", fields.len()),
        });
    }
    let host_id = fields[0].trim();
    let process_name = fields[1].trim();
    if host_id.is_empty() || process_name.is_empty() {
        return Err(Error::Parse {
            line: line_no,
            message: "empty host or process identifier".into(),
        });
    }
    let date = parse_non_negative(fields[2].trim(), "date", line_no)?;
    let count = parse_non_negative(fields[3].trim(), "count", line_no)?;
    Ok(EventRecord {
        host_id: host_id.to_string(),
        process_name: process_name.to_string(),
        date,
        count,
    })
}

fn parse_non_negative(text: &str, field: &str, line_no: usize) -> Result<u64> {
    if let Some(stripped) = text.strip_prefix('-') {
        if stripped.chars().all(|c| c.is_ascii_digit()) && !stripped.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("negative {field}: {text}"),
            });
        }
    }
    text.parse::<u64>().map_err(|_| Error::Parse {
        line: line_no,
        message: format!("{field} is not a non-negative integer: {text:?}"),
    })
}

/// Reads all records from an event-log file, in file order.
pub fn ingest_event_log<P: AsRef<Path>>(path: P) -> Result<Vec<EventRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_event_log(std::io::BufReader::new(file))
}

/// Builds the count matrix for interval `t` from the hosts and processes that
/// actually appear in that interval. Duplicate `(host, process)` pairs are
/// summed.
pub fn build_matrix(events: &[EventRecord], t: u64) -> HostProcessMatrix {
    let hosts: BTreeSet<&str> = events
        .iter()
        .filter(|e| e.date == t)
        .map(|e| e.host_id.as_str())
        .collect();
    let roster: Vec<String> = hosts.into_iter().map(str::to_string).collect();
    build_matrix_with_roster(events, t, &roster).0
}

/// Builds the count matrix for interval `t` against a fixed host roster.
///
/// Roster hosts with no events in the interval keep an all-zero row; events
/// from hosts outside the roster are skipped and reported as warnings.
pub fn build_matrix_with_roster(
    events: &[EventRecord],
    t: u64,
    roster: &[String],
) -> (HostProcessMatrix, Vec<String>) {
    let mut hosts: Vec<String> = roster.to_vec();
    hosts.sort();
    hosts.dedup();
    let host_index: BTreeMap<&str, usize> = hosts
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_str(), i))
        .collect();

    let processes: BTreeSet<&str> = events
        .iter()
        .filter(|e| e.date == t && host_index.contains_key(e.host_id.as_str()))
        .map(|e| e.process_name.as_str())
        .collect();
    let processes: Vec<String> = processes.into_iter().map(str::to_string).collect();
    let process_index: BTreeMap<&str, usize> = processes
        .iter()
        .enumerate()
        .map(|(j, p)| (p.as_str(), j))
        .collect();

    let mut values: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut warned: BTreeSet<&str> = BTreeSet::new();
    let mut warnings = Vec::new();
    for event in events.iter().filter(|e| e.date == t) {
        match host_index.get(event.host_id.as_str()) {
            Some(&i) => {
                let j = process_index[event.process_name.as_str()];
                *values.entry((i, j)).or_insert(0) += event.count;
            }
            None => {
                if warned.insert(event.host_id.as_str()) {
                    warnings.push(format!(
                        "interval {t}: host {:?} not in roster, events skipped",
                        event.host_id
                    ));
                }
            }
        }
    }

    (
        HostProcessMatrix {
            interval: t,
            hosts,
            processes,
            values,
        },
        warnings,
    )
}

/// The default pipeline roster: every host seen in the given interval.
pub fn roster_from_interval(events: &[EventRecord], t: u64) -> Vec<String> {
    let hosts: BTreeSet<&str> = events
        .iter()
        .filter(|e| e.date == t)
        .map(|e| e.host_id.as_str())
        .collect();
    hosts.into_iter().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn rec(h: &str, p: &str, date: u64, count: u64) -> EventRecord {
        EventRecord {
            host_id: h.into(),
            process_name: p.into(),
            date,
            count,
        }
    }

    #[test]
    fn parses_single_line() {
        let records = parse_event_log(Cursor::new("h1,p1,0,3")).unwrap();
        assert_eq!(records, vec![rec("h1", "p1", 0, 3)]);
    }

    #[test]
    fn rejects_negative_count_with_line_number() {
        let err = parse_event_log(Cursor::new("h1,p1,0,3\nh1,p1,0,-2")).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("negative count"), "{message}");
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn rejects_missing_field() {
        let err = parse_event_log(Cursor::new("h1,p1,0")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn rejects_non_integer_date() {
        let err = parse_event_log(Cursor::new("h1,p1,zero,3")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn three_line_fixture_in_file_order() {
        let fixture = "# comment\nh2,p1,0,2\nh1,p1,0,3\n\nh1,p2,1,1\n";
        let records = parse_event_log(Cursor::new(fixture)).unwrap();
        assert_eq!(
            records,
            vec![rec("h2", "p1", 0, 2), rec("h1", "p1", 0, 3), rec("h1", "p2", 1, 1)]
        );
    }

    #[test]
    fn ingest_reads_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        std::fs::write(&path, "h1,p1,0,3\nh1,p2,0,1\n").unwrap();
        let records = ingest_event_log(&path).unwrap();
        assert_eq!(records.len(), 2);
        assert!(ingest_event_log(dir.path().join("missing.log")).is_err());
    }

    #[test]
    fn builds_one_by_two_matrix() {
        let events = vec![rec("h1", "p1", 0, 3), rec("h1", "p2", 0, 1)];
        let m = build_matrix(&events, 0);
        assert_eq!(m.hosts, vec!["h1"]);
        assert_eq!(m.processes, vec!["p1", "p2"]);
        assert_eq!(m.get(0, 0), 3);
        assert_eq!(m.get(0, 1), 1);
    }

    #[test]
    fn duplicate_pairs_are_summed() {
        let events = vec![rec("h1", "p1", 0, 3), rec("h1", "p1", 0, 2)];
        let m = build_matrix(&events, 0);
        assert_eq!(m.get(0, 0), 5);
    }

    #[test]
    fn other_intervals_are_filtered_out() {
        let events = vec![rec("h1", "p1", 1, 3)];
        let m = build_matrix(&events, 0);
        assert_eq!(m.n_hosts(), 0);
        assert_eq!(m.n_processes(), 0);
        assert_eq!(m.total(), 0);
    }

    #[test]
    fn roster_gives_zero_rows_and_warns_on_unseen_hosts() {
        let events = vec![rec("h1", "p1", 0, 3), rec("h9", "p1", 0, 7)];
        let roster = vec!["h1".to_string(), "h2".to_string()];
        let (m, warnings) = build_matrix_with_roster(&events, 0, &roster);
        assert_eq!(m.hosts, vec!["h1", "h2"]);
        assert_eq!(m.get(0, 0), 3);
        assert_eq!(m.get(1, 0), 0);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("h9"));
    }

    proptest! {
        // Matrix mass equals the total count of the interval's events.
        #[test]
        fn total_matches_event_counts(
            events in proptest::collection::vec(
                (0..5u8, 0..5u8, 0..3u64, 0..100u64).prop_map(|(h, p, d, c)| {
                    rec(&format!("h{h}"), &format!("p{p}"), d, c)
                }),
                0..40,
            ),
            t in 0..3u64,
        ) {
            let m = build_matrix(&events, t);
            let expected: u64 = events.iter().filter(|e| e.date == t).map(|e| e.count).sum();
            prop_assert_eq!(m.total(), expected);
        }

        // Same event multiset in any order yields an identical matrix.
        #[test]
        fn build_is_order_independent(
            events in proptest::collection::vec(
                (0..5u8, 0..5u8, 0..2u64, 0..100u64).prop_map(|(h, p, d, c)| {
                    rec(&format!("h{h}"), &format!("p{p}"), d, c)
                }),
                1..30,
            ),
            seed in 0..u64::MAX,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = events.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(build_matrix(&events, 0), build_matrix(&shuffled, 0));
        }
    }
}
