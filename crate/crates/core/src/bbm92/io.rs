//! Plain-text time-tag files.
//!
//! ```text
//! # qnet-timetags v1
//! # acquisition_s=1
//! node,detector,timestamp_ps
//! A,0,50123
//! B,1,50877
//! ```
//!
//! Rows are sorted by timestamp. The `acquisition_s` comment and the column
//! header are optional when reading; without the former, the acquisition time
//! is taken as the last timestamp.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::events::SimTime;
use crate::optics::{Party, TimeTag};

use super::protocol::TimeTagStream;

pub const TIMETAG_MAGIC: &str = "# qnet-timetags v1";
pub const TIMETAG_COLUMNS: &str = "node,detector,timestamp_ps";

/// Writes both streams merged into one time-ordered file.
pub fn write_timetags<W: Write>(
    mut out: W,
    alice: &TimeTagStream,
    bob: &TimeTagStream,
) -> Result<()> {
    writeln!(out, "{TIMETAG_MAGIC}")?;
    writeln!(
        out,
        "# acquisition_s={}",
        alice.acquisition_s.max(bob.acquisition_s)
    )?;
    writeln!(out, "{TIMETAG_COLUMNS}")?;
    let mut merged: Vec<&TimeTag> = alice.tags.iter().chain(&bob.tags).collect();
    merged.sort_by_key(|t| (t.timestamp, t.node.code(), t.detector));
    for tag in merged {
        writeln!(
            out,
            "{},{},{}",
            tag.node.code(),
            tag.detector,
            tag.timestamp.as_ps()
        )?;
    }
    out.flush()?;
    Ok(())
}

fn format_error(line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        message: message.into(),
    }
}

/// Reads a file written by [`write_timetags`] back into Alice's and Bob's streams.
pub fn read_timetags<R: BufRead>(input: R) -> Result<(TimeTagStream, TimeTagStream)> {
    let mut alice = Vec::new();
    let mut bob = Vec::new();
    let mut acquisition_s = None;
    let mut last = 0u64;
    let mut saw_magic = false;
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim();
        if !saw_magic {
            if text != TIMETAG_MAGIC {
                return Err(format_error(line_no, format!("expected `{TIMETAG_MAGIC}`")));
            }
            saw_magic = true;
            continue;
        }
        if text.is_empty() || text == TIMETAG_COLUMNS {
            continue;
        }
        if let Some(comment) = text.strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix("acquisition_s=") {
                let v: f64 = value.trim().parse().map_err(|_| {
                    format_error(line_no, format!("bad acquisition time `{value}`"))
                })?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(format_error(
                        line_no,
                        "acquisition time must be finite and non-negative",
                    ));
                }
                acquisition_s = Some(v);
            }
            continue;
        }
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        let [node, detector, timestamp] = fields[..] else {
            return Err(format_error(
                line_no,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        };
        let node = match node {
            "A" => Party::Alice,
            "B" => Party::Bob,
            other => return Err(format_error(line_no, format!("unknown node `{other}`"))),
        };
        let detector: u8 = detector.parse().ok().filter(|d| *d < 4).ok_or_else(|| {
            format_error(
                line_no,
                format!("detector must be 0..3, found `{detector}`"),
            )
        })?;
        let timestamp: u64 = timestamp
            .parse()
            .map_err(|_| format_error(line_no, format!("bad timestamp `{timestamp}`")))?;
        if timestamp < last {
            return Err(format_error(line_no, "rows are not sorted by timestamp"));
        }
        last = timestamp;
        let tag = TimeTag {
            node,
            detector,
            timestamp: SimTime(timestamp),
        };
        match node {
            Party::Alice => alice.push(tag),
            Party::Bob => bob.push(tag),
        }
    }
    if !saw_magic {
        return Err(format_error(1, "empty file"));
    }
    let acquisition_s = acquisition_s.unwrap_or(SimTime(last).as_secs_f64());
    Ok((
        TimeTagStream::new(Party::Alice, alice, acquisition_s),
        TimeTagStream::new(Party::Bob, bob, acquisition_s),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (TimeTagStream, TimeTagStream) {
        let tag = |node, detector, t| TimeTag {
            node,
            detector,
            timestamp: SimTime(t),
        };
        (
            TimeTagStream::new(
                Party::Alice,
                vec![tag(Party::Alice, 0, 10), tag(Party::Alice, 3, 500)],
                0.5,
            ),
            TimeTagStream::new(
                Party::Bob,
                vec![tag(Party::Bob, 1, 12), tag(Party::Bob, 2, 499)],
                0.5,
            ),
        )
    }

    #[test]
    fn round_trip() {
        let (a, b) = sample();
        let mut buf = Vec::new();
        write_timetags(&mut buf, &a, &b).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# qnet-timetags v1\n"));
        let (ra, rb) = read_timetags(buf.as_slice()).unwrap();
        assert_eq!(ra, a);
        assert_eq!(rb, b);
    }

    #[test]
    fn minimal_file_without_optional_lines() {
        let (a, b) = read_timetags("# qnet-timetags v1\nA,0,5\nB,3,1000000\n".as_bytes()).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(b.tags[0].detector, 3);
        assert_eq!(a.acquisition_s, 1e-6);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("A,0,5\n", 1),
            ("# qnet-timetags v1\nA,0,5\nC,0,6\n", 3),
            ("# qnet-timetags v1\nA,4,5\n", 2),
            ("# qnet-timetags v1\nA,0,-5\n", 2),
            ("# qnet-timetags v1\nA,0,5\nB,0,4\n", 3),
            ("# qnet-timetags v1\nA,0\n", 2),
            ("", 1),
        ];
        for (text, line) in cases {
            match read_timetags(text.as_bytes()) {
                Err(Error::Format { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }
}
