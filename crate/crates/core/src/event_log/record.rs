use std::fmt::Write as _;

use super::EventLogError;

/// One timestamped instrumentation event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    /// Microseconds since the Unix epoch.
    pub ts_us: u64,
    pub host: String,
    pub program: String,
    pub tag: String,
    pub frame: u32,
    /// Worker index, or -1 for events not tied to a worker.
    pub worker: i32,
    pub extra: Vec<(String, String)>,
}

impl EventRecord {
    pub fn extra(&self, key: &str) -> Option<&str> {
        self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// `ts=<us> host=<h> prog=<p> tag=<t> frame=<n> worker=<w> [k=v]...`
    /// without the trailing newline.
    pub fn to_line(&self) -> String {
        let mut s = format!(
            "ts={} host={} prog={} tag={} frame={} worker={}",
            self.ts_us,
            escape(&self.host),
            escape(&self.program),
            escape(&self.tag),
            self.frame,
            self.worker
        );
        for (k, v) in &self.extra {
            let _ = write!(s, " {}={}", escape(k), escape(v));
        }
        s
    }

    pub fn parse_line(line: &str) -> Result<Self, EventLogError> {
        let bad = |why: &str| EventLogError::Parse {
            line: line.to_string(),
            reason: why.to_string(),
        };
        let mut ts = None;
        let mut host = None;
        let mut program = None;
        let mut tag = None;
        let mut frame = None;
        let mut worker = None;
        let mut extra = Vec::new();
        for tok in line.split_ascii_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| bad("token without '='"))?;
            let v = unescape(v).ok_or_else(|| bad("bad escape"))?;
            match k {
                "ts" => ts = Some(v.parse::<u64>().map_err(|_| bad("ts"))?),
                "host" => host = Some(v),
                "prog" => program = Some(v),
                "tag" => tag = Some(v),
                "frame" => frame = Some(v.parse::<u32>().map_err(|_| bad("frame"))?),
                "worker" => worker = Some(v.parse::<i32>().map_err(|_| bad("worker"))?),
                _ => extra.push((unescape(k).ok_or_else(|| bad("bad escape"))?, v)),
            }
        }
        let tag = tag.ok_or_else(|| bad("missing tag"))?;
        if tag.is_empty() {
            return Err(bad("empty tag"));
        }
        Ok(EventRecord {
            ts_us: ts.ok_or_else(|| bad("missing ts"))?,
            host: host.ok_or_else(|| bad("missing host"))?,
            program: program.ok_or_else(|| bad("missing prog"))?,
            tag,
            frame: frame.ok_or_else(|| bad("missing frame"))?,
            worker: worker.ok_or_else(|| bad("missing worker"))?,
            extra,
        })
    }
}

fn needs_escape(c: char) -> bool {
    c == '%' || c == '=' || c.is_whitespace() || c.is_control()
}

/// Percent-escapes characters that would break `key=value` tokenization.
pub fn escape(s: &str) -> String {
    if !s.chars().any(needs_escape) && !s.is_empty() {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len() + 8);
    for c in s.chars() {
        if needs_escape(c) {
            let mut buf = [0u8; 4];
            for b in c.encode_utf8(&mut buf).bytes() {
                let _ = write!(out, "%{b:02X}");
            }
        } else {
            out.push(c);
        }
    }
    out
}

pub fn unescape(s: &str) -> Option<String> {
    if !s.contains('%') {
        return Some(s.to_string());
    }
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

/// Parses a whole log, skipping blank lines.
pub fn parse_log(text: &str) -> Result<Vec<EventRecord>, EventLogError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(EventRecord::parse_line)
        .collect()
}

pub fn read_log(path: &std::path::Path) -> Result<Vec<EventRecord>, EventLogError> {
    parse_log(&std::fs::read_to_string(path)?)
}

pub fn write_log(path: &std::path::Path, records: &[EventRecord]) -> Result<(), EventLogError> {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_line());
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Merges several logs (collector output plus local spools) into one
/// sequence ordered by timestamp; ties keep input order.
pub fn merge_logs(logs: impl IntoIterator<Item = Vec<EventRecord>>) -> Vec<EventRecord> {
    let mut all: Vec<EventRecord> = logs.into_iter().flatten().collect();
    all.sort_by_key(|r| r.ts_us);
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn line_format() {
        let r = EventRecord {
            ts_us: 12,
            host: "h1".into(),
            program: "backend".into(),
            tag: "BE_LOAD_START".into(),
            frame: 3,
            worker: -1,
            extra: vec![("bytes".into(), "64".into())],
        };
        assert_eq!(
            r.to_line(),
            "ts=12 host=h1 prog=backend tag=BE_LOAD_START frame=3 worker=-1 bytes=64"
        );
        assert_eq!(EventRecord::parse_line(&r.to_line()).unwrap(), r);
    }

    #[test]
    fn parse_errors() {
        assert!(EventRecord::parse_line("ts=1 host=a prog=b frame=0 worker=0").is_err());
        assert!(EventRecord::parse_line("ts=x host=a prog=b tag=T frame=0 worker=0").is_err());
        assert!(EventRecord::parse_line("garbage").is_err());
        assert!(EventRecord::parse_line("ts=1 host=a prog=b tag= frame=0 worker=0").is_err());
    }

    fn text() -> impl Strategy<Value = String> {
        proptest::string::string_regex("[a-zA-Z0-9 =%_\\-\\t\u{e9}\u{4e2d}]{0,12}").unwrap()
    }

    fn record() -> impl Strategy<Value = EventRecord> {
        (
            any::<u64>(),
            text(),
            text(),
            text().prop_filter("tag non-empty", |t| !t.is_empty()),
            any::<u32>(),
            -1i32..64,
            proptest::collection::vec(
                (
                    proptest::string::string_regex("[a-z][a-z0-9_]{0,6}").unwrap().prop_filter(
                        "not reserved",
                        |k| !["ts", "host", "prog", "tag", "frame", "worker"].contains(&k.as_str()),
                    ),
                    text(),
                ),
                0..4,
            ),
        )
            .prop_map(|(ts_us, host, program, tag, frame, worker, extra)| EventRecord {
                ts_us,
                host,
                program,
                tag,
                frame,
                worker,
                extra,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn serialize_parse_round_trip(records in proptest::collection::vec(record(), 1000)) {
            let text: String = records.iter().map(|r| r.to_line() + "\n").collect();
            prop_assert_eq!(parse_log(&text).unwrap(), records);
        }
    }
}
