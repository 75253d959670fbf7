//! Line-oriented text formats: pitch files, score CSVs, metric reports and
//! flat `key=value` configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::ScoreSet;
use crate::pitch::PitchSequence;

pub const PITCH_HEADER: &str = "dpf0 v1";
pub const SCORE_HEADER: &str = "label,score";

/// Lines with the byte offset at which each starts.
fn lines_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n').map(move |raw| {
        let start = offset;
        offset += raw.len();
        (start, raw.trim_end_matches(['\n', '\r']))
    })
}

fn expect_header(format: &'static str, text: &str, header: &str) -> Result<usize> {
    let first = text.lines().next().unwrap_or("");
    if first.trim_end_matches('\r') != header {
        return Err(Error::parse(format, 0, format!("header {header:?}"), format!("{first:?}")));
    }
    Ok(text.find('\n').map_or(text.len(), |i| i + 1))
}

pub fn encode_pitch(pitch: &PitchSequence) -> String {
    let mut out = String::with_capacity(8 + 8 * pitch.len());
    out.push_str(PITCH_HEADER);
    out.push('\n');
    for v in pitch.values() {
        out.push_str(&format!("{v}\n"));
    }
    out
}

pub fn decode_pitch(text: &str) -> Result<PitchSequence> {
    let body = expect_header("dpf0", text, PITCH_HEADER)?;
    let mut values = Vec::new();
    for (offset, line) in lines_with_offsets(&text[body..]) {
        let offset = offset + body;
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|_| Error::parse("dpf0", offset, "a decimal pitch value", format!("{line:?}")))?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::parse("dpf0", offset, "a finite non-negative value", v));
        }
        values.push(v);
    }
    PitchSequence::new(values)
}

pub fn encode_scores(scores: &ScoreSet) -> String {
    let mut out = format!("{SCORE_HEADER}\n");
    for s in &scores.mated {
        out.push_str(&format!("mated,{s}\n"));
    }
    for s in &scores.nonmated {
        out.push_str(&format!("nonmated,{s}\n"));
    }
    out
}

pub fn decode_scores(text: &str) -> Result<ScoreSet> {
    let body = expect_header("score csv", text, SCORE_HEADER)?;
    let mut scores = ScoreSet::default();
    for (offset, line) in lines_with_offsets(&text[body..]) {
        let offset = offset + body;
        if line.trim().is_empty() {
            continue;
        }
        let (label, value) = line
            .split_once(',')
            .ok_or_else(|| Error::parse("score csv", offset, "label,score", format!("{line:?}")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::parse("score csv", offset, "a decimal score", format!("{value:?}")))?;
        match label.trim() {
            "mated" => scores.mated.push(value),
            "nonmated" => scores.nonmated.push(value),
            other => return Err(Error::parse("score csv", offset, "mated or nonmated", format!("{other:?}"))),
        }
    }
    Ok(scores)
}

/// Parses flat `key=value` text. `#` starts a comment; blank lines are skipped.
pub fn parse_key_values(format: &'static str, text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (offset, line) in lines_with_offsets(text) {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::parse(format, offset, "key=value", format!("{content:?}")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::parse(format, offset, "a non-empty key", format!("{content:?}")));
        }
        if out.insert(key.to_owned(), value.trim().to_owned()).is_some() {
            return Err(Error::parse(format, offset, "each key once", format!("duplicate key {key:?}")));
        }
    }
    Ok(out)
}

/// Flat configuration file contents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(Self {
            entries: parse_key_values("config", text)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    /// Typed lookup; a present but malformed value is an error.
    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::InvalidArgument(format!("config key {key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Privacy and utility figures of one evaluation run. Absent entries are
/// simply not written.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricReport {
    /// Identification error, percent.
    pub p_asi: Option<f64>,
    /// Verification equal error rate, percent.
    pub p_asv_eer: Option<f64>,
    /// Verification unlinkability in [0, 1].
    pub p_asv_unlinkability: Option<f64>,
    /// `100 - WER`, percent.
    pub u_asr: Option<f64>,
    pub pitch_correlation: Option<f64>,
}

const REPORT_KEYS: [&str; 5] = ["p_asi", "p_asv_eer", "p_asv_unlinkability", "u_asr", "pitch_correlation"];

impl MetricReport {
    fn fields(&self) -> [Option<f64>; 5] {
        [
            self.p_asi,
            self.p_asv_eer,
            self.p_asv_unlinkability,
            self.u_asr,
            self.pitch_correlation,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [(0.0, 100.0), (0.0, 50.0), (0.0, 1.0), (f64::NEG_INFINITY, 100.0), (-1.0, 1.0)];
        for ((key, value), (lo, hi)) in REPORT_KEYS.iter().zip(self.fields()).zip(ranges) {
            if let Some(v) = value {
                if !(v >= lo && v <= hi) {
                    return Err(Error::InvalidArgument(format!("{key}={v} outside [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (key, value) in REPORT_KEYS.iter().zip(self.fields()) {
            if let Some(v) = value {
                writeln!(f, "{key}={v}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for MetricReport {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let entries = parse_key_values("metric report", text)?;
        let mut report = MetricReport::default();
        for (key, value) in entries {
            let v: f64 = value
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("metric {key}: cannot parse {value:?}")))?;
            let slot = match key.as_str() {
                "p_asi" => &mut report.p_asi,
                "p_asv_eer" => &mut report.p_asv_eer,
                "p_asv_unlinkability" => &mut report.p_asv_unlinkability,
                "u_asr" => &mut report.u_asr,
                "pitch_correlation" => &mut report.pitch_correlation,
                other => return Err(Error::InvalidArgument(format!("unknown metric {other:?}"))),
            };
            *slot = Some(v);
        }
        report.validate()?;
        Ok(report)
    }
}

/// Whitespace-separated words of a transcript file.
pub fn read_words(path: &Path) -> Result<Vec<String>> {
    Ok(std::fs::read_to_string(path)?
        .split_whitespace()
        .map(str::to_owned)
        .collect())
}

pub fn write_pitch(path: &Path, pitch: &PitchSequence) -> Result<()> {
    Ok(std::fs::write(path, encode_pitch(pitch))?)
}

pub fn read_pitch(path: &Path) -> Result<PitchSequence> {
    decode_pitch(&std::fs::read_to_string(path)?)
}

pub fn write_scores(path: &Path, scores: &ScoreSet) -> Result<()> {
    Ok(std::fs::write(path, encode_scores(scores))?)
}

pub fn read_scores(path: &Path) -> Result<ScoreSet> {
    decode_scores(&std::fs::read_to_string(path)?)
}
