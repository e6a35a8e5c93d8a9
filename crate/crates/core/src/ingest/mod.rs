//! Comment archives, base-36 IDs, baseline ID sampling and ban windows.
//!
//! Archives are newline-delimited JSON, one comment per line, with the
//! fields `id`, `author`, `subreddit`, `body` and `created_utc`. Lines that
//! do not match the schema are skipped and counted; submission records
//! (a `title` without a `body`) are skipped and counted separately.

mod id;
pub mod remote;

use std::borrow::Borrow;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::{Error, Result};

pub use id::{decode_base36, encode_base36, sample_id_range};

/// Author name the archive reports for accounts deleted before ingestion.
pub const DELETED_AUTHOR: &str = "[deleted]";

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    pub author: String,
    #[serde(rename = "subreddit")]
    pub community: String,
    pub body: String,
    #[serde(deserialize_with = "epoch_seconds")]
    pub created_utc: i64,
}

impl Comment {
    pub fn numeric_id(&self) -> Result<u64> {
        decode_base36(&self.id)
    }

    pub fn is_deleted(&self) -> bool {
        self.author == DELETED_AUTHOR
    }
}

// Some dumps store the timestamp as a string or as a float.
fn epoch_seconds<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<i64, D::Error> {
    use serde::de::Error as _;
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Float(f64),
        Text(String),
    }
    match Raw::deserialize(de)? {
        Raw::Int(v) => Ok(v),
        Raw::Float(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        Raw::Float(v) => Err(D::Error::custom(format!("non-integral timestamp {v}"))),
        Raw::Text(s) => s.trim().parse().map_err(D::Error::custom),
    }
}

/// Ban instant plus the user-window and corpus-window lengths in days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub ban_time: i64,
    pub days_before: u32,
    pub days_after: u32,
    pub corpus_days_before: u32,
}

impl TimeWindow {
    pub fn new(ban_time: i64, days_before: u32, days_after: u32, corpus_days_before: u32) -> Result<Self> {
        if days_before == 0 || days_after == 0 || corpus_days_before == 0 {
            return Err(Error::invalid("window day counts must be strictly positive"));
        }
        Ok(TimeWindow { ban_time, days_before, days_after, corpus_days_before })
    }

    /// 60/60 day user windows and a 182 day corpus window.
    pub fn with_defaults(ban_time: i64) -> Self {
        TimeWindow { ban_time, days_before: 60, days_after: 60, corpus_days_before: 182 }
    }

    pub fn pre_range(&self) -> Range<i64> {
        self.ban_time - self.days_before as i64 * SECONDS_PER_DAY..self.ban_time
    }

    pub fn post_range(&self) -> Range<i64> {
        self.ban_time..self.ban_time + self.days_after as i64 * SECONDS_PER_DAY
    }

    pub fn corpus_range(&self) -> Range<i64> {
        self.ban_time - self.corpus_days_before as i64 * SECONDS_PER_DAY..self.ban_time
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSplit<C> {
    pub pre: Vec<C>,
    pub post: Vec<C>,
    pub dropped: usize,
}

/// Partition comments into the half-open pre-ban and post-ban windows. The
/// ban instant itself belongs to the post window.
pub fn window_split<C, I>(comments: I, window: &TimeWindow) -> WindowSplit<C>
where
    C: Borrow<Comment>,
    I: IntoIterator<Item = C>,
{
    let pre_range = window.pre_range();
    let post_range = window.post_range();
    let mut split = WindowSplit { pre: Vec::new(), post: Vec::new(), dropped: 0 };
    for c in comments {
        let t = c.borrow().created_utc;
        if pre_range.contains(&t) {
            split.pre.push(c);
        } else if post_range.contains(&t) {
            split.post.push(c);
        } else {
            split.dropped += 1;
        }
    }
    split
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedArchive {
    pub comments: Vec<Comment>,
    pub malformed: usize,
    pub submissions: usize,
}

impl ParsedArchive {
    fn absorb(&mut self, other: ParsedArchive) {
        self.comments.extend(other.comments);
        self.malformed += other.malformed;
        self.submissions += other.submissions;
    }
}

enum Record {
    Comment(Comment),
    Submission,
    Malformed,
}

fn classify(line: &str) -> Record {
    let value: serde_json::Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(_) => return Record::Malformed,
    };
    if let Some(obj) = value.as_object() {
        if obj.contains_key("title") && !obj.contains_key("body") {
            return Record::Submission;
        }
    }
    match serde_json::from_value::<Comment>(value) {
        Ok(c) if !c.author.is_empty() && decode_base36(&c.id).is_ok() => Record::Comment(c),
        _ => Record::Malformed,
    }
}

/// Streaming reader over an archive. I/O failures are yielded as errors;
/// schema violations are counted in [`ArchiveReader::malformed`].
pub struct ArchiveReader<R> {
    inner: R,
    line: String,
    malformed: usize,
    submissions: usize,
}

impl<R: BufRead> ArchiveReader<R> {
    pub fn new(inner: R) -> Self {
        ArchiveReader { inner, line: String::new(), malformed: 0, submissions: 0 }
    }

    pub fn malformed(&self) -> usize {
        self.malformed
    }

    pub fn submissions(&self) -> usize {
        self.submissions
    }
}

impl<R: BufRead> Iterator for ArchiveReader<R> {
    type Item = Result<Comment>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line.clear();
            match self.inner.read_line(&mut self.line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            let trimmed = self.line.trim();
            if trimmed.is_empty() {
                continue;
            }
            match classify(trimmed) {
                Record::Comment(c) => return Some(Ok(c)),
                Record::Submission => self.submissions += 1,
                Record::Malformed => self.malformed += 1,
            }
        }
    }
}

pub fn parse_archive<R: BufRead>(stream: R) -> Result<ParsedArchive> {
    let mut reader = ArchiveReader::new(stream);
    let comments = reader.by_ref().collect::<Result<Vec<_>>>()?;
    Ok(ParsedArchive { comments, malformed: reader.malformed(), submissions: reader.submissions() })
}

pub fn read_archive_file(path: &Path) -> Result<ParsedArchive> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    parse_archive(BufReader::new(file)).map_err(|e| match e {
        Error::Io(io) => Error::file(path, io),
        other => other,
    })
}

/// Parse several archive shards, one reader thread per shard, concatenating
/// the results in the order the paths were given.
pub fn read_archive_shards(paths: &[PathBuf]) -> Result<ParsedArchive> {
    let parts: Vec<Result<ParsedArchive>> = std::thread::scope(|scope| {
        let handles: Vec<_> = paths
            .iter()
            .map(|p| scope.spawn(move || read_archive_file(p)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("archive reader thread panicked"))
            .collect()
    });
    let mut merged = ParsedArchive::default();
    for part in parts {
        merged.absorb(part?);
    }
    Ok(merged)
}

pub fn write_archive<'a, W, I>(mut out: W, comments: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Comment>,
{
    for c in comments {
        serde_json::to_writer(&mut out, c)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn comment(id: &str, t: i64) -> Comment {
        Comment {
            id: id.into(),
            author: "u".into(),
            community: "c".into(),
            body: "hello".into(),
            created_utc: t,
        }
    }

    #[test]
    fn empty_stream() {
        let p = parse_archive("".as_bytes()).unwrap();
        assert!(p.comments.is_empty());
        assert_eq!(p.malformed, 0);
    }

    #[test]
    fn truncated_line_is_counted() {
        let data = concat!(
            r#"{"id":"a1","author":"x","subreddit":"s","body":"one","created_utc":1}"#, "\n",
            r#"{"id":"a2","author":"y","subreddit":"s","body":"two","created_utc":"2"}"#, "\n",
            r#"{"id":"a3","author":"z","subreddit":"s","body":"three","created_utc":3.0}"#, "\n",
            r#"{"id":"a4","author":"w","subreddit":"s","bo"#, "\n",
        );
        let p = parse_archive(data.as_bytes()).unwrap();
        assert_eq!(p.comments.len(), 3);
        assert_eq!(p.malformed, 1);
        assert_eq!(p.comments[1].created_utc, 2);
    }

    #[test]
    fn schema_violations_and_submissions() {
        let data = concat!(
            r#"{"id":"A1","author":"x","subreddit":"s","body":"bad id","created_utc":1}"#, "\n",
            r#"{"id":"a1","author":"","subreddit":"s","body":"no author","created_utc":1}"#, "\n",
            r#"{"id":"a1","author":"x","subreddit":"s","created_utc":1}"#, "\n",
            r#"{"id":"b9","author":"x","subreddit":"s","title":"a post","selftext":"","created_utc":1}"#, "\n",
            "\n",
            r#"{"id":"a1","author":"[deleted]","subreddit":"s","body":"[removed]","created_utc":1,"score":3}"#, "\n",
        );
        let p = parse_archive(data.as_bytes()).unwrap();
        assert_eq!(p.malformed, 3);
        assert_eq!(p.submissions, 1);
        assert_eq!(p.comments.len(), 1);
        assert!(p.comments[0].is_deleted());
    }

    #[test]
    fn window_boundaries() {
        let w = TimeWindow::with_defaults(1_000_000_000);
        let comments = vec![
            comment("1", w.ban_time),
            comment("2", w.ban_time - 1),
            comment("3", w.ban_time + 60 * SECONDS_PER_DAY),
            comment("4", w.ban_time - 60 * SECONDS_PER_DAY),
            comment("5", w.ban_time - 60 * SECONDS_PER_DAY - 1),
        ];
        let s = window_split(&comments, &w);
        let ids = |v: &Vec<&Comment>| v.iter().map(|c| c.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&s.post), vec!["1"]);
        assert_eq!(ids(&s.pre), vec!["2", "4"]);
        assert_eq!(s.dropped, 2);
    }

    #[test]
    fn window_rejects_zero_days() {
        assert!(TimeWindow::new(0, 0, 60, 182).is_err());
        assert!(TimeWindow::new(0, 60, 60, 182).is_ok());
    }

    #[test]
    fn archive_roundtrip() {
        let comments = vec![comment("a", 5), comment("b", 6)];
        let mut buf = Vec::new();
        write_archive(&mut buf, &comments).unwrap();
        let back = parse_archive(buf.as_slice()).unwrap();
        assert_eq!(back.comments, comments);
    }

    proptest! {
        #[test]
        fn window_split_partitions(times in proptest::collection::vec(-200i64..200, 0..60), ban in -50i64..50) {
            let w = TimeWindow { ban_time: ban * SECONDS_PER_DAY, days_before: 60, days_after: 60, corpus_days_before: 182 };
            let comments: Vec<Comment> = times.iter().enumerate()
                .map(|(i, d)| comment(&encode_base36(i as u64), d * SECONDS_PER_DAY / 2))
                .collect();
            let s = window_split(&comments, &w);
            prop_assert_eq!(s.pre.len() + s.post.len() + s.dropped, comments.len());
            for c in &s.pre {
                prop_assert!(!s.post.iter().any(|o| o.id == c.id));
                prop_assert!(c.created_utc < w.ban_time);
            }
            for c in &s.post {
                prop_assert!(c.created_utc >= w.ban_time);
            }
        }
    }
}
