//! Rating-file readers.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const MOVIELENS_HEADER: &str = "userId,movieId,rating,timestamp";

/// One rating as read from disk, before ID remapping.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: i64,
}

impl RawRecord {
    pub fn new(user: impl Into<String>, item: impl Into<String>, rating: f64, timestamp: i64) -> Self {
        RawRecord {
            user: user.into(),
            item: item.into(),
            rating,
            timestamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// `userId,movieId,rating,timestamp` with that exact header line.
    MovielensCsv,
    /// `user<TAB>item<TAB>rating<TAB>timestamp`, no header.
    TsvQuad,
    /// Directory of per-item files: an `ItemID:` line followed by `user,rating,date` lines.
    NetflixDir,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens-csv" => Ok(InputFormat::MovielensCsv),
            "tsv-quad" => Ok(InputFormat::TsvQuad),
            "netflix-dir" => Ok(InputFormat::NetflixDir),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputFormat::MovielensCsv => "movielens-csv",
            InputFormat::TsvQuad => "tsv-quad",
            InputFormat::NetflixDir => "netflix-dir",
        })
    }
}

pub fn parse_ratings(path: &Path, format: InputFormat) -> Result<Vec<RawRecord>> {
    match format {
        InputFormat::MovielensCsv => {
            let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
            parse_movielens(&text, path)
        }
        InputFormat::TsvQuad => {
            let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
            parse_tsv_quad(&text, path)
        }
        InputFormat::NetflixDir => parse_netflix_dir(path),
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn field<'a>(
    fields: &mut impl Iterator<Item = &'a str>,
    name: &str,
    path: &Path,
    line: usize,
) -> Result<&'a str> {
    match fields.next().map(str::trim) {
        Some(f) if !f.is_empty() => Ok(f),
        _ => Err(parse_err(path, line, format!("missing {name} field"))),
    }
}

fn number<T: FromStr>(s: &str, name: &str, path: &Path, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(path, line, format!("invalid {name} `{s}`")))
}

pub(crate) fn parse_movielens(text: &str, path: &Path) -> Result<Vec<RawRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == MOVIELENS_HEADER => {}
        Some((_, header)) => {
            return Err(parse_err(
                path,
                1,
                format!("expected header `{MOVIELENS_HEADER}`, found `{header}`"),
            ))
        }
        None => return Err(parse_err(path, 1, "missing header line")),
    }
    let mut out = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let user = field(&mut fields, "userId", path, line_no)?;
        let item = field(&mut fields, "movieId", path, line_no)?;
        let rating = number(field(&mut fields, "rating", path, line_no)?, "rating", path, line_no)?;
        let ts = number(
            field(&mut fields, "timestamp", path, line_no)?,
            "timestamp",
            path,
            line_no,
        )?;
        if fields.next().is_some() {
            return Err(parse_err(path, line_no, "expected exactly four fields"));
        }
        out.push(RawRecord::new(user, item, rating, ts));
    }
    Ok(out)
}

pub(crate) fn parse_tsv_quad(text: &str, path: &Path) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let rating = number(fields[2].trim(), "rating", path, line_no)?;
        let ts = number(fields[3].trim(), "timestamp", path, line_no)?;
        out.push(RawRecord::new(fields[0].trim(), fields[1].trim(), rating, ts));
    }
    Ok(out)
}

fn date_to_unix(s: &str) -> Option<i64> {
    let date = NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()?;
    Some(date.and_hms_opt(0, 0, 0)?.and_utc().timestamp())
}

pub(crate) fn parse_netflix_file(text: &str, path: &Path) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    let mut item: Option<&str> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(id) = line.strip_suffix(':') {
            if id.is_empty() || id.contains(',') {
                return Err(parse_err(path, line_no, "malformed item header"));
            }
            item = Some(id);
            continue;
        }
        let Some(current) = item else {
            return Err(parse_err(path, line_no, "rating line before any `ItemID:` header"));
        };
        let mut fields = line.split(',');
        let user = field(&mut fields, "user", path, line_no)?;
        let rating = number(field(&mut fields, "rating", path, line_no)?, "rating", path, line_no)?;
        let date = field(&mut fields, "date", path, line_no)?;
        let ts = date_to_unix(date)
            .ok_or_else(|| parse_err(path, line_no, format!("invalid date `{date}`")))?;
        if fields.next().is_some() {
            return Err(parse_err(path, line_no, "expected exactly three fields"));
        }
        out.push(RawRecord::new(user, current, rating, ts));
    }
    Ok(out)
}

fn parse_netflix_dir(dir: &Path) -> Result<Vec<RawRecord>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::file(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    // Files parse independently; concatenation follows the sorted file order.
    let parts: Vec<Vec<RawRecord>> = files
        .par_iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::file(p, e))?;
            parse_netflix_file(&text, p)
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}
