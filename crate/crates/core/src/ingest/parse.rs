use std::io::BufRead;

use serde::Deserialize;

use super::{IngestError, InteractionRecord};

/// Column layout of a delimited interaction file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnFormat {
    pub delimiter: char,
    /// Exact number of fields every data line must have.
    pub columns: usize,
    pub user: usize,
    pub item: usize,
    pub rating: usize,
    pub timestamp: usize,
    pub review: Option<usize>,
    pub summary: Option<usize>,
    pub explanation: Option<usize>,
    pub feature: Option<usize>,
    pub has_header: bool,
}

impl Default for ColumnFormat {
    fn default() -> Self {
        Self {
            delimiter: '\t',
            columns: 4,
            user: 0,
            item: 1,
            rating: 2,
            timestamp: 3,
            review: None,
            summary: None,
            explanation: None,
            feature: None,
            has_header: false,
        }
    }
}

impl ColumnFormat {
    /// Builds a layout from a comma-separated column order such as
    /// `user,item,rating,timestamp,review`. Unknown names become ignored columns.
    pub fn from_order(order: &str, delimiter: char) -> Result<Self, IngestError> {
        let mut fmt = ColumnFormat {
            delimiter,
            columns: 0,
            user: usize::MAX,
            item: usize::MAX,
            rating: usize::MAX,
            timestamp: usize::MAX,
            ..Default::default()
        };
        for (pos, name) in order.split(',').map(str::trim).enumerate() {
            match name {
                "user" => fmt.user = pos,
                "item" => fmt.item = pos,
                "rating" => fmt.rating = pos,
                "timestamp" => fmt.timestamp = pos,
                "review" => fmt.review = Some(pos),
                "summary" => fmt.summary = Some(pos),
                "explanation" => fmt.explanation = Some(pos),
                "feature" => fmt.feature = Some(pos),
                _ => {}
            }
            fmt.columns = pos + 1;
        }
        for (name, pos) in [
            ("user", fmt.user),
            ("item", fmt.item),
            ("rating", fmt.rating),
            ("timestamp", fmt.timestamp),
        ] {
            if pos == usize::MAX {
                return Err(IngestError::Format(format!("column order lacks `{name}`")));
            }
        }
        Ok(fmt)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InputFormat {
    Delimited(ColumnFormat),
    /// One JSON object per line with keys user, item, rating, timestamp and
    /// optionally review, summary, explanation, feature.
    JsonLines,
}

impl Default for InputFormat {
    fn default() -> Self {
        InputFormat::Delimited(ColumnFormat::default())
    }
}

/// Accepts integral ratings 1..=5, including the `5.0` spelling common in
/// review dumps.
fn parse_rating(raw: &str) -> Option<u8> {
    let raw = raw.trim();
    let value = match raw.parse::<i64>() {
        Ok(v) => v,
        Err(_) => {
            let f: f64 = raw.parse().ok()?;
            if !f.is_finite() || f.fract() != 0.0 {
                return None;
            }
            f as i64
        }
    };
    (1..=5).contains(&value).then_some(value as u8)
}

fn check_rating(line: usize, raw: &str) -> Result<u8, IngestError> {
    parse_rating(raw).ok_or_else(|| IngestError::Rejected {
        line,
        reason: format!("rating `{raw}` is not an integer in 1..=5"),
    })
}

fn check_keys(line: usize, rec: &InteractionRecord) -> Result<(), IngestError> {
    if rec.user_key.is_empty() || rec.item_key.is_empty() {
        return Err(IngestError::Rejected {
            line,
            reason: "empty user or item key".into(),
        });
    }
    Ok(())
}

#[derive(Deserialize)]
struct JsonRecord {
    user: serde_json::Value,
    item: serde_json::Value,
    rating: serde_json::Value,
    timestamp: i64,
    review: Option<String>,
    summary: Option<String>,
    explanation: Option<String>,
    feature: Option<String>,
}

fn json_key(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses line-delimited interactions. Blank lines are skipped; the first
/// malformed or rejected line aborts with its 1-based line number.
pub fn parse_interactions<R: BufRead>(
    source: R,
    format: &InputFormat,
) -> Result<Vec<InteractionRecord>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let rec = match format {
            InputFormat::Delimited(fmt) => {
                if fmt.has_header && line_no == 1 {
                    continue;
                }
                parse_delimited(line_no, line, fmt)?
            }
            InputFormat::JsonLines => parse_json(line_no, line)?,
        };
        check_keys(line_no, &rec)?;
        out.push(rec);
    }
    Ok(out)
}

fn parse_delimited(
    line_no: usize,
    line: &str,
    fmt: &ColumnFormat,
) -> Result<InteractionRecord, IngestError> {
    let fields: Vec<&str> = line.split(fmt.delimiter).collect();
    if fields.len() != fmt.columns {
        return Err(IngestError::Malformed {
            line: line_no,
            expected: fmt.columns,
            found: fields.len(),
        });
    }
    let rating = check_rating(line_no, fields[fmt.rating])?;
    let timestamp = fields[fmt.timestamp]
        .trim()
        .parse::<i64>()
        .map_err(|_| IngestError::Rejected {
            line: line_no,
            reason: format!("timestamp `{}` is not an integer", fields[fmt.timestamp]),
        })?;
    let opt = |col: Option<usize>| col.map(|c| fields[c].to_string()).filter(|s| !s.is_empty());
    Ok(InteractionRecord {
        user_key: fields[fmt.user].trim().to_string(),
        item_key: fields[fmt.item].trim().to_string(),
        rating,
        timestamp,
        review_text: opt(fmt.review),
        summary: opt(fmt.summary),
        explanation: opt(fmt.explanation),
        feature_word: opt(fmt.feature),
    })
}

fn parse_json(line_no: usize, line: &str) -> Result<InteractionRecord, IngestError> {
    let raw: JsonRecord = serde_json::from_str(line).map_err(|e| IngestError::Rejected {
        line: line_no,
        reason: e.to_string(),
    })?;
    let rating_text = match &raw.rating {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    Ok(InteractionRecord {
        user_key: json_key(&raw.user),
        item_key: json_key(&raw.item),
        rating: check_rating(line_no, &rating_text)?,
        timestamp: raw.timestamp,
        review_text: raw.review,
        summary: raw.summary,
        explanation: raw.explanation,
        feature_word: raw.feature,
    })
}
