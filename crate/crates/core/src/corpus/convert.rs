//! Conversion of external CSV layouts into canonical review records.
//!
//! Two shapes are supported, matched by header name (case-insensitive):
//!
//! * `yelp`: `review_id`, `item_id` (or `prod_id`), `user_id`, `date`,
//!   `rating`, `label`, `text`. Labels `-1`, `Y`, `fraud` mark fraud;
//!   `1`, `N`, `genuine` mark genuine reviews.
//! * `tripadvisor`: `text`, `polarity` (`positive`/`like`/`1` or
//!   `negative`/`dislike`/`-1`), `deceptive` (`deceptive`/`truthful`), and an
//!   optional `hotel` column used as the item id. There are no users.

use std::io::Read;

use super::review::ReviewRecord;
use crate::error::{bail, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsvLayout {
    Yelp,
    TripAdvisor,
}

impl std::str::FromStr for CsvLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "yelp" => Ok(CsvLayout::Yelp),
            "tripadvisor" => Ok(CsvLayout::TripAdvisor),
            other => Err(Error::Argument(format!("unknown CSV layout `{other}`"))),
        }
    }
}

struct Columns(Vec<String>);

impl Columns {
    fn find(&self, names: &[&str]) -> Option<usize> {
        self.0
            .iter()
            .position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
    }

    fn require(&self, names: &[&str]) -> Result<usize> {
        self.find(names)
            .ok_or_else(|| Error::Format(format!("missing column `{}`", names[0])))
    }
}

fn yelp_label(v: &str) -> Option<&'static str> {
    match v.trim().to_ascii_lowercase().as_str() {
        "-1" | "y" | "fraud" | "spam" => Some("fraud"),
        "1" | "n" | "genuine" => Some("genuine"),
        _ => None,
    }
}

fn trip_polarity(v: &str) -> Option<i64> {
    match v.trim().to_ascii_lowercase().as_str() {
        "positive" | "like" | "1" => Some(1),
        "negative" | "dislike" | "-1" => Some(-1),
        _ => None,
    }
}

fn trip_label(v: &str) -> Option<&'static str> {
    match v.trim().to_ascii_lowercase().as_str() {
        "deceptive" | "fraud" => Some("fraud"),
        "truthful" | "genuine" => Some("genuine"),
        _ => None,
    }
}

/// Parses CSV input into canonical records.
pub fn convert_csv<R: Read>(input: R, layout: CsvLayout) -> Result<Vec<ReviewRecord>> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(input);
    let cols = Columns(reader.headers()?.iter().map(|s| s.trim().to_string()).collect());
    let mut out = Vec::new();
    match layout {
        CsvLayout::Yelp => {
            let id = cols.require(&["review_id"])?;
            let item = cols.find(&["item_id", "prod_id"]);
            let user = cols.require(&["user_id"])?;
            let date = cols.find(&["date"]);
            let rating = cols.require(&["rating", "score"])?;
            let label = cols.require(&["label"])?;
            let text = cols.require(&["text"])?;
            for (row, rec) in reader.records().enumerate() {
                let rec = rec?;
                let line = row + 2;
                let score: i64 = rec[rating]
                    .trim()
                    .parse::<f64>()
                    .map(|v| v.round() as i64)
                    .map_err(|_| Error::Format(format!("line {line}: bad rating `{}`", &rec[rating])))?;
                let Some(lab) = yelp_label(&rec[label]) else {
                    bail!(Format, "line {line}: unknown label `{}`", &rec[label]);
                };
                out.push(ReviewRecord {
                    review_id: Some(rec[id].to_string()),
                    text: rec[text].to_string(),
                    score,
                    label: lab.to_string(),
                    user_id: Some(rec[user].to_string()),
                    item_id: item.map(|i| rec[i].to_string()),
                    date: date.map(|d| rec[d].trim().to_string()).filter(|d| !d.is_empty()),
                });
            }
        }
        CsvLayout::TripAdvisor => {
            let text = cols.require(&["text"])?;
            let polarity = cols.require(&["polarity"])?;
            let deceptive = cols.require(&["deceptive", "label"])?;
            let hotel = cols.find(&["hotel", "item_id"]);
            for (row, rec) in reader.records().enumerate() {
                let rec = rec?;
                let line = row + 2;
                let Some(score) = trip_polarity(&rec[polarity]) else {
                    bail!(Format, "line {line}: unknown polarity `{}`", &rec[polarity]);
                };
                let Some(lab) = trip_label(&rec[deceptive]) else {
                    bail!(Format, "line {line}: unknown label `{}`", &rec[deceptive]);
                };
                out.push(ReviewRecord {
                    review_id: Some(format!("t{}", row + 1)),
                    text: rec[text].to_string(),
                    score,
                    label: lab.to_string(),
                    user_id: None,
                    item_id: hotel.map(|h| rec[h].to_string()),
                    date: None,
                });
            }
        }
    }
    Ok(out)
}
