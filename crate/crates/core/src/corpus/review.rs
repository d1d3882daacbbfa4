use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

/// Who wrote a review.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Genuine,
    /// Fraud written by a paid human.
    FraudHuman,
    /// Fraud produced by software, including our own generator.
    FraudBot,
}

impl Label {
    pub fn is_fraud(self) -> bool {
        !matches!(self, Label::Genuine)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Genuine => "genuine",
            Label::FraudHuman => "fraud",
            Label::FraudBot => "fraud-bot",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genuine" => Ok(Label::Genuine),
            "fraud" | "fraud-human" => Ok(Label::FraudHuman),
            "fraud-bot" => Ok(Label::FraudBot),
            other => Err(Error::Argument(format!("unknown label `{other}`"))),
        }
    }
}

/// Rating scale of a dataset: five stars, or like/dislike.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreScale {
    /// Scores `1..=5`, five categories.
    Five,
    /// Scores `-1` (dislike) and `1` (like), two categories.
    Binary,
}

impl ScoreScale {
    pub fn categories(self) -> usize {
        match self {
            ScoreScale::Five => 5,
            ScoreScale::Binary => 2,
        }
    }

    pub fn contains(self, score: i32) -> bool {
        match self {
            ScoreScale::Five => (1..=5).contains(&score),
            ScoreScale::Binary => score == -1 || score == 1,
        }
    }

    /// Category index in `0..categories()`.
    pub fn category(self, score: i32) -> Result<usize> {
        if !self.contains(score) {
            bail!(Argument, "score {score} is not on the {self:?} scale");
        }
        Ok(match self {
            ScoreScale::Five => (score - 1) as usize,
            ScoreScale::Binary => usize::from(score == 1),
        })
    }

    pub fn score(self, category: usize) -> Result<i32> {
        if category >= self.categories() {
            bail!(
                Argument,
                "score category {category} out of range for {self:?}"
            );
        }
        Ok(match self {
            ScoreScale::Five => category as i32 + 1,
            ScoreScale::Binary => {
                if category == 1 {
                    1
                } else {
                    -1
                }
            }
        })
    }

    /// Score mapped into `[0, 1]` for use as a classifier input.
    pub fn normalized(self, category: usize) -> f64 {
        match self {
            ScoreScale::Five => category as f64 / 4.0,
            ScoreScale::Binary => category as f64,
        }
    }

    /// Low scores count as extreme: 1-3 on five stars, dislike on binary.
    pub fn is_low(self, score: i32) -> bool {
        match self {
            ScoreScale::Five => (1..=3).contains(&score),
            ScoreScale::Binary => score == -1,
        }
    }

    /// Binary when every score is `-1` or `1` and at least one is `-1`.
    pub fn infer(reviews: &[Review]) -> ScoreScale {
        let binary = reviews.iter().all(|r| r.score == -1 || r.score == 1)
            && reviews.iter().any(|r| r.score == -1);
        if binary {
            ScoreScale::Binary
        } else {
            ScoreScale::Five
        }
    }
}

impl std::str::FromStr for ScoreScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "five" | "5" => Ok(ScoreScale::Five),
            "binary" | "2" => Ok(ScoreScale::Binary),
            other => Err(Error::Config(format!("unknown score scale `{other}`"))),
        }
    }
}

/// One labeled review.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub review_id: String,
    pub item_id: Option<String>,
    pub user_id: Option<String>,
    pub date: Option<NaiveDate>,
    pub tokens: Vec<String>,
    pub score: i32,
    pub label: Label,
}

impl Review {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Lowercases, splits on whitespace and trims punctuation from both ends of
/// each token.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// One line of the canonical dataset format.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReviewRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_id: Option<String>,
    pub text: String,
    pub score: i64,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
}

impl ReviewRecord {
    /// Converts to a review; `line` names the record in error messages.
    pub fn into_review(self, line: usize) -> Result<Review> {
        let label: Label = self.label.parse()?;
        let score = i32::try_from(self.score)
            .ok()
            .filter(|&s| ScoreScale::Five.contains(s) || ScoreScale::Binary.contains(s));
        let Some(score) = score else {
            bail!(Argument, "score {} is neither 1-5 nor -1/1", self.score);
        };
        let date = match self.date {
            Some(d) => Some(
                NaiveDate::parse_from_str(&d, "%Y-%m-%d")
                    .map_err(|e| Error::Argument(format!("bad date `{d}`: {e}")))?,
            ),
            None => None,
        };
        let tokens = tokenize(&self.text);
        if tokens.is_empty() {
            bail!(Argument, "review has no tokens");
        }
        Ok(Review {
            review_id: self.review_id.unwrap_or_else(|| format!("line{line}")),
            item_id: self.item_id,
            user_id: self.user_id,
            date,
            tokens,
            score,
            label,
        })
    }
}

impl From<&Review> for ReviewRecord {
    fn from(r: &Review) -> Self {
        ReviewRecord {
            review_id: Some(r.review_id.clone()),
            text: r.text(),
            score: i64::from(r.score),
            label: r.label.as_str().to_string(),
            user_id: r.user_id.clone(),
            item_id: r.item_id.clone(),
            date: r.date.map(|d| d.format("%Y-%m-%d").to_string()),
        }
    }
}

/// Parsed corpus plus the number of reviews dropped for length.
#[derive(Clone, Debug, Default)]
pub struct LoadedCorpus {
    pub reviews: Vec<Review>,
    pub rejected: usize,
}

/// Reads a JSONL corpus. Reviews with `max_tokens` or more tokens are
/// dropped and counted, so that every kept review fits a sequence of length
/// `max_tokens` with at least one `END` pad.
pub fn load_corpus(path: &Path, max_tokens: usize) -> Result<LoadedCorpus> {
    let file = File::open(path)?;
    let mut out = LoadedCorpus::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let record: ReviewRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let review = record
            .into_review(lineno)
            .map_err(|e| parse_err(e.to_string()))?;
        if review.tokens.len() >= max_tokens {
            out.rejected += 1;
            continue;
        }
        out.reviews.push(review);
    }
    if out.reviews.is_empty() && out.rejected == 0 {
        log::warn!("{} contains no reviews", path.display());
    }
    if out.rejected > 0 {
        log::info!(
            "{}: rejected {} reviews with >= {} tokens",
            path.display(),
            out.rejected,
            max_tokens
        );
    }
    Ok(out)
}

/// Writes reviews as canonical JSONL.
pub fn write_corpus(path: &Path, reviews: &[Review]) -> Result<()> {
    let mut w = std::io::BufWriter::new(File::create(path)?);
    for r in reviews {
        serde_json::to_writer(&mut w, &ReviewRecord::from(r))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
