//! Structured response grammar and the format reward.
//!
//! A conforming response has one `<think>...</think>` block followed by one
//! `<answer>s1; s2; ...</answer>` block with five scores for images and two
//! for videos. Tags are case-sensitive; whitespace around score tokens is
//! ignored.

use std::fmt;

use thiserror::Error;

use crate::types::{TaskKind, SCORE_MAX, SCORE_MIN};

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Think,
    Answer,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Block::Think => "think",
            Block::Answer => "answer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("missing {0} block")]
    MissingBlock(Block),
    #[error("more than one {0} block")]
    DuplicateBlock(Block),
    #[error("expected {expected} scores, got {got}")]
    BadArity { expected: usize, got: usize },
    #[error("score {position} is not a decimal number: `{token}`")]
    BadNumber { position: usize, token: String },
    #[error("score {position} = {value} is outside [1, 5]")]
    OutOfRange { position: usize, value: f64 },
}

/// A response that matched its answer template.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub think_text: String,
    pub answer_scores: Vec<f64>,
    pub task_kind: TaskKind,
}

/// Locates the single `open ... close` block, returning byte offsets of the
/// content and of the end of the closing tag.
fn find_block(
    text: &str,
    open: &str,
    close: &str,
    which: Block,
) -> Result<(usize, usize, usize), FormatError> {
    let opens = text.matches(open).count();
    let closes = text.matches(close).count();
    if opens > 1 || closes > 1 {
        return Err(FormatError::DuplicateBlock(which));
    }
    let start = text.find(open).ok_or(FormatError::MissingBlock(which))?;
    let content_start = start + open.len();
    let content_len = text[content_start..].find(close).ok_or(FormatError::MissingBlock(which))?;
    let content_end = content_start + content_len;
    Ok((content_start, content_end, content_end + close.len()))
}

fn is_decimal_literal(token: &str) -> bool {
    let body = token.strip_prefix(['+', '-']).unwrap_or(token);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    match frac {
        None => !int.is_empty() && digits(int),
        Some(f) => !int.is_empty() && !f.is_empty() && digits(int) && digits(f),
    }
}

/// Parses `text` against the answer template of `task_kind`.
pub fn parse_response(text: &str, task_kind: TaskKind) -> Result<ParsedResponse, FormatError> {
    let (think_start, think_end, think_after) =
        find_block(text, THINK_OPEN, THINK_CLOSE, Block::Think)?;
    let (answer_start, answer_end, _) = find_block(text, ANSWER_OPEN, ANSWER_CLOSE, Block::Answer)?;
    // the answer must follow the reasoning
    if answer_start < think_after {
        return Err(FormatError::MissingBlock(Block::Answer));
    }

    let payload = &text[answer_start..answer_end];
    let tokens: Vec<&str> = payload.split(';').map(str::trim).collect();
    let expected = task_kind.dims();
    if tokens.len() != expected {
        return Err(FormatError::BadArity { expected, got: tokens.len() });
    }
    let mut answer_scores = Vec::with_capacity(expected);
    for (position, token) in tokens.into_iter().enumerate() {
        let value: f64 = if is_decimal_literal(token) {
            token.parse().map_err(|_| FormatError::BadNumber {
                position,
                token: token.to_string(),
            })?
        } else {
            return Err(FormatError::BadNumber { position, token: token.to_string() });
        };
        if !(SCORE_MIN..=SCORE_MAX).contains(&value) {
            return Err(FormatError::OutOfRange { position, value });
        }
        answer_scores.push(value);
    }

    Ok(ParsedResponse {
        think_text: text[think_start..think_end].to_string(),
        answer_scores,
        task_kind,
    })
}

/// Binary format reward: 1 for a conforming response, 0 otherwise.
pub fn format_reward(outcome: &Result<ParsedResponse, FormatError>) -> f64 {
    if outcome.is_ok() {
        1.0
    } else {
        0.0
    }
}

/// Renders a conforming response with scores printed at two decimals.
pub fn render_response(think: &str, scores: &[f64]) -> String {
    let answer = scores.iter().map(|s| format!("{s:.2}")).collect::<Vec<_>>().join("; ");
    format!("{THINK_OPEN}{think}{THINK_CLOSE}{ANSWER_OPEN}{answer}{ANSWER_CLOSE}")
}
