//! Lexical statement segmentation for Java, Python and line-oriented code.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize_code, TokenSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Java,
    Python,
    Generic,
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "java" => Ok(Language::Java),
            "python" | "py" => Ok(Language::Python),
            "generic" => Ok(Language::Generic),
            other => Err(Error::Config(format!("unknown language {other:?}"))),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::Java => "java",
            Language::Python => "python",
            Language::Generic => "generic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub text: String,
    pub tokens: TokenSequence,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentedSnippet {
    pub language: Language,
    pub statements: Vec<Statement>,
    pub full_tokens: TokenSequence,
}

impl SegmentedSnippet {
    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }
}

pub fn segment(code: &str, language: Language) -> Result<SegmentedSnippet> {
    let fragments = match language {
        Language::Java => split_java(code),
        Language::Python => split_python(code),
        Language::Generic => code.lines().map(str::to_owned).collect(),
    };
    let statements: Vec<Statement> = fragments
        .into_iter()
        .map(|f| f.trim().to_owned())
        .filter(|f| !f.is_empty())
        .enumerate()
        .map(|(position, text)| Statement {
            tokens: tokenize_code(&text),
            text,
            position,
        })
        .collect();
    if statements.is_empty() {
        return Err(Error::EmptySnippet);
    }
    Ok(SegmentedSnippet {
        language,
        statements,
        full_tokens: tokenize_code(code),
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum JavaState {
    Code,
    Str,
    Char,
    LineComment,
    BlockComment,
}

/// Splits after every `;`, `{` or `}` at parenthesis depth zero, skipping
/// string/char literals and comments.
fn split_java(code: &str) -> Vec<String> {
    let chars: Vec<char> = code.chars().collect();
    let mut out = Vec::new();
    let mut current = String::new();
    let mut state = JavaState::Code;
    let mut parens = 0usize;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        current.push(c);
        match state {
            JavaState::Code => match c {
                '"' => state = JavaState::Str,
                '\'' => state = JavaState::Char,
                '/' if next == Some('/') => {
                    current.push('/');
                    i += 1;
                    state = JavaState::LineComment;
                }
                '/' if next == Some('*') => {
                    current.push('*');
                    i += 1;
                    state = JavaState::BlockComment;
                }
                '(' | '[' => parens += 1,
                ')' | ']' => parens = parens.saturating_sub(1),
                ';' | '{' | '}' if parens == 0 => out.push(std::mem::take(&mut current)),
                _ => {}
            },
            JavaState::Str | JavaState::Char => {
                let quote = if state == JavaState::Str { '"' } else { '\'' };
                if c == '\\' {
                    if let Some(n) = next {
                        current.push(n);
                        i += 1;
                    }
                } else if c == quote || c == '\n' {
                    state = JavaState::Code;
                }
            }
            JavaState::LineComment => {
                if c == '\n' {
                    state = JavaState::Code;
                }
            }
            JavaState::BlockComment => {
                if c == '*' && next == Some('/') {
                    current.push('/');
                    i += 1;
                    state = JavaState::Code;
                }
            }
        }
        i += 1;
    }
    out.push(current);
    out
}

/// Merges physical lines into logical lines: continuation while brackets are
/// open, a string literal spans lines, or the line ends in a backslash.
fn split_python(code: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut depth = 0usize;
    // Open string delimiter: (quote char, triple-quoted).
    let mut open_str: Option<(char, bool)> = None;

    for line in code.lines() {
        if !current.is_empty() {
            current.push('\n');
        }
        current.push_str(line);

        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            match open_str {
                Some((q, triple)) => {
                    if c == '\\' {
                        i += 1;
                    } else if c == q {
                        if !triple {
                            open_str = None;
                        } else if chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q) {
                            open_str = None;
                            i += 2;
                        }
                    }
                }
                None => match c {
                    '#' => break,
                    '\'' | '"' => {
                        let triple = chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c);
                        if triple {
                            i += 2;
                        }
                        open_str = Some((c, triple));
                    }
                    '(' | '[' | '{' => depth += 1,
                    ')' | ']' | '}' => depth = depth.saturating_sub(1),
                    _ => {}
                },
            }
            i += 1;
        }
        // Unterminated single-quoted strings end at the line break.
        if matches!(open_str, Some((_, false))) {
            open_str = None;
        }

        let continued = line.trim_end().ends_with('\\') && open_str.is_none();
        if depth == 0 && open_str.is_none() && !continued {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}
