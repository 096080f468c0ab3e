use std::str::FromStr;

use crate::error::{Error, Result};

/// A whitespace-delimited token with its 1-based column.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Token<'a> {
    pub text: &'a str,
    pub column: usize,
}

/// A non-empty line with comments stripped.
#[derive(Debug, Clone)]
pub(crate) struct Line<'a> {
    pub number: usize,
    pub tokens: Vec<Token<'a>>,
    /// End column of the content, for errors about missing fields.
    pub end: usize,
}

impl<'a> Line<'a> {
    pub fn keyword(&self) -> &'a str {
        self.tokens[0].text
    }

    pub fn error(&self, column: usize, message: impl Into<String>) -> Error {
        Error::parse(self.number, column, message)
    }

    /// Checks the field count, not counting the keyword.
    pub fn expect_fields(&self, n: usize, usage: &str) -> Result<()> {
        let got = self.tokens.len() - 1;
        if got < n {
            return Err(self.error(self.end + 1, format!("missing field, expected `{usage}`")));
        }
        if got > n {
            return Err(self.error(
                self.tokens[n + 1].column,
                format!("unexpected field, expected `{usage}`"),
            ));
        }
        Ok(())
    }

    pub fn field<T: FromStr>(&self, i: usize, what: &str) -> Result<T> {
        let tok = self.tokens[i];
        tok.text
            .parse()
            .map_err(|_| self.error(tok.column, format!("invalid {what} `{}`", tok.text)))
    }

    /// An index field checked against `bound`.
    pub fn index(&self, i: usize, what: &str, bound: usize) -> Result<usize> {
        let v: usize = self.field(i, what)?;
        if v >= bound {
            return Err(self.error(
                self.tokens[i].column,
                format!("{what} {v} out of range (declared {bound})"),
            ));
        }
        Ok(v)
    }

    pub fn column(&self, i: usize) -> usize {
        self.tokens[i].column
    }
}

pub(crate) fn lines(text: &str) -> Vec<Line<'_>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let content = raw.split('#').next().unwrap_or("");
            let mut tokens = Vec::new();
            let mut start = None;
            let mut col = 0;
            let mut start_col = 0;
            for (byte, ch) in content.char_indices() {
                col += 1;
                match (ch.is_whitespace(), start) {
                    (false, None) => {
                        start = Some(byte);
                        start_col = col;
                    }
                    (true, Some(b)) => {
                        tokens.push(Token {
                            text: &content[b..byte],
                            column: start_col,
                        });
                        start = None;
                    }
                    _ => {}
                }
            }
            if let Some(b) = start {
                tokens.push(Token {
                    text: &content[b..],
                    column: start_col,
                });
            }
            let end = content.trim_end().chars().count();
            (!tokens.is_empty()).then_some(Line {
                number: i + 1,
                tokens,
                end,
            })
        })
        .collect()
}

/// Reads the `keyword N` count declarations that precede a body.
pub(crate) fn header_count(line: Option<&Line<'_>>, keyword: &str) -> Result<usize> {
    let line = line.ok_or_else(|| Error::parse(0, 0, format!("missing `{keyword} N` declaration")))?;
    if line.keyword() != keyword {
        return Err(line.error(
            line.column(0),
            format!("expected `{keyword} N`, found `{}`", line.keyword()),
        ));
    }
    line.expect_fields(1, &format!("{keyword} N"))?;
    let n: usize = line.field(1, "count")?;
    Ok(n)
}
