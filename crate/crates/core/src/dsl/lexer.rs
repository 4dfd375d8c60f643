//! Splits one source line into indentation and tokens.

use super::{DiagCode, ParseDiagnostic, SourceSpan};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TokenKind {
    /// Unquoted run: keyword, identifier or number.
    Word(String),
    Str(String),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub span: SourceSpan,
}

impl Token {
    pub fn describe(&self) -> String {
        match &self.kind {
            TokenKind::Word(w) => format!("`{w}`"),
            TokenKind::Str(_) => "a string".to_string(),
        }
    }
}

#[derive(Debug)]
pub(crate) struct Line {
    pub number: usize,
    /// Count of leading spaces.
    pub indent: usize,
    pub tokens: Vec<Token>,
    /// Character length of the line without its terminator.
    pub len: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')
}

/// Tokenizes one line. Comments and trailing CR are dropped. Returns `None`
/// when the line has a lexical error, which is pushed onto `diags`.
pub(crate) fn lex_line(number: usize, raw: &str, diags: &mut Vec<ParseDiagnostic>) -> Option<Line> {
    let raw = raw.strip_suffix('\r').unwrap_or(raw);
    let chars: Vec<char> = raw.chars().collect();
    let span_at = |col0: usize, len: usize| SourceSpan::new(number, col0 + 1, len);

    let mut pos = 0;
    while pos < chars.len() && chars[pos] == ' ' {
        pos += 1;
    }
    let indent = pos;
    if pos < chars.len() && chars[pos] == '\t' {
        diags.push(ParseDiagnostic::error(
            DiagCode::BadIndent,
            "tabs are not allowed for indentation; use two spaces per level",
            span_at(pos, 1),
        ));
        return None;
    }

    let mut tokens = Vec::new();
    while pos < chars.len() {
        let c = chars[pos];
        if c == ' ' || c == '\t' {
            pos += 1;
        } else if c == '#' {
            break;
        } else if c == '"' {
            let start = pos;
            pos += 1;
            let mut value = String::new();
            let mut closed = false;
            while pos < chars.len() {
                match chars[pos] {
                    '"' => {
                        closed = true;
                        pos += 1;
                        break;
                    }
                    '\\' => {
                        match chars.get(pos + 1) {
                            Some('"') => value.push('"'),
                            Some('\\') => value.push('\\'),
                            Some(other) => {
                                diags.push(ParseDiagnostic::error(
                                    DiagCode::BadEscape,
                                    format!("unsupported escape `\\{other}`; only \\\" and \\\\ are allowed"),
                                    span_at(pos, 2),
                                ));
                                return None;
                            }
                            None => break,
                        }
                        pos += 2;
                    }
                    ch => {
                        value.push(ch);
                        pos += 1;
                    }
                }
            }
            if !closed {
                diags.push(ParseDiagnostic::error(
                    DiagCode::UnterminatedString,
                    "string is not closed before the end of the line",
                    span_at(start, chars.len() - start),
                ));
                return None;
            }
            tokens.push(Token {
                kind: TokenKind::Str(value),
                span: span_at(start, pos - start),
            });
        } else if is_word_char(c) {
            let start = pos;
            while pos < chars.len() && is_word_char(chars[pos]) {
                pos += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Word(chars[start..pos].iter().collect()),
                span: span_at(start, pos - start),
            });
        } else {
            diags.push(ParseDiagnostic::error(
                DiagCode::BadToken,
                format!("unexpected character {c:?}"),
                span_at(pos, 1),
            ));
            return None;
        }
    }

    Some(Line {
        number,
        indent,
        tokens,
        len: chars.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(s: &str) -> (Option<Line>, Vec<ParseDiagnostic>) {
        let mut d = Vec::new();
        let l = lex_line(1, s, &mut d);
        (l, d)
    }

    #[test]
    fn words_strings_and_comments() {
        let (line, d) = lex(r#"  indicator a-b "x \"y\" \\ # z" weight 0.5 # trailing"#);
        assert!(d.is_empty());
        let line = line.unwrap();
        assert_eq!(line.indent, 2);
        let kinds: Vec<_> = line.tokens.iter().map(|t| t.kind.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                TokenKind::Word("indicator".into()),
                TokenKind::Word("a-b".into()),
                TokenKind::Str(r#"x "y" \ # z"#.into()),
                TokenKind::Word("weight".into()),
                TokenKind::Word("0.5".into()),
            ]
        );
        assert_eq!(line.tokens[1].span, SourceSpan::new(1, 13, 3));
    }

    #[test]
    fn carriage_return_is_tolerated() {
        let (line, d) = lex("category mastery \"M\"\r");
        assert!(d.is_empty());
        assert_eq!(line.unwrap().tokens.len(), 3);
    }

    #[test]
    fn lexical_errors() {
        let (_, d) = lex("scale \"abc");
        assert_eq!(d[0].code, DiagCode::UnterminatedString);
        assert_eq!(d[0].span.column, 7);
        let (_, d) = lex("scale \"a\\nb\"");
        assert_eq!(d[0].code, DiagCode::BadEscape);
        assert_eq!(d[0].span.column, 9);
        let (_, d) = lex("scale @");
        assert_eq!(d[0].code, DiagCode::BadToken);
        let (_, d) = lex("\tindicator");
        assert_eq!(d[0].code, DiagCode::BadIndent);
    }

    #[test]
    fn columns_count_characters_not_bytes() {
        let (line, _) = lex("\"é\" x");
        assert_eq!(line.unwrap().tokens[1].span.column, 5);
    }
}
