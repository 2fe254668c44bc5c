use std::fmt;

use super::error::{DocError, Span};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(u64),
    Float(f64),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Plus,
    Minus,
    Star,
    At,
    Le,
    Ge,
    EqEq,
    Assign,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(v) => write!(f, "`{v}`"),
            Tok::Float(v) => write!(f, "`{v}`"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::Eof => f.write_str("end of input"),
            other => write!(f, "`{}`", other.symbol()),
        }
    }
}

impl Tok {
    fn symbol(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::At => "@",
            Tok::Le => "<=",
            Tok::Ge => ">=",
            Tok::EqEq => "==",
            Tok::Assign => "=",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

/// Split `src` into tokens. `#` starts a comment that runs to the end of the line.
pub fn tokenize(src: &str) -> Result<Vec<Token>, DocError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let start = (line, col);
        let span = |len: usize| Span::new(start.0, start.1, len);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let two = chars.get(i + 1).copied();
        let (tok, len) = match c {
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            '[' => (Tok::LBracket, 1),
            ']' => (Tok::RBracket, 1),
            ',' => (Tok::Comma, 1),
            ';' => (Tok::Semi, 1),
            '+' => (Tok::Plus, 1),
            '-' | '\u{2212}' => (Tok::Minus, 1),
            '*' => (Tok::Star, 1),
            '@' => (Tok::At, 1),
            '<' if two == Some('=') => (Tok::Le, 2),
            '>' if two == Some('=') => (Tok::Ge, 2),
            '=' if two == Some('=') => (Tok::EqEq, 2),
            '=' => (Tok::Assign, 1),
            '"' => {
                let mut j = i + 1;
                let mut text = String::new();
                while j < chars.len() && chars[j] != '"' {
                    if chars[j] == '\n' {
                        return Err(DocError::lex(span(j - i), "unterminated string"));
                    }
                    text.push(chars[j]);
                    j += 1;
                }
                if j == chars.len() {
                    return Err(DocError::lex(span(j - i), "unterminated string"));
                }
                (Tok::Str(text), j + 1 - i)
            }
            c if c.is_ascii_digit() || (c == '.' && two.is_some_and(|d| d.is_ascii_digit())) => {
                let len = number_len(&chars[i..]);
                let text: String = chars[i..i + len].iter().collect();
                let tok = if text.bytes().all(|b| b.is_ascii_digit()) {
                    text.parse()
                        .map(Tok::Int)
                        .map_err(|_| DocError::lex(span(len), "integer literal out of range"))?
                } else {
                    text.parse()
                        .map(Tok::Float)
                        .map_err(|_| DocError::lex(span(len), format!("malformed number `{text}`")))?
                };
                (tok, len)
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                (Tok::Ident(chars[i..j].iter().collect()), j - i)
            }
            other => return Err(DocError::lex(span(1), format!("unexpected character `{other}`"))),
        };
        out.push(Token { tok, span: span(len) });
        i += len;
        col += len;
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(line, col, 0),
    });
    Ok(out)
}

fn number_len(s: &[char]) -> usize {
    let mut j = 0;
    let digits = |j: &mut usize| {
        while *j < s.len() && s[*j].is_ascii_digit() {
            *j += 1;
        }
    };
    digits(&mut j);
    if j < s.len() && s[j] == '.' {
        j += 1;
        digits(&mut j);
    }
    if j < s.len() && (s[j] == 'e' || s[j] == 'E') {
        let mut k = j + 1;
        if k < s.len() && (s[k] == '+' || s[k] == '-') {
            k += 1;
        }
        if k < s.len() && s[k].is_ascii_digit() {
            j = k;
            digits(&mut j);
        }
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn numbers_and_operators() {
        assert_eq!(
            kinds("x <= 2.5e-3 @ 4 # tail"),
            vec![
                Tok::Ident("x".into()),
                Tok::Le,
                Tok::Float(2.5e-3),
                Tok::At,
                Tok::Int(4),
                Tok::Eof
            ]
        );
        assert_eq!(kinds("1e"), vec![Tok::Int(1), Tok::Ident("e".into()), Tok::Eof]);
    }

    #[test]
    fn spans_track_lines() {
        let toks = tokenize("var x(2)\n  minimize x").unwrap();
        let min = &toks[5];
        assert_eq!(min.tok, Tok::Ident("minimize".into()));
        assert_eq!(min.span, Span::new(2, 3, 8));
    }

    #[test]
    fn rejects_stray_characters() {
        let err = tokenize("x $ y").unwrap_err();
        assert_eq!(err.span, Span::new(1, 3, 1));
    }
}
