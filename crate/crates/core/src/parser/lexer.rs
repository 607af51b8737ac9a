use crate::ir::LineCol;

use super::{ParseError, ParseErrorKind};

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    /// Bare word: keywords, type names like `i32`, block labels.
    Word(String),
    /// `@name`
    Global(String),
    /// `%name`
    Local(String),
    Int(i64),
    Float(f64),
    Str(String),
    Punct(char),
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Word(w) => format!("`{w}`"),
            TokenKind::Global(g) => format!("`@{g}`"),
            TokenKind::Local(l) => format!("`%{l}`"),
            TokenKind::Int(i) => format!("integer {i}"),
            TokenKind::Float(x) => format!("float {x}"),
            TokenKind::Str(s) => format!("string {s:?}"),
            TokenKind::Punct(c) => format!("`{c}`"),
            TokenKind::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub pos: LineCol,
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$'
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! advance {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        if c == ';' {
            while i < chars.len() && chars[i] != '\n' {
                advance!();
            }
            continue;
        }
        if c.is_whitespace() {
            advance!();
            continue;
        }
        let pos = LineCol { line, col };
        let lex_err = |msg: String, at: LineCol| ParseError {
            kind: ParseErrorKind::Lex,
            pos: at,
            message: msg,
        };

        if c == '@' || c == '%' {
            advance!();
            let start = i;
            while i < chars.len() && is_name_char(chars[i]) {
                advance!();
            }
            if start == i {
                return Err(lex_err(format!("`{c}` must be followed by a name"), pos));
            }
            let name: String = chars[start..i].iter().collect();
            tokens.push(Token {
                kind: if c == '@' {
                    TokenKind::Global(name)
                } else {
                    TokenKind::Local(name)
                },
                pos,
            });
            continue;
        }

        if c == '"' {
            advance!();
            let start = i;
            while i < chars.len() && chars[i] != '"' {
                if chars[i] == '\n' {
                    return Err(lex_err("unterminated string".into(), pos));
                }
                advance!();
            }
            if i >= chars.len() {
                return Err(lex_err("unterminated string".into(), pos));
            }
            let s: String = chars[start..i].iter().collect();
            advance!();
            tokens.push(Token {
                kind: TokenKind::Str(s),
                pos,
            });
            continue;
        }

        let starts_number = c.is_ascii_digit()
            || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()));
        if starts_number {
            let start = i;
            advance!();
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance!();
            }
            let mut is_float = false;
            if i < chars.len() && chars[i] == '.' {
                is_float = true;
                advance!();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance!();
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_float = true;
                    while i < j {
                        advance!();
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        advance!();
                    }
                }
            }
            if i < chars.len() && (chars[i].is_ascii_alphabetic() || chars[i] == '_') {
                return Err(lex_err(
                    format!("unexpected `{}` in numeric literal", chars[i]),
                    LineCol { line, col },
                ));
            }
            let text: String = chars[start..i].iter().collect();
            let kind = if is_float {
                TokenKind::Float(
                    text.parse()
                        .map_err(|_| lex_err(format!("invalid float `{text}`"), pos))?,
                )
            } else {
                TokenKind::Int(
                    text.parse()
                        .map_err(|_| lex_err(format!("integer `{text}` out of range"), pos))?,
                )
            };
            tokens.push(Token { kind, pos });
            continue;
        }

        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && is_name_char(chars[i]) {
                advance!();
            }
            tokens.push(Token {
                kind: TokenKind::Word(chars[start..i].iter().collect()),
                pos,
            });
            continue;
        }

        if "=,(){}[]*:".contains(c) {
            advance!();
            tokens.push(Token {
                kind: TokenKind::Punct(c),
                pos,
            });
            continue;
        }

        return Err(lex_err(format!("unexpected character `{c}`"), pos));
    }
    tokens.push(Token {
        kind: TokenKind::Eof,
        pos: LineCol { line, col },
    });
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(s: &str) -> Vec<TokenKind> {
        tokenize(s).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn lexes_symbols_and_literals() {
        assert_eq!(
            kinds("%q = call i1 @f(double -1.5e0, i32 7) ; trailing"),
            vec![
                TokenKind::Local("q".into()),
                TokenKind::Punct('='),
                TokenKind::Word("call".into()),
                TokenKind::Word("i1".into()),
                TokenKind::Global("f".into()),
                TokenKind::Punct('('),
                TokenKind::Word("double".into()),
                TokenKind::Float(-1.5),
                TokenKind::Punct(','),
                TokenKind::Word("i32".into()),
                TokenKind::Int(7),
                TokenKind::Punct(')'),
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn positions_are_one_based() {
        let toks = tokenize("\n  %x").unwrap();
        assert_eq!(toks[0].pos, LineCol { line: 2, col: 3 });
    }

    #[test]
    fn reports_bad_characters_with_location() {
        let err = tokenize("define\n  #").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Lex);
        assert_eq!(err.pos, LineCol { line: 2, col: 3 });
    }

    #[test]
    fn unterminated_string() {
        assert!(tokenize("\"abc").is_err());
    }
}
