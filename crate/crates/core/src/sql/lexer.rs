//! Tokenizer for the query dialect.
//!
//! Keywords and identifiers are case-insensitive; identifiers are
//! normalized to lower case. `--` starts a comment that runs to the end of
//! the line. Every token carries the 1-based line and column where it
//! starts, which the parser threads into error messages.

use super::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    // Keywords.
    With,
    As,
    Select,
    From,
    Where,
    Group,
    By,
    Union,
    All,
    Update,
    Computed,
    Maxrecursion,
    Over,
    Partition,
    And,
    // Punctuation and operators.
    LParen,
    RParen,
    Comma,
    Dot,
    Star,
    Plus,
    Minus,
    Slash,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Semi,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(v) => write!(f, "`{v}`"),
            Tok::Real(v) => write!(f, "`{v:?}`"),
            Tok::With => write!(f, "`with`"),
            Tok::As => write!(f, "`as`"),
            Tok::Select => write!(f, "`select`"),
            Tok::From => write!(f, "`from`"),
            Tok::Where => write!(f, "`where`"),
            Tok::Group => write!(f, "`group`"),
            Tok::By => write!(f, "`by`"),
            Tok::Union => write!(f, "`union`"),
            Tok::All => write!(f, "`all`"),
            Tok::Update => write!(f, "`update`"),
            Tok::Computed => write!(f, "`computed`"),
            Tok::Maxrecursion => write!(f, "`maxrecursion`"),
            Tok::Over => write!(f, "`over`"),
            Tok::Partition => write!(f, "`partition`"),
            Tok::And => write!(f, "`and`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Slash => write!(f, "`/`"),
            Tok::Eq => write!(f, "`=`"),
            Tok::Ne => write!(f, "`<>`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Le => write!(f, "`<=`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::Ge => write!(f, "`>=`"),
            Tok::Semi => write!(f, "`;`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "with" => Tok::With,
        "as" => Tok::As,
        "select" => Tok::Select,
        "from" => Tok::From,
        "where" => Tok::Where,
        "group" => Tok::Group,
        "by" => Tok::By,
        "union" => Tok::Union,
        "all" => Tok::All,
        "update" => Tok::Update,
        "computed" => Tok::Computed,
        "maxrecursion" => Tok::Maxrecursion,
        "over" => Tok::Over,
        "partition" => Tok::Partition,
        "and" => Tok::And,
        _ => return None,
    })
}

pub fn lex(source: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut column = 1;

    let advance = |i: &mut usize, line: &mut usize, column: &mut usize| {
        if chars[*i] == '\n' {
            *line += 1;
            *column = 1;
        } else {
            *column += 1;
        }
        *i += 1;
    };

    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, column);

        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut column);
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut column);
            }
            continue;
        }

        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance(&mut i, &mut line, &mut column);
            }
            let word: String = chars[start..i].iter().collect::<String>().to_lowercase();
            tokens.push(Token {
                tok: keyword(&word).unwrap_or(Tok::Ident(word)),
                line: tline,
                column: tcol,
            });
            continue;
        }

        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance(&mut i, &mut line, &mut column);
            }
            let mut is_real = false;
            // A dot makes a real only when digits follow, so ranges like
            // `1..2` would not silently parse; the dialect has no such
            // form, but the rule keeps `x.1` a clean error.
            if i < chars.len()
                && chars[i] == '.'
                && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())
            {
                is_real = true;
                advance(&mut i, &mut line, &mut column);
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(&mut i, &mut line, &mut column);
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if chars.get(j) == Some(&'+') || chars.get(j) == Some(&'-') {
                    j += 1;
                }
                if chars.get(j).is_some_and(|d| d.is_ascii_digit()) {
                    is_real = true;
                    while i < j {
                        advance(&mut i, &mut line, &mut column);
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        advance(&mut i, &mut line, &mut column);
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let tok = if is_real {
                Tok::Real(text.parse::<f64>().map_err(|_| {
                    SyntaxError::new(format!("bad numeric literal `{text}`"), tline, tcol)
                })?)
            } else {
                Tok::Int(text.parse::<i64>().map_err(|_| {
                    SyntaxError::new(
                        format!("integer literal `{text}` out of range"),
                        tline,
                        tcol,
                    )
                })?)
            };
            tokens.push(Token { tok, line: tline, column: tcol });
            continue;
        }

        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            '.' => Tok::Dot,
            '*' => Tok::Star,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '/' => Tok::Slash,
            '=' => Tok::Eq,
            ';' => Tok::Semi,
            '<' => {
                advance(&mut i, &mut line, &mut column);
                let two = match chars.get(i) {
                    Some('=') => Some(Tok::Le),
                    Some('>') => Some(Tok::Ne),
                    _ => None,
                };
                if let Some(t) = two {
                    advance(&mut i, &mut line, &mut column);
                    tokens.push(Token { tok: t, line: tline, column: tcol });
                } else {
                    tokens.push(Token { tok: Tok::Lt, line: tline, column: tcol });
                }
                continue;
            }
            '>' => {
                advance(&mut i, &mut line, &mut column);
                if chars.get(i) == Some(&'=') {
                    advance(&mut i, &mut line, &mut column);
                    tokens.push(Token { tok: Tok::Ge, line: tline, column: tcol });
                } else {
                    tokens.push(Token { tok: Tok::Gt, line: tline, column: tcol });
                }
                continue;
            }
            other => {
                return Err(SyntaxError::new(
                    format!("unexpected character `{other}`"),
                    tline,
                    tcol,
                ))
            }
        };
        advance(&mut i, &mut line, &mut column);
        tokens.push(Token { tok, line: tline, column: tcol });
    }
    Ok(tokens)
}
