use crate::formula::{Diagnostic, DiagnosticKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Sort,
    Const,
    Event,
    Static,
    Fact,
    Def,
    Policy,
    Not,
    And,
    Or,
    Implies,
    Prev,
    Since,
    Once,
    Earlier,
    Exists,
    Forall,
    True,
    False,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Assign,
    Dot,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(n) => format!("integer `{n}`"),
            Tok::Eof => "end of input".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Assign => "`:=`".into(),
            Tok::Dot => "`.`".into(),
            other => format!("`{}`", keyword_text(other)),
        }
    }
}

fn keyword_text(t: &Tok) -> &'static str {
    match t {
        Tok::Sort => "sort",
        Tok::Const => "const",
        Tok::Event => "event",
        Tok::Static => "static",
        Tok::Fact => "fact",
        Tok::Def => "def",
        Tok::Policy => "policy",
        Tok::Not => "not",
        Tok::And => "and",
        Tok::Or => "or",
        Tok::Implies => "implies",
        Tok::Prev => "prev",
        Tok::Since => "since",
        Tok::Once => "once",
        Tok::Earlier => "earlier",
        Tok::Exists => "exists",
        Tok::Forall => "forall",
        Tok::True => "true",
        Tok::False => "false",
        _ => "",
    }
}

fn keyword(s: &str) -> Option<Tok> {
    Some(match s {
        "sort" => Tok::Sort,
        "const" => Tok::Const,
        "event" => Tok::Event,
        "static" => Tok::Static,
        "fact" => Tok::Fact,
        "def" => Tok::Def,
        "policy" => Tok::Policy,
        "not" => Tok::Not,
        "and" => Tok::And,
        "or" => Tok::Or,
        "implies" => Tok::Implies,
        "prev" => Tok::Prev,
        "since" => Tok::Since,
        "once" => Tok::Once,
        "earlier" => Tok::Earlier,
        "exists" => Tok::Exists,
        "forall" => Tok::Forall,
        "true" => Tok::True,
        "false" => Tok::False,
        _ => return None,
    })
}

/// A token with its 1-based source position.
pub type Spanned = (Tok, u32, u32);

pub fn lex(src: &str) -> Result<Vec<Spanned>, Diagnostic> {
    let mut out = Vec::new();
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '(' | ')' | '[' | ']' | ',' | '.' => {
                chars.next();
                col += 1;
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    _ => Tok::Dot,
                };
                out.push((tok, tline, tcol));
            }
            ':' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'=') {
                    chars.next();
                    col += 1;
                    out.push((Tok::Assign, tline, tcol));
                } else {
                    out.push((Tok::Colon, tline, tcol));
                }
            }
            c if c.is_ascii_digit() => {
                let mut text = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        text.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                match text.parse::<i64>() {
                    Ok(n) => out.push((Tok::Int(n), tline, tcol)),
                    Err(_) => {
                        return Err(Diagnostic::new(
                            DiagnosticKind::Syntax,
                            "lexer",
                            format!("integer literal `{text}` out of range"),
                        )
                        .at(tline, tcol))
                    }
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut text = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        text.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let tok = keyword(&text).unwrap_or(Tok::Ident(text));
                out.push((tok, tline, tcol));
            }
            other => {
                return Err(Diagnostic::new(
                    DiagnosticKind::Syntax,
                    "lexer",
                    format!("unexpected character `{other}`"),
                )
                .at(tline, tcol))
            }
        }
    }
    out.push((Tok::Eof, line, col));
    Ok(out)
}
