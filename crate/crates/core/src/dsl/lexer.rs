use super::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    LParen,
    RParen,
    Comma,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte offset of the first character.
    pub offset: usize,
    pub len: usize,
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, SyntaxError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let c = bytes[pos];
        if c.is_ascii_whitespace() {
            pos += 1;
            continue;
        }
        let start = pos;
        let kind = match c {
            b'+' => TokenKind::Plus,
            b'-' => TokenKind::Minus,
            b'*' => TokenKind::Star,
            b'/' => TokenKind::Slash,
            b'(' => TokenKind::LParen,
            b')' => TokenKind::RParen,
            b',' => TokenKind::Comma,
            b'<' | b'>' => {
                let with_eq = bytes.get(pos + 1) == Some(&b'=');
                if with_eq {
                    pos += 1;
                }
                match (c, with_eq) {
                    (b'<', false) => TokenKind::Lt,
                    (b'<', true) => TokenKind::Le,
                    (_, false) => TokenKind::Gt,
                    (_, true) => TokenKind::Ge,
                }
            }
            b'=' => {
                if bytes.get(pos + 1) == Some(&b'=') {
                    pos += 1;
                    TokenKind::EqEq
                } else {
                    return Err(SyntaxError::new(start, "expected '==' (assignment is not supported)"));
                }
            }
            b'0'..=b'9' | b'.' => {
                let end = scan_number(bytes, pos);
                let text = &source[pos..end];
                let value: f64 = text
                    .parse()
                    .map_err(|_| SyntaxError::new(start, format!("malformed number '{text}'")))?;
                if !value.is_finite() {
                    return Err(SyntaxError::new(start, format!("number '{text}' is not finite")));
                }
                pos = end - 1;
                TokenKind::Number(value)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut end = pos;
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                    end += 1;
                }
                let name = source[pos..end].to_string();
                pos = end - 1;
                TokenKind::Ident(name)
            }
            _ => {
                let ch = source[pos..].chars().next().unwrap_or('?');
                return Err(SyntaxError::new(start, format!("unexpected character '{ch}'")));
            }
        };
        pos += 1;
        tokens.push(Token {
            kind,
            offset: start,
            len: pos - start,
        });
    }
    tokens.push(Token {
        kind: TokenKind::Eof,
        offset: source.len(),
        len: 0,
    });
    Ok(tokens)
}

/// Digits, optional fraction, optional exponent (`1e-3`, `2.5E+4`).
fn scan_number(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() && (bytes[pos].is_ascii_digit() || bytes[pos] == b'.') {
        pos += 1;
    }
    if pos < bytes.len() && (bytes[pos] == b'e' || bytes[pos] == b'E') {
        let mut look = pos + 1;
        if look < bytes.len() && (bytes[look] == b'+' || bytes[look] == b'-') {
            look += 1;
        }
        if look < bytes.len() && bytes[look].is_ascii_digit() {
            pos = look;
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
        }
    }
    pos
}
