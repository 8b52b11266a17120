use super::ast::Span;
use super::ParseError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// Numeric literal: (size, value, original text).
    Number(Option<u32>, u128, String),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

// Longest symbols first so greedy matching works.
const SYMBOLS: &[&str] = &[
    "<<<", ">>>", "===", "!==", "~&", "~|", "~^", "^~", "&&", "||", "==", "!=", "<=", ">=", "<<",
    ">>", "+:", "-:", "(", ")", "[", "]", "{", "}", ";", ",", ":", "?", "@", "#", ".", "=", "+",
    "-", "*", "/", "%", "&", "|", "^", "~", "!", "<", ">", "$",
];

pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut line_start = 0usize;

    let span_at = |start: usize, end: usize, line: u32, line_start: usize| Span {
        start,
        end,
        line,
        col: (start - line_start + 1) as u32,
    };

    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            i += 1;
            line += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            let (sl, sc) = (line, i - line_start + 1);
            i += 2;
            loop {
                if i + 1 >= bytes.len() {
                    return Err(ParseError::syntax("unterminated block comment", sl, sc as u32));
                }
                if bytes[i] == b'\n' {
                    line += 1;
                    line_start = i + 1;
                }
                if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                    i += 2;
                    break;
                }
                i += 1;
            }
            continue;
        }
        let start = i;
        if c == b'`' {
            let sp = span_at(start, start + 1, line, line_start);
            return Err(ParseError::unsupported("compiler directive", sp));
        }
        if c == b'\\' {
            let sp = span_at(start, start + 1, line, line_start);
            return Err(ParseError::unsupported("escaped identifier", sp));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(text[start..i].to_string()),
                span: span_at(start, i, line, line_start),
            });
            continue;
        }
        if c.is_ascii_digit() || c == b'\'' {
            let (tok, end) = lex_number(text, start, line, line_start)?;
            i = end;
            out.push(Token {
                tok,
                span: span_at(start, i, line, line_start),
            });
            continue;
        }
        if c == b'"' {
            let sp = span_at(start, start + 1, line, line_start);
            return Err(ParseError::unsupported("string literal", sp));
        }
        let rest = &text[i..];
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                i += s.len();
                out.push(Token {
                    tok: Tok::Sym(s),
                    span: span_at(start, i, line, line_start),
                });
            }
            None => {
                let ch = rest.chars().next().unwrap_or('?');
                return Err(ParseError::syntax(
                    &format!("unexpected character '{ch}'"),
                    line,
                    (start - line_start + 1) as u32,
                ));
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: span_at(bytes.len(), bytes.len(), line, line_start),
    });
    Ok(out)
}

fn lex_number(
    text: &str,
    start: usize,
    line: u32,
    line_start: usize,
) -> Result<(Tok, usize), ParseError> {
    let bytes = text.as_bytes();
    let col = (start - line_start + 1) as u32;
    let mut i = start;
    let digits_end = |mut j: usize, ok: &dyn Fn(u8) -> bool| {
        while j < bytes.len() && (ok(bytes[j]) || bytes[j] == b'_') {
            j += 1;
        }
        j
    };
    let mut size = None;
    if bytes[i].is_ascii_digit() {
        let j = digits_end(i, &|b| b.is_ascii_digit());
        // Whitespace between size and base is legal Verilog but we keep it simple.
        if bytes.get(j) != Some(&b'\'') {
            let digits: String = text[i..j].chars().filter(|c| *c != '_').collect();
            let value = digits
                .parse::<u128>()
                .map_err(|_| ParseError::syntax("decimal literal out of range", line, col))?;
            return Ok((Tok::Number(None, value, text[start..j].to_string()), j));
        }
        let digits: String = text[i..j].chars().filter(|c| *c != '_').collect();
        let s: u32 = digits
            .parse()
            .map_err(|_| ParseError::syntax("bad literal size", line, col))?;
        if s == 0 {
            return Err(ParseError::syntax("literal size must be at least 1", line, col));
        }
        size = Some(s);
        i = j;
    }
    // at the apostrophe
    i += 1;
    if matches!(bytes.get(i), Some(b's') | Some(b'S')) {
        let sp = Span {
            start,
            end: i + 1,
            line,
            col,
        };
        return Err(ParseError::unsupported("signed literal", sp));
    }
    let radix = match bytes.get(i).map(|b| b.to_ascii_lowercase()) {
        Some(b'b') => 2,
        Some(b'o') => 8,
        Some(b'd') => 10,
        Some(b'h') => 16,
        _ => return Err(ParseError::syntax("expected base after apostrophe", line, col)),
    };
    i += 1;
    let dstart = i;
    let j = digits_end(i, &|b| b.is_ascii_alphanumeric() || b == b'?');
    let digits: String = text[dstart..j].chars().filter(|c| *c != '_').collect();
    if digits.is_empty() {
        return Err(ParseError::syntax("missing literal digits", line, col));
    }
    if digits.chars().any(|c| matches!(c, 'x' | 'X' | 'z' | 'Z' | '?')) {
        let sp = Span {
            start,
            end: j,
            line,
            col,
        };
        return Err(ParseError::unsupported("x/z literal digits", sp));
    }
    let value = u128::from_str_radix(&digits, radix)
        .map_err(|_| ParseError::syntax("malformed literal digits", line, col))?;
    let value = match size {
        Some(s) if s < 128 => value & ((1u128 << s) - 1),
        _ => value,
    };
    Ok((Tok::Number(size, value, text[start..j].to_string()), j))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sized_literals_are_masked() {
        let toks = tokenize("4'hFF 8'b1010_0101 12 'd7").unwrap();
        assert_eq!(toks[0].tok, Tok::Number(Some(4), 0xF, "4'hFF".into()));
        assert_eq!(toks[1].tok, Tok::Number(Some(8), 0xA5, "8'b1010_0101".into()));
        assert_eq!(toks[2].tok, Tok::Number(None, 12, "12".into()));
        assert_eq!(toks[3].tok, Tok::Number(None, 7, "'d7".into()));
    }

    #[test]
    fn comments_and_positions() {
        let toks = tokenize("// c\n  a /* x\n y */ <= b;").unwrap();
        assert_eq!(toks[0].tok, Tok::Ident("a".into()));
        assert_eq!((toks[0].span.line, toks[0].span.col), (2, 3));
        assert_eq!(toks[1].tok, Tok::Sym("<="));
        assert_eq!(toks[1].span.line, 3);
    }

    #[test]
    fn xz_digits_rejected() {
        assert!(tokenize("4'bx01z").is_err());
    }
}
