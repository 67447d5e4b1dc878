//! The portable selector subset used by rule files.
//!
//! Grammar: compounds separated by whitespace (descendant combinator); each
//! compound is an optional tag name followed by any number of `#id`,
//! `.class`, `[attr]` or `[attr=value]` parts. An optional trailing `@attr`
//! on a field rule selects an attribute instead of the text content.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("selector {expr:?}: {message}")]
pub struct SelectorError {
    pub expr: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Part {
    Id(String),
    Class(String),
    Attr(String, Option<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Compound {
    tag: Option<String>,
    parts: Vec<Part>,
}

/// A parsed selector in the supported subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleSelector {
    compounds: Vec<Compound>,
}

/// A selector plus what to read from the matched element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldExpr {
    pub selector: SimpleSelector,
    pub attribute: Option<String>,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '-' || c == '_'
}

struct Cursor<'a> {
    expr: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> SelectorError {
        SelectorError {
            expr: self.expr.to_string(),
            message: message.into(),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, SelectorError> {
        let mut out = String::new();
        while let Some(&(_, c)) = self.chars.peek() {
            if !is_ident_char(c) {
                break;
            }
            out.push(c);
            self.chars.next();
        }
        if out.is_empty() {
            Err(self.err(format!("expected {what}")))
        } else {
            Ok(out)
        }
    }

    fn attr_value(&mut self) -> Result<String, SelectorError> {
        let quote = match self.chars.peek() {
            Some(&(_, q @ ('"' | '\''))) => {
                self.chars.next();
                Some(q)
            }
            _ => None,
        };
        let mut out = String::new();
        loop {
            match self.chars.peek().copied() {
                None => return Err(self.err("unterminated attribute selector")),
                Some((_, c)) if Some(c) == quote => {
                    self.chars.next();
                    break;
                }
                Some((_, ']')) if quote.is_none() => break,
                Some((_, c)) if c == '"' || c == '\'' || c == '\\' => {
                    return Err(self.err("quotes and escapes are not allowed in values"))
                }
                Some((_, c)) if quote.is_none() && c.is_whitespace() => {
                    return Err(self.err("whitespace in unquoted value"))
                }
                Some((_, c)) => {
                    out.push(c);
                    self.chars.next();
                }
            }
        }
        Ok(out)
    }
}

impl SimpleSelector {
    pub fn parse(expr: &str) -> Result<Self, SelectorError> {
        let mut cur = Cursor {
            expr,
            chars: expr.char_indices().peekable(),
        };
        let mut compounds = Vec::new();
        loop {
            while matches!(cur.chars.peek(), Some(&(_, c)) if c.is_whitespace()) {
                cur.chars.next();
            }
            if cur.chars.peek().is_none() {
                break;
            }
            let mut compound = Compound {
                tag: None,
                parts: Vec::new(),
            };
            if matches!(cur.chars.peek(), Some(&(_, c)) if c.is_ascii_alphabetic()) {
                compound.tag = Some(cur.ident("tag")?.to_ascii_lowercase());
            }
            loop {
                match cur.chars.peek().copied() {
                    Some((_, '#')) => {
                        cur.chars.next();
                        compound.parts.push(Part::Id(cur.ident("id")?));
                    }
                    Some((_, '.')) => {
                        cur.chars.next();
                        compound.parts.push(Part::Class(cur.ident("class")?));
                    }
                    Some((_, '[')) => {
                        cur.chars.next();
                        let name = cur.ident("attribute name")?.to_ascii_lowercase();
                        let value = match cur.chars.next() {
                            Some((_, ']')) => None,
                            Some((_, '=')) => {
                                let v = cur.attr_value()?;
                                match cur.chars.next() {
                                    Some((_, ']')) => Some(v),
                                    _ => return Err(cur.err("expected ']'")),
                                }
                            }
                            _ => return Err(cur.err("expected '=' or ']'")),
                        };
                        compound.parts.push(Part::Attr(name, value));
                    }
                    Some((_, c)) if c.is_whitespace() => break,
                    None => break,
                    Some((_, c)) => return Err(cur.err(format!("unsupported character {c:?}"))),
                }
            }
            if compound.tag.is_none() && compound.parts.is_empty() {
                return Err(cur.err("empty compound"));
            }
            compounds.push(compound);
        }
        if compounds.is_empty() {
            return Err(cur.err("empty selector"));
        }
        Ok(SimpleSelector { compounds })
    }

    /// Compiles to the HTML engine's selector type.
    pub fn compile(&self) -> scraper::Selector {
        scraper::Selector::parse(&self.to_string())
            .expect("subset selectors are valid CSS selectors")
    }
}

impl fmt::Display for SimpleSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.compounds.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            if let Some(tag) = &c.tag {
                f.write_str(tag)?;
            }
            for part in &c.parts {
                match part {
                    Part::Id(id) => write!(f, "#{id}")?,
                    Part::Class(class) => write!(f, ".{class}")?,
                    Part::Attr(name, None) => write!(f, "[{name}]")?,
                    Part::Attr(name, Some(v)) => write!(f, "[{name}=\"{v}\"]")?,
                }
            }
        }
        Ok(())
    }
}

impl FieldExpr {
    pub fn parse(expr: &str) -> Result<Self, SelectorError> {
        // '@' cannot occur inside a valid selector except in a quoted value,
        // so split on the last one outside brackets.
        let mut depth = 0;
        let mut split = None;
        for (i, c) in expr.char_indices() {
            match c {
                '[' => depth += 1,
                ']' => depth -= 1,
                '@' if depth == 0 => split = Some(i),
                _ => {}
            }
        }
        match split {
            Some(i) => {
                let attr = expr[i + 1..].trim();
                if attr.is_empty() || !attr.chars().all(is_ident_char) {
                    return Err(SelectorError {
                        expr: expr.to_string(),
                        message: format!("bad attribute name {attr:?}"),
                    });
                }
                Ok(FieldExpr {
                    selector: SimpleSelector::parse(&expr[..i])?,
                    attribute: Some(attr.to_ascii_lowercase()),
                })
            }
            None => Ok(FieldExpr {
                selector: SimpleSelector::parse(expr)?,
                attribute: None,
            }),
        }
    }
}
