//! A forgiving JSON reader for model output.
//!
//! Models asked for "only JSON" still wrap it in prose or code fences, leave
//! trailing commas, drop the comma between two members, or escape characters
//! that JSON does not know (`\$`). This reader accepts those slips and
//! nothing looser: keys must be quoted, brackets must balance, and literals
//! must be valid.

use serde_json::{Map, Number, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LenientError {
    pub offset: usize,
    pub message: String,
}

impl std::fmt::Display for LenientError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} at byte {}", self.message, self.offset)
    }
}

/// Finds the first `{` in `raw` and reads one object from there.
pub fn extract_object(raw: &str) -> Result<Value, LenientError> {
    let start = raw.find('{').ok_or_else(|| LenientError {
        offset: raw.len(),
        message: "no JSON object found".into(),
    })?;
    let mut reader = Reader {
        src: raw.as_bytes(),
        text: raw,
        pos: start,
    };
    reader.value()
}

struct Reader<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, LenientError> {
        Err(LenientError {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn value(&mut self) -> Result<Value, LenientError> {
        self.skip_ws();
        match self.peek() {
            None => self.err("unexpected end of input"),
            Some(b'{') => self.object(),
            Some(b'[') => self.array(),
            Some(b'"') => self.string().map(Value::String),
            Some(b't') => self.literal("true", Value::Bool(true)),
            Some(b'f') => self.literal("false", Value::Bool(false)),
            Some(b'n') => self.literal("null", Value::Null),
            Some(b'-' | b'0'..=b'9') => self.number(),
            Some(other) => self.err(format!("unexpected character '{}'", other as char)),
        }
    }

    fn literal(&mut self, word: &str, value: Value) -> Result<Value, LenientError> {
        if self.text[self.pos..].starts_with(word) {
            self.pos += word.len();
            Ok(value)
        } else {
            self.err("invalid literal")
        }
    }

    fn number(&mut self) -> Result<Value, LenientError> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_digit() || matches!(b, b'-' | b'+' | b'.' | b'e' | b'E') {
                self.pos += 1;
            } else {
                break;
            }
        }
        let slice = &self.text[start..self.pos];
        match serde_json::from_str::<Number>(slice) {
            Ok(n) => Ok(Value::Number(n)),
            Err(_) => Err(LenientError {
                offset: start,
                message: format!("invalid number '{slice}'"),
            }),
        }
    }

    fn string(&mut self) -> Result<String, LenientError> {
        debug_assert_eq!(self.peek(), Some(b'"'));
        self.pos += 1;
        let mut out = String::new();
        loop {
            let rest = &self.text[self.pos..];
            let mut chars = rest.chars();
            let Some(c) = chars.next() else {
                return self.err("unterminated string");
            };
            self.pos += c.len_utf8();
            match c {
                '"' => return Ok(out),
                '\\' => {
                    let Some(esc) = self.text[self.pos..].chars().next() else {
                        return self.err("unterminated escape");
                    };
                    self.pos += esc.len_utf8();
                    match esc {
                        'n' => out.push('\n'),
                        't' => out.push('\t'),
                        'r' => out.push('\r'),
                        'b' => out.push('\u{8}'),
                        'f' => out.push('\u{c}'),
                        'u' => out.push(self.unicode_escape()?),
                        // `\"`, `\\`, `\/` and unknown escapes such as `\$`
                        // all stand for the escaped character itself.
                        other => out.push(other),
                    }
                }
                other => out.push(other),
            }
        }
    }

    fn hex4(&mut self) -> Result<u32, LenientError> {
        let Some(hex) = self.text.get(self.pos..self.pos + 4) else {
            return self.err("short unicode escape");
        };
        let code = u32::from_str_radix(hex, 16).or_else(|_| self.err("bad unicode escape"))?;
        self.pos += 4;
        Ok(code)
    }

    fn unicode_escape(&mut self) -> Result<char, LenientError> {
        let hi = self.hex4()?;
        if (0xD800..0xDC00).contains(&hi) && self.text[self.pos..].starts_with("\\u") {
            self.pos += 2;
            let lo = self.hex4()?;
            let code = 0x10000 + ((hi - 0xD800) << 10) + (lo.wrapping_sub(0xDC00) & 0x3FF);
            return Ok(char::from_u32(code).unwrap_or('\u{FFFD}'));
        }
        Ok(char::from_u32(hi).unwrap_or('\u{FFFD}'))
    }

    fn object(&mut self) -> Result<Value, LenientError> {
        self.pos += 1;
        let mut map = Map::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => return self.err("unclosed object"),
                Some(b'}') => {
                    self.pos += 1;
                    return Ok(Value::Object(map));
                }
                Some(b',') => {
                    self.pos += 1;
                    continue;
                }
                Some(b'"') => {
                    let key = self.string()?;
                    self.skip_ws();
                    if self.peek() != Some(b':') {
                        return self.err(format!("expected ':' after key \"{key}\""));
                    }
                    self.pos += 1;
                    let value = self.value()?;
                    map.insert(key, value);
                }
                Some(other) => {
                    return self.err(format!("expected a quoted key, found '{}'", other as char))
                }
            }
        }
    }

    fn array(&mut self) -> Result<Value, LenientError> {
        self.pos += 1;
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => return self.err("unclosed array"),
                Some(b']') => {
                    self.pos += 1;
                    return Ok(Value::Array(items));
                }
                Some(b',') => {
                    self.pos += 1;
                }
                Some(_) => items.push(self.value()?),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn strict_json_passes_through() {
        let v = extract_object(r#"{"a": [1, 2.5, "x"], "b": {"c": null, "d": true}}"#).unwrap();
        assert_eq!(v, json!({"a": [1, 2.5, "x"], "b": {"c": null, "d": true}}));
    }

    #[test]
    fn tolerates_trailing_and_missing_commas() {
        let v = extract_object(r#"{"a": "x," "b": "y", "c": [1 2,],}"#).unwrap();
        assert_eq!(v, json!({"a": "x,", "b": "y", "c": [1, 2]}));
    }

    #[test]
    fn strips_prose_and_fences() {
        let v = extract_object("Sure, here you go:\n```json\n{\"k\": 1}\n```\nDone.").unwrap();
        assert_eq!(v, json!({"k": 1}));
    }

    #[test]
    fn unknown_escapes_are_literal() {
        let v = extract_object(r#"{"Tag": "[\$Question]", "u": "é😀"}"#).unwrap();
        assert_eq!(v, json!({"Tag": "[$Question]", "u": "é😀"}));
    }

    #[test]
    fn rejects_truncation_and_garbage() {
        assert!(extract_object(r#"{"a": [1, 2"#).is_err());
        assert!(extract_object(r#"{"a": "open"#).is_err());
        assert!(extract_object("no braces here").is_err());
        assert!(extract_object(r#"{a: 1}"#).is_err());
        assert!(extract_object(r#"{"a": tru}"#).is_err());
    }
}
