//! Greedy longest-match subword tokenizer with byte fallback.
//!
//! Vocabulary files hold one `token<TAB>id` entry per line. Inside a token,
//! `\t`, `\n` and `\\` are escapes. `<unk>` and `<eos>` are reserved, and
//! `<0x00>`..`<0xFF>` must all be present so that any string can be encoded.

use std::collections::HashMap;
use std::fs;
use std::ops::Range;
use std::path::Path;

use crate::{Error, Result};

pub type TokenId = u32;

#[derive(Debug, Clone)]
enum Entry {
    Piece(String),
    Byte(u8),
    Unk,
    Eos,
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    entries: Vec<Entry>,
    pieces: HashMap<String, TokenId>,
    bytes: [TokenId; 256],
    max_piece_len: usize,
    unk: TokenId,
    eos: TokenId,
}

impl Tokenizer {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rows: Vec<(String, TokenId)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line.rsplit_once('\t').ok_or_else(|| {
                Error::Backend(format!("vocabulary line {}: expected token<TAB>id", i + 1))
            })?;
            let id: TokenId = id.trim().parse().map_err(|_| {
                Error::Backend(format!("vocabulary line {}: bad id `{id}`", i + 1))
            })?;
            rows.push((unescape(tok), id));
        }
        rows.sort_by_key(|(_, id)| *id);
        for (expect, (_, id)) in rows.iter().enumerate() {
            if *id as usize != expect {
                return Err(Error::Backend(format!(
                    "vocabulary ids must be dense from 0; expected {expect}, found {id}"
                )));
            }
        }
        Self::from_tokens(rows.into_iter().map(|(t, _)| t))
    }

    /// Builds a vocabulary whose ids follow iteration order.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut entries = Vec::new();
        let mut pieces = HashMap::new();
        let mut bytes = [TokenId::MAX; 256];
        let mut unk = None;
        let mut eos = None;
        for (id, tok) in tokens.into_iter().enumerate() {
            let tok: String = tok.into();
            let id = id as TokenId;
            let entry = match tok.as_str() {
                "<unk>" => {
                    unk = Some(id);
                    Entry::Unk
                }
                "<eos>" => {
                    eos = Some(id);
                    Entry::Eos
                }
                t if is_byte_token(t) => {
                    let b = u8::from_str_radix(&t[3..5], 16).expect("checked");
                    bytes[b as usize] = id;
                    Entry::Byte(b)
                }
                "" => return Err(Error::Backend(format!("empty token at id {id}"))),
                t => {
                    if pieces.insert(t.to_owned(), id).is_some() {
                        return Err(Error::Backend(format!("duplicate token `{t}`")));
                    }
                    Entry::Piece(t.to_owned())
                }
            };
            entries.push(entry);
        }
        if let Some(b) = bytes.iter().position(|&id| id == TokenId::MAX) {
            return Err(Error::Backend(format!("missing byte token <0x{b:02X}>")));
        }
        let max_piece_len = pieces.keys().map(|p| p.len()).max().unwrap_or(0);
        Ok(Tokenizer {
            entries,
            pieces,
            bytes,
            max_piece_len,
            unk: unk.ok_or_else(|| Error::Backend("vocabulary lacks <unk>".into()))?,
            eos: eos.ok_or_else(|| Error::Backend("vocabulary lacks <eos>".into()))?,
        })
    }

    /// Reserved tokens, the 256 byte tokens, then `pieces` in order.
    pub fn with_pieces<I, S>(pieces: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = vec!["<unk>".into(), "<eos>".into()];
        tokens.extend((0..=255u8).map(|b| format!("<0x{b:02X}>")));
        tokens.extend(pieces.into_iter().map(Into::into));
        Self::from_tokens(tokens)
    }

    pub fn vocab_size(&self) -> usize {
        self.entries.len()
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos
    }

    pub fn unk_id(&self) -> TokenId {
        self.unk
    }

    pub fn contains(&self, id: TokenId) -> bool {
        (id as usize) < self.entries.len()
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        self.encode_with_offsets(text)
            .into_iter()
            .map(|(id, _)| id)
            .collect()
    }

    /// Token ids with the byte range each covers in `text`.
    pub fn encode_with_offsets(&self, text: &str) -> Vec<(TokenId, Range<usize>)> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < text.len() {
            let rest = &text[pos..];
            let mut matched = None;
            let mut end = rest.len().min(self.max_piece_len);
            while end > 0 {
                if rest.is_char_boundary(end) {
                    if let Some(&id) = self.pieces.get(&rest[..end]) {
                        matched = Some((id, end));
                        break;
                    }
                }
                end -= 1;
            }
            match matched {
                Some((id, len)) => {
                    out.push((id, pos..pos + len));
                    pos += len;
                }
                None => {
                    let ch_len = rest.chars().next().map_or(1, char::len_utf8);
                    for (k, b) in rest.as_bytes()[..ch_len].iter().enumerate() {
                        out.push((self.bytes[*b as usize], pos + k..pos + k + 1));
                    }
                    pos += ch_len;
                }
            }
        }
        out
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        let mut buf = Vec::new();
        for &id in ids {
            match self.entries.get(id as usize) {
                Some(Entry::Piece(p)) => buf.extend_from_slice(p.as_bytes()),
                Some(Entry::Byte(b)) => buf.push(*b),
                Some(Entry::Unk | Entry::Eos) | None => {}
            }
        }
        String::from_utf8_lossy(&buf).into_owned()
    }

    /// Display form of one token (`<0x41>`, `<eos>` or the piece itself).
    pub fn token_str(&self, id: TokenId) -> Option<String> {
        self.entries.get(id as usize).map(|e| match e {
            Entry::Piece(p) => p.clone(),
            Entry::Byte(b) => format!("<0x{b:02X}>"),
            Entry::Unk => "<unk>".into(),
            Entry::Eos => "<eos>".into(),
        })
    }

    /// First token of `word` when encoded on its own.
    pub fn first_token(&self, word: &str) -> Option<TokenId> {
        self.encode(word).first().copied()
    }

    /// Vocabulary file contents in `token<TAB>id` form.
    pub fn to_vocab_text(&self) -> String {
        let mut out = String::new();
        for (id, _) in self.entries.iter().enumerate() {
            let tok = self.token_str(id as TokenId).expect("in range");
            out.push_str(&escape(&tok));
            out.push('\t');
            out.push_str(&id.to_string());
            out.push('\n');
        }
        out
    }
}

fn is_byte_token(t: &str) -> bool {
    t.len() == 6
        && t.starts_with("<0x")
        && t.ends_with('>')
        && t[3..5].chars().all(|c| c.is_ascii_hexdigit())
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some('\\') => out.push('\\'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}
