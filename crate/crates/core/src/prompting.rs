//! Zero-shot classification prompts.
//!
//! A template body uses `{text1_name}`, `{text2_name}`, `{n}`, `{options}`,
//! `{text1}` and `{text2}`. Substitution is a single left-to-right pass, so
//! braces inside the substituted texts are never reinterpreted.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{read_json, ClassSchema, Example, LabelSet};
use crate::{Error, Result};

pub const DEFAULT_BODY: &str = "Given a {text1_name} and a {text2_name}, detect the stance that the {text2_name} has towards the {text1_name}. There are {n} options: {options}. Now complete the following example. {text1_name}: {text1}. {text2_name}: {text2}";

/// The default body without the options sentence.
pub const OPEN_BODY: &str = "Given a {text1_name} and a {text2_name}, detect the stance that the {text2_name} has towards the {text1_name}. Now complete the following example. {text1_name}: {text1}. {text2_name}: {text2}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionsStyle {
    /// `"w0", "w1", ..., and "wN"`
    #[default]
    QuotedAnd,
    /// No option list; the template must not mention `{n}` or `{options}`.
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub body: String,
    #[serde(default)]
    pub options_style: OptionsStyle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Placeholder {
    Text1Name,
    Text2Name,
    N,
    Options,
    Text1,
    Text2,
}

impl Placeholder {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "text1_name" => Placeholder::Text1Name,
            "text2_name" => Placeholder::Text2Name,
            "n" => Placeholder::N,
            "options" => Placeholder::Options,
            "text1" => Placeholder::Text1,
            "text2" => Placeholder::Text2,
            _ => return None,
        })
    }
}

enum Piece<'a> {
    Literal(&'a str),
    Slot(Placeholder),
}

fn parse_body(body: &str) -> Result<Vec<Piece<'_>>> {
    let mut pieces = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') {
            let name = &after[..name_len];
            let slot = Placeholder::parse(name)
                .ok_or_else(|| Error::Template(format!("unknown placeholder `{{{name}}}`")))?;
            if open > 0 {
                pieces.push(Piece::Literal(&rest[..open]));
            }
            pieces.push(Piece::Slot(slot));
            rest = &after[name_len + 1..];
        } else {
            pieces.push(Piece::Literal(&rest[..open + 1]));
            rest = after;
        }
    }
    if !rest.is_empty() {
        pieces.push(Piece::Literal(rest));
    }
    Ok(pieces)
}

/// A rendered prompt plus the byte range of each option word in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub option_spans: Vec<Range<usize>>,
}

impl PromptTemplate {
    pub fn new(body: impl Into<String>, options_style: OptionsStyle) -> Result<Self> {
        let t = PromptTemplate {
            body: body.into(),
            options_style,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn default_stance() -> Self {
        PromptTemplate {
            body: DEFAULT_BODY.to_owned(),
            options_style: OptionsStyle::QuotedAnd,
        }
    }

    pub fn open_stance() -> Self {
        PromptTemplate {
            body: OPEN_BODY.to_owned(),
            options_style: OptionsStyle::None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let t: PromptTemplate = read_json(path)?;
        t.validate()?;
        Ok(t)
    }

    /// `{text1}`, `{text2}` exactly once; field names at least once; `{n}` and
    /// `{options}` exactly once, or absent for [`OptionsStyle::None`].
    pub fn validate(&self) -> Result<()> {
        let pieces = parse_body(&self.body)?;
        let count = |p: Placeholder| {
            pieces
                .iter()
                .filter(|piece| matches!(piece, Piece::Slot(s) if *s == p))
                .count()
        };
        let check = |p: Placeholder, name: &str, ok: &dyn Fn(usize) -> bool, want: &str| {
            let c = count(p);
            if ok(c) {
                Ok(())
            } else {
                Err(Error::Template(format!(
                    "`{{{name}}}` must appear {want}, found {c}"
                )))
            }
        };
        check(Placeholder::Text1, "text1", &|c| c == 1, "exactly once")?;
        check(Placeholder::Text2, "text2", &|c| c == 1, "exactly once")?;
        check(Placeholder::Text1Name, "text1_name", &|c| c >= 1, "at least once")?;
        check(Placeholder::Text2Name, "text2_name", &|c| c >= 1, "at least once")?;
        match self.options_style {
            OptionsStyle::QuotedAnd => {
                check(Placeholder::N, "n", &|c| c == 1, "exactly once")?;
                check(Placeholder::Options, "options", &|c| c == 1, "exactly once")?;
            }
            OptionsStyle::None => {
                check(Placeholder::N, "n", &|c| c == 0, "nowhere without options")?;
                check(Placeholder::Options, "options", &|c| c == 0, "nowhere without options")?;
            }
        }
        Ok(())
    }
}

/// `"w0", "w1", ..., and "wN"`; two words give `"w0", and "w1"`.
pub fn render_options(words: &[String]) -> String {
    render_options_with_spans(words, 0).0
}

fn render_options_with_spans(words: &[String], base: usize) -> (String, Vec<Range<usize>>) {
    let mut out = String::new();
    let mut spans = Vec::with_capacity(words.len());
    let last = words.len().saturating_sub(1);
    for (i, w) in words.iter().enumerate() {
        if i == last && i > 0 {
            out.push_str("and ");
        }
        out.push('"');
        let start = base + out.len();
        out.push_str(w);
        spans.push(start..start + w.len());
        out.push('"');
        if i != last {
            out.push_str(", ");
        }
    }
    (out, spans)
}

pub fn render(
    template: &PromptTemplate,
    schema: &ClassSchema,
    set: &LabelSet,
    ex: &Example,
) -> Result<String> {
    Ok(render_with_spans(template, schema, set, ex)?.text)
}

pub fn render_with_spans(
    template: &PromptTemplate,
    schema: &ClassSchema,
    set: &LabelSet,
    ex: &Example,
) -> Result<RenderedPrompt> {
    template.validate()?;
    set.validate(schema)?;
    let mut text = String::new();
    let mut option_spans = Vec::new();
    for piece in parse_body(&template.body)? {
        match piece {
            Piece::Literal(s) => text.push_str(s),
            Piece::Slot(Placeholder::Text1Name) => text.push_str(&schema.text1_name),
            Piece::Slot(Placeholder::Text2Name) => text.push_str(&schema.text2_name),
            Piece::Slot(Placeholder::N) => text.push_str(&set.len().to_string()),
            Piece::Slot(Placeholder::Options) => {
                let (clause, spans) = render_options_with_spans(&set.words, text.len());
                text.push_str(&clause);
                option_spans = spans;
            }
            Piece::Slot(Placeholder::Text1) => text.push_str(&ex.text1),
            Piece::Slot(Placeholder::Text2) => text.push_str(&ex.text2),
        }
    }
    Ok(RenderedPrompt { text, option_spans })
}

/// Renders a template without an option list (set-free prompts).
pub fn render_open(template: &PromptTemplate, schema: &ClassSchema, ex: &Example) -> Result<String> {
    template.validate()?;
    if template.options_style != OptionsStyle::None {
        return Err(Error::Template(
            "an options-free prompt needs options_style `none`".into(),
        ));
    }
    let mut text = String::new();
    for piece in parse_body(&template.body)? {
        match piece {
            Piece::Literal(s) => text.push_str(s),
            Piece::Slot(Placeholder::Text1Name) => text.push_str(&schema.text1_name),
            Piece::Slot(Placeholder::Text2Name) => text.push_str(&schema.text2_name),
            Piece::Slot(Placeholder::Text1) => text.push_str(&ex.text1),
            Piece::Slot(Placeholder::Text2) => text.push_str(&ex.text2),
            Piece::Slot(Placeholder::N | Placeholder::Options) => unreachable!("validated"),
        }
    }
    Ok(text)
}
