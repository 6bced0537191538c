//! Class schemas, datasets, label sets and reproducible sample draws.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;
use crate::{Error, Result};

/// Identifier of a class role (`pro`, `con`, `query`, ...).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoleId(pub String);

impl RoleId {
    pub fn new(id: impl Into<String>) -> Self {
        RoleId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RoleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RoleId {
    fn from(s: &str) -> Self {
        RoleId(s.to_owned())
    }
}

/// A task's class inventory and the names of its two text fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSchema {
    pub task_name: String,
    pub class_roles: Vec<RoleId>,
    pub original_labels: BTreeMap<RoleId, String>,
    pub text1_name: String,
    pub text2_name: String,
}

impl ClassSchema {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let schema: ClassSchema = read_json(path)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_roles.len() < 2 {
            return Err(Error::Schema(format!(
                "need at least 2 class roles, got {}",
                self.class_roles.len()
            )));
        }
        let mut seen = HashSet::new();
        for role in &self.class_roles {
            if !seen.insert(role) {
                return Err(Error::Schema(format!("duplicate role `{role}`")));
            }
            if !self.original_labels.contains_key(role) {
                return Err(Error::Schema(format!("role `{role}` has no original label")));
            }
        }
        if let Some(extra) = self.original_labels.keys().find(|r| !seen.contains(r)) {
            return Err(Error::Schema(format!(
                "original label given for unknown role `{extra}`"
            )));
        }
        if self.text1_name.trim().is_empty() || self.text2_name.trim().is_empty() {
            return Err(Error::Schema("text field names must be nonempty".into()));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.class_roles.len()
    }

    pub fn role_index(&self, role: &RoleId) -> Option<usize> {
        self.class_roles.iter().position(|r| r == role)
    }

    /// The dataset's own label words in default order.
    pub fn original_set(&self) -> LabelSet {
        let words = self
            .class_roles
            .iter()
            .map(|r| self.original_labels[r].clone())
            .collect();
        LabelSet {
            words,
            role_of: self.class_roles.clone(),
            order_index: 0,
            elaboration: Elaboration::None,
            source: LabelSource::Original,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub text1: String,
    pub text2: String,
    #[serde(rename = "label", default, skip_serializing_if = "Option::is_none")]
    pub gold_role: Option<RoleId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Elaboration {
    None,
    E1,
    E2,
    E3,
}

impl Elaboration {
    pub const LEVELS: [Elaboration; 3] = [Elaboration::E1, Elaboration::E2, Elaboration::E3];
}

impl std::str::FromStr for Elaboration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NONE" => Ok(Elaboration::None),
            "E1" => Ok(Elaboration::E1),
            "E2" => Ok(Elaboration::E2),
            "E3" => Ok(Elaboration::E3),
            other => Err(Error::LabelSet(format!("unknown elaboration level `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LabelSource {
    #[default]
    Original,
    Lexicon,
    Manual,
}

/// Label surface forms as they appear in the prompt, position by position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub words: Vec<String>,
    /// Class role presented at each position.
    pub role_of: Vec<RoleId>,
    #[serde(default)]
    pub order_index: usize,
    #[serde(default = "default_elaboration")]
    pub elaboration: Elaboration,
    #[serde(default)]
    pub source: LabelSource,
}

fn default_elaboration() -> Elaboration {
    Elaboration::None
}

impl LabelSet {
    /// Builds a default-order set from one word per role, in schema role order.
    pub fn in_default_order(
        schema: &ClassSchema,
        words: Vec<String>,
        source: LabelSource,
    ) -> Result<Self> {
        let set = LabelSet {
            words,
            role_of: schema.class_roles.clone(),
            order_index: 0,
            elaboration: Elaboration::None,
            source,
        };
        set.validate(schema)?;
        Ok(set)
    }

    pub fn validate(&self, schema: &ClassSchema) -> Result<()> {
        let n = schema.n_classes();
        if self.words.len() != n || self.role_of.len() != n {
            return Err(Error::LabelSet(format!(
                "expected {n} words and roles, got {} and {}",
                self.words.len(),
                self.role_of.len()
            )));
        }
        let mut lowered = HashSet::new();
        for w in &self.words {
            if w.trim().is_empty() {
                return Err(Error::LabelSet("empty label word".into()));
            }
            if !lowered.insert(w.to_lowercase()) {
                return Err(Error::LabelSet(format!("duplicate label word `{w}`")));
            }
            if self.elaboration == Elaboration::None && w.chars().any(char::is_whitespace) {
                return Err(Error::LabelSet(format!(
                    "single-word label `{w}` contains whitespace"
                )));
            }
        }
        let mut roles = HashSet::new();
        for r in &self.role_of {
            if schema.role_index(r).is_none() {
                return Err(Error::LabelSet(format!("unknown role `{r}`")));
            }
            if !roles.insert(r) {
                return Err(Error::LabelSet(format!("role `{r}` appears twice")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// `w0|w1|...` in presentation order; used to match sets across reports.
    pub fn key(&self) -> String {
        self.words.join("|")
    }

    pub fn word_for(&self, role: &RoleId) -> Option<&str> {
        self.role_of
            .iter()
            .position(|r| r == role)
            .map(|i| self.words[i].as_str())
    }

    /// Words rearranged into the schema's role order.
    pub fn words_by_role(&self, schema: &ClassSchema) -> Vec<String> {
        schema
            .class_roles
            .iter()
            .map(|r| self.word_for(r).unwrap_or_default().to_owned())
            .collect()
    }
}

/// Which examples a sampling run picked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleDraw {
    pub seed: u64,
    pub size: usize,
    pub example_ids: Vec<String>,
}

impl SampleDraw {
    /// The drawn examples, in draw order.
    pub fn select<'a>(&self, examples: &'a [Example]) -> Result<Vec<&'a Example>> {
        let by_id: HashMap<&str, &Example> =
            examples.iter().map(|e| (e.id.as_str(), e)).collect();
        self.example_ids
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Eval(format!("sampled id `{id}` not in dataset")))
            })
            .collect()
    }
}

/// Uniform sample without replacement.
///
/// Partial Fisher–Yates over the input order: for `i` in `0..size`, swap
/// position `i` with `i + below(n - i)` drawn from [`SeededRng`]. The first
/// `size` positions are the draw. A smaller draw with the same seed is a
/// prefix of a larger one.
pub fn draw_sample(examples: &[Example], size: usize, seed: u64) -> Result<SampleDraw> {
    let n = examples.len();
    if size == 0 || size > n {
        return Err(Error::SampleSize { size, available: n });
    }
    let order = partial_shuffle(n, size, seed);
    Ok(SampleDraw {
        seed,
        size,
        example_ids: order.iter().map(|&i| examples[i].id.clone()).collect(),
    })
}

/// Sample that includes at least one example of every class present.
///
/// The whole input is shuffled as in [`draw_sample`]; the first shuffled
/// example of each role is taken, then the remaining slots are filled in
/// shuffled order. Output keeps shuffled order. Requires gold labels.
pub fn draw_stratified(
    examples: &[Example],
    schema: &ClassSchema,
    size: usize,
    seed: u64,
) -> Result<SampleDraw> {
    let n = examples.len();
    if size == 0 || size > n {
        return Err(Error::SampleSize { size, available: n });
    }
    if let Some(e) = examples.iter().find(|e| e.gold_role.is_none()) {
        return Err(Error::Eval(format!(
            "stratified sampling needs gold labels; `{}` has none",
            e.id
        )));
    }
    let order = partial_shuffle(n, n, seed);
    let mut taken = vec![false; n];
    let mut covered = HashSet::new();
    let mut picked = 0;
    for (pos, &i) in order.iter().enumerate() {
        if picked == size {
            break;
        }
        let role = examples[i].gold_role.as_ref().expect("checked above");
        if schema.role_index(role).is_some() && covered.insert(role.clone()) {
            taken[pos] = true;
            picked += 1;
        }
    }
    for t in taken.iter_mut() {
        if picked == size {
            break;
        }
        if !*t {
            *t = true;
            picked += 1;
        }
    }
    let example_ids = order
        .iter()
        .zip(&taken)
        .filter(|(_, &t)| t)
        .map(|(&i, _)| examples[i].id.clone())
        .collect();
    Ok(SampleDraw {
        seed,
        size,
        example_ids,
    })
}

fn partial_shuffle(n: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = SeededRng::new(seed);
    for i in 0..size {
        let j = i + rng.below((n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(size);
    idx
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &ClassSchema) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, schema, path)
}

/// Parses JSONL rows; `origin` is only used in error messages.
pub fn parse_dataset(text: &str, schema: &ClassSchema, origin: &Path) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(line).map_err(|e| Error::Json {
            path: origin.to_owned(),
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(role) = &ex.gold_role {
            if schema.role_index(role).is_none() {
                return Err(Error::UnknownRole {
                    line: line_no,
                    role: role.0.clone(),
                });
            }
        }
        if !ids.insert(ex.id.clone()) {
            return Err(Error::DuplicateId {
                line: line_no,
                id: ex.id,
            });
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn write_dataset(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = String::new();
    for ex in examples {
        buf.push_str(&serde_json::to_string(ex).expect("examples serialize"));
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_owned(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
