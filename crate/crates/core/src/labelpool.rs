//! Candidate label-set pools: lexicon expansion, label orders and elaborations.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{read_json, ClassSchema, Elaboration, LabelSet, LabelSource, RoleId};
use crate::{Error, Result};

/// Static word resources for one task.
///
/// `antonym_pairs` tie two roles together: for those roles the pool varies
/// over whole pairs instead of over independent synonyms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub synonyms: BTreeMap<RoleId, Vec<String>>,
    #[serde(default)]
    pub antonym_pairs: Vec<(String, String)>,
    #[serde(default)]
    pub blocked: Vec<String>,
}

impl Lexicon {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }

    pub fn is_blocked(&self, word: &str) -> bool {
        self.blocked.iter().any(|b| b.eq_ignore_ascii_case(word))
    }

    fn roles_containing(&self, word: &str) -> Vec<&RoleId> {
        self.synonyms
            .iter()
            .filter(|(_, words)| words.iter().any(|w| w == word))
            .map(|(r, _)| r)
            .collect()
    }

    /// Candidate words per role: the original label, then the role's synonyms
    /// and any antonym-pair members, deduplicated, blocked words removed.
    pub fn candidates(&self, schema: &ClassSchema) -> Result<BTreeMap<RoleId, Vec<String>>> {
        let groups = self.pair_groups(schema)?;
        let mut out = BTreeMap::new();
        for role in &schema.class_roles {
            let mut words = vec![schema.original_labels[role].clone()];
            words.extend(self.synonyms.get(role).into_iter().flatten().cloned());
            for g in &groups {
                for (a, b) in &g.pairs {
                    if &g.roles.0 == role {
                        words.push(a.clone());
                    } else if &g.roles.1 == role {
                        words.push(b.clone());
                    }
                }
            }
            let mut seen = HashSet::new();
            words.retain(|w| !self.is_blocked(w) && seen.insert(w.clone()));
            out.insert(role.clone(), words);
        }
        Ok(out)
    }

    /// Groups antonym pairs by the (schema-ordered) roles they span.
    fn pair_groups(&self, schema: &ClassSchema) -> Result<Vec<PairGroup>> {
        for role in self.synonyms.keys() {
            if schema.role_index(role).is_none() {
                return Err(Error::Pool(format!("lexicon lists unknown role `{role}`")));
            }
        }
        let mut groups: Vec<PairGroup> = Vec::new();
        for (a, b) in &self.antonym_pairs {
            let ra = single_role(self.roles_containing(a), a)?;
            let rb = single_role(self.roles_containing(b), b)?;
            if ra == rb {
                return Err(Error::Pool(format!(
                    "antonym pair ({a}, {b}) lies within role `{ra}`"
                )));
            }
            let (ia, ib) = (
                schema.role_index(ra).expect("validated"),
                schema.role_index(rb).expect("validated"),
            );
            let (roles, pair) = if ia < ib {
                ((ra.clone(), rb.clone()), (a.clone(), b.clone()))
            } else {
                ((rb.clone(), ra.clone()), (b.clone(), a.clone()))
            };
            match groups.iter_mut().find(|g| g.roles == roles) {
                Some(g) => g.pairs.push(pair),
                None => {
                    let overlapping = groups.iter().any(|g| {
                        g.roles.0 == roles.0
                            || g.roles.0 == roles.1
                            || g.roles.1 == roles.0
                            || g.roles.1 == roles.1
                    });
                    if overlapping {
                        return Err(Error::Pool(format!(
                            "roles `{}`/`{}` belong to more than one antonym grouping",
                            roles.0, roles.1
                        )));
                    }
                    groups.push(PairGroup {
                        roles,
                        pairs: vec![pair],
                    });
                }
            }
        }
        Ok(groups)
    }
}

fn single_role<'a>(roles: Vec<&'a RoleId>, word: &str) -> Result<&'a RoleId> {
    match roles.as_slice() {
        [r] => Ok(r),
        [] => Err(Error::Pool(format!(
            "antonym word `{word}` is not in any synonym list"
        ))),
        _ => Err(Error::Pool(format!(
            "antonym word `{word}` is listed under several roles"
        ))),
    }
}

#[derive(Debug)]
struct PairGroup {
    roles: (RoleId, RoleId),
    pairs: Vec<(String, String)>,
}

/// One independently varying slot of the pool product.
enum Slot {
    Pair((usize, usize), Vec<(String, String)>),
    Single(usize, Vec<String>),
}

impl Slot {
    fn len(&self) -> usize {
        match self {
            Slot::Pair(_, units) => units.len(),
            Slot::Single(_, words) => words.len(),
        }
    }
}

/// Every combination of one candidate per role.
///
/// Roles joined by antonym pairs vary one pair at a time (the original
/// labels of those roles form an implicit pair); every other role varies over
/// its own candidates. Sets with repeated words are skipped, blocked words
/// never appear, and the result is sorted by words.
pub fn expand_pool(schema: &ClassSchema, lexicon: &Lexicon) -> Result<Vec<LabelSet>> {
    schema.validate()?;
    let groups = lexicon.pair_groups(schema)?;
    let mut slots = Vec::new();
    let mut covered = BTreeSet::new();
    for g in &groups {
        let ia = schema.role_index(&g.roles.0).expect("validated");
        let ib = schema.role_index(&g.roles.1).expect("validated");
        covered.insert(ia);
        covered.insert(ib);
        let mut units = vec![(
            schema.original_labels[&g.roles.0].clone(),
            schema.original_labels[&g.roles.1].clone(),
        )];
        units.extend(g.pairs.iter().cloned());
        let mut seen = HashSet::new();
        units.retain(|(a, b)| {
            !lexicon.is_blocked(a) && !lexicon.is_blocked(b) && seen.insert((a.clone(), b.clone()))
        });
        if units.is_empty() {
            return Err(Error::Pool(format!(
                "roles `{}`/`{}` have no candidates after filtering",
                g.roles.0, g.roles.1
            )));
        }
        slots.push(Slot::Pair((ia, ib), units));
    }
    for (i, role) in schema.class_roles.iter().enumerate() {
        if covered.contains(&i) {
            continue;
        }
        let mut words = vec![schema.original_labels[role].clone()];
        words.extend(lexicon.synonyms.get(role).into_iter().flatten().cloned());
        let mut seen = HashSet::new();
        words.retain(|w| !lexicon.is_blocked(w) && seen.insert(w.clone()));
        if words.is_empty() {
            return Err(Error::Pool(format!(
                "role `{role}` has no candidates after filtering"
            )));
        }
        slots.push(Slot::Single(i, words));
    }

    let original = schema.original_set().words;
    let n = schema.n_classes();
    let mut pool = BTreeSet::new();
    let mut choice = vec![0usize; slots.len()];
    'outer: loop {
        let mut words = vec![String::new(); n];
        for (slot, &c) in slots.iter().zip(&choice) {
            match slot {
                Slot::Pair((ia, ib), units) => {
                    words[*ia] = units[c].0.clone();
                    words[*ib] = units[c].1.clone();
                }
                Slot::Single(i, ws) => words[*i] = ws[c].clone(),
            }
        }
        let distinct: HashSet<String> = words.iter().map(|w| w.to_lowercase()).collect();
        if distinct.len() == n {
            pool.insert(words);
        }
        // odometer increment, last slot fastest
        for k in (0..slots.len()).rev() {
            choice[k] += 1;
            if choice[k] < slots[k].len() {
                continue 'outer;
            }
            choice[k] = 0;
        }
        break;
    }

    pool.into_iter()
        .map(|words| {
            let source = if words == original {
                LabelSource::Original
            } else {
                LabelSource::Lexicon
            };
            LabelSet::in_default_order(schema, words, source)
        })
        .collect()
}

/// All `n!` presentation orders of a single-word set.
///
/// Permutations are enumerated in lexicographic order of position indices;
/// `order_index` is the rank in that order, so index 0 is the input order.
pub fn permute_orders(set: &LabelSet) -> Result<Vec<LabelSet>> {
    if set.elaboration != Elaboration::None {
        return Err(Error::LabelSet(
            "orders are only permuted for single-word sets".into(),
        ));
    }
    let n = set.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    loop {
        out.push(LabelSet {
            words: perm.iter().map(|&i| set.words[i].clone()).collect(),
            role_of: perm.iter().map(|&i| set.role_of[i].clone()).collect(),
            order_index: out.len(),
            elaboration: Elaboration::None,
            source: set.source,
        });
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(out)
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Per-level, per-role format strings with a single `{word}` placeholder.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElaborationTemplates {
    pub levels: BTreeMap<Elaboration, BTreeMap<RoleId, String>>,
}

impl ElaborationTemplates {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let t: ElaborationTemplates = read_json(path)?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (level, roles) in &self.levels {
            if *level == Elaboration::None {
                return Err(Error::Template("elaboration level NONE takes no templates".into()));
            }
            for (role, fmt) in roles {
                let count = fmt.matches("{word}").count();
                if count != 1 {
                    return Err(Error::Template(format!(
                        "{level:?}/{role}: `{{word}}` must appear exactly once, found {count}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Rewrites every word through its role's template at `level`.
pub fn elaborate(
    set: &LabelSet,
    level: Elaboration,
    templates: &ElaborationTemplates,
) -> Result<LabelSet> {
    if set.elaboration != Elaboration::None {
        return Err(Error::LabelSet("set is already elaborated".into()));
    }
    if level == Elaboration::None {
        return Ok(set.clone());
    }
    templates.validate()?;
    let by_role = templates
        .levels
        .get(&level)
        .ok_or_else(|| Error::Template(format!("no templates for level {level:?}")))?;
    let words = set
        .words
        .iter()
        .zip(&set.role_of)
        .map(|(w, role)| {
            by_role
                .get(role)
                .map(|fmt| fmt.replacen("{word}", w, 1))
                .ok_or_else(|| Error::Template(format!("no {level:?} template for role `{role}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelSet {
        words,
        role_of: set.role_of.clone(),
        order_index: set.order_index,
        elaboration: level,
        source: set.source,
    })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PoolFile {
    Plain(Vec<LabelSet>),
    Wrapped { sets: Vec<LabelSet> },
}

/// Reads a pool written either as a bare list of sets or as an object with
/// a `sets` list.
pub fn load_pool(path: impl AsRef<Path>, schema: &ClassSchema) -> Result<Vec<LabelSet>> {
    let pool = match read_json::<PoolFile>(path)? {
        PoolFile::Plain(sets) | PoolFile::Wrapped { sets } => sets,
    };
    for set in &pool {
        set.validate(schema)
            .map_err(|e| Error::SetMismatch(format!("pool set [{}]: {e}", set.key())))?;
    }
    Ok(pool)
}
