//! Domain types shared by the compression, clustering and learning modules.

use std::fmt;

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance used when checking that a distribution sums to one.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// One primitive action: an index into a discrete alphabet or a real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionSymbol {
    Discrete(u32),
    Continuous(Vec<f64>),
}

impl ActionSymbol {
    pub fn as_ref(&self) -> ActionRef<'_> {
        match self {
            ActionSymbol::Discrete(a) => ActionRef::Discrete(*a),
            ActionSymbol::Continuous(v) => ActionRef::Continuous(v),
        }
    }
}

/// Borrowed view of a single action, handed to environments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionRef<'a> {
    Discrete(u32),
    Continuous(&'a [f64]),
}

impl ActionRef<'_> {
    pub fn to_owned(self) -> ActionSymbol {
        match self {
            ActionRef::Discrete(a) => ActionSymbol::Discrete(a),
            ActionRef::Continuous(v) => ActionSymbol::Continuous(v.to_vec()),
        }
    }
}

/// A homogeneous action sequence. Keeping the two kinds in separate variants
/// makes mixed trajectories unrepresentable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionSeq {
    Discrete(Vec<u32>),
    Continuous(Vec<Vec<f64>>),
}

impl ActionSeq {
    pub fn len(&self) -> usize {
        match self {
            ActionSeq::Discrete(a) => a.len(),
            ActionSeq::Continuous(a) => a.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Option<ActionRef<'_>> {
        match self {
            ActionSeq::Discrete(a) => a.get(i).map(|&x| ActionRef::Discrete(x)),
            ActionSeq::Continuous(a) => a.get(i).map(|x| ActionRef::Continuous(x)),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSeq::Discrete(_))
    }

    pub fn as_discrete(&self) -> Result<&[u32]> {
        match self {
            ActionSeq::Discrete(a) => Ok(a),
            ActionSeq::Continuous(_) => {
                Err(Error::TypeMismatch("expected discrete actions".into()))
            }
        }
    }

    pub fn as_continuous(&self) -> Result<&[Vec<f64>]> {
        match self {
            ActionSeq::Continuous(a) => Ok(a),
            ActionSeq::Discrete(_) => {
                Err(Error::TypeMismatch("expected continuous actions".into()))
            }
        }
    }

    /// An empty sequence of the same kind.
    pub fn empty_like(&self) -> ActionSeq {
        match self {
            ActionSeq::Discrete(_) => ActionSeq::Discrete(Vec::new()),
            ActionSeq::Continuous(_) => ActionSeq::Continuous(Vec::new()),
        }
    }

    /// Appends one action; the kind must match.
    pub fn push(&mut self, action: ActionRef<'_>) -> Result<()> {
        match (self, action) {
            (ActionSeq::Discrete(v), ActionRef::Discrete(a)) => v.push(a),
            (ActionSeq::Continuous(v), ActionRef::Continuous(a)) => v.push(a.to_vec()),
            _ => return Err(Error::TypeMismatch("cannot mix action kinds".into())),
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = ActionRef<'_>> {
        (0..self.len()).filter_map(move |i| self.get(i))
    }
}

/// A recorded rollout. `dt` is only meaningful for continuous actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub dt: Option<f64>,
    pub actions: ActionSeq,
}

impl Trajectory {
    pub fn discrete(task_id: impl Into<String>, actions: Vec<u32>) -> Self {
        Trajectory {
            task_id: task_id.into(),
            dt: None,
            actions: ActionSeq::Discrete(actions),
        }
    }

    pub fn continuous(task_id: impl Into<String>, dt: f64, actions: Vec<Vec<f64>>) -> Self {
        Trajectory {
            task_id: task_id.into(),
            dt: Some(dt),
            actions: ActionSeq::Continuous(actions),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Checks the recorded-rollout invariants: finite values, positive `dt`
    /// for continuous data.
    pub fn validate(&self) -> Result<()> {
        if let ActionSeq::Continuous(v) = &self.actions {
            match self.dt {
                Some(dt) if dt > 0.0 && dt.is_finite() => {}
                _ => return Err(Error::InvalidParams("continuous trajectory needs dt > 0".into())),
            }
            if v.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParams("non-finite action value".into()));
            }
        }
        Ok(())
    }
}

/// Reads a JSON Lines corpus, one trajectory per non-blank line.
pub fn read_jsonl(text: &str) -> anyhow::Result<Vec<Trajectory>> {
    use anyhow::Context;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory =
            serde_json::from_str(line).with_context(|| format!("line {}", i + 1))?;
        t.validate().with_context(|| format!("line {}", i + 1))?;
        out.push(t);
    }
    Ok(out)
}

pub fn write_jsonl(trajectories: &[Trajectory]) -> String {
    let mut s = String::new();
    for t in trajectories {
        s.push_str(&serde_json::to_string(t).expect("trajectory serializes"));
        s.push('\n');
    }
    s
}

/// Extracts the discrete action lists from a corpus.
pub fn discrete_corpus(trajectories: &[Trajectory]) -> Result<Vec<&[u32]>> {
    trajectories.iter().map(|t| t.actions.as_discrete()).collect()
}

pub type MacroId = usize;

/// A fixed open-loop action sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Macro {
    pub id: MacroId,
    pub actions: ActionSeq,
}

impl Macro {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Duration in seconds for a continuous macro sampled every `dt`.
    pub fn duration(&self, dt: f64) -> f64 {
        self.len() as f64 * dt
    }
}

/// Exact element-wise equality of two discrete macros.
pub fn macro_equal_discrete(m1: &Macro, m2: &Macro) -> Result<bool> {
    match (&m1.actions, &m2.actions) {
        (ActionSeq::Discrete(a), ActionSeq::Discrete(b)) => Ok(a == b),
        _ => Err(Error::TypeMismatch("macro_equal_discrete needs two discrete macros".into())),
    }
}

/// A finite probability distribution over keys, in insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution<K> {
    entries: Vec<(K, f64)>,
}

pub type MacroDistribution = Distribution<MacroId>;

impl<K: PartialEq> Distribution<K> {
    /// Builds a distribution from explicit probabilities, checking that they
    /// are non-negative and sum to one.
    pub fn from_probs(entries: Vec<(K, f64)>) -> Result<Self> {
        if entries.iter().any(|(_, p)| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParams("negative or non-finite probability".into()));
        }
        let total: f64 = entries.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return Err(Error::EmptyDistribution);
        }
        Ok(Distribution { entries })
    }

    pub fn uniform(keys: Vec<K>) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        let p = 1.0 / keys.len() as f64;
        Ok(Distribution {
            entries: keys.into_iter().map(|k| (k, p)).collect(),
        })
    }

    pub fn prob(&self, key: &K) -> f64 {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn entries(&self) -> &[(K, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn map_keys<J>(self, mut f: impl FnMut(K) -> J) -> Distribution<J> {
        Distribution {
            entries: self.entries.into_iter().map(|(k, p)| (f(k), p)).collect(),
        }
    }

    /// Keeps only strictly positive entries.
    pub fn support(self) -> Distribution<K> {
        Distribution {
            entries: self.entries.into_iter().filter(|(_, p)| *p > 0.0).collect(),
        }
    }
}

/// `p_i = count_i / Σ counts`.
pub fn normalize_counts<K>(counts: impl IntoIterator<Item = (K, u64)>) -> Result<Distribution<K>> {
    let counts: Vec<(K, u64)> = counts.into_iter().collect();
    let total: u64 = counts.iter().map(|(_, c)| c).sum();
    if total == 0 {
        return Err(Error::EmptyDistribution);
    }
    let total = total as f64;
    Ok(Distribution {
        entries: counts
            .into_iter()
            .map(|(k, c)| (k, c as f64 / total))
            .collect(),
    })
}

/// A binary code word, serialized as a string of `0`/`1` characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BitString(pub Vec<bool>);

impl BitString {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_prefix_of(&self, other: &BitString) -> bool {
        other.0.starts_with(&self.0)
    }

    pub fn pushed(&self, bit: bool) -> BitString {
        let mut v = self.0.clone();
        v.push(bit);
        BitString(v)
    }

    /// Big-endian fixed-width binary representation of `value`.
    pub fn fixed_width(value: u64, width: u32) -> BitString {
        BitString((0..width).rev().map(|b| (value >> b) & 1 == 1).collect())
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::InvalidParams(format!("bad bit character {c:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BitString)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodebookKind {
    Huffman,
    Lzw,
}

/// Whether a codebook symbol came from the primitive alphabet or was
/// extracted as a macro.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolOrigin {
    Primitive,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookEntry {
    /// The action sequence this symbol stands for (length 1 for primitives).
    pub symbol: Vec<u32>,
    pub code: BitString,
    pub prob: f64,
    pub origin: SymbolOrigin,
}

/// Mapping from symbols (primitives and macros) to binary codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub kind: CodebookKind,
    pub b_limit: Option<u32>,
    pub entries: Vec<CodebookEntry>,
}

impl Codebook {
    pub fn macros(&self) -> impl Iterator<Item = &CodebookEntry> {
        self.entries.iter().filter(|e| e.origin == SymbolOrigin::Macro)
    }

    /// Length of the longest macro code word.
    pub fn c_max(&self) -> usize {
        self.macros().map(|e| e.code.len()).max().unwrap_or(0)
    }

    pub fn is_prefix_free(&self) -> bool {
        is_prefix_free(self.entries.iter().map(|e| &e.code))
    }

    pub fn has_duplicate_symbols(&self) -> bool {
        let mut syms: Vec<&Vec<u32>> = self.entries.iter().map(|e| &e.symbol).collect();
        syms.sort();
        syms.windows(2).any(|w| w[0] == w[1])
    }

    /// Validates the kind-specific invariants.
    pub fn validate(&self) -> Result<()> {
        if self.has_duplicate_symbols() {
            return Err(Error::InvalidParams("duplicate codebook symbols".into()));
        }
        match self.kind {
            CodebookKind::Huffman => {
                if !self.is_prefix_free() {
                    return Err(Error::InvalidParams("codes are not prefix-free".into()));
                }
            }
            CodebookKind::Lzw => {
                let b = self
                    .b_limit
                    .ok_or_else(|| Error::InvalidParams("lzw codebook without b_limit".into()))?;
                if self.entries.iter().any(|e| e.code.len() != b as usize)
                    || self.entries.len() as u128 > 1u128 << b
                {
                    return Err(Error::InvalidParams("lzw codes not fixed width".into()));
                }
            }
        }
        Ok(())
    }
}

/// Pairwise scan: no code is a prefix of another.
pub fn is_prefix_free<'a>(codes: impl IntoIterator<Item = &'a BitString>) -> bool {
    let codes: Vec<&BitString> = codes.into_iter().collect();
    for (i, a) in codes.iter().enumerate() {
        for (j, b) in codes.iter().enumerate() {
            if i != j && a.is_prefix_of(b) {
                return false;
            }
        }
    }
    true
}

/// One selectable unit of an extended action set.
#[derive(Debug, Clone, Copy)]
pub enum ExtendedAction<'a> {
    Primitive(&'a ActionSymbol),
    Macro(&'a Macro),
}

/// `A' = A ∪ M` plus the distribution that exploration samples from.
///
/// Extended action ids are `0..primitives.len()` for primitives followed by
/// one id per macro. The exploration pool is a distribution over those ids.
#[derive(Debug, Clone)]
pub struct ExtendedActionSet {
    primitives: Vec<ActionSymbol>,
    macros: Vec<Macro>,
    pool: Distribution<usize>,
    sampler: WeightedIndex<f64>,
    pool_ids: Vec<usize>,
}

impl ExtendedActionSet {
    pub fn new(
        primitives: Vec<ActionSymbol>,
        macros: Vec<Macro>,
        pool: Distribution<usize>,
    ) -> Result<Self> {
        if primitives.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        let mut ids: Vec<MacroId> = macros.iter().map(|m| m.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParams("duplicate macro ids".into()));
        }
        if macros.iter().any(|m| m.is_empty()) {
            return Err(Error::InvalidParams("empty macro".into()));
        }
        let n = primitives.len() + macros.len();
        let pool = pool.support();
        if pool.is_empty() || pool.entries().iter().any(|(id, _)| *id >= n) {
            return Err(Error::InvalidParams("exploration pool outside action set".into()));
        }
        let pool_ids = pool.entries().iter().map(|(id, _)| *id).collect();
        let sampler = WeightedIndex::new(pool.entries().iter().map(|(_, p)| *p))
            .map_err(|e| Error::InvalidParams(e.to_string()))?;
        Ok(ExtendedActionSet {
            primitives,
            macros,
            pool,
            sampler,
            pool_ids,
        })
    }

    /// Primitives only, exploring uniformly over them (plain ε-greedy).
    pub fn primitives_only(primitives: Vec<ActionSymbol>) -> Result<Self> {
        let pool = Distribution::uniform((0..primitives.len()).collect())?;
        Self::new(primitives, Vec::new(), pool)
    }

    pub fn len(&self) -> usize {
        self.primitives.len() + self.macros.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn primitives(&self) -> &[ActionSymbol] {
        &self.primitives
    }

    pub fn macros(&self) -> &[Macro] {
        &self.macros
    }

    pub fn pool(&self) -> &Distribution<usize> {
        &self.pool
    }

    pub fn action(&self, id: usize) -> ExtendedAction<'_> {
        if id < self.primitives.len() {
            ExtendedAction::Primitive(&self.primitives[id])
        } else {
            ExtendedAction::Macro(&self.macros[id - self.primitives.len()])
        }
    }

    /// Draws an extended action id from the exploration pool.
    pub fn sample_pool<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.pool_ids[self.sampler.sample(rng)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dm(id: usize, a: &[u32]) -> Macro {
        Macro {
            id,
            actions: ActionSeq::Discrete(a.to_vec()),
        }
    }

    #[test]
    fn normalize_worked_example() {
        let d = normalize_counts(vec![("m1", 2), ("m2", 1), ("m3", 1)]).unwrap();
        assert_eq!(d.prob(&"m1"), 0.5);
        assert_eq!(d.prob(&"m2"), 0.25);
        assert_eq!(d.prob(&"m3"), 0.25);
    }

    #[test]
    fn normalize_single_and_pair() {
        let d = normalize_counts(vec![("m1", 7)]).unwrap();
        assert_eq!(d.prob(&"m1"), 1.0);
        let d = normalize_counts(vec![("m1", 3), ("m2", 1)]).unwrap();
        assert_eq!(d.prob(&"m1"), 0.75);
        assert_eq!(d.prob(&"m2"), 0.25);
    }

    #[test]
    fn normalize_all_zero_is_error() {
        let err = normalize_counts(vec![("a", 0u64), ("b", 0)]).unwrap_err();
        assert_eq!(err.to_string(), "empty distribution");
        assert!(normalize_counts(Vec::<(u8, u64)>::new()).is_err());
    }

    #[test]
    fn discrete_equality_examples() {
        let r = 0;
        let d = 1;
        assert!(macro_equal_discrete(&dm(0, &[r, r, r]), &dm(1, &[r, r, r])).unwrap());
        assert!(!macro_equal_discrete(&dm(0, &[r, r, r]), &dm(1, &[r, r])).unwrap());
        assert!(!macro_equal_discrete(&dm(0, &[r, d]), &dm(1, &[d, r])).unwrap());
    }

    #[test]
    fn discrete_equality_rejects_continuous() {
        let c = Macro {
            id: 2,
            actions: ActionSeq::Continuous(vec![vec![0.5]]),
        };
        let err = macro_equal_discrete(&dm(0, &[1]), &c).unwrap_err();
        assert!(err.to_string().starts_with("type mismatch"));
    }

    #[test]
    fn bitstring_text_round_trip() {
        let b: BitString = "0101".parse().unwrap();
        assert_eq!(b.to_string(), "0101");
        assert_eq!(BitString::fixed_width(5, 4).to_string(), "0101");
        assert!("012".parse::<BitString>().is_err());
    }

    #[test]
    fn prefix_free_scan() {
        let codes: Vec<BitString> = ["0", "10", "11"].iter().map(|s| s.parse().unwrap()).collect();
        assert!(is_prefix_free(&codes));
        let codes: Vec<BitString> = ["0", "01", "11"].iter().map(|s| s.parse().unwrap()).collect();
        assert!(!is_prefix_free(&codes));
    }

    #[test]
    fn jsonl_schema() {
        let text = r#"{"task_id":"t0","dt":null,"actions":[0,1,2]}
{"task_id":"t1","dt":1.0,"actions":[[0.5],[-1.0]]}
"#;
        let ts = read_jsonl(text).unwrap();
        assert_eq!(ts[0].actions, ActionSeq::Discrete(vec![0, 1, 2]));
        assert_eq!(ts[1].actions, ActionSeq::Continuous(vec![vec![0.5], vec![-1.0]]));
        assert_eq!(read_jsonl(&write_jsonl(&ts)).unwrap(), ts);
        assert!(read_jsonl(r#"{"task_id":"x","dt":null,"actions":[[1.0]]}"#).is_err());
    }

    #[test]
    fn extended_set_rejects_bad_pool() {
        let prims = vec![ActionSymbol::Discrete(0), ActionSymbol::Discrete(1)];
        let pool = Distribution::uniform(vec![5]).unwrap();
        assert!(ExtendedActionSet::new(prims.clone(), vec![], pool).is_err());
        assert!(ExtendedActionSet::primitives_only(vec![]).is_err());
        let set = ExtendedActionSet::new(
            prims,
            vec![dm(0, &[0, 0])],
            Distribution::from_probs(vec![(2, 1.0), (0, 0.0)]).unwrap(),
        )
        .unwrap();
        assert_eq!(set.pool().len(), 1);
        assert!(matches!(set.action(2), ExtendedAction::Macro(_)));
    }

    proptest! {
        #[test]
        fn normalized_counts_sum_to_one_and_keep_order(counts in prop::collection::vec(0u64..1000, 1..20)) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let d = normalize_counts(counts.iter().copied().enumerate()).unwrap();
            prop_assert!((d.total() - 1.0).abs() <= PROB_TOLERANCE);
            for (i, &ci) in counts.iter().enumerate() {
                for (j, &cj) in counts.iter().enumerate() {
                    if ci >= cj {
                        prop_assert!(d.prob(&i) >= d.prob(&j));
                    }
                }
            }
        }

        #[test]
        fn discrete_equality_is_an_equivalence(
            a in prop::collection::vec(0u32..3, 1..4),
            b in prop::collection::vec(0u32..3, 1..4),
            c in prop::collection::vec(0u32..3, 1..4),
        ) {
            let (a, b, c) = (dm(0, &a), dm(1, &b), dm(2, &c));
            let eq = |x: &Macro, y: &Macro| macro_equal_discrete(x, y).unwrap();
            prop_assert!(eq(&a, &a));
            prop_assert_eq!(eq(&a, &b), eq(&b, &a));
            if eq(&a, &b) && eq(&b, &c) {
                prop_assert!(eq(&a, &c));
            }
        }
    }
}
