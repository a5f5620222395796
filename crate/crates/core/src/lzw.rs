//! Macro extraction with LZW dictionary growth.
//!
//! The dictionary starts with the primitive alphabet and grows while the
//! corpus is compressed, until `2^b_limit` entries are stored. Symbol
//! probabilities come from greedy longest-match re-parsing of the corpus.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::huffman::{check_lambda, default_lambda};
use crate::trie::SymbolTrie;
use crate::types::{
    normalize_counts, ActionSeq, BitString, Codebook, CodebookEntry, CodebookKind, Distribution,
    Macro, SymbolOrigin,
};

/// Fixed-width LZW dictionary. Entries `0..alphabet_size` are the
/// primitives; every later entry extends an earlier one by one primitive.
#[derive(Debug, Clone)]
pub struct LzwCodebook {
    b_limit: u32,
    alphabet_size: usize,
    entries: Vec<Vec<u32>>,
    trie: SymbolTrie,
}

fn capacity(b_limit: u32) -> u128 {
    if b_limit >= 127 {
        u128::MAX
    } else {
        1u128 << b_limit
    }
}

/// Smallest bit width able to index `alphabet_size` symbols (at least 1).
pub fn min_b_limit(alphabet_size: usize) -> u32 {
    let mut b = 1;
    while capacity(b) < alphabet_size as u128 {
        b += 1;
    }
    b
}

impl LzwCodebook {
    /// A dictionary holding only the primitives.
    pub fn primitives(alphabet_size: usize, b_limit: u32) -> Result<Self> {
        if alphabet_size == 0 || capacity(b_limit) < alphabet_size as u128 {
            return Err(Error::CapacityBelowAlphabet {
                b_limit,
                alphabet: alphabet_size,
            });
        }
        let mut trie = SymbolTrie::new();
        let entries: Vec<Vec<u32>> = (0..alphabet_size as u32).map(|a| vec![a]).collect();
        for (i, e) in entries.iter().enumerate() {
            trie.insert(e, i);
        }
        Ok(LzwCodebook {
            b_limit,
            alphabet_size,
            entries,
            trie,
        })
    }

    pub fn b_limit(&self) -> u32 {
        self.b_limit
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn entries(&self) -> &[Vec<u32>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() as u128 >= capacity(self.b_limit)
    }

    pub fn index_of(&self, seq: &[u32]) -> Option<usize> {
        self.trie.get(seq)
    }

    fn push(&mut self, seq: Vec<u32>) {
        self.trie.insert(&seq, self.entries.len());
        self.entries.push(seq);
    }

    /// Greedy longest-match parse of one trajectory.
    pub fn parse(&self, tau: &[u32]) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tau.len() {
            let (len, e) = self
                .trie
                .longest_match(tau, i)
                .ok_or(Error::Uncoverable(i))?;
            out.push(e);
            i += len;
        }
        Ok(out)
    }

    pub fn expand(&self, parse: &[usize]) -> Vec<u32> {
        parse.iter().flat_map(|&e| self.entries[e].iter().copied()).collect()
    }

    /// Every grown entry equals an earlier entry plus one primitive.
    pub fn is_sound(&self) -> bool {
        self.entries.iter().enumerate().all(|(i, e)| {
            if i < self.alphabet_size {
                e.len() == 1 && e[0] as usize == i
            } else {
                e.len() >= 2
                    && (e[e.len() - 1] as usize) < self.alphabet_size
                    && self
                        .index_of(&e[..e.len() - 1])
                        .is_some_and(|p| p < i)
            }
        }) && self.entries.len() as u128 <= capacity(self.b_limit)
    }

    /// Fixed-width codebook with probabilities taken from `dist` (indexed
    /// by entry).
    pub fn to_codebook(&self, dist: &Distribution<usize>) -> Codebook {
        Codebook {
            kind: CodebookKind::Lzw,
            b_limit: Some(self.b_limit),
            entries: self
                .entries
                .iter()
                .enumerate()
                .map(|(i, s)| CodebookEntry {
                    symbol: s.clone(),
                    code: BitString::fixed_width(i as u64, self.b_limit),
                    prob: dist.prob(&i),
                    origin: if i < self.alphabet_size {
                        SymbolOrigin::Primitive
                    } else {
                        SymbolOrigin::Macro
                    },
                })
                .collect(),
        }
    }

    /// Rebuilds a dictionary from an ordered entry list (e.g. a dump).
    pub fn from_entries(alphabet_size: usize, b_limit: u32, entries: Vec<Vec<u32>>) -> Result<Self> {
        let mut cb = Self::primitives(alphabet_size, b_limit)?;
        if entries.len() < alphabet_size || entries[..alphabet_size] != cb.entries[..] {
            return Err(Error::InvalidParams("dictionary must start with the primitives".into()));
        }
        for e in entries.into_iter().skip(alphabet_size) {
            cb.push(e);
        }
        if !cb.is_sound() {
            return Err(Error::InvalidParams("unsound lzw dictionary".into()));
        }
        Ok(cb)
    }
}

/// Dictionary plus the code sequence emitted while building it.
#[derive(Debug, Clone)]
pub struct LzwBuild {
    pub codebook: LzwCodebook,
    pub emissions: Vec<Vec<usize>>,
}

/// Standard LZW growth over each trajectory in order. The working string
/// resets at trajectory boundaries; growth stops once the dictionary is full.
pub fn lzw_build(corpus: &[&[u32]], alphabet_size: usize, b_limit: u32) -> Result<LzwBuild> {
    let mut cb = LzwCodebook::primitives(alphabet_size, b_limit)?;
    let mut emissions = Vec::with_capacity(corpus.len());
    for tau in corpus {
        let mut out = Vec::new();
        let Some((&first, rest)) = tau.split_first() else {
            emissions.push(out);
            continue;
        };
        if first as usize >= alphabet_size {
            return Err(Error::InvalidParams(format!("action {first} outside alphabet")));
        }
        let mut w = vec![first];
        for &a in rest {
            if a as usize >= alphabet_size {
                return Err(Error::InvalidParams(format!("action {a} outside alphabet")));
            }
            w.push(a);
            if cb.index_of(&w).is_none() {
                let grown = w.clone();
                w.pop();
                out.push(cb.index_of(&w).expect("working string is in the dictionary"));
                if !cb.is_full() {
                    cb.push(grown);
                }
                w.clear();
                w.push(a);
            }
        }
        out.push(cb.index_of(&w).expect("working string is in the dictionary"));
        emissions.push(out);
    }
    Ok(LzwBuild {
        codebook: cb,
        emissions,
    })
}

/// Number of greedy matches of each entry over the corpus, indexed by entry.
pub fn lzw_parse_counts(corpus: &[&[u32]], codebook: &LzwCodebook) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; codebook.len()];
    for tau in corpus {
        for e in codebook.parse(tau)? {
            counts[e] += 1;
        }
    }
    Ok(counts)
}

/// Greedy-parse symbol count times `b_limit`.
pub fn lzw_encoded_bits(corpus: &[&[u32]], codebook: &LzwCodebook) -> Result<u64> {
    let mut symbols = 0u64;
    for tau in corpus {
        symbols += codebook.parse(tau)?.len() as u64;
    }
    Ok(symbols * codebook.b_limit() as u64)
}

fn mean_bits(corpus: &[&[u32]], codebook: &LzwCodebook) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::NoData);
    }
    Ok(lzw_encoded_bits(corpus, codebook)? as f64 / corpus.len() as f64)
}

/// `(1/|T|) Σ_τ bits(τ) + λ^{b_limit}` with the dictionary grown on `corpus`.
pub fn lzw_objective(corpus: &[&[u32]], alphabet_size: usize, b_limit: u32, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let build = lzw_build(corpus, alphabet_size, b_limit)?;
    Ok(mean_bits(corpus, &build.codebook)? + lambda.powi(b_limit as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LzwSearch {
    pub b_max: u32,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

impl Default for LzwSearch {
    fn default() -> Self {
        LzwSearch {
            b_max: 6,
            lambda: default_lambda(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LzwSweepRow {
    pub b_limit: u32,
    pub mean_bits: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct LzwSearchResult {
    pub b_limit: u32,
    pub codebook: LzwCodebook,
    /// Every dictionary entry, primitives included; macro id = entry index.
    pub macros: Vec<Macro>,
    /// Greedy match frequencies; zero-match entries keep probability 0.
    pub distribution: Distribution<usize>,
    pub objective: f64,
    pub sweep: Vec<LzwSweepRow>,
}

impl LzwSearchResult {
    /// Sweep report with columns `b_limit,mean_bits,objective`.
    pub fn sweep_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.sweep {
            w.serialize(row).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
    }

    pub fn to_codebook(&self) -> Codebook {
        self.codebook.to_codebook(&self.distribution)
    }
}

/// Evaluates `b_limit = min_b_limit(|A|) ..= b_max`, ties toward smaller widths.
pub fn search_b_limit(corpus: &[&[u32]], alphabet_size: usize, search: &LzwSearch) -> Result<LzwSearchResult> {
    check_lambda(search.lambda)?;
    let b_min = min_b_limit(alphabet_size);
    if search.b_max < b_min {
        return Err(Error::CapacityBelowAlphabet {
            b_limit: search.b_max,
            alphabet: alphabet_size,
        });
    }
    let evaluated: Vec<Result<(LzwSweepRow, LzwCodebook)>> = (b_min..=search.b_max)
        .into_par_iter()
        .map(|b| {
            let build = lzw_build(corpus, alphabet_size, b)?;
            let mean_bits = mean_bits(corpus, &build.codebook)?;
            let objective = mean_bits + search.lambda.powi(b as i32);
            Ok((
                LzwSweepRow {
                    b_limit: b,
                    mean_bits,
                    objective,
                },
                build.codebook,
            ))
        })
        .collect();
    let mut evaluated = evaluated.into_iter().collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, (row, _)) in evaluated.iter().enumerate() {
        if row.objective < evaluated[best].0.objective {
            best = i;
        }
    }
    let sweep: Vec<LzwSweepRow> = evaluated.iter().map(|(r, _)| r.clone()).collect();
    let (row, codebook) = evaluated.swap_remove(best);
    let counts = lzw_parse_counts(corpus, &codebook)?;
    let distribution = normalize_counts(counts.into_iter().enumerate())?;
    let macros = codebook
        .entries()
        .iter()
        .enumerate()
        .map(|(id, s)| Macro {
            id,
            actions: ActionSeq::Discrete(s.clone()),
        })
        .collect();
    Ok(LzwSearchResult {
        b_limit: row.b_limit,
        codebook,
        macros,
        distribution,
        objective: row.objective,
        sweep,
    })
}
