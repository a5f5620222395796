//! Macro extraction with Huffman coding.
//!
//! Candidate macros are all length-`l` windows of the corpus. The `n` most
//! frequent become a Huffman codebook; the primitive alphabet is grafted
//! below the deepest macro leaf so every primitive code is strictly longer
//! than every macro code. The `(n, l)` grid is searched for the minimum of
//! mean DP-encoded bits plus `λ^{c_max}`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trie::SymbolTrie;
use crate::types::{
    normalize_counts, ActionSeq, BitString, Codebook, CodebookEntry, CodebookKind, Macro,
    MacroDistribution, SymbolOrigin,
};

/// Occurrence counts of every length-`l` window in a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTable {
    pub l: usize,
    pub windows: BTreeMap<Vec<u32>, u64>,
    pub total_windows: u64,
}

impl CandidateTable {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn count(&self, window: &[u32]) -> u64 {
        self.windows.get(window).copied().unwrap_or(0)
    }
}

/// Counts all overlapping (stride 1) windows of length `l`.
pub fn enumerate_candidates(corpus: &[&[u32]], l: usize) -> Result<CandidateTable> {
    if corpus.is_empty() {
        return Err(Error::NoData);
    }
    if l == 0 {
        return Err(Error::InvalidParams("macro length must be >= 1".into()));
    }
    let mut windows = BTreeMap::new();
    let mut total = 0;
    for tau in corpus {
        for w in tau.windows(l) {
            *windows.entry(w.to_vec()).or_insert(0) += 1;
            total += 1;
        }
    }
    Ok(CandidateTable {
        l,
        windows,
        total_windows: total,
    })
}

/// Keeps the `n` most frequent windows, ties broken toward the
/// lexicographically smaller sequence, and renormalizes their counts.
pub fn top_n_macros(table: &CandidateTable, n: usize) -> Result<(Vec<Macro>, MacroDistribution)> {
    if n == 0 {
        return Err(Error::InvalidParams("n must be >= 1".into()));
    }
    if table.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut ranked: Vec<(&Vec<u32>, u64)> = table.windows.iter().map(|(k, &c)| (k, c)).collect();
    // BTreeMap order is already lexicographic, so a stable sort on count keeps it for ties.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    ranked.truncate(n);
    let macros: Vec<Macro> = ranked
        .iter()
        .enumerate()
        .map(|(id, (seq, _))| Macro {
            id,
            actions: ActionSeq::Discrete((*seq).clone()),
        })
        .collect();
    let dist = normalize_counts(ranked.iter().enumerate().map(|(id, (_, c))| (id, *c)))?;
    Ok((macros, dist))
}

#[derive(Debug)]
struct HeapItem {
    weight: f64,
    order: usize,
    node: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    // Reversed: BinaryHeap is a max-heap and we pop the lightest first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .weight
            .total_cmp(&self.weight)
            .then_with(|| other.order.cmp(&self.order))
    }
}

/// Huffman code words for the given weights, in input order. A single
/// symbol gets the empty code.
pub fn huffman_codes(weights: &[f64]) -> Vec<BitString> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    // children[i] for internal nodes i >= n
    let mut children: Vec<(usize, usize)> = Vec::with_capacity(n.saturating_sub(1));
    let mut heap: BinaryHeap<HeapItem> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| HeapItem {
            weight: w,
            order: i,
            node: i,
        })
        .collect();
    let mut order = n;
    while heap.len() > 1 {
        let a = heap.pop().expect("heap has two items");
        let b = heap.pop().expect("heap has two items");
        children.push((a.node, b.node));
        heap.push(HeapItem {
            weight: a.weight + b.weight,
            order,
            node: n + children.len() - 1,
        });
        order += 1;
    }
    let root = heap.pop().expect("non-empty").node;
    let mut codes = vec![BitString::default(); n];
    let mut stack = vec![(root, BitString::default())];
    while let Some((node, code)) = stack.pop() {
        if node < n {
            codes[node] = code;
        } else {
            let (l, r) = children[node - n];
            stack.push((l, code.pushed(false)));
            stack.push((r, code.pushed(true)));
        }
    }
    codes
}

/// A Huffman codebook over macros with the primitives grafted underneath,
/// plus the macro-only code lengths before grafting.
#[derive(Debug, Clone, PartialEq)]
pub struct HuffmanCodebook {
    pub codebook: Codebook,
    /// Code length of each macro in the macro-only Huffman tree, in macro order.
    pub tree_code_lengths: Vec<usize>,
}

fn ceil_log2(k: usize) -> u32 {
    if k <= 1 {
        0
    } else {
        usize::BITS - (k - 1).leading_zeros()
    }
}

/// Builds the grafted codebook over `macros ∪ {0..alphabet_size}`.
///
/// The deepest macro leaf (least probable on ties, then latest) becomes an
/// internal node: its macro moves to the `0` child and the primitives not
/// already present as length-1 macros get fixed-width codes under the `1`
/// child.
pub fn build_huffman_codebook(
    macros: &[Macro],
    dist: &MacroDistribution,
    alphabet_size: usize,
) -> Result<HuffmanCodebook> {
    if macros.is_empty() {
        return Err(Error::NeedMacro);
    }
    let seqs: Vec<&[u32]> = macros
        .iter()
        .map(|m| m.actions.as_discrete())
        .collect::<Result<_>>()?;
    let probs: Vec<f64> = macros.iter().map(|m| dist.prob(&m.id)).collect();
    let mut codes = huffman_codes(&probs);
    let tree_code_lengths: Vec<usize> = codes.iter().map(BitString::len).collect();

    let covered = |a: u32| seqs.iter().any(|s| s.len() == 1 && s[0] == a);
    let primitives: Vec<u32> = (0..alphabet_size as u32).filter(|&a| !covered(a)).collect();

    let mut entries = Vec::with_capacity(macros.len() + primitives.len());
    if !primitives.is_empty() {
        let graft = (0..codes.len())
            .max_by(|&i, &j| {
                codes[i]
                    .len()
                    .cmp(&codes[j].len())
                    .then_with(|| probs[j].total_cmp(&probs[i]))
                    .then_with(|| i.cmp(&j))
            })
            .expect("at least one macro");
        let base = codes[graft].clone();
        codes[graft] = base.pushed(false);
        let width = ceil_log2(primitives.len()).max(1);
        let sub = base.pushed(true);
        for (k, &a) in primitives.iter().enumerate() {
            let mut code = sub.clone();
            code.0.extend(BitString::fixed_width(k as u64, width).0);
            entries.push(CodebookEntry {
                symbol: vec![a],
                code,
                prob: 0.0,
                origin: SymbolOrigin::Primitive,
            });
        }
    }
    let macro_entries = seqs.iter().zip(codes).zip(&probs).map(|((s, code), &p)| CodebookEntry {
        symbol: s.to_vec(),
        code,
        prob: p,
        origin: SymbolOrigin::Macro,
    });
    let mut all: Vec<CodebookEntry> = macro_entries.collect();
    all.extend(entries);
    let codebook = Codebook {
        kind: CodebookKind::Huffman,
        b_limit: None,
        entries: all,
    };
    codebook.validate()?;
    Ok(HuffmanCodebook {
        codebook,
        tree_code_lengths,
    })
}

/// Result of the minimum-bit decomposition of one trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    pub bits: usize,
    /// Codebook entry indices, in trajectory order.
    pub parse: Vec<usize>,
}

/// Precomputed lookup structure for repeated DP encodings with one codebook.
#[derive(Debug, Clone)]
pub struct CodebookIndex<'a> {
    codebook: &'a Codebook,
    trie: SymbolTrie,
}

impl<'a> CodebookIndex<'a> {
    pub fn new(codebook: &'a Codebook) -> Self {
        let mut trie = SymbolTrie::new();
        for (i, e) in codebook.entries.iter().enumerate() {
            trie.insert(&e.symbol, i);
        }
        CodebookIndex { codebook, trie }
    }

    /// `cost[i] = min_s |code(s)| + cost[i + |s|]` over symbols matching at `i`.
    pub fn encode(&self, tau: &[u32]) -> Result<Encoding> {
        let n = tau.len();
        let mut cost = vec![usize::MAX; n + 1];
        let mut choice = vec![(0usize, 0usize); n];
        cost[n] = 0;
        for i in (0..n).rev() {
            for (len, e) in self.trie.matches_at(tau, i) {
                let rest = cost[i + len];
                if rest == usize::MAX {
                    continue;
                }
                let c = self.codebook.entries[e].code.len() + rest;
                if c < cost[i] {
                    cost[i] = c;
                    choice[i] = (len, e);
                }
            }
        }
        if cost[0] == usize::MAX {
            // furthest position any partial parse reaches
            let mut reach = vec![false; n + 1];
            reach[0] = true;
            let mut pos = 0;
            for i in 0..n {
                if reach[i] {
                    pos = i;
                    for (len, _) in self.trie.matches_at(tau, i) {
                        reach[i + len] = true;
                    }
                }
            }
            return Err(Error::Uncoverable(pos));
        }
        let mut parse = Vec::new();
        let mut i = 0;
        while i < n {
            let (len, e) = choice[i];
            parse.push(e);
            i += len;
        }
        Ok(Encoding {
            bits: cost[0],
            parse,
        })
    }

    pub fn expand(&self, parse: &[usize]) -> Vec<u32> {
        parse
            .iter()
            .flat_map(|&e| self.codebook.entries[e].symbol.iter().copied())
            .collect()
    }
}

/// Minimum number of bits over all exact decompositions of `tau`.
pub fn min_bits_encoding(tau: &[u32], codebook: &Codebook) -> Result<Encoding> {
    CodebookIndex::new(codebook).encode(tau)
}

/// Mean DP-encoded bits over the corpus.
pub fn mean_encoded_bits(codebook: &Codebook, corpus: &[&[u32]]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::NoData);
    }
    let index = CodebookIndex::new(codebook);
    let mut total = 0usize;
    for tau in corpus {
        total += index.encode(tau)?.bits;
    }
    Ok(total as f64 / corpus.len() as f64)
}

/// `(1/|T|) Σ_τ B(τ) + λ^{c_max}`.
pub fn huffman_objective(codebook: &Codebook, corpus: &[&[u32]], lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(mean_encoded_bits(codebook, corpus)? + lambda.powi(codebook.c_max() as i32))
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("lambda must be > 0, got {lambda}")))
    }
}

/// Grid bounds for the `(n, l)` search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuffmanSearch {
    pub n_max: usize,
    pub l_min: usize,
    pub l_max: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

pub(crate) fn default_lambda() -> f64 {
    2.0
}

impl Default for HuffmanSearch {
    fn default() -> Self {
        HuffmanSearch {
            n_max: 16,
            l_min: 2,
            l_max: 5,
            lambda: default_lambda(),
        }
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HuffmanGridRow {
    pub n: usize,
    pub l: usize,
    pub mean_bits: f64,
    pub c_max: usize,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct HuffmanSearchResult {
    pub best_n: usize,
    pub best_l: usize,
    pub macros: Vec<Macro>,
    pub distribution: MacroDistribution,
    pub codebook: HuffmanCodebook,
    pub objective: f64,
    pub grid: Vec<HuffmanGridRow>,
}

impl HuffmanSearchResult {
    /// Search report with columns `n,l,mean_bits,c_max,objective`.
    pub fn grid_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.grid {
            w.serialize(row).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
    }
}

/// Evaluates every `(n, l)` cell and returns the argmin, ties toward smaller
/// `l` then smaller `n`.
pub fn search_huffman(
    corpus: &[&[u32]],
    alphabet_size: usize,
    grid: &HuffmanSearch,
) -> Result<HuffmanSearchResult> {
    if grid.l_min == 0 || grid.l_min > grid.l_max || grid.n_max == 0 {
        return Err(Error::InvalidParams("need 1 <= l_min <= l_max and n_max >= 1".into()));
    }
    check_lambda(grid.lambda)?;
    if corpus.is_empty() {
        return Err(Error::NoData);
    }
    if corpus.iter().flat_map(|t| t.iter()).any(|&a| a as usize >= alphabet_size) {
        return Err(Error::InvalidParams("action id outside alphabet".into()));
    }
    let per_length: Vec<Result<Vec<(HuffmanGridRow, Vec<Macro>, MacroDistribution, HuffmanCodebook)>>> =
        (grid.l_min..=grid.l_max)
            .into_par_iter()
            .map(|l| {
                let table = enumerate_candidates(corpus, l)?;
                if table.is_empty() {
                    return Ok(Vec::new());
                }
                let mut cells = Vec::new();
                for n in 1..=grid.n_max {
                    let (macros, dist) = top_n_macros(&table, n)?;
                    let cb = build_huffman_codebook(&macros, &dist, alphabet_size)?;
                    let mean_bits = mean_encoded_bits(&cb.codebook, corpus)?;
                    let c_max = cb.codebook.c_max();
                    let objective = mean_bits + grid.lambda.powi(c_max as i32);
                    cells.push((
                        HuffmanGridRow {
                            n,
                            l,
                            mean_bits,
                            c_max,
                            objective,
                        },
                        macros,
                        dist,
                        cb,
                    ));
                }
                Ok(cells)
            })
            .collect();
    let mut cells = Vec::new();
    for r in per_length {
        cells.extend(r?);
    }
    // cells are in (l, n) order, so the first strict minimum wins ties
    let best = cells
        .iter()
        .enumerate()
        .fold(None::<usize>, |best, (i, c)| match best {
            Some(b) if cells[b].0.objective <= c.0.objective => Some(b),
            _ => Some(i),
        })
        .ok_or(Error::NoMacrosFound)?;
    let grid_rows: Vec<HuffmanGridRow> = cells.iter().map(|c| c.0.clone()).collect();
    let (row, macros, distribution, codebook) = cells.swap_remove(best);
    Ok(HuffmanSearchResult {
        best_n: macros.len(),
        best_l: row.l,
        macros,
        distribution,
        codebook,
        objective: row.objective,
        grid: grid_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{is_prefix_free, normalize_counts};
    use proptest::prelude::*;

    const A1: u32 = 0;
    const A2: u32 = 1;
    const A3: u32 = 2;

    /// Brute-force minimum of Σ w_i·len_i over all length vectors satisfying
    /// Kraft's inequality (exactly the prefix-code length vectors).
    fn brute_force_optimal(weights: &[u64]) -> u64 {
        let m = weights.len();
        if m == 1 {
            return 0;
        }
        let max_len = m - 1;
        let mut best = u64::MAX;
        let mut lens = vec![1usize; m];
        loop {
            // Kraft sum with common denominator 2^max_len
            let kraft: u64 = lens.iter().map(|&l| 1u64 << (max_len - l)).sum();
            if kraft <= 1u64 << max_len {
                let cost = weights.iter().zip(&lens).map(|(&w, &l)| w * l as u64).sum();
                best = best.min(cost);
            }
            let mut i = 0;
            loop {
                if i == m {
                    return best;
                }
                lens[i] += 1;
                if lens[i] <= max_len {
                    break;
                }
                lens[i] = 1;
                i += 1;
            }
        }
    }

    /// All decompositions of `tau` into codebook symbols, by recursion.
    fn exhaustive_min_bits(tau: &[u32], cb: &Codebook) -> Option<usize> {
        if tau.is_empty() {
            return Some(0);
        }
        cb.entries
            .iter()
            .filter(|e| tau.starts_with(&e.symbol))
            .filter_map(|e| exhaustive_min_bits(&tau[e.symbol.len()..], cb).map(|b| b + e.code.len()))
            .min()
    }

    fn codebook_with(macros: &[(&[u32], &str)], prims: &[(u32, &str)]) -> Codebook {
        let mut entries: Vec<CodebookEntry> = macros
            .iter()
            .map(|(s, c)| CodebookEntry {
                symbol: s.to_vec(),
                code: c.parse().unwrap(),
                prob: 0.0,
                origin: SymbolOrigin::Macro,
            })
            .collect();
        entries.extend(prims.iter().map(|(a, c)| CodebookEntry {
            symbol: vec![*a],
            code: c.parse().unwrap(),
            prob: 0.0,
            origin: SymbolOrigin::Primitive,
        }));
        Codebook {
            kind: CodebookKind::Huffman,
            b_limit: None,
            entries,
        }
    }

    #[test]
    fn worked_example_windows() {
        let tau = [A1, A2, A3, A1, A2];
        let t = enumerate_candidates(&[&tau], 2).unwrap();
        assert_eq!(t.count(&[A1, A2]), 2);
        assert_eq!(t.count(&[A2, A3]), 1);
        assert_eq!(t.count(&[A3, A1]), 1);
        assert_eq!(t.total_windows, 4);
        let d = normalize_counts(t.windows.iter().map(|(k, &c)| (k.clone(), c))).unwrap();
        assert_eq!(d.prob(&vec![A1, A2]), 0.5);
        assert_eq!(d.prob(&vec![A2, A3]), 0.25);
        assert_eq!(d.prob(&vec![A3, A1]), 0.25);
    }

    #[test]
    fn short_trajectories_contribute_nothing() {
        let t = enumerate_candidates(&[&[A1]], 2).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.total_windows, 0);
        assert_eq!(enumerate_candidates(&[], 2).unwrap_err(), Error::NoData);
    }

    #[test]
    fn two_trajectory_windows() {
        let (r, d) = (0, 1);
        let t = enumerate_candidates(&[&[r, r, r, r], &[d, d]], 2).unwrap();
        assert_eq!(t.windows.len(), 2);
        assert_eq!(t.count(&[r, r]), 3);
        assert_eq!(t.count(&[d, d]), 1);
    }

    #[test]
    fn top_one_renormalizes() {
        let t = enumerate_candidates(&[&[A1, A2, A3, A1, A2]], 2).unwrap();
        let (m, p) = top_n_macros(&t, 1).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].actions, ActionSeq::Discrete(vec![A1, A2]));
        assert_eq!(p.prob(&0), 1.0);
        let (m, _) = top_n_macros(&t, 10).unwrap();
        assert_eq!(m.len(), 3);
    }

    #[test]
    fn top_n_tie_breaks_lexicographically() {
        // (2,0), (0,1), (1,2) each occur once: all tied
        let t = enumerate_candidates(&[&[2, 0, 1, 2]], 2).unwrap();
        let (m, _) = top_n_macros(&t, 2).unwrap();
        let seqs: Vec<_> = m.iter().map(|m| m.actions.clone()).collect();
        // enumeration oracle: sort all tied keys lexicographically, take 2
        let mut keys: Vec<Vec<u32>> = t.windows.keys().cloned().collect();
        keys.sort();
        assert_eq!(
            seqs,
            keys[..2].iter().map(|k| ActionSeq::Discrete(k.clone())).collect::<Vec<_>>()
        );
        let empty = enumerate_candidates(&[&[1]], 2).unwrap();
        assert_eq!(top_n_macros(&empty, 1).unwrap_err(), Error::NoCandidates);
    }

    fn macros_from(seqs: &[&[u32]], counts: &[u64]) -> (Vec<Macro>, MacroDistribution) {
        let macros = seqs
            .iter()
            .enumerate()
            .map(|(id, s)| Macro {
                id,
                actions: ActionSeq::Discrete(s.to_vec()),
            })
            .collect();
        (macros, normalize_counts(counts.iter().copied().enumerate()).unwrap())
    }

    #[test]
    fn two_equal_macros_get_one_bit() {
        let codes = huffman_codes(&[0.5, 0.5]);
        assert_eq!(codes.iter().map(BitString::len).collect::<Vec<_>>(), vec![1, 1]);
        let (m, p) = macros_from(&[&[0, 0], &[1, 1]], &[1, 1]);
        let cb = build_huffman_codebook(&m, &p, 2).unwrap();
        assert_eq!(cb.tree_code_lengths, vec![1, 1]);
    }

    #[test]
    fn half_quarter_quarter_lengths() {
        let codes = huffman_codes(&[0.5, 0.25, 0.25]);
        let lens: Vec<usize> = codes.iter().map(BitString::len).collect();
        assert_eq!(lens, vec![1, 2, 2]);
        // exhaustive oracle: optimal expected length 1.5 (counts 2,1,1 -> 6/4)
        assert_eq!(brute_force_optimal(&[2, 1, 1]), 6);
    }

    #[test]
    fn grafted_primitives_are_longer() {
        let (m, p) = macros_from(&[&[0, 0], &[1, 1], &[2, 2]], &[2, 1, 1]);
        let hc = build_huffman_codebook(&m, &p, 4).unwrap();
        let cb = &hc.codebook;
        assert_eq!(hc.tree_code_lengths.iter().max(), Some(&2));
        assert!(cb.is_prefix_free());
        let max_macro = cb.c_max();
        for e in cb.entries.iter().filter(|e| e.origin == SymbolOrigin::Primitive) {
            assert!(e.code.len() >= 3);
            assert!(e.code.len() > max_macro);
        }
        assert_eq!(cb.entries.iter().filter(|e| e.origin == SymbolOrigin::Primitive).count(), 4);
    }

    #[test]
    fn single_macro_codebook() {
        let (m, p) = macros_from(&[&[0, 1]], &[5]);
        let cb = build_huffman_codebook(&m, &p, 1).unwrap().codebook;
        assert_eq!(cb.entries[0].code.to_string(), "0");
        assert_eq!(cb.entries[1].code.to_string(), "10");
        assert!(build_huffman_codebook(&[], &p, 2).is_err());
    }

    #[test]
    fn length_one_macros_replace_primitives() {
        let (m, p) = macros_from(&[&[1]], &[3]);
        let cb = build_huffman_codebook(&m, &p, 3).unwrap().codebook;
        assert!(!cb.has_duplicate_symbols());
        assert_eq!(cb.entries.len(), 3);
    }

    #[test]
    fn dp_examples() {
        let cb = codebook_with(&[(&[A1, A2], "0")], &[(A1, "100"), (A2, "101"), (A3, "110")]);
        let e = min_bits_encoding(&[], &cb).unwrap();
        assert_eq!((e.bits, e.parse.len()), (0, 0));
        let e = min_bits_encoding(&[A1, A2, A1, A2], &cb).unwrap();
        assert_eq!(e.bits, 2);
        assert_eq!(exhaustive_min_bits(&[A1, A2, A1, A2], &cb), Some(2));
        let e = min_bits_encoding(&[A1, A3], &cb).unwrap();
        assert_eq!(e.bits, 6);
        assert_eq!(exhaustive_min_bits(&[A1, A3], &cb), Some(6));
    }

    #[test]
    fn uncoverable_position_reported() {
        let cb = codebook_with(&[(&[0, 1], "0")], &[(0, "10")]);
        assert_eq!(min_bits_encoding(&[0, 1, 1], &cb).unwrap_err(), Error::Uncoverable(2));
    }

    #[test]
    fn objective_formula() {
        let cb = codebook_with(&[(&[A1, A2], "0"), (&[A2, A3], "10"), (&[A3, A1], "11")], &[]);
        let tau: &[u32] = &[A1, A2, A3, A1];
        let bits = min_bits_encoding(tau, &cb).unwrap().bits as f64;
        assert_eq!(huffman_objective(&cb, &[tau], 1.0).unwrap(), bits + 1.0);
        assert_eq!(huffman_objective(&cb, &[tau], 2.0).unwrap(), bits + 4.0);
        assert_eq!(
            huffman_objective(&cb, &[tau, tau], 2.0).unwrap(),
            huffman_objective(&cb, &[tau], 2.0).unwrap()
        );
        assert!(huffman_objective(&cb, &[tau], 0.0).is_err());
    }

    #[test]
    fn search_finds_runs() {
        let (r, d) = (0u32, 1u32);
        let unit = [r, r, r, d, d, d];
        let tau: Vec<u32> = unit.iter().cycle().take(60).copied().collect();
        let corpus: Vec<&[u32]> = vec![&tau; 4];
        let res = search_huffman(
            &corpus,
            2,
            &HuffmanSearch {
                n_max: 4,
                l_min: 2,
                l_max: 3,
                lambda: 2.0,
            },
        )
        .unwrap();
        // exhaustive oracle: scan the grid rows for the minimum
        let min = res.grid.iter().map(|r| r.objective).fold(f64::INFINITY, f64::min);
        assert_eq!(res.objective, min);
        let seqs: Vec<_> = res.macros.iter().map(|m| m.actions.clone()).collect();
        assert!(seqs.contains(&ActionSeq::Discrete(vec![r, r, r])));
        assert!(seqs.contains(&ActionSeq::Discrete(vec![d, d, d])));
        assert_eq!(res.grid.len(), 8);
        assert!(res.grid_csv().starts_with("n,l,mean_bits,c_max,objective\n"));
    }

    #[test]
    fn degenerate_grid_picks_most_frequent_primitive() {
        let tau = [2u32, 2, 2, 1, 0];
        let res = search_huffman(
            &[&tau],
            3,
            &HuffmanSearch {
                n_max: 1,
                l_min: 1,
                l_max: 1,
                lambda: 2.0,
            },
        )
        .unwrap();
        assert_eq!(res.macros.len(), 1);
        assert_eq!(res.macros[0].actions, ActionSeq::Discrete(vec![2]));
    }

    #[test]
    fn search_without_candidates_fails() {
        let err = search_huffman(
            &[&[0u32]],
            1,
            &HuffmanSearch {
                n_max: 2,
                l_min: 2,
                l_max: 3,
                lambda: 2.0,
            },
        )
        .unwrap_err();
        assert_eq!(err, Error::NoMacrosFound);
    }

    proptest! {
        #[test]
        fn window_total_matches_formula(
            corpus in prop::collection::vec(prop::collection::vec(0u32..4, 0..20), 1..6),
            l in 1usize..5,
        ) {
            let refs: Vec<&[u32]> = corpus.iter().map(Vec::as_slice).collect();
            let t = enumerate_candidates(&refs, l).unwrap();
            let expected: u64 = corpus.iter().map(|c| (c.len() as i64 - l as i64 + 1).max(0) as u64).sum();
            prop_assert_eq!(t.total_windows, expected);
            prop_assert_eq!(t.windows.values().sum::<u64>(), expected);
            prop_assert!(t.windows.keys().all(|k| k.len() == l));
        }

        #[test]
        fn huffman_matches_brute_force(weights in prop::collection::vec(1u64..50, 2..=6)) {
            let total: u64 = weights.iter().sum();
            let probs: Vec<f64> = weights.iter().map(|&w| w as f64 / total as f64).collect();
            let codes = huffman_codes(&probs);
            prop_assert!(is_prefix_free(&codes));
            let cost: u64 = weights.iter().zip(&codes).map(|(&w, c)| w * c.len() as u64).sum();
            prop_assert_eq!(cost, brute_force_optimal(&weights));
            // more probable never longer
            for i in 0..probs.len() {
                for j in 0..probs.len() {
                    if probs[i] > probs[j] {
                        prop_assert!(codes[i].len() <= codes[j].len());
                    }
                }
            }
        }

        #[test]
        fn dp_matches_exhaustive_and_reconstructs(
            tau in prop::collection::vec(0u32..3, 0..=12),
            corpus in prop::collection::vec(prop::collection::vec(0u32..3, 2..15), 1..4),
            n in 1usize..5,
            l in 2usize..4,
        ) {
            let refs: Vec<&[u32]> = corpus.iter().map(Vec::as_slice).collect();
            let table = enumerate_candidates(&refs, l).unwrap();
            prop_assume!(!table.is_empty());
            let (m, p) = top_n_macros(&table, n).unwrap();
            let cb = build_huffman_codebook(&m, &p, 3).unwrap().codebook;
            prop_assert!(cb.is_prefix_free());
            let index = CodebookIndex::new(&cb);
            let enc = index.encode(&tau).unwrap();
            prop_assert_eq!(Some(enc.bits), exhaustive_min_bits(&tau, &cb));
            prop_assert_eq!(index.expand(&enc.parse), tau.clone());
            let prim_only: usize = tau.iter().map(|a| {
                cb.entries.iter().find(|e| e.symbol == vec![*a]).unwrap().code.len()
            }).sum();
            prop_assert!(enc.bits <= prim_only);
        }
    }
}
