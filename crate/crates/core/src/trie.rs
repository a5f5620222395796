use std::collections::HashMap;

#[derive(Debug, Clone, Default)]
struct Node {
    children: HashMap<u32, usize>,
    entry: Option<usize>,
}

/// Prefix tree over action-id sequences, mapping each inserted sequence to
/// an entry index.
#[derive(Debug, Clone)]
pub struct SymbolTrie {
    nodes: Vec<Node>,
}

impl Default for SymbolTrie {
    fn default() -> Self {
        SymbolTrie {
            nodes: vec![Node::default()],
        }
    }
}

impl SymbolTrie {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `seq`; returns the previous entry for that sequence, if any.
    pub fn insert(&mut self, seq: &[u32], entry: usize) -> Option<usize> {
        let mut node = 0;
        for &a in seq {
            node = match self.nodes[node].children.get(&a) {
                Some(&n) => n,
                None => {
                    self.nodes.push(Node::default());
                    let n = self.nodes.len() - 1;
                    self.nodes[node].children.insert(a, n);
                    n
                }
            };
        }
        self.nodes[node].entry.replace(entry)
    }

    pub fn get(&self, seq: &[u32]) -> Option<usize> {
        let mut node = 0;
        for a in seq {
            node = *self.nodes[node].children.get(a)?;
        }
        self.nodes[node].entry
    }

    /// All `(length, entry)` pairs whose sequence occurs at `seq[pos..]`,
    /// shortest first.
    pub fn matches_at<'a>(&'a self, seq: &'a [u32], pos: usize) -> impl Iterator<Item = (usize, usize)> + 'a {
        let mut node = Some(0usize);
        seq[pos..].iter().enumerate().map_while(move |(i, a)| {
            let n = self.nodes[node?].children.get(a).copied();
            node = n;
            n.map(|n| (i + 1, self.nodes[n].entry))
        })
        .filter_map(|(len, e)| e.map(|e| (len, e)))
    }

    /// Longest entry matching at `seq[pos..]`.
    pub fn longest_match(&self, seq: &[u32], pos: usize) -> Option<(usize, usize)> {
        self.matches_at(seq, pos).last()
    }
}
