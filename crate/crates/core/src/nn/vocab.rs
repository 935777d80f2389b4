use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const DROP: &str = "<drop>";
pub const START: &str = "<s>";
pub const END: &str = "</s>";

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

/// Symbol ↔ index map. Index 0 is always padding and index 1 the unknown
/// symbol; further reserved symbols follow in the order given.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(symbols: Vec<String>) -> Self {
        let index = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Vocab { symbols, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.symbols
    }
}

impl Vocab {
    /// A vocabulary holding `<pad>`, `<unk>` and then `extra_reserved`.
    pub fn with_reserved(extra_reserved: &[&str]) -> Self {
        let mut v = Vocab::from(vec![PAD.to_string(), UNK.to_string()]);
        for r in extra_reserved {
            v.add(r);
        }
        v
    }

    /// Builds from symbol counts, keeping symbols seen at least `min_count`
    /// times, ordered by decreasing count then symbol.
    pub fn from_counts(extra_reserved: &[&str], counts: &HashMap<String, usize>, min_count: usize) -> Self {
        let mut v = Vocab::with_reserved(extra_reserved);
        let mut items: Vec<(&String, &usize)> = counts.iter().filter(|(_, &c)| c >= min_count).collect();
        items.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        for (s, _) in items {
            v.add(s);
        }
        v
    }

    pub fn add(&mut self, symbol: &str) -> usize {
        if let Some(&i) = self.index.get(symbol) {
            return i;
        }
        self.symbols.push(symbol.to_string());
        self.index.insert(symbol.to_string(), self.symbols.len() - 1);
        self.symbols.len() - 1
    }

    pub fn get(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    /// Index of `symbol`, or of `<unk>`.
    pub fn index_or_unk(&self, symbol: &str) -> usize {
        self.get(symbol).unwrap_or(UNK_ID)
    }

    pub fn symbol(&self, index: usize) -> &str {
        &self.symbols[index]
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Reserved index of `symbol`; panics if it was not reserved.
    pub fn reserved(&self, symbol: &str) -> usize {
        self.get(symbol)
            .unwrap_or_else(|| panic!("vocabulary has no reserved symbol {}", symbol))
    }
}
