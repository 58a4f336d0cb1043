use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Index of a symbol inside a [`SymbolTable`].
pub type SymbolId = u32;

/// Reserved index of the empty string.
pub const EPSILON: SymbolId = 0;

/// Bijection between symbol strings and dense ids. Index 0 is always ε.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct SymbolTable {
    symbols: Vec<String>,
    index: HashMap<String, SymbolId>,
}

impl Default for SymbolTable {
    fn default() -> Self {
        Self::new()
    }
}

impl SymbolTable {
    pub fn new() -> Self {
        let mut index = HashMap::new();
        index.insert(String::new(), EPSILON);
        SymbolTable {
            symbols: vec![String::new()],
            index,
        }
    }

    /// Returns the id of `symbol`, registering it first if needed.
    pub fn intern(&mut self, symbol: &str) -> SymbolId {
        if let Some(&id) = self.index.get(symbol) {
            return id;
        }
        let id = self.symbols.len() as SymbolId;
        self.symbols.push(symbol.to_owned());
        self.index.insert(symbol.to_owned(), id);
        id
    }

    pub fn get(&self, symbol: &str) -> Option<SymbolId> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: SymbolId) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    /// Number of entries, counting ε.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    /// True when only ε is present.
    pub fn is_empty(&self) -> bool {
        self.symbols.len() == 1
    }

    /// Non-ε symbols in id order.
    pub fn iter(&self) -> impl Iterator<Item = (SymbolId, &str)> {
        self.symbols
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, s)| (i as SymbolId, s.as_str()))
    }

    pub fn encode<S: AsRef<str>>(&self, symbols: &[S]) -> Option<Vec<SymbolId>> {
        symbols.iter().map(|s| self.get(s.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[SymbolId]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.symbol(i).unwrap_or("<?>").to_owned())
            .collect()
    }
}

impl From<Vec<String>> for SymbolTable {
    fn from(symbols: Vec<String>) -> Self {
        let mut table = SymbolTable::new();
        for s in symbols.iter().skip(1) {
            table.intern(s);
        }
        table
    }
}

impl From<SymbolTable> for Vec<String> {
    fn from(table: SymbolTable) -> Self {
        table.symbols
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_is_reserved() {
        let mut t = SymbolTable::new();
        assert_eq!(t.get(""), Some(EPSILON));
        assert_eq!(t.intern(""), EPSILON);
        assert!(t.is_empty());
        let a = t.intern("a");
        assert_eq!(a, 1);
        assert_eq!(t.intern("a"), a);
        assert_eq!(t.symbol(a), Some("a"));
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn serde_keeps_order() {
        let mut t = SymbolTable::new();
        for s in ["x", "[V]", "æ"] {
            t.intern(s);
        }
        let json = serde_json::to_string(&t).unwrap();
        let back: SymbolTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.get("æ"), Some(3));
    }
}
