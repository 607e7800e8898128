//! Pushdown alphabets: every symbol is a set of atomic propositions tagged
//! with a call/internal/return class.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Call,
    Int,
    Ret,
}

impl Class {
    pub const ALL: [Class; 3] = [Class::Call, Class::Int, Class::Ret];

    pub fn keyword(self) -> &'static str {
        match self {
            Class::Call => "call",
            Class::Int => "int",
            Class::Ret => "ret",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Class> {
        match s {
            "call" => Some(Class::Call),
            "int" => Some(Class::Int),
            "ret" => Some(Class::Ret),
            _ => None,
        }
    }

    /// Stack height change when reading a symbol of this class away from the bottom.
    pub fn delta(self) -> i64 {
        match self {
            Class::Call => 1,
            Class::Int => 0,
            Class::Ret => -1,
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// A letter of `2^AP x {call, int, ret}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol {
    pub class: Class,
    pub props: BTreeSet<String>,
}

impl Symbol {
    pub fn new(class: Class, props: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Symbol { class, props: props.into_iter().map(Into::into).collect() }
    }

    pub fn plain(class: Class) -> Self {
        Symbol { class, props: BTreeSet::new() }
    }

    /// Parses the canonical token form `class{p,q}`; a bare class keyword means no atoms.
    pub fn parse(tok: &str) -> Option<Symbol> {
        let (head, rest) = match tok.find('{') {
            Some(i) => (&tok[..i], Some(&tok[i..])),
            None => (tok, None),
        };
        let class = Class::from_keyword(head)?;
        let mut props = BTreeSet::new();
        if let Some(rest) = rest {
            let inner = rest.strip_prefix('{')?.strip_suffix('}')?;
            for p in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                if !is_ident(p) {
                    return None;
                }
                props.insert(p.to_string());
            }
        }
        Some(Symbol { class, props })
    }

    /// Restricts the atoms to `ap`.
    pub fn project(&self, ap: &BTreeSet<String>) -> Symbol {
        Symbol { class: self.class, props: self.props.intersection(ap).cloned().collect() }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{", self.class)?;
        for (i, p) in self.props.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(p)?;
        }
        f.write_str("}")
    }
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
}

/// A finite pushdown alphabet. Symbols are kept sorted so iteration order is
/// reproducible; each symbol also carries a display name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<Symbol>,
    names: Vec<String>,
    index: HashMap<Symbol, usize>,
}

impl Alphabet {
    /// Builds an alphabet from `(name, symbol)` pairs. Names and symbols must be unique.
    pub fn new(entries: Vec<(String, Symbol)>) -> Result<Alphabet> {
        let mut entries = entries;
        entries.sort_by(|a, b| a.1.cmp(&b.1));
        let mut index = HashMap::new();
        let mut seen_names = HashMap::new();
        for (i, (name, sym)) in entries.iter().enumerate() {
            if index.insert(sym.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate symbol {sym}")));
            }
            if seen_names.insert(name.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate symbol name {name}")));
            }
        }
        let (names, symbols) = entries.into_iter().unzip();
        Ok(Alphabet { symbols, names, index })
    }

    /// All of `2^ap x {call, int, ret}` under canonical names.
    pub fn full(ap: &BTreeSet<String>) -> Alphabet {
        let ap: Vec<&String> = ap.iter().collect();
        let mut entries = Vec::new();
        for class in Class::ALL {
            for mask in 0u64..(1u64 << ap.len()) {
                let props = (0..ap.len()).filter(|i| mask >> i & 1 == 1).map(|i| ap[i].clone());
                let sym = Symbol::new(class, props);
                entries.push((sym.to_string(), sym));
            }
        }
        Alphabet::new(entries).expect("canonical alphabet is duplicate free")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, i: usize) -> &Symbol {
        &self.symbols[i]
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn class_of(&self, i: usize) -> Class {
        self.symbols[i].class
    }

    pub fn index_of(&self, sym: &Symbol) -> Option<usize> {
        self.index.get(sym).copied()
    }

    pub fn lookup(&self, sym: &Symbol) -> Result<usize> {
        self.index_of(sym).ok_or_else(|| Error::UnknownSymbol(sym.to_string()))
    }

    /// Resolves either a display name or a canonical token.
    pub fn by_token(&self, tok: &str) -> Option<usize> {
        if let Some(i) = self.names.iter().position(|n| n == tok) {
            return Some(i);
        }
        Symbol::parse(tok).and_then(|s| self.index_of(&s))
    }

    pub fn of_class(&self, class: Class) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.symbols[i].class == class)
    }

    /// Atoms mentioned by any symbol.
    pub fn atoms(&self) -> BTreeSet<String> {
        self.symbols.iter().flat_map(|s| s.props.iter().cloned()).collect()
    }
}
