//! Product alias table: `<alias> -> <canonical vendor> <canonical product>`.

use std::collections::HashMap;

const BUILTIN_ALIASES: &str = include_str!("../../data/product_aliases.txt");

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasTable {
    /// Lowercased alias to lowercased (vendor, product).
    map: HashMap<String, (String, String)>,
}

impl AliasTable {
    pub fn builtin() -> AliasTable {
        AliasTable::parse(BUILTIN_ALIASES).expect("builtin alias table is well formed")
    }

    pub fn parse(text: &str) -> Result<AliasTable, String> {
        let mut map = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || format!("alias line {}: expected `<alias> -> <vendor> <product>`", i + 1);
            let (alias, rest) = line.split_once("->").ok_or_else(bad)?;
            let mut parts = rest.split_whitespace();
            let (Some(vendor), Some(product), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad());
            };
            let alias = alias.trim();
            if alias.is_empty() || alias.contains(char::is_whitespace) {
                return Err(bad());
            }
            map.insert(alias.to_lowercase(), (vendor.to_lowercase(), product.to_lowercase()));
        }
        Ok(AliasTable { map })
    }

    /// Canonical lowercase identity of a (vendor, product) pair.
    pub fn canonical(&self, vendor: &str, product: &str) -> (String, String) {
        let product = product.to_lowercase();
        match self.map.get(&product) {
            Some(canon) => canon.clone(),
            None => (vendor.to_lowercase(), product),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
