use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the category group whose members are mutually exclusive unless a
/// schema says otherwise.
pub const GARMENT_TYPE_GROUP: &str = "garment-type";

/// Ordered binary attribute names plus optional named subsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    names: Vec<String>,
    groups: BTreeMap<String, Vec<String>>,
    /// Groups in which at most one attribute may be set.
    exclusive: BTreeSet<String>,
}

impl AttributeSchema {
    pub fn new(names: Vec<String>) -> Result<Self> {
        Self::with_groups(names, BTreeMap::new(), BTreeSet::new())
    }

    pub fn with_groups(
        names: Vec<String>,
        groups: BTreeMap<String, Vec<String>>,
        exclusive: BTreeSet<String>,
    ) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Schema("at least one attribute is required".into()));
        }
        let mut seen = BTreeSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::Schema("attribute names must be non-empty".into()));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute `{n}`")));
            }
        }
        for (g, members) in &groups {
            for m in members {
                if !seen.contains(m.as_str()) {
                    return Err(Error::Schema(format!("group `{g}` references unknown attribute `{m}`")));
                }
            }
        }
        for g in &exclusive {
            if !groups.contains_key(g) {
                return Err(Error::Schema(format!("exclusive group `{g}` is not declared")));
            }
        }
        Ok(Self {
            names,
            groups,
            exclusive,
        })
    }

    /// Schema with every group, marking `garment-type` exclusive if present.
    pub fn with_default_exclusivity(names: Vec<String>, groups: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let exclusive = if groups.contains_key(GARMENT_TYPE_GROUP) {
            BTreeSet::from([String::from(GARMENT_TYPE_GROUP)])
        } else {
            BTreeSet::new()
        };
        Self::with_groups(names, groups, exclusive)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn groups(&self) -> &BTreeMap<String, Vec<String>> {
        &self.groups
    }

    pub fn exclusive_groups(&self) -> &BTreeSet<String> {
        &self.exclusive
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownAttribute(name.into()))
    }

    pub fn group_indices(&self, group: &str) -> Result<Vec<usize>> {
        let members = self
            .groups
            .get(group)
            .ok_or_else(|| Error::UnknownGroup(group.into()))?;
        members.iter().map(|m| self.index_of(m)).collect()
    }

    /// Indices of the other members of every exclusive group containing
    /// `index`.
    pub fn exclusive_peers(&self, index: usize) -> Vec<usize> {
        let name = &self.names[index];
        let mut peers = BTreeSet::new();
        for g in &self.exclusive {
            let members = &self.groups[g];
            if members.iter().any(|m| m == name) {
                for m in members {
                    let i = self.index_of(m).expect("validated group member");
                    if i != index {
                        peers.insert(i);
                    }
                }
            }
        }
        peers.into_iter().collect()
    }
}

/// Binary attribute annotation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeVector(Vec<u8>);

impl AttributeVector {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(bad) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::Schema(format!("attribute value {bad} is not 0 or 1")));
        }
        Ok(Self(bits))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        Self(bits.iter().map(|&b| b as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i] == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.0[i] = value as u8;
    }

    pub fn check_arity(&self, schema: &AttributeSchema) -> Result<()> {
        if self.0.len() != schema.len() {
            return Err(Error::Arity {
                expected: schema.len(),
                actual: self.0.len(),
            });
        }
        Ok(())
    }

    /// Target used by single-attribute edits: copy of `self` with `index`
    /// set to `value`; setting a member of an exclusive group to 1 clears its
    /// peers.
    pub fn with_single_edit(&self, schema: &AttributeSchema, index: usize, value: bool) -> Self {
        let mut out = self.clone();
        out.set(index, value);
        if value {
            for p in schema.exclusive_peers(index) {
                out.set(p, false);
            }
        }
        out
    }

    /// Applies named overrides in order with the same exclusivity rule as
    /// [`with_single_edit`](Self::with_single_edit).
    pub fn with_overrides(&self, schema: &AttributeSchema, overrides: &[(String, u8)]) -> Result<Self> {
        self.check_arity(schema)?;
        let mut out = self.clone();
        for (name, value) in overrides {
            let index = schema.index_of(name)?;
            if *value > 1 {
                return Err(Error::Schema(format!("attribute `{name}` value {value} is not 0 or 1")));
            }
            out = out.with_single_edit(schema, index, *value == 1);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rejects_duplicate_and_empty_names() {
        assert!(AttributeSchema::new(names(&["a", "a"])).is_err());
        assert!(AttributeSchema::new(names(&["a", ""])).is_err());
        assert!(AttributeSchema::new(Vec::new()).is_err());
    }

    #[test]
    fn groups_must_be_subsets() {
        let groups = BTreeMap::from([("g".to_string(), names(&["a", "z"]))]);
        assert!(AttributeSchema::with_default_exclusivity(names(&["a", "b"]), groups).is_err());
    }

    #[test]
    fn single_edit_clears_exclusive_peers_only() {
        let groups = BTreeMap::from([
            (GARMENT_TYPE_GROUP.to_string(), names(&["vest", "polo"])),
            ("color".to_string(), names(&["red", "blue"])),
        ]);
        let schema =
            AttributeSchema::with_default_exclusivity(names(&["vest", "polo", "red", "blue"]), groups).unwrap();
        let a = AttributeVector::new(vec![0, 1, 1, 0]).unwrap();
        let b = a.with_single_edit(&schema, 0, true);
        assert_eq!(b.bits(), &[1, 0, 1, 0]);
        let c = a.with_single_edit(&schema, 3, true);
        assert_eq!(c.bits(), &[0, 1, 1, 1]);
        let d = a.with_single_edit(&schema, 1, false);
        assert_eq!(d.bits(), &[0, 0, 1, 0]);
    }

    #[test]
    fn attribute_values_must_be_binary() {
        assert!(AttributeVector::new(vec![0, 2]).is_err());
    }
}
