use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{EntityId, RelationId};
use crate::error::{Error, Result};

pub const INVERSE_PREFIX: char = '*';
pub const UNK_TOKEN: &str = "<unk>";

pub fn is_inverse_token(token: &str) -> bool {
    token.starts_with(INVERSE_PREFIX)
}

/// `r ↦ *r` and `*r ↦ r`.
pub fn inverse_token(token: &str) -> String {
    match token.strip_prefix(INVERSE_PREFIX) {
        Some(base) => base.to_string(),
        None => format!("{INVERSE_PREFIX}{token}"),
    }
}

/// Entity and relation vocabularies in first-seen order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocab {
    entities: Vec<String>,
    entity_index: BTreeMap<String, u32>,
    relations: Vec<String>,
    relation_index: BTreeMap<String, u32>,
}

fn check_token(token: &str) -> Result<()> {
    let bad = |reason| {
        Err(Error::Token {
            token: token.to_string(),
            reason,
        })
    };
    if token.is_empty() {
        return bad("empty token");
    }
    if token == UNK_TOKEN {
        return bad("reserved token");
    }
    if token.contains(['\t', '\n', '\r', ',']) {
        return bad("tokens may not contain tabs, commas or newlines");
    }
    Ok(())
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tokens<'a>(
        entities: impl IntoIterator<Item = &'a str>,
        relations: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self> {
        let mut v = Vocab::new();
        for e in entities {
            v.intern_entity(e)?;
        }
        for r in relations {
            v.intern_relation(r)?;
        }
        Ok(v)
    }

    pub fn intern_entity(&mut self, token: &str) -> Result<EntityId> {
        if let Some(&id) = self.entity_index.get(token) {
            return Ok(EntityId(id));
        }
        check_token(token)?;
        let id = self.entities.len() as u32;
        self.entities.push(token.to_string());
        self.entity_index.insert(token.to_string(), id);
        Ok(EntityId(id))
    }

    pub fn intern_relation(&mut self, token: &str) -> Result<RelationId> {
        if let Some(&id) = self.relation_index.get(token) {
            return Ok(RelationId(id));
        }
        check_token(token)?;
        if token.starts_with("**") {
            return Err(Error::Token {
                token: token.to_string(),
                reason: "inverse of an inverse must be written without a prefix",
            });
        }
        if token == "*" {
            return Err(Error::Token {
                token: token.to_string(),
                reason: "bare inverse marker",
            });
        }
        let id = self.relations.len() as u32;
        self.relations.push(token.to_string());
        self.relation_index.insert(token.to_string(), id);
        Ok(RelationId(id))
    }

    pub fn entity(&self, token: &str) -> Option<EntityId> {
        self.entity_index.get(token).map(|&i| EntityId(i))
    }

    pub fn relation(&self, token: &str) -> Option<RelationId> {
        self.relation_index.get(token).map(|&i| RelationId(i))
    }

    pub fn entity_or_unk(&self, token: &str) -> EntityId {
        self.entity(token).unwrap_or(EntityId::UNK)
    }

    pub fn relation_or_unk(&self, token: &str) -> RelationId {
        self.relation(token).unwrap_or(RelationId::UNK)
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        self.entities.get(id.index()).map_or(UNK_TOKEN, String::as_str)
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        self.relations.get(id.index()).map_or(UNK_TOKEN, String::as_str)
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn is_inverse(&self, r: RelationId) -> bool {
        !r.is_unk() && is_inverse_token(self.relation_name(r))
    }

    /// Id of the inverse token, interning it if needed.
    pub fn inverse_of(&mut self, r: RelationId) -> Result<RelationId> {
        let name = inverse_token(self.relation_name(r));
        self.intern_relation(&name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_is_a_bijection_in_first_seen_order() {
        let mut v = Vocab::new();
        let a = v.intern_entity("a").unwrap();
        let b = v.intern_entity("b").unwrap();
        assert_eq!(v.intern_entity("a").unwrap(), a);
        assert_eq!((a.0, b.0), (0, 1));
        for (i, name) in v.entities().iter().enumerate() {
            assert_eq!(v.entity(name).unwrap().index(), i);
        }
        assert_eq!(v.entity_or_unk("zzz"), EntityId::UNK);
        assert_eq!(v.entity_name(EntityId::UNK), UNK_TOKEN);
    }

    #[test]
    fn inversion_is_an_involution() {
        assert_eq!(inverse_token("gender"), "*gender");
        assert_eq!(inverse_token("*gender"), "gender");
        let mut v = Vocab::new();
        let r = v.intern_relation("gender").unwrap();
        let ir = v.inverse_of(r).unwrap();
        assert_eq!(v.relation_name(ir), "*gender");
        assert_eq!(v.inverse_of(ir).unwrap(), r);
        assert!(v.is_inverse(ir) && !v.is_inverse(r));
    }

    #[test]
    fn double_prefix_and_bad_tokens_rejected() {
        let mut v = Vocab::new();
        assert!(v.intern_relation("**r").is_err());
        assert!(v.intern_relation("*").is_err());
        assert!(v.intern_entity("").is_err());
        assert!(v.intern_entity("a,b").is_err());
        assert!(v.intern_entity(UNK_TOKEN).is_err());
    }
}
