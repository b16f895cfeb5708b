// Licensed under the Apache-2.0 license

use bls12_381::{G1Projective, Scalar};

/// Exposed member keys published by the issuer. Append-only.
#[derive(Debug, Clone, Default)]
pub struct RogueList {
    secrets: Vec<Scalar>,
}

impl RogueList {
    pub fn add(&mut self, exposed_secret: Scalar) {
        if !self.secrets.contains(&exposed_secret) {
            self.secrets.push(exposed_secret);
        }
    }

    pub fn len(&self) -> usize {
        self.secrets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.secrets.is_empty()
    }

    /// True iff `pseudonym == base * r` for some listed `r`.
    pub fn matches(&self, base: &G1Projective, pseudonym: &G1Projective) -> bool {
        self.secrets.iter().any(|r| base * r == *pseudonym)
    }
}

pub fn rogue_add(mut list: RogueList, exposed_secret: Scalar) -> RogueList {
    list.add(exposed_secret);
    list
}
