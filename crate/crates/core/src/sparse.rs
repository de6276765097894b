//! Sparse feature vectors, token hashing, and feature crossing.
//!
//! Pages and ads are represented as sparse vectors over a 64-bit feature-id
//! space. Token strings are mapped to ids with FNV-1a (fixed and documented,
//! so files are portable across runs and platforms); collisions are accepted
//! and merged by summation (the hashing trick). A crossed feature id is the
//! FNV-1a hash of the two input ids concatenated as little-endian bytes,
//! which keeps the cross asymmetric in its arguments and stable everywhere.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over raw bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Map a token string to its 64-bit feature id.
pub fn hash_token(token: &str) -> u64 {
    fnv1a(token.as_bytes())
}

/// Feature id of the cross of a page feature and an ad feature.
///
/// Defined as FNV-1a over the 16-byte little-endian concatenation
/// `page_id || ad_id`, so the mix is order-sensitive and reproducible.
pub fn cross_id(page_id: u64, ad_id: u64) -> u64 {
    let mut bytes = [0u8; 16];
    bytes[..8].copy_from_slice(&page_id.to_le_bytes());
    bytes[8..].copy_from_slice(&ad_id.to_le_bytes());
    fnv1a(&bytes)
}

/// A sparse feature vector in canonical form: entries sorted by strictly
/// increasing feature id, no duplicates, no zero values, all values finite.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    entries: Vec<(u64, f64)>,
}

impl SparseVector {
    /// The empty vector.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Build a canonical vector from arbitrary `(id, value)` pairs.
    ///
    /// Duplicate ids are merged by summing values; entries whose merged
    /// value is exactly zero are dropped. Non-finite input values (or a
    /// non-finite merged sum) are a format error.
    pub fn canonicalize(entries: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<u64, f64> = BTreeMap::new();
        for (id, value) in entries {
            if !value.is_finite() {
                return Err(Error::Format(format!(
                    "non-finite value {value} for feature {id}"
                )));
            }
            *merged.entry(id).or_insert(0.0) += value;
        }
        let mut out = Vec::with_capacity(merged.len());
        for (id, value) in merged {
            if !value.is_finite() {
                return Err(Error::Format(format!(
                    "non-finite merged value for feature {id}"
                )));
            }
            if value != 0.0 {
                out.push((id, value));
            }
        }
        Ok(Self { entries: out })
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Value stored for `id`, or 0 when absent.
    pub fn get(&self, id: u64) -> f64 {
        match self.entries.binary_search_by_key(&id, |e| e.0) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0.0,
        }
    }
}

/// Dot product of a weight map with a sparse vector; absent weights count
/// as zero.
pub fn sparse_dot(weights: &BTreeMap<u64, f64>, f: &SparseVector) -> f64 {
    f.entries()
        .iter()
        .map(|(id, v)| weights.get(id).copied().unwrap_or(0.0) * v)
        .sum()
}

/// Cartesian cross of a page vector and an ad vector.
///
/// One entry per (page entry, ad entry) pair with value equal to the product
/// of the two input values; crossed ids come from [`cross_id`] and id
/// collisions merge by summation.
pub fn cross_features(page: &SparseVector, ad: &SparseVector) -> SparseVector {
    let mut raw = Vec::with_capacity(page.len() * ad.len());
    for &(pid, pv) in page.entries() {
        for &(aid, av) in ad.entries() {
            raw.push((cross_id(pid, aid), pv * av));
        }
    }
    // Inputs are canonical (finite values), so products are finite for any
    // realistic feature magnitudes.
    SparseVector::canonicalize(raw).expect("crossed values stay finite")
}
