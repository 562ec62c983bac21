use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Maximum node count representable by a [`FaceLabel`].
pub const MAX_NODES: usize = 64;

/// A subset `J` of node indices whose queues are empty.
///
/// Stored as a bitmask over 0-based indices. The textual form uses 1-based
/// indices joined by `|`, e.g. `J=1|3`; the empty face prints as `J=`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct FaceLabel(u64);

impl FaceLabel {
    pub const EMPTY: FaceLabel = FaceLabel(0);

    pub fn from_bits(bits: u64) -> Self {
        FaceLabel(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    /// Every index in `0..k`.
    pub fn full(k: usize) -> Self {
        assert!(k <= MAX_NODES);
        if k == MAX_NODES {
            FaceLabel(u64::MAX)
        } else {
            FaceLabel((1u64 << k) - 1)
        }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut bits = 0u64;
        for i in indices {
            assert!(i < MAX_NODES, "face index {i} exceeds {MAX_NODES}");
            bits |= 1 << i;
        }
        FaceLabel(bits)
    }

    /// All nodes except `m`.
    pub fn all_but(k: usize, m: usize) -> Self {
        FaceLabel(Self::full(k).0 & !(1u64 << m))
    }

    pub fn contains(self, i: usize) -> bool {
        i < MAX_NODES && self.0 & (1 << i) != 0
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1 << i;
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn complement(self, k: usize) -> Self {
        FaceLabel(Self::full(k).0 & !self.0)
    }

    pub fn is_subset_of(self, other: FaceLabel) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: FaceLabel) -> Self {
        FaceLabel(self.0 | other.0)
    }

    pub fn intersection(self, other: FaceLabel) -> Self {
        FaceLabel(self.0 & other.0)
    }

    /// Sorted 0-based indices.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..MAX_NODES).filter(move |&i| bits & (1 << i) != 0)
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.indices().collect()
    }

    /// Every subset of `self`, largest first (ties broken by bit pattern).
    pub fn subsets_largest_first(self) -> Vec<FaceLabel> {
        let mut out = Vec::with_capacity(1 << self.len());
        let mut sub = self.0;
        loop {
            out.push(FaceLabel(sub));
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & self.0;
        }
        out.sort_by(|a, b| b.len().cmp(&a.len()).then(b.0.cmp(&a.0)));
        out
    }

    /// Faces of a `k`-node network in bitmask order.
    pub fn all_faces(k: usize) -> impl Iterator<Item = FaceLabel> {
        assert!(k < MAX_NODES);
        (0..(1u64 << k)).map(FaceLabel)
    }

    /// Parse `J=1|3`, `1|3`, or an empty body (1-based indices).
    pub fn parse(s: &str) -> Result<Self> {
        let body = s.trim();
        let body = body.strip_prefix("J=").unwrap_or(body);
        if body.is_empty() {
            return Ok(FaceLabel::EMPTY);
        }
        let mut face = FaceLabel::EMPTY;
        for part in body.split('|') {
            let idx: usize = part
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad face index {part:?} in {s:?}")))?;
            if idx == 0 || idx > MAX_NODES {
                return Err(Error::Parse(format!("face index {idx} out of range")));
            }
            face.insert(idx - 1);
        }
        Ok(face)
    }
}

impl fmt::Display for FaceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("J=")?;
        for (n, i) in self.indices().enumerate() {
            if n > 0 {
                f.write_str("|")?;
            }
            write!(f, "{}", i + 1)?;
        }
        Ok(())
    }
}

impl fmt::Debug for FaceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for FaceLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FaceLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        FaceLabel::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse() {
        let j = FaceLabel::from_indices([0, 2]);
        assert_eq!(j.to_string(), "J=1|3");
        assert_eq!(FaceLabel::parse("J=1|3").unwrap(), j);
        assert_eq!(FaceLabel::EMPTY.to_string(), "J=");
        assert_eq!(FaceLabel::parse("J=").unwrap(), FaceLabel::EMPTY);
        assert!(FaceLabel::parse("J=0").is_err());
        assert!(FaceLabel::parse("J=a").is_err());
    }

    #[test]
    fn subsets_are_ordered_largest_first() {
        let j = FaceLabel::from_indices([1, 3]);
        let subs = j.subsets_largest_first();
        assert_eq!(subs.len(), 4);
        assert_eq!(subs[0], j);
        assert_eq!(*subs.last().unwrap(), FaceLabel::EMPTY);
        assert!(subs.iter().all(|s| s.is_subset_of(j)));
    }

    #[test]
    fn complement_and_all_but() {
        assert_eq!(FaceLabel::all_but(3, 1), FaceLabel::from_indices([0, 2]));
        assert_eq!(
            FaceLabel::from_indices([0]).complement(3),
            FaceLabel::from_indices([1, 2])
        );
        assert_eq!(FaceLabel::all_faces(3).count(), 8);
    }
}
