//! Edge-counter maps, hit-count buckets and the "seen so far" accumulator.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const MAP_SIZE: usize = 1 << 16;

/// Hit-count classes. Two executions that take the same edge a different
/// number of times count as different behavior only when the counts fall
/// into different buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Bucket {
    One = 0,
    Two = 1,
    Three = 2,
    FourToSeven = 3,
    EightToFifteen = 4,
    SixteenToThirtyOne = 5,
    ThirtyTwoTo127 = 6,
    From128 = 7,
}

impl Bucket {
    pub const ALL: [Bucket; 8] = [
        Bucket::One,
        Bucket::Two,
        Bucket::Three,
        Bucket::FourToSeven,
        Bucket::EightToFifteen,
        Bucket::SixteenToThirtyOne,
        Bucket::ThirtyTwoTo127,
        Bucket::From128,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Bucket> {
        Bucket::ALL.get(i as usize).copied()
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bucket::One => "1",
            Bucket::Two => "2",
            Bucket::Three => "3",
            Bucket::FourToSeven => "4-7",
            Bucket::EightToFifteen => "8-15",
            Bucket::SixteenToThirtyOne => "16-31",
            Bucket::ThirtyTwoTo127 => "32-127",
            Bucket::From128 => "128+",
        })
    }
}

pub fn bucket(count: u8) -> Option<Bucket> {
    Some(match count {
        0 => return None,
        1 => Bucket::One,
        2 => Bucket::Two,
        3 => Bucket::Three,
        4..=7 => Bucket::FourToSeven,
        8..=15 => Bucket::EightToFifteen,
        16..=31 => Bucket::SixteenToThirtyOne,
        32..=127 => Bucket::ThirtyTwoTo127,
        128..=255 => Bucket::From128,
    })
}

/// 2^16 one-byte edge hit counters, as written by the instrumented binary.
#[derive(Clone, PartialEq, Eq)]
pub struct CoverageMap {
    counters: Box<[u8]>,
}

impl Default for CoverageMap {
    fn default() -> Self {
        CoverageMap {
            counters: vec![0u8; MAP_SIZE].into_boxed_slice(),
        }
    }
}

impl fmt::Debug for CoverageMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoverageMap").field("edges", &self.edge_count()).finish()
    }
}

impl CoverageMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps a raw map. Returns None unless `bytes` is exactly [`MAP_SIZE`] long.
    pub fn from_bytes(bytes: Vec<u8>) -> Option<Self> {
        (bytes.len() == MAP_SIZE).then(|| CoverageMap {
            counters: bytes.into_boxed_slice(),
        })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.counters
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8] {
        &mut self.counters
    }

    /// Saturating increment, as the coverage runtime does it.
    pub fn hit(&mut self, edge: u16) {
        let c = &mut self.counters[edge as usize];
        *c = c.saturating_add(1);
    }

    pub fn get(&self, edge: u16) -> u8 {
        self.counters[edge as usize]
    }

    pub fn clear(&mut self) {
        self.counters.fill(0);
    }

    /// Nonzero counters as `(edge, count)`, in edge order.
    pub fn nonzero(&self) -> impl Iterator<Item = (u16, u8)> + '_ {
        self.counters
            .chunks_exact(8)
            .enumerate()
            .filter(|(_, chunk)| u64::from_ne_bytes((*chunk).try_into().expect("8-byte chunk")) != 0)
            .flat_map(|(k, chunk)| {
                chunk
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c != 0)
                    .map(move |(j, &c)| ((k * 8 + j) as u16, c))
            })
    }

    pub fn edge_count(&self) -> usize {
        self.nonzero().count()
    }

    pub fn signature(&self) -> Signature {
        Signature(
            self.nonzero()
                .map(|(e, c)| (e, bucket(c).expect("nonzero count").index()))
                .collect(),
        )
    }
}

/// The set of `(edge, bucket index)` pairs of one execution, sorted by edge.
/// Each edge appears at most once.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature(pub Vec<(u16, u8)>);

impl Signature {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = u16> + '_ {
        self.0.iter().map(|&(e, _)| e)
    }

    pub fn contains(&self, edge: u16, bucket: u8) -> bool {
        self.0.binary_search(&(edge, bucket)).is_ok()
    }

    pub fn intersect(&self, other: &Signature) -> Signature {
        Signature(self.0.iter().copied().filter(|&(e, b)| other.contains(e, b)).collect())
    }
}

/// Union of every `(edge, bucket)` pair seen so far, one bit per bucket.
#[derive(Clone)]
pub struct Accumulator {
    seen: Box<[u8]>,
    pairs: usize,
}

impl Default for Accumulator {
    fn default() -> Self {
        Accumulator {
            seen: vec![0u8; MAP_SIZE].into_boxed_slice(),
            pairs: 0,
        }
    }
}

impl fmt::Debug for Accumulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Accumulator").field("pairs", &self.pairs).finish()
    }
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of distinct `(edge, bucket)` pairs recorded.
    pub fn pair_count(&self) -> usize {
        self.pairs
    }

    pub fn edge_count(&self) -> usize {
        self.seen.iter().filter(|&&b| b != 0).count()
    }

    pub fn contains(&self, edge: u16, bucket: u8) -> bool {
        self.seen[edge as usize] & (1 << bucket) != 0
    }

    pub fn has_new(&self, sig: &Signature) -> bool {
        sig.0.iter().any(|&(e, b)| !self.contains(e, b))
    }

    pub fn has_new_map(&self, cov: &CoverageMap) -> bool {
        cov.nonzero()
            .any(|(e, c)| self.seen[e as usize] & bucket(c).expect("nonzero").bit() == 0)
    }

    /// Adds the pairs of `sig`; returns whether anything was new.
    pub fn merge(&mut self, sig: &Signature) -> bool {
        let mut new = false;
        for &(e, b) in &sig.0 {
            let slot = &mut self.seen[e as usize];
            if *slot & (1 << b) == 0 {
                *slot |= 1 << b;
                self.pairs += 1;
                new = true;
            }
        }
        new
    }

    /// Every pair of `sig` is already recorded.
    pub fn covers(&self, sig: &Signature) -> bool {
        !self.has_new(sig)
    }

    /// All recorded pairs, in edge then bucket order.
    pub fn pairs(&self) -> Vec<(u16, u8)> {
        let mut out = Vec::with_capacity(self.pairs);
        for (e, &bits) in self.seen.iter().enumerate() {
            for b in 0..8u8 {
                if bits & (1 << b) != 0 {
                    out.push((e as u16, b));
                }
            }
        }
        out
    }
}

/// True iff `cov` has an `(edge, bucket)` pair the accumulator has not
/// seen; in that case the accumulator absorbs `cov`. Otherwise nothing changes.
pub fn is_interesting(global: &mut Accumulator, cov: &CoverageMap) -> bool {
    if !global.has_new_map(cov) {
        return false;
    }
    global.merge(&cov.signature());
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn bucket_boundaries() {
        assert_eq!(bucket(0), None);
        assert_eq!(bucket(1), Some(Bucket::One));
        assert_eq!(bucket(3), Some(Bucket::Three));
        assert_eq!(bucket(4), Some(Bucket::FourToSeven));
        assert_eq!(bucket(5), Some(Bucket::FourToSeven));
        assert_eq!(bucket(7), Some(Bucket::FourToSeven));
        assert_eq!(bucket(8), Some(Bucket::EightToFifteen));
        assert_eq!(bucket(31), Some(Bucket::SixteenToThirtyOne));
        assert_eq!(bucket(32), Some(Bucket::ThirtyTwoTo127));
        assert_eq!(bucket(127), Some(Bucket::ThirtyTwoTo127));
        assert_eq!(bucket(128), Some(Bucket::From128));
        assert_eq!(bucket(255), Some(Bucket::From128));
        assert_eq!(Bucket::FourToSeven.to_string(), "4-7");
    }

    #[test]
    fn first_execution_is_interesting() {
        let mut acc = Accumulator::new();
        let mut cov = CoverageMap::new();
        cov.hit(10);
        assert!(is_interesting(&mut acc, &cov));
        assert!(!is_interesting(&mut acc, &cov));
    }

    #[test]
    fn empty_map_is_never_interesting() {
        let mut acc = Accumulator::new();
        assert!(!is_interesting(&mut acc, &CoverageMap::new()));
    }

    #[test]
    fn new_bucket_on_same_edge_is_interesting() {
        let mut acc = Accumulator::new();
        let mut once = CoverageMap::new();
        once.hit(42);
        let mut nine = CoverageMap::new();
        for _ in 0..9 {
            nine.hit(42);
        }
        // oracle: set difference over (edge, bucket) pairs
        let before: BTreeSet<_> = once.signature().0.into_iter().collect();
        let after: BTreeSet<_> = nine.signature().0.into_iter().collect();
        assert!(!after.is_subset(&before));

        assert!(is_interesting(&mut acc, &once));
        assert!(is_interesting(&mut acc, &nine));
        assert_eq!(acc.pair_count(), 2);
        assert_eq!(acc.edge_count(), 1);
    }

    #[test]
    fn counters_saturate() {
        let mut cov = CoverageMap::new();
        for _ in 0..300 {
            cov.hit(1);
        }
        assert_eq!(cov.get(1), 255);
    }

    #[test]
    fn signature_intersection() {
        let a = Signature(vec![(1, 0), (2, 1), (3, 0)]);
        let b = Signature(vec![(1, 0), (2, 2)]);
        assert_eq!(a.intersect(&b), Signature(vec![(1, 0)]));
    }

    #[test]
    fn nonzero_scans_whole_map() {
        let mut cov = CoverageMap::new();
        cov.hit(0);
        cov.hit(u16::MAX);
        cov.hit(4097);
        let edges: Vec<u16> = cov.nonzero().map(|(e, _)| e).collect();
        assert_eq!(edges, vec![0, 4097, u16::MAX]);
    }
}
