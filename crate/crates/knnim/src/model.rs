//! Interaction structure: pairwise distances, K-neighborhoods, and the
//! treatment exposures realized on closed neighborhoods.
//!
//! Distances encode interaction strength, with smaller values meaning
//! stronger interaction. Unit `i`'s K-neighborhood is the ordered list of
//! its K closest units; together with `i` itself it forms the closed
//! neighborhood on which `i`'s exposure is defined.

use std::fmt;

use thiserror::Error;

/// Errors from constructing or querying the interference structure.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("need at least 2 units, got {0}")]
    TooFewUnits(usize),
    #[error("distance matrix row {row} has {got} entries, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("distance d({i},{j}) = {value} must be finite and nonnegative")]
    InvalidDistance { i: usize, j: usize, value: f64 },
    #[error("neighborhood size k = {k} out of range for {n} units (need 1 <= k <= n-1)")]
    NeighborhoodSize { k: usize, n: usize },
    #[error("unit index {index} out of range for {n} units")]
    UnitIndex { index: usize, n: usize },
    #[error("assignment has {got} entries, expected {expected}")]
    AssignmentLength { got: usize, expected: usize },
    #[error("treated prefix length {len} exceeds neighborhood size {k}")]
    PrefixLength { len: usize, k: usize },
    #[error("neighborhood size {k} exceeds the supported maximum of {max}")]
    NeighborhoodTooLarge { k: usize, max: usize },
}

/// Largest supported neighborhood size; exposures are bit-packed into a u32
/// (one bit for the unit itself plus one per neighbor).
pub const MAX_K: usize = 31;

/// Pairwise interaction distances for `n` units.
///
/// Row `i` holds unit `i`'s view of every other unit, so the matrix may be
/// asymmetric (interference is directed). Diagonal entries are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    /// Build from explicit rows, validating that every off-diagonal entry
    /// is finite and nonnegative.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let n = rows.len();
        if n < 2 {
            return Err(ModelError::TooFewUnits(n));
        }
        let mut d = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ModelError::RaggedRow {
                    row: i,
                    got: row.len(),
                    expected: n,
                });
            }
            for (j, &value) in row.iter().enumerate() {
                if i != j && !(value.is_finite() && value >= 0.0) {
                    return Err(ModelError::InvalidDistance { i, j, value });
                }
                d[i * n + j] = value;
            }
        }
        Ok(Self { n, d })
    }

    /// Build from a distance function over index pairs.
    pub fn from_fn(
        n: usize,
        mut dist: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, ModelError> {
        if n < 2 {
            return Err(ModelError::TooFewUnits(n));
        }
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let value = dist(i, j);
                if !(value.is_finite() && value >= 0.0) {
                    return Err(ModelError::InvalidDistance { i, j, value });
                }
                d[i * n + j] = value;
            }
        }
        Ok(Self { n, d })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Distance from `i`'s perspective to `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

/// Per-unit ordered neighbor lists: for each unit, the K closest units in
/// nondecreasing distance, ties broken by ascending unit index so the
/// construction is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KNeighborhoods {
    k: usize,
    neighbors: Vec<Vec<usize>>,
}

/// Build each unit's ordered list of its `k` nearest neighbors.
pub fn build_k_neighborhoods(d: &DistanceMatrix, k: usize) -> Result<KNeighborhoods, ModelError> {
    let n = d.n();
    if k < 1 || k > n - 1 {
        return Err(ModelError::NeighborhoodSize { k, n });
    }
    if k > MAX_K {
        return Err(ModelError::NeighborhoodTooLarge { k, max: MAX_K });
    }
    let mut neighbors = Vec::with_capacity(n);
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        // Total order on (distance, index); exact distance comparison is
        // intended, ties are resolved by the index component.
        let order = |&a: &usize, &b: &usize| {
            d.get(i, a)
                .partial_cmp(&d.get(i, b))
                .expect("distances validated finite")
                .then(a.cmp(&b))
        };
        if k < others.len() {
            others.select_nth_unstable_by(k - 1, order);
            others.truncate(k);
        }
        others.sort_by(order);
        neighbors.push(others);
    }
    Ok(KNeighborhoods { k, neighbors })
}

impl KNeighborhoods {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    /// Ordered neighbor list of unit `i` (nearest first).
    pub fn neighbors_of(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Position of `u` in `i`'s neighbor list (0 = nearest), if present.
    pub fn position_of(&self, i: usize, u: usize) -> Option<usize> {
        self.neighbors[i].iter().position(|&v| v == u)
    }

    /// Whether `u` lies in `i`'s closed neighborhood (`u == i` or `u` is a
    /// neighbor of `i`).
    pub fn in_closed_neighborhood(&self, i: usize, u: usize) -> bool {
        u == i || self.position_of(i, u).is_some()
    }

    fn check_unit(&self, i: usize) -> Result<(), ModelError> {
        if i >= self.n() {
            Err(ModelError::UnitIndex {
                index: i,
                n: self.n(),
            })
        } else {
            Ok(())
        }
    }
}

/// A realized treatment vector over all units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment(Vec<bool>);

impl Assignment {
    pub fn new(w: Vec<bool>) -> Self {
        Self(w)
    }

    /// Convenience constructor from 0/1 integers.
    pub fn from_bits(bits: &[u8]) -> Self {
        Self(bits.iter().map(|&b| b != 0).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn treated(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn treated_count(&self) -> usize {
        self.0.iter().filter(|&&t| t).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

/// The treatment pattern a unit experiences on its closed neighborhood:
/// its own bit plus one bit per neighbor, nearest first. There are
/// `2^(K+1)` distinct exposures for neighborhood size K.
///
/// Bit-packed: bit 0 is the unit's own treatment, bit `1 + p` the treatment
/// of the neighbor at position `p`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Exposure {
    k: u8,
    bits: u32,
}

impl Exposure {
    /// Exposure with own treatment `own` and the given neighbor bits
    /// (nearest neighbor first).
    pub fn new(own: bool, neighbor_bits: &[bool]) -> Self {
        assert!(neighbor_bits.len() <= MAX_K, "neighborhood too large");
        let mut bits = own as u32;
        for (p, &b) in neighbor_bits.iter().enumerate() {
            if b {
                bits |= 1 << (1 + p);
            }
        }
        Self {
            k: neighbor_bits.len() as u8,
            bits,
        }
    }

    /// All neighbors treated.
    pub fn all_ones(own: bool, k: usize) -> Self {
        Self::treated_prefix(own, k, k).expect("prefix equals k")
    }

    /// All neighbors control.
    pub fn all_zeros(own: bool, k: usize) -> Self {
        Self::treated_prefix(own, 0, k).expect("empty prefix")
    }

    /// The pattern in which the `len` nearest neighbors are treated and the
    /// remaining `k - len` are control. `len = 0` gives all-zeros and
    /// `len = k` all-ones.
    pub fn treated_prefix(own: bool, len: usize, k: usize) -> Result<Self, ModelError> {
        if len > k {
            return Err(ModelError::PrefixLength { len, k });
        }
        if k > MAX_K {
            return Err(ModelError::NeighborhoodTooLarge { k, max: MAX_K });
        }
        let mut bits = own as u32;
        for p in 0..len {
            bits |= 1 << (1 + p);
        }
        Ok(Self { k: k as u8, bits })
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }

    /// The unit's own treatment bit.
    pub fn own(&self) -> bool {
        self.bits & 1 != 0
    }

    /// Treatment of the neighbor at `position` (0 = nearest).
    pub fn neighbor(&self, position: usize) -> bool {
        assert!(position < self.k as usize, "neighbor position out of range");
        self.bits & (1 << (1 + position)) != 0
    }

    /// Number of treated units in the closed neighborhood (own bit included).
    pub fn treated_count(&self) -> usize {
        self.bits.count_ones() as usize
    }

    /// Number of control units in the closed neighborhood.
    pub fn control_count(&self) -> usize {
        self.k as usize + 1 - self.treated_count()
    }

    /// All `2^(k+1)` exposures in report order: own bit treated first, then
    /// neighbor patterns ascending when read nearest-neighbor-first.
    pub fn enumerate(k: usize) -> impl Iterator<Item = Exposure> {
        assert!(k <= MAX_K, "neighborhood too large");
        [true, false].into_iter().flat_map(move |own| {
            (0..(1u32 << k)).map(move |pattern| {
                let mut bits = own as u32;
                for p in 0..k {
                    if pattern & (1 << (k - 1 - p)) != 0 {
                        bits |= 1 << (1 + p);
                    }
                }
                Exposure { k: k as u8, bits }
            })
        })
    }

    /// Dense index in `0..2^(k+1)`, for table storage.
    pub(crate) fn bit_index(&self) -> usize {
        self.bits as usize
    }

    /// Neighbor bits rendered nearest-first, e.g. `"10"` for K = 2 with the
    /// nearest neighbor treated.
    pub fn pattern_string(&self) -> String {
        (0..self.k())
            .map(|p| if self.neighbor(p) { '1' } else { '0' })
            .collect()
    }
}

impl fmt::Display for Exposure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.own() as u8, self.pattern_string())
    }
}

impl fmt::Debug for Exposure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Exposure({self})")
    }
}

/// The exposure unit `i` realizes under assignment `w`.
pub fn classify_exposure(
    nbr: &KNeighborhoods,
    w: &Assignment,
    i: usize,
) -> Result<Exposure, ModelError> {
    nbr.check_unit(i)?;
    if w.len() != nbr.n() {
        return Err(ModelError::AssignmentLength {
            got: w.len(),
            expected: nbr.n(),
        });
    }
    let neighbor_bits: Vec<bool> = nbr.neighbors_of(i).iter().map(|&j| w.treated(j)).collect();
    Ok(Exposure::new(w.treated(i), &neighbor_bits))
}

/// Observed unit counts for each of the `2^(K+1)` exposures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExposureCounts {
    k: usize,
    counts: Vec<usize>,
}

impl ExposureCounts {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn count(&self, e: Exposure) -> usize {
        self.counts[e.bits as usize]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `(exposure, count)` pairs in report order.
    pub fn rows(&self) -> Vec<(Exposure, usize)> {
        Exposure::enumerate(self.k)
            .map(|e| (e, self.count(e)))
            .collect()
    }

    /// The own-treatment by neighbor-pattern grid: pattern labels in
    /// ascending order, then the treated and control count rows.
    pub fn grid(&self) -> (Vec<String>, Vec<usize>, Vec<usize>) {
        let patterns: Vec<Exposure> = Exposure::enumerate(self.k).filter(|e| e.own()).collect();
        let labels = patterns.iter().map(|e| e.pattern_string()).collect();
        let treated = patterns.iter().map(|e| self.count(*e)).collect();
        let control = patterns
            .iter()
            .map(|e| {
                let flipped = Exposure {
                    k: e.k,
                    bits: e.bits & !1,
                };
                self.count(flipped)
            })
            .collect();
        (labels, treated, control)
    }
}

/// Tally how many units realize each exposure under `w`.
pub fn exposure_counts(nbr: &KNeighborhoods, w: &Assignment) -> Result<ExposureCounts, ModelError> {
    let k = nbr.k();
    let mut counts = vec![0usize; 1 << (k + 1)];
    for i in 0..nbr.n() {
        let e = classify_exposure(nbr, w, i)?;
        counts[e.bits as usize] += 1;
    }
    Ok(ExposureCounts { k, counts })
}
