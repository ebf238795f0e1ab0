//! Types, life tables, population states and parameter draws.
//!
//! Type indices are 1-based throughout the public API. Counts are exact
//! integers; nothing in a [`LifeTable`] is floating point.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 1-based type label in `1..=K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeIndex(u32);

impl TypeIndex {
    pub fn new(value: usize, types: usize) -> Result<Self> {
        if value == 0 || value > types {
            return Err(Error::TypeOutOfRange { value, types });
        }
        Ok(Self(value as u32))
    }

    /// Builds from a zero-based position without range checking.
    pub(crate) fn from_zero_based(pos: usize) -> Self {
        Self(pos as u32 + 1)
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    pub fn zero_based(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for TypeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dense storage for one value per ordered (parent, child) type pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMap<T> {
    types: usize,
    entries: Vec<T>,
}

impl<T> PairMap<T> {
    pub fn from_fn(types: usize, mut f: impl FnMut(TypeIndex, TypeIndex) -> T) -> Self {
        let mut entries = Vec::with_capacity(types * types);
        for i in 0..types {
            for j in 0..types {
                entries.push(f(TypeIndex::from_zero_based(i), TypeIndex::from_zero_based(j)));
            }
        }
        Self { types, entries }
    }

    pub fn types(&self) -> usize {
        self.types
    }

    pub fn get(&self, from: TypeIndex, to: TypeIndex) -> &T {
        &self.entries[from.zero_based() * self.types + to.zero_based()]
    }

    pub fn get_mut(&mut self, from: TypeIndex, to: TypeIndex) -> &mut T {
        &mut self.entries[from.zero_based() * self.types + to.zero_based()]
    }

    /// Zero-based access used by numerical kernels.
    pub fn at(&self, from: usize, to: usize) -> &T {
        &self.entries[from * self.types + to]
    }

    pub fn iter(&self) -> impl Iterator<Item = (TypeIndex, TypeIndex, &T)> {
        let k = self.types;
        self.entries.iter().enumerate().map(move |(n, v)| {
            (
                TypeIndex::from_zero_based(n / k),
                TypeIndex::from_zero_based(n % k),
                v,
            )
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(TypeIndex, TypeIndex, &T) -> U) -> PairMap<U> {
        PairMap::from_fn(self.types, |i, j| f(i, j, self.get(i, j)))
    }
}

/// Maximal offspring count κ per pair. `Some(0)` marks a structurally
/// forbidden transition; `None` an unbounded (Poisson) law.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringCap(PairMap<Option<u32>>);

impl OffspringCap {
    pub fn new(caps: PairMap<Option<u32>>) -> Self {
        Self(caps)
    }

    pub fn uniform(types: usize, kappa: u32) -> Self {
        Self(PairMap::from_fn(types, |_, _| Some(kappa)))
    }

    pub fn from_fn(types: usize, f: impl FnMut(TypeIndex, TypeIndex) -> Option<u32>) -> Self {
        Self(PairMap::from_fn(types, f))
    }

    pub fn types(&self) -> usize {
        self.0.types()
    }

    pub fn kappa(&self, from: TypeIndex, to: TypeIndex) -> Option<u32> {
        *self.0.get(from, to)
    }

    pub fn is_forbidden(&self, from: TypeIndex, to: TypeIndex) -> bool {
        self.kappa(from, to) == Some(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (TypeIndex, TypeIndex, Option<u32>)> + '_ {
        self.0.iter().map(|(i, j, k)| (i, j, *k))
    }
}

/// Key of one life-table entry: `n_{from,to}(offspring, time)`.
///
/// Ordered by time first so that iteration follows the data chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub time: u32,
    pub from: TypeIndex,
    pub to: TypeIndex,
    pub offspring: u32,
}

impl Cell {
    pub fn new(from: TypeIndex, to: TypeIndex, offspring: u32, time: u32) -> Self {
        Self {
            time,
            from,
            to,
            offspring,
        }
    }
}

/// Transition counts `n_{i,j}(k,t)`: how many type-`i` individuals at time
/// `t` had `k` type-`j` offspring at `t+1`.
///
/// Cells that were never inserted are unobserved; an inserted zero is an
/// observation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LifeTable {
    types: usize,
    horizon: u32,
    counts: BTreeMap<Cell, u64>,
}

impl LifeTable {
    pub fn new(types: usize) -> Self {
        Self {
            types,
            horizon: 0,
            counts: BTreeMap::new(),
        }
    }

    pub fn types(&self) -> usize {
        self.types
    }

    /// Last observed time `T` (0 for an empty table).
    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    /// Widens the type range, e.g. to match a prior with more types than the
    /// data mention.
    pub fn with_types(mut self, types: usize) -> Result<Self> {
        if types < self.types {
            return Err(Error::DimensionMismatch {
                expected: self.types,
                actual: types,
            });
        }
        self.types = types;
        Ok(self)
    }

    /// Sets one cell and returns the previous count, if any.
    pub fn insert(&mut self, cell: Cell, count: u64) -> Result<Option<u64>> {
        self.check_types(cell)?;
        self.horizon = self.horizon.max(cell.time);
        Ok(self.counts.insert(cell, count))
    }

    /// Adds to one cell, creating it if needed.
    pub fn add(&mut self, cell: Cell, count: u64) -> Result<()> {
        self.check_types(cell)?;
        self.horizon = self.horizon.max(cell.time);
        *self.counts.entry(cell).or_insert(0) += count;
        Ok(())
    }

    pub fn get(&self, cell: &Cell) -> Option<u64> {
        self.counts.get(cell).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Cell, u64)> {
        self.counts.iter().map(|(c, n)| (c, *n))
    }

    /// Rows at a single time, as a new table whose only time is `time`.
    pub fn slice(&self, time: u32) -> Self {
        let mut out = Self::new(self.types);
        for (c, n) in self.iter().filter(|(c, _)| c.time == time) {
            out.counts.insert(*c, n);
        }
        out.horizon = time;
        out
    }

    /// Rows with `time < end`.
    pub fn truncate(&self, end: u32) -> Self {
        let mut out = Self::new(self.types);
        for (c, n) in self.iter().filter(|(c, _)| c.time < end) {
            out.counts.insert(*c, n);
            out.horizon = out.horizon.max(c.time);
        }
        out
    }

    /// Appends `other` after this table's last time step.
    pub fn concat(&self, other: &LifeTable) -> Self {
        let mut out = self.clone();
        out.types = self.types.max(other.types);
        let shift = if self.is_empty() { 0 } else { self.horizon + 1 };
        for (c, n) in other.iter() {
            let cell = Cell {
                time: c.time + shift,
                ..*c
            };
            out.counts.insert(cell, n);
            out.horizon = out.horizon.max(cell.time);
        }
        out
    }

    fn check_types(&self, cell: Cell) -> Result<()> {
        for t in [cell.from, cell.to] {
            if t.get() > self.types {
                return Err(Error::TypeOutOfRange {
                    value: t.get(),
                    types: self.types,
                });
            }
        }
        Ok(())
    }

    /// Row totals `Σ_k n_{i,j}(k,t)` for every observed `(i, t, j)`.
    fn row_totals(&self) -> BTreeMap<(u32, TypeIndex), BTreeMap<TypeIndex, u64>> {
        let mut totals: BTreeMap<(u32, TypeIndex), BTreeMap<TypeIndex, u64>> = BTreeMap::new();
        for (c, n) in self.iter() {
            *totals
                .entry((c.time, c.from))
                .or_default()
                .entry(c.to)
                .or_insert(0) += n;
        }
        totals
    }
}

/// Abundance per type at a given time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationState {
    pub counts: Vec<u64>,
    pub time: u32,
}

impl PopulationState {
    pub fn new(counts: Vec<u64>, time: u32) -> Self {
        Self { counts, time }
    }

    pub fn at_zero(counts: Vec<u64>) -> Self {
        Self { counts, time: 0 }
    }

    pub fn types(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_extinct(&self) -> bool {
        self.counts.iter().all(|&n| n == 0)
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&n| n as f64).collect()
    }

    /// A single individual of `kind` among `types` types.
    pub fn single(kind: TypeIndex, types: usize) -> Self {
        let mut counts = vec![0; types];
        counts[kind.zero_based()] = 1;
        Self::at_zero(counts)
    }
}

/// Offspring law of one (parent, child) pair in a parameter draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum OffspringLaw {
    /// `p(k)` for `k = 0..=κ`.
    Categorical { p: Vec<f64> },
    /// Poisson with the given rate.
    Poisson { rate: f64 },
}

impl OffspringLaw {
    pub fn point_mass_zero() -> Self {
        OffspringLaw::Categorical { p: vec![1.0] }
    }

    pub fn categorical(p: Vec<f64>) -> Result<Self> {
        check_probability_vector(&p, 1e-12)?;
        Ok(OffspringLaw::Categorical { p })
    }

    pub fn mean(&self) -> f64 {
        match self {
            OffspringLaw::Categorical { p } => {
                p.iter().enumerate().map(|(k, pk)| k as f64 * pk).sum()
            }
            OffspringLaw::Poisson { rate } => *rate,
        }
    }

    /// `Σ_k (k² − m²) p(k)`, the offspring variance.
    pub fn variance(&self) -> f64 {
        match self {
            OffspringLaw::Categorical { p } => {
                let m = self.mean();
                p.iter()
                    .enumerate()
                    .map(|(k, pk)| ((k * k) as f64 - m * m) * pk)
                    .sum::<f64>()
                    .max(0.0)
            }
            OffspringLaw::Poisson { rate } => *rate,
        }
    }

    /// Probability generating function `Σ_k p(k) x^k`.
    pub fn pgf(&self, x: f64) -> f64 {
        match self {
            OffspringLaw::Categorical { p } => p.iter().rev().fold(0.0, |acc, pk| acc * x + pk),
            OffspringLaw::Poisson { rate } => (rate * (x - 1.0)).exp(),
        }
    }

    /// Derivative of [`Self::pgf`].
    pub fn pgf_derivative(&self, x: f64) -> f64 {
        match self {
            OffspringLaw::Categorical { p } => p
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, pk)| acc * x + k as f64 * pk),
            OffspringLaw::Poisson { rate } => rate * (rate * (x - 1.0)).exp(),
        }
    }

    /// True when the law puts all its mass on `value`.
    pub fn is_point_mass_at(&self, value: u32) -> bool {
        match self {
            OffspringLaw::Categorical { p } => p
                .iter()
                .enumerate()
                .all(|(k, &pk)| if k == value as usize { pk == 1.0 } else { pk == 0.0 }),
            OffspringLaw::Poisson { rate } => value == 0 && *rate == 0.0,
        }
    }
}

/// One realisation of all `K²` offspring laws.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDraw {
    laws: PairMap<OffspringLaw>,
}

impl ParameterDraw {
    pub fn new(laws: PairMap<OffspringLaw>) -> Result<Self> {
        for (i, j, law) in laws.iter() {
            match law {
                OffspringLaw::Categorical { p } => check_probability_vector(p, 1e-12)
                    .map_err(|e| Error::InvalidProbabilityVector(format!("p_{{{i},{j}}}: {e}")))?,
                OffspringLaw::Poisson { rate } => {
                    if !(rate.is_finite() && *rate >= 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "Poisson rate for ({i},{j}) must be finite and nonnegative"
                        )));
                    }
                }
            }
        }
        Ok(Self { laws })
    }

    /// Single-type draw with a categorical law.
    pub fn single_type(p: Vec<f64>) -> Result<Self> {
        let law = OffspringLaw::categorical(p)?;
        Self::new(PairMap::from_fn(1, |_, _| law.clone()))
    }

    /// Every pair forbidden: nobody has offspring.
    pub fn certain_death(types: usize) -> Self {
        Self {
            laws: PairMap::from_fn(types, |_, _| OffspringLaw::point_mass_zero()),
        }
    }

    pub fn types(&self) -> usize {
        self.laws.types()
    }

    pub fn law(&self, from: TypeIndex, to: TypeIndex) -> &OffspringLaw {
        self.laws.get(from, to)
    }

    pub fn laws(&self) -> &PairMap<OffspringLaw> {
        &self.laws
    }
}

pub(crate) fn check_probability_vector(p: &[f64], tol: f64) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidProbabilityVector("empty".into()));
    }
    if let Some(x) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidProbabilityVector(format!(
            "entry {x} outside [0,1]"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > tol {
        return Err(Error::InvalidProbabilityVector(format!("sums to {s}")));
    }
    Ok(())
}

/// One structural problem found in a life table.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TypeOutOfRange { cell: Cell, types: usize },
    OffspringExceedsCap { cell: Cell, kappa: u32 },
    RowInconsistent {
        from: TypeIndex,
        time: u32,
        totals: Vec<(TypeIndex, u64)>,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TypeOutOfRange { cell, types } => write!(
                f,
                "cell ({},{},{},{}) references a type outside 1..={types}",
                cell.from, cell.to, cell.offspring, cell.time
            ),
            Violation::OffspringExceedsCap { cell, kappa } => write!(
                f,
                "offspring exceeds cap: n_{{{},{}}}({},{}) with kappa = {kappa}",
                cell.from, cell.to, cell.offspring, cell.time
            ),
            Violation::RowInconsistent { from, time, totals } => write!(
                f,
                "row totals of type {from} at time {time} differ across child types: {totals:?}"
            ),
        }
    }
}

/// Lists every structural problem of `table` under `cap`. An empty list
/// means the table is valid.
///
/// Row consistency compares, for each parent type and time, the row totals
/// of the child types that have at least one recorded cell.
pub fn validate_life_table(table: &LifeTable, cap: &OffspringCap) -> Vec<Violation> {
    let types = cap.types();
    let mut out = Vec::new();
    for (cell, _) in table.iter() {
        if cell.from.get() > types || cell.to.get() > types {
            out.push(Violation::TypeOutOfRange { cell: *cell, types });
            continue;
        }
        if let Some(kappa) = cap.kappa(cell.from, cell.to) {
            if cell.offspring > kappa {
                out.push(Violation::OffspringExceedsCap { cell: *cell, kappa });
            }
        }
    }
    out.extend(row_inconsistencies(table));
    out
}

fn row_inconsistencies(table: &LifeTable) -> Vec<Violation> {
    table
        .row_totals()
        .into_iter()
        .filter_map(|((time, from), per_child)| {
            let mut values = per_child.values();
            let first = *values.next()?;
            if values.all(|&v| v == first) {
                None
            } else {
                Some(Violation::RowInconsistent {
                    from,
                    time,
                    totals: per_child.into_iter().collect(),
                })
            }
        })
        .collect()
}

/// `Σ_t n_{i,j}(k,t)` keyed by `(i, j, k)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AggregatedCounts(BTreeMap<(TypeIndex, TypeIndex, u32), u64>);

impl AggregatedCounts {
    pub fn get(&self, from: TypeIndex, to: TypeIndex, offspring: u32) -> u64 {
        self.0.get(&(from, to, offspring)).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((TypeIndex, TypeIndex, u32), u64)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }

    /// Entrywise sum.
    pub fn merged(&self, other: &AggregatedCounts) -> AggregatedCounts {
        let mut out = self.0.clone();
        for (k, v) in other.iter() {
            *out.entry(k).or_insert(0) += v;
        }
        AggregatedCounts(out)
    }

    /// Nonzero entries only, for comparisons that ignore explicit zeros.
    pub fn nonzero(&self) -> BTreeMap<(TypeIndex, TypeIndex, u32), u64> {
        self.0.iter().filter(|(_, &v)| v > 0).map(|(k, v)| (*k, *v)).collect()
    }
}

pub fn aggregate_counts(table: &LifeTable) -> AggregatedCounts {
    let mut out = BTreeMap::new();
    for (c, n) in table.iter() {
        *out.entry((c.from, c.to, c.offspring)).or_insert(0) += n;
    }
    AggregatedCounts(out)
}

/// Recovers `N(0), …, N(T+1)` from a complete table:
/// `N_i(t) = Σ_k n_{i,j}(k,t)` for any recorded `j`, and
/// `N_j(T+1) = Σ_i Σ_k k·n_{i,j}(k,T)`.
pub fn abundances_from_table(table: &LifeTable) -> Result<Vec<PopulationState>> {
    if let Some(Violation::RowInconsistent { from, time, totals }) =
        row_inconsistencies(table).into_iter().next()
    {
        return Err(Error::RowInconsistent { from, time, totals });
    }
    let types = table.types();
    let horizon = table.horizon();
    let mut states: Vec<PopulationState> = (0..=horizon + 1)
        .map(|t| PopulationState::new(vec![0; types], t))
        .collect();
    for ((time, from), per_child) in table.row_totals() {
        let total = per_child.values().next().copied().unwrap_or(0);
        states[time as usize].counts[from.zero_based()] = total;
    }
    for (c, n) in table.iter().filter(|(c, _)| c.time == horizon) {
        states[horizon as usize + 1].counts[c.to.zero_based()] += c.offspring as u64 * n;
    }
    Ok(states)
}
