//! Reference data sets used by examples, tests and the CLI.

use crate::model::{Cell, LifeTable, OffspringCap, ParameterDraw, PopulationState, TypeIndex};

fn ty(v: usize) -> TypeIndex {
    TypeIndex::from_zero_based(v - 1)
}

/// Offspring law that generated the synthetic decline data.
pub const SYNTHETIC_TRUE_LAW: [f64; 5] = [0.48, 0.38, 0.07, 0.05, 0.02];

/// Five years of a single-type declining population, `κ = 4`, starting
/// from 100 individuals.
pub fn synthetic_learning_table() -> LifeTable {
    const ROWS: [[u64; 5]; 5] = [
        [47, 30, 29, 20, 18],
        [39, 37, 23, 17, 11],
        [8, 4, 2, 3, 2],
        [4, 2, 4, 2, 1],
        [2, 2, 1, 1, 1],
    ];
    let mut table = LifeTable::new(1);
    for (k, row) in ROWS.iter().enumerate() {
        for (t, &n) in row.iter().enumerate() {
            table
                .insert(Cell::new(ty(1), ty(1), k as u32, t as u32), n)
                .expect("type in range");
        }
    }
    table
}

pub fn synthetic_true_draw() -> ParameterDraw {
    ParameterDraw::single_type(SYNTHETIC_TRUE_LAW.to_vec()).expect("valid law")
}

pub fn synthetic_cap() -> OffspringCap {
    OffspringCap::uniform(1, 4)
}

/// Five-stage female brown bear model: cub, yearling, two subadult stages
/// and adult. Stages 1 to 4 survive into the next stage, adults survive in
/// place and produce up to three female cubs.
pub fn bear_cap() -> OffspringCap {
    OffspringCap::from_fn(5, |i, j| match (i.get(), j.get()) {
        (1, 2) | (2, 3) | (3, 4) | (4, 5) | (5, 5) => Some(1),
        (5, 1) => Some(3),
        _ => Some(0),
    })
}

/// Survival and litter counts aggregated over the monitoring period, as a
/// single time slice.
///
/// Adult survival and reproduction were recorded from different sets of
/// observations, so the adult rows do not share a total; this table is
/// suitable for the posterior update but not for abundance recovery.
pub fn bear_aggregate_table() -> LifeTable {
    let entries: [(usize, usize, &[u64]); 6] = [
        (1, 2, &[3, 17]),
        (2, 3, &[0, 16]),
        (3, 4, &[2, 12]),
        (4, 5, &[0, 12]),
        (5, 5, &[3, 72]),
        (5, 1, &[70, 8, 6, 0]),
    ];
    let mut table = LifeTable::new(5);
    for (i, j, counts) in entries {
        for (k, &n) in counts.iter().enumerate() {
            table
                .insert(Cell::new(ty(i), ty(j), k as u32, 0), n)
                .expect("type in range");
        }
    }
    table
}

/// Females in the central Pyrenees in 2016 by stage.
pub fn bear_population_2016() -> PopulationState {
    PopulationState::at_zero(vec![2, 2, 2, 1, 10])
}

/// A reintroduction of `n` adult females.
pub fn bear_adults(n: u64) -> PopulationState {
    PopulationState::at_zero(vec![0, 0, 0, 0, n])
}
