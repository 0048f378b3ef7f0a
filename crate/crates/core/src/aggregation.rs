//! Per-stage maps from state-action pairs to aggregate cells, and the
//! exact aggregation error of such a map against a solved MDP.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{backward_induction, EpisodicMdp, QTables};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregationError {
    #[error("aggregation needs at least one cell")]
    NoCells,
    #[error("cell index {cell} at (h={h}, s={s}, a={a}) is out of range for {num_cells} cells")]
    CellOutOfRange {
        h: usize,
        s: usize,
        a: usize,
        cell: usize,
        num_cells: usize,
    },
    #[error("pair (h={h}, s={s}, a={a}) is not mapped")]
    Unmapped { h: usize, s: usize, a: usize },
    #[error("aggregation is {agg:?} (H, S, A) but the MDP is {mdp:?}")]
    DimensionMismatch {
        agg: (usize, usize, usize),
        mdp: (usize, usize, usize),
    },
}

/// Stage-dependent partition of state-action pairs into `num_cells` cells.
/// Cells may be empty at some stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AggregationDocument", into = "AggregationDocument")]
pub struct Aggregation {
    num_cells: usize,
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    maps: Vec<usize>,
}

impl Aggregation {
    /// `maps` is flat `[h][s][a]`.
    pub fn new(
        num_cells: usize,
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        maps: Vec<usize>,
    ) -> Result<Self, AggregationError> {
        if num_cells == 0 {
            return Err(AggregationError::NoCells);
        }
        let expected = horizon * num_states * num_actions;
        if maps.len() < expected {
            let idx = maps.len();
            let (h, s, a) = split(idx, num_states, num_actions);
            return Err(AggregationError::Unmapped { h, s, a });
        }
        if maps.len() > expected {
            return Err(AggregationError::DimensionMismatch {
                agg: (horizon, num_states, num_actions),
                mdp: (horizon, num_states, num_actions),
            });
        }
        if let Some(idx) = maps.iter().position(|&m| m >= num_cells) {
            let (h, s, a) = split(idx, num_states, num_actions);
            return Err(AggregationError::CellOutOfRange {
                h,
                s,
                a,
                cell: maps[idx],
                num_cells,
            });
        }
        Ok(Self {
            num_cells,
            horizon,
            num_states,
            num_actions,
            maps,
        })
    }

    /// Builds a map from a closure over `(h, s, a)`.
    pub fn from_fn(
        num_cells: usize,
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        mut cell: impl FnMut(usize, usize, usize) -> usize,
    ) -> Result<Self, AggregationError> {
        let mut maps = Vec::with_capacity(horizon * num_states * num_actions);
        for h in 0..horizon {
            for s in 0..num_states {
                for a in 0..num_actions {
                    maps.push(cell(h, s, a));
                }
            }
        }
        Self::new(num_cells, horizon, num_states, num_actions, maps)
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// The cell of `(s, a)` at stage `h`.
    #[inline]
    pub fn cell(&self, h: usize, s: usize, a: usize) -> usize {
        self.maps[(h * self.num_states + s) * self.num_actions + a]
    }

    /// Cells of every action at `(h, s)`.
    #[inline]
    pub fn cells_at(&self, h: usize, s: usize) -> &[usize] {
        let start = (h * self.num_states + s) * self.num_actions;
        &self.maps[start..start + self.num_actions]
    }

    pub fn check_dimensions(&self, mdp: &EpisodicMdp) -> Result<(), AggregationError> {
        let agg = (self.horizon, self.num_states, self.num_actions);
        let dims = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
        if agg == dims {
            Ok(())
        } else {
            Err(AggregationError::DimensionMismatch { agg, mdp: dims })
        }
    }

    /// Returns a copy with cell labels permuted by `relabel[old] = new`.
    pub fn relabeled(&self, relabel: &[usize]) -> Self {
        Self {
            maps: self.maps.iter().map(|&m| relabel[m]).collect(),
            ..self.clone()
        }
    }

    /// Returns a copy in which, at stage `h`, cell `from` is merged into `into`.
    pub fn merged(&self, h: usize, from: usize, into: usize) -> Self {
        let mut maps = self.maps.clone();
        let width = self.num_states * self.num_actions;
        for m in &mut maps[h * width..(h + 1) * width] {
            if *m == from {
                *m = into;
            }
        }
        Self {
            maps,
            ..self.clone()
        }
    }
}

fn split(idx: usize, states: usize, actions: usize) -> (usize, usize, usize) {
    (
        idx / (states * actions),
        (idx / actions) % states,
        idx % actions,
    )
}

/// Each pair is its own cell: `φ_h(s, a) = s·A + a`, so `M = S·A`.
pub fn trivial_aggregation(horizon: usize, num_states: usize, num_actions: usize) -> Aggregation {
    Aggregation::from_fn(
        num_states * num_actions,
        horizon,
        num_states,
        num_actions,
        |_, s, a| s * num_actions + a,
    )
    .expect("trivial aggregation is well formed")
}

/// Outcome of [`validate`]: per-stage occupancy of every cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub num_cells: usize,
    /// `occupancy[h][m]` = number of pairs mapped to cell `m` at stage `h`.
    pub occupancy: Vec<Vec<usize>>,
}

impl ValidationReport {
    /// Cells with no pairs, per stage.
    pub fn unused_cells(&self) -> Vec<usize> {
        self.occupancy
            .iter()
            .map(|stage| stage.iter().filter(|&&n| n == 0).count())
            .collect()
    }
}

/// Checks that `agg` fits `mdp` and reports cell occupancy.
pub fn validate(
    agg: &Aggregation,
    mdp: &EpisodicMdp,
) -> Result<ValidationReport, AggregationError> {
    agg.check_dimensions(mdp)?;
    let mut occupancy = vec![vec![0usize; agg.num_cells]; agg.horizon];
    for (h, stage) in occupancy.iter_mut().enumerate() {
        for s in 0..agg.num_states {
            for &m in agg.cells_at(h, s) {
                stage[m] += 1;
            }
        }
    }
    Ok(ValidationReport {
        num_cells: agg.num_cells,
        occupancy,
    })
}

/// Largest `|Q*_h(s,a) − Q*_h(s',a')|` over pairs sharing a cell at some stage.
pub fn epsilon_of(mdp: &EpisodicMdp, agg: &Aggregation) -> Result<f64, AggregationError> {
    agg.check_dimensions(mdp)?;
    let (q, _) = backward_induction(mdp);
    Ok(epsilon_from_q(&q, agg))
}

/// Same as [`epsilon_of`] for an already solved `Q*`. Computed as the
/// largest within-cell span (max − min); empty cells contribute nothing.
pub fn epsilon_from_q(q_star: &QTables, agg: &Aggregation) -> f64 {
    let mut lo = vec![f64::INFINITY; agg.num_cells];
    let mut hi = vec![f64::NEG_INFINITY; agg.num_cells];
    let mut epsilon: f64 = 0.0;
    for h in 0..agg.horizon {
        lo.fill(f64::INFINITY);
        hi.fill(f64::NEG_INFINITY);
        for s in 0..agg.num_states {
            for (a, &m) in agg.cells_at(h, s).iter().enumerate() {
                let v = q_star.get(h, s, a);
                lo[m] = lo[m].min(v);
                hi[m] = hi[m].max(v);
            }
        }
        for (l, u) in lo.iter().zip(&hi) {
            if u >= l {
                epsilon = epsilon.max(u - l);
            }
        }
    }
    epsilon
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AggregationDocument {
    num_cells: usize,
    maps: Vec<Vec<Vec<usize>>>,
}

impl TryFrom<AggregationDocument> for Aggregation {
    type Error = AggregationError;

    fn try_from(doc: AggregationDocument) -> Result<Self, AggregationError> {
        let horizon = doc.maps.len();
        let num_states = doc.maps.first().map_or(0, Vec::len);
        let num_actions = doc
            .maps
            .first()
            .and_then(|stage| stage.first())
            .map_or(0, Vec::len);
        for (h, stage) in doc.maps.iter().enumerate() {
            for s in 0..num_states {
                let row = stage.get(s).map_or(&[][..], Vec::as_slice);
                if row.len() < num_actions {
                    return Err(AggregationError::Unmapped { h, s, a: row.len() });
                }
                if row.len() > num_actions {
                    return Err(AggregationError::DimensionMismatch {
                        agg: (horizon, num_states, row.len()),
                        mdp: (horizon, num_states, num_actions),
                    });
                }
            }
            if stage.len() > num_states {
                return Err(AggregationError::DimensionMismatch {
                    agg: (horizon, stage.len(), num_actions),
                    mdp: (horizon, num_states, num_actions),
                });
            }
        }
        let maps = doc.maps.into_iter().flatten().flatten().collect();
        Aggregation::new(doc.num_cells, horizon, num_states, num_actions, maps)
    }
}

impl From<Aggregation> for AggregationDocument {
    fn from(agg: Aggregation) -> Self {
        let maps = agg
            .maps
            .chunks(agg.num_states * agg.num_actions)
            .map(|stage| {
                stage
                    .chunks(agg.num_actions)
                    .map(<[usize]>::to_vec)
                    .collect()
            })
            .collect();
        AggregationDocument {
            num_cells: agg.num_cells,
            maps,
        }
    }
}
