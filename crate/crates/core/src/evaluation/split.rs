use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The time-ordered item list is cut into this many parts.
pub const PART_COUNT: usize = 5;

/// How much history each fold trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// Fold k trains on parts 1..=k.
    #[default]
    Expanding,
    /// Fold k trains on part k alone.
    Sliding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Range<usize>,
    pub test: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub parts: Vec<Range<usize>>,
    pub folds: Vec<Fold>,
}

/// Index plan over `len` time-sorted items: five near-equal parts (the first
/// `len % 5` get one extra item), and four folds each testing on the part
/// right after its training window.
pub fn forward_chain_split(len: usize, mode: WindowMode) -> Result<FoldPlan> {
    if len < PART_COUNT {
        return Err(Error::TooFewItems(len));
    }
    let base = len / PART_COUNT;
    let extra = len % PART_COUNT;
    let mut parts = Vec::with_capacity(PART_COUNT);
    let mut start = 0;
    for p in 0..PART_COUNT {
        let size = base + usize::from(p < extra);
        parts.push(start..start + size);
        start += size;
    }
    let folds = (1..PART_COUNT)
        .map(|k| Fold {
            train: match mode {
                WindowMode::Expanding => 0..parts[k - 1].end,
                WindowMode::Sliding => parts[k - 1].clone(),
            },
            test: parts[k].clone(),
        })
        .collect();
    Ok(FoldPlan { parts, folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_items() {
        let plan = forward_chain_split(10, WindowMode::Expanding).unwrap();
        assert_eq!(plan.folds.len(), 4);
        assert_eq!(
            plan.folds[0],
            Fold {
                train: 0..2,
                test: 2..4
            }
        );
        assert_eq!(
            plan.folds[3],
            Fold {
                train: 0..8,
                test: 8..10
            }
        );
    }

    #[test]
    fn remainder_goes_to_first_parts() {
        let plan = forward_chain_split(7, WindowMode::Expanding).unwrap();
        let sizes: Vec<usize> = plan.parts.iter().map(|p| p.len()).collect();
        assert_eq!(sizes, [2, 2, 1, 1, 1]);
    }

    #[test]
    fn sliding_trains_on_one_part() {
        let plan = forward_chain_split(10, WindowMode::Sliding).unwrap();
        assert_eq!(
            plan.folds[3],
            Fold {
                train: 6..8,
                test: 8..10
            }
        );
    }

    #[test]
    fn too_small() {
        assert!(matches!(
            forward_chain_split(4, WindowMode::Expanding),
            Err(Error::TooFewItems(4))
        ));
    }
}
