//! Phase → parameter-set maps for the I, U and P sharing schemes.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SharingKind {
    /// One set per phase.
    I,
    /// One set for all phases.
    U,
    /// Start unified, double the set count at each split.
    P,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SharingMode {
    I,
    U,
    /// Strictly increasing split steps.
    P(Vec<u64>),
}

/// `ceil(log2 K)`.
pub fn splits_needed(k: usize) -> usize {
    let mut s = 0;
    while (1usize << s) < k {
        s += 1;
    }
    s
}

/// Split `j` (1-based) at step `j·T/(S+1)` for `S = ceil(log2 K)` splits.
pub fn split_schedule(total_steps: u64, k: usize) -> Vec<u64> {
    let s = splits_needed(k) as u64;
    (1..=s).map(|j| j * total_steps / (s + 1)).collect()
}

impl SharingMode {
    pub fn from_kind(kind: SharingKind, total_steps: u64, k: usize) -> Self {
        match kind {
            SharingKind::I => SharingMode::I,
            SharingKind::U => SharingMode::U,
            SharingKind::P => SharingMode::P(split_schedule(total_steps, k)),
        }
    }

    pub fn kind(&self) -> SharingKind {
        match self {
            SharingMode::I => SharingKind::I,
            SharingMode::U => SharingKind::U,
            SharingMode::P(_) => SharingKind::P,
        }
    }
}

/// Set index for every phase at training step `step`.
pub fn sharing_groups(mode: &SharingMode, step: u64, k: usize) -> Vec<usize> {
    match mode {
        SharingMode::I => (0..k).collect(),
        SharingMode::U => vec![0; k],
        SharingMode::P(schedule) => {
            let passed = schedule.iter().filter(|&&t| step >= t).count();
            let sets = (1usize << passed.min(usize::BITS as usize - 1)).min(k);
            (0..k).map(|p| p * sets / k).collect()
        }
    }
}

/// Number of distinct sets in a phase map.
pub fn set_count(map: &[usize]) -> usize {
    map.iter().max().map_or(0, |m| m + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn progressive_k4() {
        let mode = SharingMode::P(vec![100, 200]);
        assert_eq!(sharing_groups(&mode, 0, 4), vec![0, 0, 0, 0]);
        assert_eq!(sharing_groups(&mode, 100, 4), vec![0, 0, 1, 1]);
        assert_eq!(sharing_groups(&mode, 250, 4), vec![0, 1, 2, 3]);
    }

    #[test]
    fn fixed_modes() {
        assert_eq!(sharing_groups(&SharingMode::I, 7, 3), vec![0, 1, 2]);
        assert_eq!(sharing_groups(&SharingMode::U, 7, 3), vec![0, 0, 0]);
    }

    #[test]
    fn schedule_spacing() {
        assert_eq!(split_schedule(900, 4), vec![300, 600]);
        assert_eq!(split_schedule(100, 2), vec![50]);
        assert!(split_schedule(100, 1).is_empty());
        assert_eq!(splits_needed(3), 2);
    }

    #[test]
    fn set_count_law_caps_at_k() {
        let mode = SharingMode::P(split_schedule(1000, 3));
        let counts: Vec<usize> = [0, 333, 666, 999].iter().map(|&t| set_count(&sharing_groups(&mode, t, 3))).collect();
        assert_eq!(counts, vec![1, 2, 3, 3]);
    }
}
