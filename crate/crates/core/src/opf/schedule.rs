use crate::error::Result;

use super::{horizon_for, OpfParams};

/// One epoch of the doubling schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Epoch {
    /// 1-based epoch number `l`.
    pub index: usize,
    /// First prediction step `T_l = 2^{l−1} T_init + 1`.
    pub start: usize,
    /// Past horizon `p_l`.
    pub p: usize,
}

impl Epoch {
    /// Last prediction step of the epoch, `2 T_l − 2`.
    pub fn end(&self) -> usize {
        2 * self.start - 2
    }

    pub fn steps(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochSchedule {
    pub epochs: Vec<Epoch>,
}

impl EpochSchedule {
    pub fn first_step(&self) -> usize {
        self.epochs[0].start
    }

    pub fn final_step(&self) -> usize {
        self.epochs[self.epochs.len() - 1].end()
    }

    /// Epoch containing prediction step `k`.
    pub fn epoch_of(&self, k: usize) -> Option<&Epoch> {
        self.epochs.iter().find(|e| e.steps().contains(&k))
    }

    pub fn max_p(&self) -> usize {
        self.epochs.iter().map(|e| e.p).max().unwrap_or(0)
    }
}

pub(crate) fn epoch_start(t_init: usize, l: usize) -> usize {
    (1usize << (l - 1)) * t_init + 1
}

/// Builds the doubling schedule: `T_l = 2^{l−1} T_init + 1`,
/// `p_l = ⌈β ln T_l⌉` clamped to `T_l − 1`.
pub fn epoch_schedule(params: &OpfParams) -> Result<EpochSchedule> {
    params.validate()?;
    let epochs = (1..=params.epochs)
        .map(|l| {
            let start = epoch_start(params.t_init, l);
            let p = horizon_for(params.beta, start).min(start - 1);
            Epoch { index: l, start, p }
        })
        .collect();
    Ok(EpochSchedule { epochs })
}
