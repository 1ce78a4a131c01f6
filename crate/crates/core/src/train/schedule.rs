//! Constant warm-up followed by per-iteration cosine decay.

/// Learning-rate schedule parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub warmup_lr: f64,
    pub peak_lr: f64,
    pub min_lr: f64,
}

impl Schedule {
    /// Rate for iteration `step` of `epoch`, with `steps_per_epoch`
    /// iterations per epoch. Warm-up epochs use `warmup_lr`; afterwards the
    /// rate falls from `peak_lr` at the first iteration to `min_lr` at the
    /// last along a half cosine.
    pub fn lr_at(&self, epoch: usize, step: usize, steps_per_epoch: usize) -> f64 {
        if epoch < self.warmup_epochs {
            return self.warmup_lr;
        }
        let spe = steps_per_epoch.max(1);
        let total = (self.epochs.saturating_sub(self.warmup_epochs) * spe).max(1);
        let at = ((epoch - self.warmup_epochs) * spe + step.min(spe - 1)).min(total - 1);
        if total == 1 {
            return self.peak_lr;
        }
        if at == total - 1 {
            return self.min_lr;
        }
        let progress = at as f64 / (total - 1) as f64;
        let fall = 0.5 * (1.0 - (std::f64::consts::PI * progress).cos());
        self.peak_lr - (self.peak_lr - self.min_lr) * fall
    }
}
