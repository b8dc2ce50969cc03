use std::f64::consts::PI;

/// Cosine annealing from `lr_max` at epoch 0 down to `lr_min` at `period`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSchedule {
    pub lr_max: f64,
    pub lr_min: f64,
    pub period: f64,
}

impl Default for CosineSchedule {
    fn default() -> Self {
        Self { lr_max: 5e-4, lr_min: 1e-6, period: 300.0 }
    }
}

impl CosineSchedule {
    /// `lr_min + ½(lr_max - lr_min)(1 + cos(tπ/period))`, with `t` clamped to `[0, period]`.
    pub fn lr(&self, epoch: f64) -> f64 {
        let t = epoch.clamp(0.0, self.period);
        self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + (t / self.period * PI).cos())
    }
}

/// Learning rate at `epoch` under the default 300-epoch schedule.
pub fn cosine_lr(epoch: f64) -> f64 {
    CosineSchedule::default().lr(epoch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_exact() {
        assert_eq!(cosine_lr(0.0), 5e-4);
        assert_eq!(cosine_lr(300.0), 1e-6);
        assert_eq!(cosine_lr(1000.0), 1e-6);
        assert!((cosine_lr(150.0) - 2.505e-4).abs() < 1e-15);
    }

    #[test]
    fn monotone_decreasing() {
        let lrs: Vec<f64> = (0..=300).map(|t| cosine_lr(t as f64)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }
}
