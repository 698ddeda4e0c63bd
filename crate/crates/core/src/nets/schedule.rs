/// Step decay: `rate(e) = initial · factor^⌊e / period⌋`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub factor: f64,
    pub period: usize,
}

impl Default for LrSchedule {
    /// 0.1, divided by ten every 30 epochs.
    fn default() -> Self {
        LrSchedule {
            initial: 0.1,
            factor: 0.1,
            period: 30,
        }
    }
}

impl LrSchedule {
    pub fn constant(rate: f64) -> Self {
        LrSchedule {
            initial: rate,
            factor: 1.0,
            period: 1,
        }
    }

    pub fn rate(&self, epoch: usize) -> f64 {
        let drops = epoch / self.period.max(1);
        self.initial * self.factor.powi(drops as i32)
    }
}
