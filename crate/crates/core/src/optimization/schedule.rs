/// Cosine annealing with warm restarts. Cycle `k` starts at `lr0 * decay^k`
/// and anneals to `floor_frac` of that peak on its last step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineRestartSchedule {
    pub lr0: f64,
    pub cycle_steps: u64,
    pub peak_decay: f64,
    pub floor_frac: f64,
}

impl CosineRestartSchedule {
    pub fn new(lr0: f64, cycle_steps: u64) -> Self {
        Self { lr0, cycle_steps: cycle_steps.max(1), peak_decay: 0.95, floor_frac: 0.5 }
    }

    pub fn peak(&self, cycle: u64) -> f64 {
        self.lr0 * self.peak_decay.powi(cycle as i32)
    }

    /// Learning rate in cycle `cycle` at phase `phi` in `[0, 1]`.
    pub fn lr_at_phase(&self, cycle: u64, phi: f64) -> f64 {
        let f = self.floor_frac;
        self.peak(cycle) * (f + (1.0 - f) * (1.0 + (std::f64::consts::PI * phi).cos()) / 2.0)
    }

    /// The phase runs from 0 on a cycle's first step to 1 on its last.
    pub fn lr_at(&self, step: u64) -> f64 {
        let len = self.cycle_steps.max(1);
        let (cycle, pos) = (step / len, step % len);
        let phi = if len == 1 { 0.0 } else { pos as f64 / (len - 1) as f64 };
        self.lr_at_phase(cycle, phi)
    }
}
