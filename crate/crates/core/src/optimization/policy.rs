use std::collections::VecDeque;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RestartPolicyConfig {
    pub enabled: bool,
    pub theta_low: f64,
    pub theta_high: f64,
    pub window: usize,
    pub k_lr: f64,
    pub k_adv: f64,
    pub cooldown: u64,
    pub exit_low: f64,
    pub exit_high: f64,
    /// Reinitialize the discriminator when triggered twice within `cooldown`.
    pub reinit: bool,
    /// Also enter boost every this many steps; 0 disables the periodic trigger.
    pub restart_every: u64,
}

impl Default for RestartPolicyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            theta_low: 0.4,
            theta_high: 0.95,
            window: 200,
            k_lr: 5.0,
            k_adv: 0.1,
            cooldown: 1000,
            exit_low: 0.55,
            exit_high: 0.8,
            reinit: true,
            restart_every: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyMode {
    Normal,
    DiscBoost,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyAction {
    None,
    EnterBoost { reinit: bool },
    ExitBoost,
}

/// Watches discriminator accuracy and switches between normal training and a
/// boost mode with a raised discriminator learning rate and a lowered
/// adversarial weight. Multipliers are assigned, never compounded.
#[derive(Clone, Debug, PartialEq)]
pub struct RestartPolicy {
    pub cfg: RestartPolicyConfig,
    pub mode: PolicyMode,
    pub window: VecDeque<f64>,
    pub last_trigger: Option<u64>,
    pub disc_lr_mult: f64,
    pub adv_mult: f64,
}

impl RestartPolicy {
    pub fn new(cfg: RestartPolicyConfig) -> Self {
        Self {
            cfg,
            mode: PolicyMode::Normal,
            window: VecDeque::with_capacity(cfg.window),
            last_trigger: None,
            disc_lr_mult: 1.0,
            adv_mult: 1.0,
        }
    }

    pub fn window_mean(&self) -> f64 {
        self.window.iter().sum::<f64>() / self.window.len().max(1) as f64
    }

    fn window_full(&self) -> bool {
        self.cfg.window > 0 && self.window.len() >= self.cfg.window
    }

    /// Records the accuracy of step `step` and applies at most one transition.
    pub fn update(&mut self, step: u64, accuracy: f64) -> PolicyAction {
        if !self.cfg.enabled {
            return PolicyAction::None;
        }
        if self.cfg.window > 0 {
            if self.window.len() == self.cfg.window {
                self.window.pop_front();
            }
            self.window.push_back(accuracy);
        }
        let mean = self.window_mean();
        let action = match self.mode {
            PolicyMode::Normal => {
                let stuck = self.window_full() && (mean < self.cfg.theta_low || mean > self.cfg.theta_high);
                let periodic = self.cfg.restart_every > 0 && step > 0 && step % self.cfg.restart_every == 0;
                if stuck || periodic {
                    let reinit = self.cfg.reinit
                        && self.last_trigger.is_some_and(|s| step.saturating_sub(s) < self.cfg.cooldown);
                    self.last_trigger = Some(step);
                    self.mode = PolicyMode::DiscBoost;
                    self.disc_lr_mult = self.cfg.k_lr;
                    self.adv_mult = self.cfg.k_adv;
                    PolicyAction::EnterBoost { reinit }
                } else {
                    PolicyAction::None
                }
            }
            PolicyMode::DiscBoost => {
                if self.window_full() && (self.cfg.exit_low..=self.cfg.exit_high).contains(&mean) {
                    self.mode = PolicyMode::Normal;
                    self.disc_lr_mult = 1.0;
                    self.adv_mult = 1.0;
                    PolicyAction::ExitBoost
                } else {
                    PolicyAction::None
                }
            }
        };
        if action != PolicyAction::None {
            self.window.clear();
        }
        action
    }
}
