/// Multiplies the learning rate by `factor` whenever the smoothed validation
/// metric has not improved for `window` iterations.
///
/// Improvement means the smoothed value drops below `best * (1 - threshold)`.
/// The plateau clock starts at iteration 0 and restarts after every
/// improvement and every decay.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    window: usize,
    smoothing: f64,
    threshold: f64,
    smoothed: Option<f64>,
    best: Option<f64>,
    anchor: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, window: usize, smoothing: f64, threshold: f64) -> Self {
        Self { lr, factor, window, smoothing, threshold, smoothed: None, best: None, anchor: 0 }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn smoothed(&self) -> Option<f64> {
        self.smoothed
    }

    /// Feeds the metric measured after `iteration` updates; returns the
    /// learning rate to use from now on. Non-finite values never improve.
    pub fn observe(&mut self, iteration: usize, value: f64) -> f64 {
        let s = match self.smoothed {
            Some(prev) if prev.is_finite() => self.smoothing * prev + (1.0 - self.smoothing) * value,
            _ => value,
        };
        self.smoothed = Some(s);
        match self.best {
            None if s.is_finite() => self.best = Some(s),
            Some(b) if s < b * (1.0 - self.threshold) => {
                self.best = Some(s);
                self.anchor = iteration;
            }
            _ => {
                if iteration.saturating_sub(self.anchor) >= self.window {
                    self.lr *= self.factor;
                    self.anchor = iteration;
                }
            }
        }
        self.lr
    }
}
