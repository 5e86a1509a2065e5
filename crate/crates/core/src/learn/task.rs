use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::tensor::{gaussian_heatmap, Loss, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Track a bouncing dot; the target is a heatmap of its position.
    MovingDot,
    /// Classify the dominant direction of motion (right, down, left, up).
    SequenceClassification,
}

/// Seeded generator of synthetic video sequences with per-frame targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub kind: TaskKind,
    pub length: usize,
    pub height: usize,
    pub width: usize,
    /// Dot speed range in pixels per frame.
    pub min_speed: f64,
    pub max_speed: f64,
    /// Standard deviation of additive pixel noise.
    pub noise: f64,
    /// Gaussian width of the rendered dot and of target heatmaps.
    pub sigma: f64,
    pub loss: Loss,
}

#[derive(Clone, Debug)]
pub struct Sequence {
    pub frames: Vec<Tensor>,
    pub targets: Vec<Tensor>,
}

pub const DIRECTION_CLASSES: usize = 4;

impl SyntheticTask {
    pub fn moving_dot(length: usize, size: usize) -> Self {
        SyntheticTask {
            kind: TaskKind::MovingDot,
            length,
            height: size,
            width: size,
            min_speed: 0.5,
            max_speed: 1.0,
            noise: 0.0,
            sigma: 1.0,
            loss: Loss::default(),
        }
    }

    pub fn classification(length: usize, size: usize) -> Self {
        SyntheticTask {
            kind: TaskKind::SequenceClassification,
            loss: Loss::SoftmaxXent,
            ..Self::moving_dot(length, size)
        }
    }

    /// A dot that never moves.
    pub fn stationary(mut self) -> Self {
        self.min_speed = 0.0;
        self.max_speed = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.height < 2 || self.width < 2 {
            return Err(Error::config("task needs at least one frame and a 2x2 resolution"));
        }
        if !(0.0 <= self.min_speed && self.min_speed <= self.max_speed) {
            return Err(Error::config("speed range must satisfy 0 <= min <= max"));
        }
        if self.kind == TaskKind::SequenceClassification && self.max_speed == 0.0 {
            return Err(Error::config("direction classification needs a moving dot"));
        }
        if self.noise.is_nan() || self.noise < 0.0 {
            return Err(Error::config("noise must be non-negative"));
        }
        if self.sigma.is_nan() || self.sigma <= 0.0 {
            return Err(Error::config("sigma must be positive"));
        }
        Ok(())
    }

    pub fn target_channels(&self) -> usize {
        match self.kind {
            TaskKind::MovingDot => 1,
            TaskKind::SequenceClassification => DIRECTION_CLASSES,
        }
    }

    /// Sequence `index` of the stream identified by `seed`.
    pub fn sequence(&self, seed: u64, index: u64) -> Result<Sequence> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let (h, w) = (self.height, self.width);
        let x0 = rng.gen_range(0.0..=(w - 1) as f64);
        let y0 = rng.gen_range(0.0..=(h - 1) as f64);
        let speed = if self.max_speed > self.min_speed {
            rng.gen_range(self.min_speed..=self.max_speed)
        } else {
            self.min_speed
        };
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let (vx, vy) = (speed * angle.cos(), speed * angle.sin());
        let class = if vx.abs() >= vy.abs() {
            if vx >= 0.0 { 0 } else { 2 }
        } else if vy >= 0.0 {
            1
        } else {
            3
        };
        let noise = if self.noise > 0.0 {
            Some(Normal::new(0.0, self.noise).map_err(|e| Error::config(e.to_string()))?)
        } else {
            None
        };
        let mut frames = Vec::with_capacity(self.length);
        let mut targets = Vec::with_capacity(self.length);
        for t in 0..self.length {
            let x = reflect(x0 + vx * t as f64, (w - 1) as f64);
            let y = reflect(y0 + vy * t as f64, (h - 1) as f64);
            let dot = gaussian_heatmap(&[vec![(x, y)]], self.sigma, (h, w))?;
            let mut frame = dot.clone();
            if let Some(n) = &noise {
                for v in frame.data_mut() {
                    *v += n.sample(&mut rng);
                }
            }
            frames.push(frame);
            targets.push(match self.kind {
                TaskKind::MovingDot => dot,
                TaskKind::SequenceClassification => {
                    Tensor::from_fn(&[DIRECTION_CLASSES, 1, 1], |i| if i == class { 1.0 } else { 0.0 })
                }
            });
        }
        Ok(Sequence { frames, targets })
    }
}

/// Folds `x` into `[0, max]` as a particle bouncing off both walls.
fn reflect(x: f64, max: f64) -> f64 {
    if max == 0.0 {
        return 0.0;
    }
    let period = 2.0 * max;
    let r = x.rem_euclid(period);
    if r > max { period - r } else { r }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequences_are_seeded() {
        let task = SyntheticTask {
            noise: 0.1,
            ..SyntheticTask::moving_dot(6, 8)
        };
        let a = task.sequence(3, 7).unwrap();
        let b = task.sequence(3, 7).unwrap();
        let c = task.sequence(3, 8).unwrap();
        assert!(a.frames.iter().zip(&b.frames).all(|(x, y)| x.bitwise_eq(y)));
        assert!(!a.frames[0].bitwise_eq(&c.frames[0]));
    }

    #[test]
    fn stationary_dot_targets_are_constant() {
        let task = SyntheticTask::moving_dot(5, 6).stationary();
        let s = task.sequence(0, 0).unwrap();
        assert!(s.targets.iter().all(|t| t.bitwise_eq(&s.targets[0])));
        assert_eq!(s.frames[0].shape(), &[1, 6, 6]);
    }

    #[test]
    fn reflection_stays_in_range() {
        for i in -50..50 {
            let r = reflect(i as f64 * 0.7, 5.0);
            assert!((0.0..=5.0).contains(&r));
        }
        assert_eq!(reflect(6.0, 5.0), 4.0);
        assert_eq!(reflect(-1.0, 5.0), 1.0);
    }

    #[test]
    fn classification_targets_are_one_hot() {
        let task = SyntheticTask::classification(4, 6);
        let s = task.sequence(1, 2).unwrap();
        assert_eq!(s.targets[0].shape(), &[DIRECTION_CLASSES, 1, 1]);
        assert_eq!(s.targets[0].sum(), 1.0);
        assert!(s.targets.iter().all(|t| t.bitwise_eq(&s.targets[0])));
    }

    #[test]
    fn invalid_tasks_rejected() {
        assert!(SyntheticTask::classification(4, 6).stationary().validate().is_err());
        assert!(SyntheticTask::moving_dot(0, 6).validate().is_err());
    }
}
