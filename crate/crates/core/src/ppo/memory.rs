//! On-policy rollout storage.

use super::gae::gae;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Pre-squash action.
    pub raw_action: Vec<f64>,
    /// Log-probability under the behavior policy.
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

/// Transitions of one or more actor rollouts, stored back to back.
///
/// Each rollout is a segment with its own bootstrap value, so advantages
/// never leak across actors.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryMemory {
    steps: Vec<Transition>,
    /// `(start, end, bootstrap value)`.
    segments: Vec<(usize, usize, f64)>,
}

impl TrajectoryMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one rollout. `bootstrap` is the value of the state after the
    /// last step; it is ignored when that step is terminal.
    pub fn push_rollout(&mut self, steps: Vec<Transition>, bootstrap: f64) {
        let start = self.steps.len();
        self.steps.extend(steps);
        self.segments.push((start, self.steps.len(), bootstrap));
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Transition] {
        &self.steps
    }

    pub fn clear(&mut self) {
        self.steps.clear();
        self.segments.clear();
    }

    /// Advantages and returns aligned with [`steps`](Self::steps).
    pub fn advantages(&self, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let mut adv = Vec::with_capacity(self.len());
        let mut ret = Vec::with_capacity(self.len());
        for &(s, e, boot) in &self.segments {
            let seg = &self.steps[s..e];
            let rewards: Vec<f64> = seg.iter().map(|t| t.reward).collect();
            let dones: Vec<bool> = seg.iter().map(|t| t.done).collect();
            let mut values: Vec<f64> = seg.iter().map(|t| t.value).collect();
            values.push(boot);
            let (a, r) = gae(&rewards, &values, &dones, gamma, lambda);
            adv.extend(a);
            ret.extend(r);
        }
        (adv, ret)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(reward: f64, value: f64, done: bool) -> Transition {
        Transition {
            state: vec![],
            raw_action: vec![],
            log_prob: 0.0,
            reward,
            value,
            done,
        }
    }

    #[test]
    fn segments_do_not_mix() {
        let mut m = TrajectoryMemory::new();
        m.push_rollout(vec![step(1.0, 0.0, false), step(1.0, 0.0, true)], 5.0);
        m.push_rollout(vec![step(3.0, 0.0, false)], 10.0);
        let (a, r) = m.advantages(1.0, 1.0);
        assert_eq!(a, vec![2.0, 1.0, 13.0]);
        assert_eq!(r, a);
        m.clear();
        assert!(m.is_empty());
        assert_eq!(m.advantages(0.9, 0.9).0.len(), 0);
    }
}
