//! Generalized advantage estimation.

/// Advantages and value targets of one or more concatenated episodes.
///
/// `values` has one more entry than `rewards`: `values[n + 1]` is the value
/// of the state reached by step `n` (ignored when `dones[n]` is set).
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n + 1, "values needs a bootstrap entry");
    assert_eq!(dones.len(), n);
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    /// Direct double sum `A_t = sum_l (gamma lambda)^l delta_{t+l}` cut at the episode end.
    pub(crate) fn brute_force(r: &[f64], v: &[f64], d: &[bool], g: f64, l: f64) -> Vec<f64> {
        let n = r.len();
        let delta: Vec<f64> = (0..n)
            .map(|t| r[t] + g * v[t + 1] * if d[t] { 0.0 } else { 1.0 } - v[t])
            .collect();
        (0..n)
            .map(|t| {
                let mut acc = 0.0;
                for k in t..n {
                    acc += (g * l).powi((k - t) as i32) * delta[k];
                    if d[k] {
                        break;
                    }
                }
                acc
            })
            .collect()
    }

    #[test]
    fn undiscounted_return() {
        let (a, ret) = gae(&[1.0, 1.0], &[0.0, 0.0, 0.0], &[false, true], 1.0, 1.0);
        assert_eq!(a, vec![2.0, 1.0]);
        assert_eq!(ret, vec![2.0, 1.0]);
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let r = [0.5, -1.0, 2.0];
        let v = [0.1, 0.2, 0.3, 0.4];
        let (a, _) = gae(&r, &v, &[false, false, false], 0.9, 0.0);
        for t in 0..3 {
            assert_eq!(a[t], r[t] + 0.9 * v[t + 1] - v[t]);
        }
    }

    #[test]
    fn worked_three_step_example() {
        let r = [1.0, 0.0, 1.0];
        let v = [0.5, 0.5, 0.5, 0.0];
        let d = [false, false, true];
        let (a, _) = gae(&r, &v, &d, 0.99, 0.95);
        let b = brute_force(&r, &v, &d, 0.99, 0.95);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_one_is_discounted_return_minus_baseline() {
        let mut rng = stream_rng(12, 0);
        for _ in 0..200 {
            let n = rng.random_range(1..12);
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut v: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
            v[n] = 0.0;
            let mut d = vec![false; n];
            d[n - 1] = true;
            let g = rng.random_range(0.5..1.0);
            let (a, _) = gae(&r, &v, &d, g, 1.0);
            for t in 0..n {
                let ret: f64 = (t..n).map(|k| g.powi((k - t) as i32) * r[k]).sum();
                assert!((a[t] - (ret - v[t])).abs() < 1e-12);
            }
        }
    }
}
