/// Bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
    assert_eq!(params.len(), state.m.len(), "optimizer state sized for another model");
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let g = [0.3, -2.0, 1e-3, 50.0];
        let mut p = [1.0, 1.0, 1.0, 1.0];
        let mut s = AdamState::new(4);
        adam_step(&mut p, &g, &mut s, 0.001);
        for (pi, gi) in p.iter().zip(g) {
            let delta = pi - 1.0;
            assert!((delta + 0.001 * gi / (gi.abs() + 1e-8)).abs() < 1e-9, "{delta}");
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = [0.5, -0.25];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.01);
        assert_eq!(p, [0.5, -0.25]);
    }

    #[test]
    fn two_constant_steps_match_closed_form() {
        let (g, lr) = (0.5f64, 0.001f64);
        let mut p = [2.0f64];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[g], &mut s, lr);
        adam_step(&mut p, &[g], &mut s, lr);

        // m1 = 0.05, m2 = 0.9*0.05 + 0.05 = 0.095; m̂2 = 0.095 / 0.19 = 0.5
        // v1 = 0.00025, v2 = 0.999*0.00025 + 0.00025 = 0.00049975; v̂2 = 0.00049975 / 0.001999 = 0.25
        let m2 = 0.9 * (0.1 * g) + 0.1 * g;
        let v2 = 0.999 * (0.001 * g * g) + 0.001 * g * g;
        assert!((s.first_moment()[0] - m2).abs() < 1e-12);
        assert!((s.second_moment()[0] - v2).abs() < 1e-12);
        let m_hat = m2 / (1.0 - 0.9f64.powi(2));
        let v_hat = v2 / (1.0 - 0.999f64.powi(2));
        assert!((m_hat - 0.5).abs() < 1e-12);
        assert!((v_hat - 0.25).abs() < 1e-12);
        let step1 = lr * g / ((g * g).sqrt() + 1e-8);
        let step2 = lr * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p[0] - (2.0 - step1 - step2)).abs() < 1e-12);
        assert_eq!(s.steps(), 2);
    }
}
