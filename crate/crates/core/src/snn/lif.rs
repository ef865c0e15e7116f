use super::network::LifLayer;
use crate::error::{shape_err, Error, Result};

/// Membrane potentials and previous-step spikes of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MembraneState {
    pub u: Vec<f64>,
    pub s_prev: Vec<u8>,
}

impl MembraneState {
    pub fn zeros(width: usize) -> Self {
        Self {
            u: vec![0.0; width],
            s_prev: vec![0; width],
        }
    }
}

/// Soft-reset LIF update for one neuron. Returns the new potential and
/// whether it spikes (inclusive at threshold).
#[inline]
pub fn lif_neuron(u: f64, s_prev: u8, current: f64, beta: f64, theta: f64) -> (f64, bool) {
    let next = beta * (u - theta * s_prev as f64) + current;
    (next, next >= theta)
}

/// Advances one layer by one time step.
pub fn lif_step(
    state: &MembraneState,
    input_current: &[f64],
    params: &LifLayer,
) -> Result<(MembraneState, Vec<u8>)> {
    let n = params.width;
    if state.u.len() != n || state.s_prev.len() != n || input_current.len() != n {
        return shape_err(format!(
            "lif_step: layer width {n}, state {}/{}, current {}",
            state.u.len(),
            state.s_prev.len(),
            input_current.len()
        ));
    }
    if let Some(i) = input_current.iter().position(|c| !c.is_finite()) {
        return Err(Error::Numeric(format!("non-finite input current at neuron {i}")));
    }
    let mut next = MembraneState::zeros(n);
    for (i, &current) in input_current.iter().enumerate() {
        let (u, spike) = lif_neuron(state.u[i], state.s_prev[i], current, params.beta, params.theta);
        next.u[i] = u;
        next.s_prev[i] = spike as u8;
    }
    let spikes = next.s_prev.clone();
    Ok((next, spikes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(width: usize, beta: f64, theta: f64) -> LifLayer {
        LifLayer {
            width,
            fan_in: 1,
            weights: vec![0.0; width],
            mask: vec![1; width],
            beta,
            theta,
            residual: false,
            bntt: None,
        }
    }

    #[test]
    fn zero_dynamics_stay_zero() {
        let p = layer(3, 0.9, 1.0);
        let (s, spikes) = lif_step(&MembraneState::zeros(3), &[0.0; 3], &p).unwrap();
        assert_eq!(s.u, vec![0.0; 3]);
        assert_eq!(spikes, vec![0; 3]);
    }

    #[test]
    fn hand_computed_recurrence() {
        let p = layer(1, 0.5, 1.0);
        let s0 = MembraneState {
            u: vec![0.6],
            s_prev: vec![0],
        };
        let (s1, sp1) = lif_step(&s0, &[0.6], &p).unwrap();
        assert!((s1.u[0] - 0.9).abs() < 1e-12);
        assert_eq!(sp1, vec![0]);
        let (s2, sp2) = lif_step(&s1, &[0.6], &p).unwrap();
        assert!((s2.u[0] - 1.05).abs() < 1e-12);
        assert_eq!(sp2, vec![1]);
        let (s3, sp3) = lif_step(&s2, &[0.0], &p).unwrap();
        assert!((s3.u[0] - 0.025).abs() < 1e-12);
        assert_eq!(sp3, vec![0]);
    }

    #[test]
    fn threshold_is_inclusive() {
        let p = layer(1, 0.5, 1.0);
        let (_, spikes) = lif_step(&MembraneState::zeros(1), &[1.0], &p).unwrap();
        assert_eq!(spikes, vec![1]);
    }

    #[test]
    fn soft_reset_then_geometric_decay() {
        let beta = 0.8;
        let p = layer(1, beta, 1.0);
        let (mut s, spikes) = lif_step(&MembraneState::zeros(1), &[1.5], &p).unwrap();
        assert_eq!(spikes, vec![1]);
        let post_reset = 1.5 - 1.0;
        for k in 1..=10 {
            let (next, sp) = lif_step(&s, &[0.0], &p).unwrap();
            assert_eq!(sp, vec![0]);
            let closed = post_reset * beta.powi(k);
            assert!((next.u[0] - closed).abs() < 1e-12, "step {k}");
            s = next;
        }
    }

    #[test]
    fn shape_and_numeric_errors() {
        let p = layer(2, 0.9, 1.0);
        assert!(matches!(
            lif_step(&MembraneState::zeros(2), &[0.0], &p),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            lif_step(&MembraneState::zeros(2), &[0.0, f64::NAN], &p),
            Err(Error::Numeric(_))
        ));
    }
}
