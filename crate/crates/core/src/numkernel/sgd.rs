use super::matrix::Real;
use super::params::ParamSet;
use crate::error::{Error, Result};

/// SGD with heavy-ball momentum and L2 weight decay.
#[derive(Debug, Clone)]
pub struct SgdState<T = f32> {
    pub lr: T,
    pub momentum: T,
    pub weight_decay: T,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> SgdState<T> {
    pub fn new<P: ParamSet<T>>(params: &P, lr: T, momentum: T, weight_decay: T) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
            velocity: params
                .tensors()
                .iter()
                .map(|t| vec![T::zero(); t.len()])
                .collect(),
        }
    }

    pub fn velocity(&self) -> &[Vec<T>] {
        &self.velocity
    }
}

/// `v ← μ v + (g + λ θ)`, `θ ← θ − lr v`.
pub fn sgd_step<T: Real, P: ParamSet<T>>(
    params: &mut P,
    grads: &P,
    state: &mut SgdState<T>,
) -> Result<()> {
    let grad_tensors = grads.tensors();
    let mut param_tensors = params.tensors_mut();
    if grad_tensors.len() != param_tensors.len() || state.velocity.len() != param_tensors.len() {
        return Err(Error::shape(
            "sgd tensor count",
            param_tensors.len(),
            format!("{} grads / {} velocities", grad_tensors.len(), state.velocity.len()),
        ));
    }
    for ((p, g), v) in param_tensors
        .iter()
        .zip(&grad_tensors)
        .zip(&state.velocity)
    {
        if p.len() != g.len() || p.len() != v.len() {
            return Err(Error::shape(
                "sgd tensor length",
                p.len(),
                format!("{} grad / {} velocity", g.len(), v.len()),
            ));
        }
    }
    for ((p, g), v) in param_tensors
        .iter_mut()
        .zip(grad_tensors)
        .zip(state.velocity.iter_mut())
    {
        for ((pi, &gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = state.momentum * *vi + gi + state.weight_decay * *pi;
            *pi = *pi - state.lr * *vi;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Scalar(Vec<f64>);

    impl ParamSet<f64> for Scalar {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn plain_step() {
        let mut w = Scalar(vec![1.0]);
        let mut state = SgdState::new(&w, 0.1, 0.0, 0.0);
        sgd_step(&mut w, &Scalar(vec![2.0]), &mut state).unwrap();
        assert!((w.0[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn momentum_recurrence() {
        let mut w = Scalar(vec![0.0]);
        let mut state = SgdState::new(&w, 1.0, 0.9, 0.0);
        let g = Scalar(vec![1.0]);
        sgd_step(&mut w, &g, &mut state).unwrap();
        assert!((w.0[0] + 1.0).abs() < 1e-12);
        assert!((state.velocity()[0][0] - 1.0).abs() < 1e-12);
        sgd_step(&mut w, &g, &mut state).unwrap();
        assert!((state.velocity()[0][0] - 1.9).abs() < 1e-12);
        assert!((w.0[0] + 2.9).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_decays_velocity_only() {
        let mut w = Scalar(vec![0.0]);
        let mut state = SgdState::new(&w, 1.0, 0.9, 0.0);
        sgd_step(&mut w, &Scalar(vec![1.0]), &mut state).unwrap();
        let before = w.0[0];
        let mut frozen = state.clone();
        frozen.lr = 0.0;
        sgd_step(&mut w, &Scalar(vec![0.0]), &mut frozen).unwrap();
        assert_eq!(w.0[0], before);
        assert!((frozen.velocity()[0][0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn weight_decay_enters_velocity() {
        let mut w = Scalar(vec![2.0]);
        let mut state = SgdState::new(&w, 0.5, 0.0, 0.1);
        sgd_step(&mut w, &Scalar(vec![0.0]), &mut state).unwrap();
        assert!((w.0[0] - (2.0 - 0.5 * 0.2)).abs() < 1e-12);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut w = Scalar(vec![0.0, 1.0]);
        let mut state = SgdState::new(&w, 0.1, 0.0, 0.0);
        assert!(sgd_step(&mut w, &Scalar(vec![1.0]), &mut state).is_err());
    }

    #[test]
    fn descends_convex_quadratic_monotonically() {
        // f(w) = 0.5 * sum a_i w_i^2, curvature max 4, lr below 2/4
        let a = [0.5, 1.0, 4.0];
        let mut w = Scalar(vec![1.5, -2.0, 0.7]);
        let f = |w: &Scalar| -> f64 { w.0.iter().zip(a).map(|(x, c)| 0.5 * c * x * x).sum() };
        let mut state = SgdState::new(&w, 0.3, 0.0, 0.0);
        let mut prev = f(&w);
        for _ in 0..50 {
            let g = Scalar(w.0.iter().zip(a).map(|(x, c)| c * x).collect());
            sgd_step(&mut w, &g, &mut state).unwrap();
            let cur = f(&w);
            assert!(cur <= prev);
            prev = cur;
        }
        assert!(prev < 1e-6);
    }
}
