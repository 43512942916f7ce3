//! Bias-corrected adaptive-moment optimizer.

use std::collections::HashMap;

use super::{DenseMatrix, NodeId, NumError, Tape};

/// Adaptive-moment descent with bias correction.
///
/// Moment buffers are allocated per parameter on first use and always match
/// the parameter's shape. The step count is shared across parameters.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    state: HashMap<NodeId, (DenseMatrix, DenseMatrix)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self::with_hyper(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        assert!(lr > 0.0 && eps > 0.0, "optimizer needs positive lr and epsilon");
        assert!((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2), "decays must lie in (0,1)");
        Adam { lr, beta1, beta2, eps, t: 0, state: HashMap::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update over `params`, each paired with its L2 penalty coefficient
    /// (0 for undecayed parameters). Parameters without a gradient are left
    /// untouched; consumed gradients are cleared.
    pub fn step(&mut self, tape: &mut Tape, params: &[(NodeId, f64)]) -> Result<(), NumError> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);

        for &(p, decay) in params {
            let Some(grad) = tape.grad(p) else { continue };
            if grad.data().iter().any(|v| !v.is_finite()) {
                let name = tape.param_name(p).unwrap_or("<unnamed>").to_string();
                return Err(NumError::BadGradient { param: name });
            }
            let w = tape.value(p);
            let (rows, cols) = w.shape();
            let (m, v) = self
                .state
                .entry(p)
                .or_insert_with(|| (DenseMatrix::zeros(rows, cols), DenseMatrix::zeros(rows, cols)));

            let mut new_w = Vec::with_capacity(w.data().len());
            for (((&wi, &gi), mi), vi) in w
                .data()
                .iter()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let g = gi + decay * wi;
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                new_w.push(wi - self.lr * m_hat / (v_hat.sqrt() + self.eps));
            }
            tape.set_value(p, DenseMatrix::new(rows, cols, new_w)?)?;
            tape.zero_grad(p);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_step_descends_quadratic() {
        let mut tape = Tape::new();
        let x = tape.param("x", DenseMatrix::new(1, 1, vec![1.0]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.reduce_sum(sq).unwrap();
        tape.backward(loss).unwrap();
        let mut opt = Adam::new(0.1);
        opt.step(&mut tape, &[(x, 0.0)]).unwrap();
        let moved = tape.value(x).get(0, 0);
        assert!(moved.abs() < 1.0, "expected |x| to shrink, got {}", moved);
    }

    #[test]
    fn missing_gradient_leaves_parameter_alone() {
        let mut tape = Tape::new();
        let used = tape.param("used", DenseMatrix::new(1, 1, vec![2.0]).unwrap());
        let idle = tape.param("idle", DenseMatrix::new(1, 1, vec![5.0]).unwrap());
        let sq = tape.mul(used, used).unwrap();
        let loss = tape.reduce_sum(sq).unwrap();
        tape.backward(loss).unwrap();
        let mut opt = Adam::new(0.1);
        opt.step(&mut tape, &[(used, 0.0), (idle, 0.0)]).unwrap();
        assert_eq!(tape.value(idle).get(0, 0), 5.0);
        assert_ne!(tape.value(used).get(0, 0), 2.0);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        // relu kills the gradient at a negative input, so the backward pass
        // delivers an explicit zero matrix.
        let mut tape = Tape::new();
        let x = tape.param("x", DenseMatrix::new(1, 1, vec![-3.0]).unwrap());
        let r = tape.relu(x).unwrap();
        let loss = tape.reduce_sum(r).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[0.0]);
        let mut opt = Adam::new(0.1);
        opt.step(&mut tape, &[(x, 0.0)]).unwrap();
        assert_eq!(tape.value(x).get(0, 0), -3.0);
    }

    #[test]
    fn converges_to_quadratic_minimum() {
        let mut tape = Tape::new();
        let x = tape.param("x", DenseMatrix::new(1, 1, vec![0.0]).unwrap());
        let target = tape.constant(DenseMatrix::new(1, 1, vec![-3.0]).unwrap());
        let mut opt = Adam::new(0.1);
        let mark = tape.watermark();
        for _ in 0..200 {
            let diff = tape.add(x, target).unwrap();
            let sq = tape.mul(diff, diff).unwrap();
            let loss = tape.reduce_sum(sq).unwrap();
            tape.backward(loss).unwrap();
            opt.step(&mut tape, &[(x, 0.0)]).unwrap();
            tape.truncate(mark);
        }
        let x_final = tape.value(x).get(0, 0);
        assert!((x_final - 3.0).abs() < 1e-2, "converged to {}", x_final);
    }

    #[test]
    fn gradients_cleared_after_step() {
        let mut tape = Tape::new();
        let x = tape.param("x", DenseMatrix::new(1, 1, vec![1.0]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.reduce_sum(sq).unwrap();
        tape.backward(loss).unwrap();
        let mut opt = Adam::new(0.01);
        opt.step(&mut tape, &[(x, 0.0)]).unwrap();
        assert!(tape.grad(x).is_none());
    }

    #[test]
    fn weight_decay_pulls_toward_zero() {
        // A zero-gradient loss isolates the decay term in the update.
        let mut tape = Tape::new();
        let w = tape.param("w", DenseMatrix::new(1, 1, vec![4.0]).unwrap());
        let zero = tape.constant(DenseMatrix::new(1, 1, vec![0.0]).unwrap());
        let prod = tape.mul(w, zero).unwrap();
        let loss = tape.reduce_sum(prod).unwrap();
        tape.backward(loss).unwrap();
        let mut opt = Adam::new(0.1);
        opt.step(&mut tape, &[(w, 0.5)]).unwrap();
        assert!(tape.value(w).get(0, 0) < 4.0);
    }
}
