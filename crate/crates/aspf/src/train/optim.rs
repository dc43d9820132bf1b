//! Rectified Adam.
//!
//! The step keeps Adam's exponential moments but divides by the second
//! moment only once its variance estimate is reliable: before that point
//! (rho_t <= 4) the update is a plain bias-corrected momentum step.

use crate::error::{Error, Result};
use crate::tensor::Elem;

/// Which branch of the update to take.
///
/// `Auto` follows the rho_t > 4 rule. The forced variants exist to pin the
/// two branches against independent oracles: `ForceMomentum` is
/// bias-corrected momentum at every step, `ForceRectified` always divides by
/// the second moment, with the rectification multiplier applied whenever it
/// is defined (rho_t > 4) and 1 otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RectPolicy {
    Auto,
    ForceRectified,
    ForceMomentum,
}

/// Per-parameter moment buffers plus the shared step counter.
pub struct OptimState<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
    rho_inf: f64,
}

impl<T: Elem> OptimState<T> {
    fn new(lens: &[usize], beta2: f64) -> Self {
        OptimState {
            m: lens.iter().map(|&n| vec![T::ZERO; n]).collect(),
            v: lens.iter().map(|&n| vec![T::ZERO; n]).collect(),
            t: 0,
            rho_inf: 2.0 / (1.0 - beta2) - 1.0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn rho_inf(&self) -> f64 {
        self.rho_inf
    }
}

/// Length of the SMA approximation at step `t`:
/// rho_t = rho_inf - 2 t beta2^t / (1 - beta2^t).
pub fn rho_t(beta2: f64, t: u64) -> f64 {
    let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    let b2t = beta2.powi(t as i32);
    rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t)
}

/// RAdam optimizer over a fixed list of parameter tensors.
pub struct RAdam<T> {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    policy: RectPolicy,
    state: Option<OptimState<T>>,
}

impl<T: Elem> RAdam<T> {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        let bad = |detail: String| Error::InvalidArg {
            op: "RAdam::new",
            detail,
        };
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(bad(format!("learning_rate {learning_rate} must be finite and > 0")));
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(bad(format!("{name} {b} must be in [0, 1)")));
            }
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(bad(format!("eps {eps} must be finite and > 0")));
        }
        Ok(RAdam {
            learning_rate,
            beta1,
            beta2,
            eps,
            policy: RectPolicy::Auto,
            state: None,
        })
    }

    pub fn with_policy(mut self, policy: RectPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// None until the first step.
    pub fn state(&self) -> Option<&OptimState<T>> {
        self.state.as_ref()
    }

    /// One update over all parameters. `params` and `grads` are parallel
    /// slices; `names` labels parameters in error messages. The state is
    /// sized on the first call and must keep the same layout afterwards.
    pub fn step(&mut self, params: &mut [(&str, &mut [T])], grads: &[&[T]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::InvalidArg {
                op: "RAdam::step",
                detail: format!("{} parameters but {} gradients", params.len(), grads.len()),
            });
        }
        for ((name, p), g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::Shape {
                    op: "RAdam::step",
                    detail: format!("`{name}`: parameter len {} vs gradient len {}", p.len(), g.len()),
                });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGrad {
                    param: (*name).to_string(),
                });
            }
        }
        let state = self.state.get_or_insert_with(|| {
            let lens: Vec<usize> = params.iter().map(|(_, p)| p.len()).collect();
            OptimState::new(&lens, self.beta2)
        });
        if state.m.len() != params.len() {
            return Err(Error::InvalidArg {
                op: "RAdam::step",
                detail: format!(
                    "state holds {} tensors but step got {}",
                    state.m.len(),
                    params.len()
                ),
            });
        }

        state.t += 1;
        let t = state.t;
        let bias1 = 1.0 - self.beta1.powi(t as i32);
        let bias2 = 1.0 - self.beta2.powi(t as i32);
        let rho = rho_t(self.beta2, t);
        let rectified = match self.policy {
            RectPolicy::Auto => rho > 4.0,
            RectPolicy::ForceRectified => true,
            RectPolicy::ForceMomentum => false,
        };
        let rect_term = if rho > 4.0 {
            let rho_inf = state.rho_inf;
            (((rho - 4.0) * (rho - 2.0) * rho_inf) / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho))
                .sqrt()
        } else {
            1.0
        };

        let b1 = T::from_f64(self.beta1);
        let b1c = T::from_f64(1.0 - self.beta1);
        let b2 = T::from_f64(self.beta2);
        let b2c = T::from_f64(1.0 - self.beta2);
        let eps = T::from_f64(self.eps);
        let mom_scale = T::from_f64(self.learning_rate / bias1);
        let rect_scale = T::from_f64(self.learning_rate * rect_term / bias1);
        let inv_bias2 = T::from_f64(1.0 / bias2);

        for (slot, ((_, p), g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut state.m[slot];
            let v = &mut state.v[slot];
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1.mul(m[i]).add(b1c.mul(gi));
                v[i] = b2.mul(v[i]).add(b2c.mul(gi.mul(gi)));
                let delta = if rectified {
                    let vhat = v[i].mul(inv_bias2).sqrt();
                    rect_scale.mul(m[i]).div(vhat.add(eps))
                } else {
                    mom_scale.mul(m[i])
                };
                p[i] = p[i].sub(delta);
            }
        }
        Ok(())
    }
}
