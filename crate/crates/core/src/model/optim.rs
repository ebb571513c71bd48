use super::network::{BranchState, ClassifierState};
use super::params::{ParamSet, Real};
use crate::error::{Result, ZddaError};

/// Anything with a parameter set and a frozen flag.
pub trait Trainable<T: Real> {
    fn params(&self) -> &ParamSet<T>;
    fn params_mut(&mut self) -> &mut ParamSet<T>;
    fn is_frozen(&self) -> bool;
    fn describe(&self) -> String;
}

impl<T: Real> Trainable<T> for BranchState<T> {
    fn params(&self) -> &ParamSet<T> {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }
    fn is_frozen(&self) -> bool {
        self.frozen
    }
    fn describe(&self) -> String {
        format!("branch {}", self.tag.as_str())
    }
}

impl<T: Real> Trainable<T> for ClassifierState<T> {
    fn params(&self) -> &ParamSet<T> {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }
    fn is_frozen(&self) -> bool {
        self.frozen
    }
    fn describe(&self) -> String {
        format!("{:?} classifier", self.kind)
    }
}

/// Momentum SGD over a fixed list of trainable slots.
///
/// `v <- momentum * v + lr * (g + weight_decay * w); w <- w - v`
#[derive(Debug, Clone)]
pub struct MomentumSgd<T> {
    pub learning_rate: T,
    pub momentum: T,
    pub weight_decay: T,
    velocities: Vec<Option<ParamSet<T>>>,
}

impl<T: Real> MomentumSgd<T> {
    pub fn new(learning_rate: T, momentum: T, slots: usize) -> Self {
        Self {
            learning_rate,
            momentum,
            weight_decay: T::zero(),
            velocities: vec![None; slots],
        }
    }

    /// One update of every state. Validates all slots before touching any.
    pub fn step(&mut self, states: &mut [&mut dyn Trainable<T>], grads: &[&ParamSet<T>]) -> Result<()> {
        if states.len() != self.velocities.len() || grads.len() != states.len() {
            return Err(ZddaError::ContractViolation(format!(
                "optimizer has {} slots, got {} states and {} gradients",
                self.velocities.len(),
                states.len(),
                grads.len()
            )));
        }
        for (s, g) in states.iter().zip(grads) {
            if s.is_frozen() {
                return Err(ZddaError::ContractViolation(format!(
                    "{} is frozen and cannot be trained",
                    s.describe()
                )));
            }
            s.params().check_layout(g, &s.describe())?;
        }
        for ((s, g), v) in states.iter_mut().zip(grads).zip(&mut self.velocities) {
            let v = v.get_or_insert_with(|| g.zeros_like());
            for ((p, gp), vp) in s.params_mut().iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                for ((w, &gi), vi) in p.data.iter_mut().zip(&gp.data).zip(&mut vp.data) {
                    *vi = self.momentum * *vi + self.learning_rate * (gi + self.weight_decay * *w);
                    *w -= *vi;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::{build_classifier, ClassifierKind};

    fn scalar_classifier(w: f64) -> ClassifierState<f64> {
        let mut c = build_classifier::<f64>(ClassifierKind::Source, 1, 1, 0).unwrap();
        c.params.get_mut("fc.weight").unwrap().data[0] = w;
        c
    }

    fn grad_of(c: &ClassifierState<f64>, g: f64) -> ParamSet<f64> {
        let mut gs = c.params.zeros_like();
        gs.get_mut("fc.weight").unwrap().data[0] = g;
        gs
    }

    #[test]
    fn plain_step_and_momentum_recurrence() {
        let mut c = scalar_classifier(1.0);
        let g = grad_of(&c, 0.5);
        let mut opt = MomentumSgd::new(0.1, 0.0, 1);
        opt.step(&mut [&mut c], &[&g]).unwrap();
        assert!((c.params.data("fc.weight")[0] - 0.95).abs() < 1e-15);

        let mut c = scalar_classifier(1.0);
        let mut opt = MomentumSgd::new(0.1, 0.9, 1);
        let (g1, g2) = (0.5, -0.25);
        let (d1, d2) = (grad_of(&c, g1), grad_of(&c, g2));
        opt.step(&mut [&mut c], &[&d1]).unwrap();
        opt.step(&mut [&mut c], &[&d2]).unwrap();
        let v1 = 0.1 * g1;
        let v2 = 0.9 * v1 + 0.1 * g2;
        assert!((c.params.data("fc.weight")[0] - (1.0 - v1 - v2)).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_adds_to_the_gradient() {
        let mut c = scalar_classifier(2.0);
        let g = grad_of(&c, 0.5);
        let mut opt = MomentumSgd::new(0.1, 0.0, 1);
        opt.weight_decay = 0.25;
        opt.step(&mut [&mut c], &[&g]).unwrap();
        // 2 - 0.1 * (0.5 + 0.25 * 2)
        assert!((c.params.data("fc.weight")[0] - 1.9).abs() < 1e-15);
        // the bias decays too, from zero it stays zero
        assert_eq!(c.params.data("fc.bias")[0], 0.0);
    }

    #[test]
    fn frozen_state_is_rejected_untouched() {
        let mut a = scalar_classifier(1.0);
        let mut b = scalar_classifier(2.0);
        b.frozen = true;
        let (ga, gb) = (grad_of(&a, 1.0), grad_of(&b, 1.0));
        let before = a.params.checksum();
        let mut opt = MomentumSgd::new(0.1, 0.9, 2);
        let err = opt.step(&mut [&mut a, &mut b], &[&ga, &gb]).unwrap_err();
        assert!(matches!(err, ZddaError::ContractViolation(_)));
        assert_eq!(a.params.checksum(), before);
    }
}
