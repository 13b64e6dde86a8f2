use crate::error::{Error, Result};
use crate::gcnn::{GcnnModel, Gradients};

use super::TrainConfig;

/// Adam moment accumulators, one flat buffer per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(model: &GcnnModel) -> Self {
        let zeros: Vec<Vec<f64>> = model.param_groups().iter().map(|(_, g)| vec![0.0; g.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of every parameter, in place.
pub fn optimizer_step(
    state: &mut OptimizerState,
    model: &mut GcnnModel,
    gradients: &Gradients,
    config: &TrainConfig,
) -> Result<()> {
    let grads = gradients.groups();
    {
        let params = model.param_groups();
        for (i, ((name, p), (_, g))) in params.iter().zip(grads.iter()).enumerate() {
            if p.len() != g.len() || state.m.get(i).map(Vec::len) != Some(p.len()) || state.v[i].len() != p.len() {
                return Err(Error::Shape(format!("optimizer buffers do not match parameter group {name}")));
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, (_, p)) in model.param_groups_mut().into_iter().enumerate() {
        let g = grads[i].1;
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcnn::{build_hierarchy, init_model, Architecture};
    use crate::streamline::NormalizationTransform;

    fn model() -> GcnnModel {
        let arch = Architecture {
            num_nodes: 8,
            num_levels: 3,
            conv1_channels: 2,
            conv2_channels: 2,
            hidden: 3,
            classes: 2,
        };
        init_model(build_hierarchy(&arch).unwrap(), arch, 1, NormalizationTransform::identity(), "b").unwrap()
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut m = model();
        let before = m.clone();
        let mut st = OptimizerState::new(&m);
        let g = Gradients::zeros_like(&m);
        optimizer_step(&mut st, &mut m, &g, &TrainConfig::default()).unwrap();
        for (a, b) in m.param_groups().iter().zip(before.param_groups().iter()) {
            assert_eq!(a.1, b.1);
        }
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut m = model();
        let before = m.clone();
        let mut st = OptimizerState::new(&m);
        let mut g = Gradients::zeros_like(&m);
        for (_, s) in g.groups_mut() {
            for (j, v) in s.iter_mut().enumerate() {
                *v = if j % 2 == 0 { 0.3 } else { -2.0 };
            }
        }
        let cfg = TrainConfig::default();
        optimizer_step(&mut st, &mut m, &g, &cfg).unwrap();
        for ((a, b), (_, gs)) in m.param_groups().iter().zip(before.param_groups().iter()).zip(g.groups()) {
            for j in 0..a.1.len() {
                // m̂ = g, v̂ = g², so the step is lr·|g|/(|g| + ε).
                let want = -cfg.learning_rate * gs[j].signum() * gs[j].abs() / (gs[j].abs() + cfg.epsilon);
                assert!((a.1[j] - b.1[j] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let m0 = model();
        let mut g = Gradients::zeros_like(&m0);
        g.fc.weight.fill(0.1);
        let run = || {
            let mut m = m0.clone();
            let mut st = OptimizerState::new(&m);
            for _ in 0..3 {
                optimizer_step(&mut st, &mut m, &g, &TrainConfig::default()).unwrap();
            }
            (m.fc.weight.clone(), st)
        };
        assert_eq!(run(), run());

        let mut m = m0.clone();
        let mut st = OptimizerState::new(&m);
        st.m[2].pop();
        assert!(matches!(
            optimizer_step(&mut st, &mut m, &g, &TrainConfig::default()),
            Err(Error::Shape(_))
        ));
    }
}
