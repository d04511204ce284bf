use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::train::TrainConfig;

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update using the gradient attached to each
/// parameter tensor.
pub fn adam_step(params: &mut ModelParams, state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::Usage("optimizer state does not match the parameter set".into()));
    }
    if let Some((name, _)) = params.iter().find(|(_, t)| t.grad().is_none()) {
        return Err(Error::Usage(format!("parameter {name} has no gradient")));
    }
    state.step += 1;
    let t = state.step as i32;
    let correct1 = 1.0 - cfg.beta1.powi(t);
    let correct2 = 1.0 - cfg.beta2.powi(t);
    for (k, (_, tensor)) in params.iter_mut().enumerate() {
        let grad = tensor.grad().expect("checked above").to_vec();
        let mut values = tensor.values().to_vec();
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..values.len() {
            let g = grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / correct1;
            let v_hat = v[i] / correct2;
            values[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        tensor.assign(&values)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, ModelConfig};

    fn tiny() -> ModelParams {
        let c = ModelConfig {
            architecture: Architecture::Rnn,
            input_dim: 2,
            steps: 3,
            conv_layers: Vec::new(),
            lstm_hidden: 2,
            ..ModelConfig::default()
        };
        ModelParams::init(&c).unwrap()
    }

    fn attach(params: &mut ModelParams, value: f64) {
        for (_, t) in params.iter_mut() {
            let n = t.len();
            t.set_grad(vec![value; n]).unwrap();
        }
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let mut p = tiny();
        let before = p.clone();
        attach(&mut p, 0.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &mut s, &TrainConfig::default()).unwrap();
        for ((_, a), (_, b)) in p.iter().zip(before.iter()) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = tiny();
        let before = p.clone();
        attach(&mut p, 0.5);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &mut s, &TrainConfig::default()).unwrap();
        for ((_, a), (_, b)) in p.iter().zip(before.iter()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y + 1e-3).abs() < 1e-6, "{}", x - y);
            }
        }
    }

    #[test]
    fn missing_gradient_names_the_parameter() {
        let mut p = tiny();
        let mut s = AdamState::new(&p);
        let err = adam_step(&mut p, &mut s, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Usage(ref m) if m.contains("rnn.w")), "{err}");
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let run = || {
            let mut p = tiny();
            let mut s = AdamState::new(&p);
            for step in 0..5 {
                attach(&mut p, 0.1 * step as f64 - 0.2);
                adam_step(&mut p, &mut s, &TrainConfig::default()).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
