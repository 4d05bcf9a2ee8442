//! Small feedforward reward-prediction networks with exact analytic
//! gradients.
//!
//! A subpolicy network maps a feature vector to one score per arm. With a
//! hidden layer the forward pass is `scores = W2 tanh(W1 x + b1) + b2`;
//! with `hidden == 0` it degenerates to the linear map `scores = W x + b`.
//! Parameters live in one flat vector so the uncertainty accumulator can be
//! indexed per parameter.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("feature vector has length {got}, expected {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamDim { expected: usize, got: usize },
}

/// Architecture of a subpolicy network. `hidden == 0` means linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    pub hidden: usize,
    pub arms: usize,
}

impl NetShape {
    pub fn param_count(&self) -> usize {
        if self.hidden == 0 {
            self.arms * self.input + self.arms
        } else {
            self.hidden * self.input + self.hidden + self.arms * self.hidden + self.arms
        }
    }

    // Flat-vector offsets for the hidden architecture.
    fn w1(&self, unit: usize, feat: usize) -> usize {
        unit * self.input + feat
    }
    fn b1(&self, unit: usize) -> usize {
        self.hidden * self.input + unit
    }
    fn w2(&self, arm: usize, unit: usize) -> usize {
        self.hidden * self.input + self.hidden + arm * self.hidden + unit
    }
    fn b2(&self, arm: usize) -> usize {
        self.hidden * self.input + self.hidden + self.arms * self.hidden + arm
    }

    // Offsets for the linear architecture.
    fn w(&self, arm: usize, feat: usize) -> usize {
        arm * self.input + feat
    }
    fn b(&self, arm: usize) -> usize {
        self.arms * self.input + arm
    }
}

/// Weights uniform in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`, biases zero.
pub fn init_params(shape: &NetShape, rng: &mut impl Rng) -> Vec<f64> {
    let mut theta = vec![0.0; shape.param_count()];
    if shape.hidden == 0 {
        let bound = 1.0 / (shape.input as f64).sqrt();
        for arm in 0..shape.arms {
            for feat in 0..shape.input {
                theta[shape.w(arm, feat)] = rng.random_range(-bound..=bound);
            }
        }
    } else {
        let bound1 = 1.0 / (shape.input as f64).sqrt();
        for unit in 0..shape.hidden {
            for feat in 0..shape.input {
                theta[shape.w1(unit, feat)] = rng.random_range(-bound1..=bound1);
            }
        }
        let bound2 = 1.0 / (shape.hidden as f64).sqrt();
        for arm in 0..shape.arms {
            for unit in 0..shape.hidden {
                theta[shape.w2(arm, unit)] = rng.random_range(-bound2..=bound2);
            }
        }
    }
    theta
}

fn check_dims(shape: &NetShape, theta: &[f64], x: &[f64]) -> Result<(), NetError> {
    if x.len() != shape.input {
        return Err(NetError::InputDim {
            expected: shape.input,
            got: x.len(),
        });
    }
    if theta.len() != shape.param_count() {
        return Err(NetError::ParamDim {
            expected: shape.param_count(),
            got: theta.len(),
        });
    }
    Ok(())
}

/// Forward pass: one score (reward prediction) per arm.
pub fn forward(shape: &NetShape, theta: &[f64], x: &[f64]) -> Result<Vec<f64>, NetError> {
    check_dims(shape, theta, x)?;
    if shape.hidden == 0 {
        let mut scores = vec![0.0; shape.arms];
        for arm in 0..shape.arms {
            let mut s = theta[shape.b(arm)];
            for feat in 0..shape.input {
                s += theta[shape.w(arm, feat)] * x[feat];
            }
            scores[arm] = s;
        }
        return Ok(scores);
    }
    let hidden = hidden_activations(shape, theta, x);
    let mut scores = vec![0.0; shape.arms];
    for arm in 0..shape.arms {
        let mut s = theta[shape.b2(arm)];
        for unit in 0..shape.hidden {
            s += theta[shape.w2(arm, unit)] * hidden[unit];
        }
        scores[arm] = s;
    }
    Ok(scores)
}

fn hidden_activations(shape: &NetShape, theta: &[f64], x: &[f64]) -> Vec<f64> {
    let mut hidden = vec![0.0; shape.hidden];
    for unit in 0..shape.hidden {
        let mut z = theta[shape.b1(unit)];
        for feat in 0..shape.input {
            z += theta[shape.w1(unit, feat)] * x[feat];
        }
        hidden[unit] = z.tanh();
    }
    hidden
}

/// Dense per-arm gradient matrix: `row(j)[l] = d score_j / d theta_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradMatrix {
    pub arms: usize,
    pub params: usize,
    data: Vec<f64>,
}

impl GradMatrix {
    pub fn row(&self, arm: usize) -> &[f64] {
        &self.data[arm * self.params..(arm + 1) * self.params]
    }
}

/// Exact analytic gradients of every arm's score with respect to every
/// parameter.
pub fn per_arm_gradients(
    shape: &NetShape,
    theta: &[f64],
    x: &[f64],
) -> Result<GradMatrix, NetError> {
    check_dims(shape, theta, x)?;
    let params = shape.param_count();
    let mut data = vec![0.0; shape.arms * params];

    if shape.hidden == 0 {
        for arm in 0..shape.arms {
            let row = &mut data[arm * params..(arm + 1) * params];
            for feat in 0..shape.input {
                row[shape.w(arm, feat)] = x[feat];
            }
            row[shape.b(arm)] = 1.0;
        }
        return Ok(GradMatrix {
            arms: shape.arms,
            params,
            data,
        });
    }

    let hidden = hidden_activations(shape, theta, x);
    // d tanh(z)/dz = 1 - tanh(z)^2
    let dhidden: Vec<f64> = hidden.iter().map(|t| 1.0 - t * t).collect();
    for arm in 0..shape.arms {
        let row = &mut data[arm * params..(arm + 1) * params];
        for unit in 0..shape.hidden {
            let upstream = theta[shape.w2(arm, unit)] * dhidden[unit];
            for feat in 0..shape.input {
                row[shape.w1(unit, feat)] = upstream * x[feat];
            }
            row[shape.b1(unit)] = upstream;
            row[shape.w2(arm, unit)] = hidden[unit];
        }
        row[shape.b2(arm)] = 1.0;
    }
    Ok(GradMatrix {
        arms: shape.arms,
        params,
        data,
    })
}
