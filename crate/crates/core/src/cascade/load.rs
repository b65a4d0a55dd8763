use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use super::{clamp_mass, CascadeError};
use crate::reliability::FailureDistribution;

/// Load-redistribution cascade: initial loads uniform on `[l_min, l_max]`,
/// a node fails above `l_fail`, every failure adds `p_transfer` to the survivors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadModelParams {
    pub n: usize,
    pub l_min: f64,
    pub l_max: f64,
    pub l_fail: f64,
    pub d_disturb: f64,
    pub p_transfer: f64,
}

impl LoadModelParams {
    /// Parameters already in normalized form (`l_min = 0`, `l_max = l_fail = 1`).
    pub fn normalized(n: usize, d: f64, p: f64) -> Self {
        Self {
            n,
            l_min: 0.0,
            l_max: 1.0,
            l_fail: 1.0,
            d_disturb: d,
            p_transfer: p,
        }
    }

    pub fn d_hat(&self) -> f64 {
        (self.d_disturb + self.l_max - self.l_fail) / (self.l_max - self.l_min)
    }

    pub fn p_hat(&self) -> f64 {
        self.p_transfer / (self.l_max - self.l_min)
    }

    pub fn validate(&self) -> Result<(), CascadeError> {
        let vals = [self.l_min, self.l_max, self.l_fail, self.d_disturb, self.p_transfer];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(CascadeError::InvalidParams("non-finite load parameter".into()));
        }
        if self.l_max <= self.l_min {
            return Err(CascadeError::InvalidParams("l_max must exceed l_min".into()));
        }
        if self.p_hat() < 0.0 {
            return Err(CascadeError::InvalidParams("negative load transfer".into()));
        }
        if self.d_hat() < 0.0 {
            return Err(CascadeError::InvalidParams("negative normalized disturbance".into()));
        }
        Ok(())
    }
}

fn saturate(z: f64) -> f64 {
    z.clamp(0.0, 1.0)
}

/// `base^exp` with `0^0 = 1`.
fn pow0(base: f64, exp: usize) -> f64 {
    if exp == 0 {
        1.0
    } else {
        base.powi(exp as i32)
    }
}

pub fn load_based_distribution(params: &LoadModelParams) -> Result<FailureDistribution, CascadeError> {
    params.validate()?;
    let (n, d, p) = (params.n, params.d_hat(), params.p_hat());
    let mut probs = vec![0.0; n + 1];
    let mut acc = 0.0;
    for (x, slot) in probs.iter_mut().enumerate().take(n) {
        let reach = d + x as f64 * p;
        let lead = if x == 0 {
            // phi(d) * d^-1, with 0/0 = 1
            if d == 0.0 {
                1.0
            } else {
                saturate(d) / d
            }
        } else {
            saturate(d) * pow0(reach, x - 1)
        };
        let tail = pow0(saturate(1.0 - reach), n - x);
        let coeff = ln_binomial(n as u64, x as u64).exp();
        let mass = coeff * lead * tail;
        *slot = clamp_mass(x, mass)?;
        acc += mass;
    }
    probs[n] = clamp_mass(n, 1.0 - acc)?;
    Ok(FailureDistribution { n, probs })
}
