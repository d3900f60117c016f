//! Brute-force reference values for exponential lifetimes.
//!
//! With `Q ~ Exp(1)` the population size is a continuous-time Markov chain
//! (birth `alpha(n)`, death `n`) absorbed at 0. The expected time spent in
//! each transient state starting from state 1 is the first row of the
//! fundamental matrix `(-Q_TT)^{-1}`, obtained here by a dense LU solve. This
//! shares no code with the product formulas it is used to check.

use nalgebra::{DMatrix, DVector};

use crate::bd_analytic::BirthRateModel;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ChainMoments {
    /// Expected time in state `n`, indexed from `n = 1`.
    pub occupation: Vec<f64>,
    pub duration: f64,
    pub progeny: f64,
}

/// Moments of the absorbing chain on states `1..=max_state`. The model must
/// not be able to leave that range (`alpha(max_state) = 0`).
pub fn absorbing_chain(model: &BirthRateModel, max_state: usize) -> Result<ChainMoments> {
    if max_state == 0 {
        return Err(invalid("chain needs at least one transient state"));
    }
    if model.rate(max_state) != 0.0 {
        return Err(invalid(format!(
            "alpha({max_state}) must be zero to close the chain"
        )));
    }
    let m = max_state;
    // Generator restricted to transient states, negated: rows are "from".
    let mut g = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        let n = i + 1;
        let birth = model.rate(n);
        let death = n as f64;
        g[(i, i)] = birth + death;
        if i + 1 < m {
            g[(i, i + 1)] = -birth;
        }
        if i > 0 {
            g[(i, i - 1)] = -death;
        }
    }
    // Row vector x with x (-Q_TT) = e_1, i.e. (-Q_TT)^T x^T = e_1.
    let mut e1 = DVector::<f64>::zeros(m);
    e1[0] = 1.0;
    let x = g
        .transpose()
        .lu()
        .solve(&e1)
        .ok_or_else(|| invalid("singular generator"))?;
    let occupation: Vec<f64> = x.iter().copied().collect();
    let duration = occupation.iter().sum();
    let progeny = 1.0
        + occupation
            .iter()
            .enumerate()
            .map(|(i, a)| model.rate(i + 1) * a)
            .sum::<f64>();
    Ok(ChainMoments {
        occupation,
        duration,
        progeny,
    })
}
