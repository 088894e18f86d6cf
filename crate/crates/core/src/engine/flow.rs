//! Deterministic flow of the walker densities and its fixed point.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::generators::{irw_vector_field, reservoir_rate_sums};
use crate::model::{Model, StateVector};

/// Default RK4 step: `0.01 / (max damping + max degree weight)`.
pub fn default_flow_dt(model: &Model) -> f64 {
    let g = model.graph();
    let damping = reservoir_rate_sums(model).iter().map(|s| s.1).fold(0.0, f64::max);
    let degree = (0..g.len()).map(|i| g.degree_weight(i)).fold(0.0, f64::max);
    let scale = damping + degree;
    if scale > 0.0 {
        0.01 / scale
    } else {
        0.01
    }
}

fn check_rate_family(model: &Model) -> Result<()> {
    if model.family().uses_rate_reservoirs() {
        Ok(())
    } else {
        Err(Error::KindMismatch { expected: "IRW or IRW_FLOW".into(), found: model.family().to_string() })
    }
}

/// One classical Runge–Kutta step.
pub fn rk4_step(model: &Model, z: &[f64], h: f64) -> Result<Vec<f64>> {
    let axpy = |a: &[f64], k: &[f64], s: f64| -> Vec<f64> { a.iter().zip(k).map(|(x, y)| x + s * y).collect() };
    let k1 = irw_vector_field(z, model)?;
    let k2 = irw_vector_field(&axpy(z, &k1, h / 2.0), model)?;
    let k3 = irw_vector_field(&axpy(z, &k2, h / 2.0), model)?;
    let k4 = irw_vector_field(&axpy(z, &k3, h), model)?;
    Ok((0..z.len()).map(|i| z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

/// Integrate from `init` to `t_end` with fixed step `dt`, calling
/// `on_step(t, z)` after every step.
pub fn integrate_flow(
    model: &Model,
    init: &[f64],
    t_end: f64,
    dt: f64,
    mut on_step: impl FnMut(f64, &[f64]),
) -> Result<Vec<f64>> {
    check_rate_family(model)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::BadDt(dt));
    }
    let mut z = init.to_vec();
    let mut t = 0.0;
    while t < t_end {
        let h = dt.min(t_end - t);
        z = rk4_step(model, &z, h)?;
        t = if t_end - t <= dt { t_end } else { t + h };
        on_step(t, &z);
    }
    Ok(z)
}

/// Solve `(L + diag(c γ)) z = c α`, with `L` the weighted graph Laplacian.
pub fn irw_fixed_point(model: &Model) -> Result<StateVector> {
    check_rate_family(model)?;
    let g = model.graph();
    let n = g.len();
    let sums = reservoir_rate_sums(model);
    if sums.iter().all(|s| s.1 <= 0.0) {
        return Err(Error::SingularSystem);
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for e in g.active_edges() {
        m[(e.a, e.a)] += e.weight;
        m[(e.b, e.b)] += e.weight;
        m[(e.a, e.b)] -= e.weight;
        m[(e.b, e.a)] -= e.weight;
    }
    for (i, s) in sums.iter().enumerate() {
        m[(i, i)] += s.1;
    }
    let rhs = DVector::from_iterator(n, sums.iter().map(|s| s.0));
    let z = m.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    Ok(StateVector::Masses(z.iter().copied().collect()))
}
