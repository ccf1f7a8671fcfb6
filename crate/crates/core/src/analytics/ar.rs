//! One-step-ahead autoregressive forecast.
//!
//! Fits `x[t] = c + a1*x[t-1] + ... + ap*x[t-p]` by ordinary least squares over
//! the present values of the window (gaps removed, order kept) and predicts the
//! next sample. Rank-deficient designs, such as a constant series, are solved
//! in the minimum-norm sense so the forecast stays defined.

use nalgebra::{DMatrix, DVector};

use crate::model::Value;

pub fn ar_forecast(values: &[Value], order: usize) -> Value {
    let xs: Vec<f64> = values.iter().filter_map(Value::as_number).collect();
    if order == 0 || xs.len() < order + 2 {
        return Value::Missing;
    }
    let rows = xs.len() - order;
    let design = DMatrix::from_fn(rows, order + 1, |r, c| if c == 0 { 1.0 } else { xs[r + order - c] });
    let target = DVector::from_fn(rows, |r, _| xs[r + order]);

    let Some(coef) = least_squares(design, target) else {
        return Value::Missing;
    };
    let n = xs.len();
    let forecast = coef[0] + (1..=order).map(|lag| coef[lag] * xs[n - lag]).sum::<f64>();
    Value::number(forecast)
}

fn least_squares(design: DMatrix<f64>, target: DVector<f64>) -> Option<DVector<f64>> {
    let scale = design.amax().max(1.0);
    let svd = design.svd(true, true);
    svd.solve(&target, 1e-10 * scale).ok()
}
