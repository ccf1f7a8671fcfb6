//! Window statistics. Missing entries are skipped; degenerate inputs give `Missing`.

use serde::{Deserialize, Serialize};

use crate::model::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Min,
    Max,
    Sum,
    Count,
    Mean,
    Median,
    Stdev,
}

fn present(values: &[Value]) -> impl Iterator<Item = f64> + '_ {
    values.iter().filter_map(Value::as_number)
}

pub fn window_aggregate(kind: Aggregate, values: &[Value]) -> Value {
    let n = present(values).count();
    if kind == Aggregate::Count {
        return Value::Number(n as f64);
    }
    if n == 0 {
        return Value::Missing;
    }
    let x = match kind {
        Aggregate::Min => present(values).fold(f64::INFINITY, f64::min),
        Aggregate::Max => present(values).fold(f64::NEG_INFINITY, f64::max),
        Aggregate::Sum => present(values).sum(),
        Aggregate::Mean => mean(present(values), n),
        Aggregate::Median => {
            let mut xs: Vec<f64> = present(values).collect();
            xs.sort_by(f64::total_cmp);
            if n % 2 == 1 {
                xs[n / 2]
            } else {
                (xs[n / 2 - 1] + xs[n / 2]) / 2.0
            }
        }
        Aggregate::Stdev => {
            // Population deviation, two passes over values shifted by the first
            // one; a constant window gives exactly zero.
            let x0 = present(values).next().unwrap_or(0.0);
            let m = mean(present(values).map(|x| x - x0), n);
            let ss: f64 = present(values).map(|x| (x - x0 - m) * (x - x0 - m)).sum();
            (ss / n as f64).sqrt()
        }
        Aggregate::Count => unreachable!(),
    };
    Value::number(x)
}

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    xs.sum::<f64>() / n as f64
}

/// Exponentially weighted moving average, oldest to newest. Gaps carry the
/// previous state forward.
pub fn ewma(values: &[Value], alpha: f64) -> Value {
    let mut state: Option<f64> = None;
    for x in present(values) {
        state = Some(match state {
            None => x,
            Some(s) => alpha * x + (1.0 - alpha) * s,
        });
    }
    state.map_or(Value::Missing, Value::number)
}

/// Least-squares slope of present values against their sample index.
pub fn slope(values: &[Value]) -> Value {
    let points: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.as_number().map(|y| (i as f64, y)))
        .collect();
    let n = points.len();
    if n < 2 {
        return Value::Missing;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(sxy, sxx), &(x, y)| {
        (sxy + (x - mx) * (y - my), sxx + (x - mx) * (x - mx))
    });
    Value::number(sxy / sxx)
}
