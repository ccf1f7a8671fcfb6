//! Per-packet analytics over the sliding window.
//!
//! A [`FunctionSet`] is compiled once from the declared [`FunctionSpec`]s and then
//! evaluated for every packet, in declaration order. Equations see the current
//! packet's columns plus every earlier result.

mod ar;
mod stats;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use ar::ar_forecast;
pub use stats::{ewma, slope, window_aggregate, Aggregate};

use crate::error::Diagnostic;
use crate::expr::{value_to_scalar, Env, EvalError, Expr, Scalar};
use crate::model::{ColumnName, DataPacket, Value};
use crate::numfmt::NumberFormat;
use crate::window::SlidingWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    Min,
    Max,
    Sum,
    Count,
    Mean,
    Median,
    Ewma,
    Stdev,
    Slope,
    ArForecast,
    Equation,
}

impl FunctionKind {
    pub fn name(self) -> &'static str {
        match self {
            FunctionKind::Min => "min",
            FunctionKind::Max => "max",
            FunctionKind::Sum => "sum",
            FunctionKind::Count => "count",
            FunctionKind::Mean => "mean",
            FunctionKind::Median => "median",
            FunctionKind::Ewma => "ewma",
            FunctionKind::Stdev => "stdev",
            FunctionKind::Slope => "slope",
            FunctionKind::ArForecast => "ar_forecast",
            FunctionKind::Equation => "equation",
        }
    }

    fn aggregate(self) -> Option<Aggregate> {
        Some(match self {
            FunctionKind::Min => Aggregate::Min,
            FunctionKind::Max => Aggregate::Max,
            FunctionKind::Sum => Aggregate::Sum,
            FunctionKind::Count => Aggregate::Count,
            FunctionKind::Mean => Aggregate::Mean,
            FunctionKind::Median => Aggregate::Median,
            FunctionKind::Stdev => Aggregate::Stdev,
            _ => return None,
        })
    }
}

/// Declarative description of one analytic function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    pub kind: FunctionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batchlen: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equation: Option<String>,
}

impl FunctionSpec {
    pub fn new(kind: FunctionKind) -> Self {
        FunctionSpec {
            kind,
            id: None,
            attribute: None,
            batchlen: None,
            format: None,
            alpha: None,
            order: None,
            equation: None,
        }
    }

    pub fn equation(id: &str, source: &str) -> Self {
        FunctionSpec {
            id: Some(id.to_owned()),
            equation: Some(source.to_owned()),
            ..Self::new(FunctionKind::Equation)
        }
    }

    pub fn with_id(mut self, id: &str) -> Self {
        self.id = Some(id.to_owned());
        self
    }

    pub fn with_attribute(mut self, attribute: &str) -> Self {
        self.attribute = Some(attribute.to_owned());
        self
    }

    pub fn with_batchlen(mut self, batchlen: usize) -> Self {
        self.batchlen = Some(batchlen);
        self
    }

    pub fn with_format(mut self, format: &str) -> Self {
        self.format = Some(format.to_owned());
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = Some(order);
        self
    }

    /// Result column name; defaults to the kind.
    pub fn result_id(&self) -> &str {
        self.id.as_deref().unwrap_or(self.kind.name())
    }
}

#[derive(Debug, Clone)]
enum Op {
    Aggregate(Aggregate),
    Ewma(f64),
    Slope,
    Ar(usize),
    Equation(Expr),
}

#[derive(Debug, Clone)]
struct Compiled {
    id: ColumnName,
    attribute: ColumnName,
    batchlen: usize,
    format: Option<NumberFormat>,
    op: Op,
}

/// Results of one evaluation pass, aligned with the declared functions.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub results: Vec<Scalar>,
    /// Expression failures (type errors, division by zero, overflow) turned into Missing.
    pub errors: u64,
}

/// Validated, ready-to-run list of functions.
#[derive(Debug, Clone, Default)]
pub struct FunctionSet {
    functions: Vec<Compiled>,
}

impl FunctionSet {
    /// Validates `specs` against the parser `columns` and window `capacity`.
    /// Every problem is reported, paths are prefixed with `path`.
    pub fn build(
        specs: &[FunctionSpec],
        columns: &[ColumnName],
        capacity: usize,
        path: &str,
    ) -> Result<Self, Vec<Diagnostic>> {
        let mut diags = Vec::new();
        let column_set: HashSet<&str> = columns.iter().map(|c| &**c).collect();
        let all_ids: Vec<&str> = specs.iter().map(FunctionSpec::result_id).collect();
        let mut seen: HashSet<&str> = HashSet::new();
        let mut functions = Vec::with_capacity(specs.len());

        for (i, spec) in specs.iter().enumerate() {
            let at = |field: &str| format!("{path}[{i}].{field}");
            let id = spec.result_id();
            let before = diags.len();

            if id.is_empty() {
                diags.push(Diagnostic::new(at("id"), "must not be empty"));
            } else if column_set.contains(id) {
                diags.push(Diagnostic::new(at("id"), format!("{id:?} collides with a parser column")));
            } else if !seen.insert(id) {
                diags.push(Diagnostic::new(at("id"), format!("duplicate function id {id:?}")));
            }

            let batchlen = spec.batchlen.unwrap_or(capacity);
            if batchlen == 0 {
                diags.push(Diagnostic::new(at("batchlen"), "must be at least 1"));
            } else if batchlen > capacity {
                diags.push(Diagnostic::new(
                    at("batchlen"),
                    format!("{batchlen} exceeds the window capacity {capacity}"),
                ));
            }

            let format = match spec.format.as_deref().map(NumberFormat::parse) {
                Some(Err(e)) => {
                    diags.push(Diagnostic::new(at("format"), e.to_string()));
                    None
                }
                Some(Ok(f)) => Some(f),
                None => None,
            };

            let is_equation = spec.kind == FunctionKind::Equation;
            let attribute = spec.attribute.as_deref().unwrap_or("value");
            if !is_equation && !column_set.contains(attribute) {
                diags.push(Diagnostic::new(at("attribute"), format!("unknown column {attribute:?}")));
            }
            if spec.alpha.is_some() && spec.kind != FunctionKind::Ewma {
                diags.push(Diagnostic::new(at("alpha"), "only applies to ewma"));
            }
            if spec.order.is_some() && spec.kind != FunctionKind::ArForecast {
                diags.push(Diagnostic::new(at("order"), "only applies to ar_forecast"));
            }
            if spec.equation.is_some() && !is_equation {
                diags.push(Diagnostic::new(at("equation"), "only applies to equation functions"));
            }

            let op = match spec.kind {
                FunctionKind::Ewma => {
                    let alpha = spec.alpha.unwrap_or(2.0 / (batchlen as f64 + 1.0));
                    if !(alpha > 0.0 && alpha <= 1.0) {
                        diags.push(Diagnostic::new(at("alpha"), format!("{alpha} is outside (0, 1]")));
                    }
                    Some(Op::Ewma(alpha))
                }
                FunctionKind::Slope => Some(Op::Slope),
                FunctionKind::ArForecast => {
                    let order = spec.order.unwrap_or(1);
                    if order < 1 {
                        diags.push(Diagnostic::new(at("order"), "must be at least 1"));
                    }
                    Some(Op::Ar(order))
                }
                FunctionKind::Equation => match spec.equation.as_deref() {
                    None => {
                        diags.push(Diagnostic::new(at("equation"), "missing expression"));
                        None
                    }
                    Some(src) => match Expr::parse(src) {
                        Err(e) => {
                            diags.push(Diagnostic::new(at("equation"), e.to_string()));
                            None
                        }
                        Ok(expr) => {
                            for name in expr.identifiers() {
                                let earlier = all_ids[..i].contains(&name);
                                if column_set.contains(name) || earlier {
                                    continue;
                                }
                                let message = if all_ids[i..].contains(&name) {
                                    format!("{name:?} is declared at or after this function")
                                } else {
                                    format!("unknown identifier {name:?}")
                                };
                                diags.push(Diagnostic::new(at("equation"), message));
                            }
                            Some(Op::Equation(expr))
                        }
                    },
                },
                other => other.aggregate().map(Op::Aggregate),
            };

            if diags.len() == before {
                functions.push(Compiled {
                    id: ColumnName::from(id),
                    attribute: ColumnName::from(attribute),
                    batchlen,
                    format,
                    op: op.expect("validated"),
                });
            }
        }

        if diags.is_empty() {
            Ok(FunctionSet { functions })
        } else {
            Err(diags)
        }
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ColumnName> {
        self.functions.iter().map(|f| &f.id)
    }

    pub fn formats(&self) -> impl Iterator<Item = Option<&NumberFormat>> {
        self.functions.iter().map(|f| f.format.as_ref())
    }

    /// Runs every function for `current`, which must already be the newest window entry.
    pub fn evaluate(&self, window: &SlidingWindow, current: &DataPacket) -> Evaluation {
        let mut results = Vec::with_capacity(self.functions.len());
        let mut errors = 0;
        for f in &self.functions {
            let value = match &f.op {
                Op::Equation(expr) => {
                    let env = PacketEnv {
                        packet: current,
                        functions: &self.functions,
                        results: &results,
                    };
                    match expr.evaluate(&env) {
                        Ok(v) => v,
                        Err(e) => {
                            log::debug!("function {}: {e}", f.id);
                            errors += 1;
                            Scalar::Missing
                        }
                    }
                }
                op => {
                    let values = window.column_tail(&f.attribute, f.batchlen);
                    let v = match op {
                        Op::Aggregate(kind) => window_aggregate(*kind, &values),
                        Op::Ewma(alpha) => ewma(&values, *alpha),
                        Op::Slope => slope(&values),
                        Op::Ar(order) => ar_forecast(&values, *order),
                        Op::Equation(_) => unreachable!(),
                    };
                    match v {
                        Value::Number(x) => Scalar::Number(x),
                        _ => Scalar::Missing,
                    }
                }
            };
            results.push(value);
        }
        Evaluation { results, errors }
    }

    /// Pairs each result with its id and format, ready for enrichment.
    pub fn labelled<'a>(
        &'a self,
        evaluation: &'a Evaluation,
    ) -> impl Iterator<Item = (&'a ColumnName, Value, Option<NumberFormat>)> + 'a {
        self.functions
            .iter()
            .zip(&evaluation.results)
            .map(|(f, r)| (&f.id, r.to_value(), f.format))
    }
}

struct PacketEnv<'a> {
    packet: &'a DataPacket,
    functions: &'a [Compiled],
    results: &'a [Scalar],
}

impl Env for PacketEnv<'_> {
    fn lookup(&self, name: &str) -> Option<Result<Scalar, EvalError>> {
        if let Some(pos) = self.functions[..self.results.len()].iter().position(|f| &*f.id == name) {
            return Some(Ok(self.results[pos]));
        }
        self.packet.get(name).map(|v| value_to_scalar(name, v))
    }
}
