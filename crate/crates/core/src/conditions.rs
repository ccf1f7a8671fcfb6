//! Per-endpoint event conditions evaluated on the enriched packet.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::Diagnostic;
use crate::expr::{Expr, Scalar};
use crate::model::{ColumnName, DataPacket, Value};

/// A threshold bound: a column name or a literal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Literal(f64),
    Column(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConditionSpec {
    Threshold {
        #[serde(alias = "columns")]
        column: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<Bound>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lower: Option<Bound>,
    },
    MissingValue {
        columns: Vec<String>,
    },
    /// A function id or an inline expression.
    Equation {
        equation: String,
    },
    #[default]
    Always,
}

impl ConditionSpec {
    pub fn upper(column: &str, bound: Bound) -> Self {
        ConditionSpec::Threshold {
            column: column.to_owned(),
            upper: Some(bound),
            lower: None,
        }
    }

    pub fn lower(column: &str, bound: Bound) -> Self {
        ConditionSpec::Threshold {
            column: column.to_owned(),
            upper: None,
            lower: Some(bound),
        }
    }

    pub fn missing<I: IntoIterator<Item = S>, S: Into<String>>(columns: I) -> Self {
        ConditionSpec::MissingValue {
            columns: columns.into_iter().map(Into::into).collect(),
        }
    }

    pub fn equation(source: &str) -> Self {
        ConditionSpec::Equation {
            equation: source.to_owned(),
        }
    }
}

#[derive(Debug, Clone)]
enum ResolvedBound {
    Literal(f64),
    Column(ColumnName),
}

impl ResolvedBound {
    fn resolve(&self, packet: &DataPacket) -> Option<f64> {
        match self {
            ResolvedBound::Literal(x) => Some(*x),
            ResolvedBound::Column(name) => packet.get(name).and_then(Value::as_number),
        }
    }
}

/// A validated condition.
#[derive(Debug, Clone)]
pub struct Condition(Kind);

#[derive(Debug, Clone)]
enum Kind {
    Threshold {
        column: ColumnName,
        upper: Option<ResolvedBound>,
        lower: Option<ResolvedBound>,
    },
    MissingValue(Vec<ColumnName>),
    Equation(Expr),
    Always,
}

impl Condition {
    /// Checks every referenced name against the enriched column `universe`.
    pub fn build(spec: &ConditionSpec, universe: &[ColumnName], path: &str) -> Result<Self, Vec<Diagnostic>> {
        let known: HashSet<&str> = universe.iter().map(|c| &**c).collect();
        let mut diags = Vec::new();
        let column = |field: &str, name: &str, diags: &mut Vec<Diagnostic>| {
            if !known.contains(name) {
                diags.push(Diagnostic::new(format!("{path}.{field}"), format!("unknown column {name:?}")));
            }
            ColumnName::from(name)
        };

        let cond = match spec {
            ConditionSpec::Threshold { column: col, upper, lower } => {
                let col = column("column", col, &mut diags);
                if upper.is_none() && lower.is_none() {
                    diags.push(Diagnostic::new(path, "threshold needs an upper or lower bound"));
                }
                let bound = |field: &str, b: &Option<Bound>, diags: &mut Vec<Diagnostic>| {
                    b.as_ref().map(|b| {
                        match b {
                            Bound::Literal(x) => ResolvedBound::Literal(*x),
                            Bound::Column(name) => ResolvedBound::Column(column(field, name, diags)),
                        }
                    })
                };
                let upper = bound("upper", upper, &mut diags);
                let lower = bound("lower", lower, &mut diags);
                Kind::Threshold {
                    column: col,
                    upper,
                    lower,
                }
            }
            ConditionSpec::MissingValue { columns } => {
                if columns.is_empty() {
                    diags.push(Diagnostic::new(format!("{path}.columns"), "must name at least one column"));
                }
                let cols = columns.iter().map(|c| column("columns", c, &mut diags)).collect();
                Kind::MissingValue(cols)
            }
            ConditionSpec::Equation { equation } => match Expr::parse(equation) {
                Ok(expr) => {
                    for name in expr.identifiers() {
                        column("equation", name, &mut diags);
                    }
                    Kind::Equation(expr)
                }
                Err(e) => {
                    diags.push(Diagnostic::new(format!("{path}.equation"), e.to_string()));
                    Kind::Always
                }
            },
            ConditionSpec::Always => Kind::Always,
        };
        if diags.is_empty() {
            Ok(Condition(cond))
        } else {
            Err(diags)
        }
    }

    pub fn check(&self, packet: &DataPacket) -> bool {
        match &self.0 {
            Kind::Threshold { column, upper, lower } => check_threshold(packet, column, upper, lower),
            Kind::MissingValue(columns) => check_missing(packet, columns),
            Kind::Equation(expr) => check_equation(expr, packet),
            Kind::Always => true,
        }
    }

    pub fn always() -> Self {
        Condition(Kind::Always)
    }
}

fn check_threshold(
    packet: &DataPacket,
    column: &str,
    upper: &Option<ResolvedBound>,
    lower: &Option<ResolvedBound>,
) -> bool {
    let Some(x) = packet.get(column).and_then(Value::as_number) else {
        return false;
    };
    let above = upper.as_ref().and_then(|b| b.resolve(packet)).is_some_and(|u| x > u);
    let below = lower.as_ref().and_then(|b| b.resolve(packet)).is_some_and(|l| x < l);
    above || below
}

fn check_missing(packet: &DataPacket, columns: &[ColumnName]) -> bool {
    columns.iter().any(|c| packet.get(c).is_none_or(Value::is_missing))
}

/// Evaluation errors read as "no event".
fn check_equation(expr: &Expr, packet: &DataPacket) -> bool {
    expr.evaluate(packet).is_ok_and(Scalar::is_truthy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn universe(names: &[&str]) -> Vec<ColumnName> {
        names.iter().map(|&n| ColumnName::from(n)).collect()
    }

    fn build(spec: ConditionSpec) -> Condition {
        Condition::build(&spec, &universe(&["value", "upper", "lower", "s1", "s2", "s3", "stdev", "d"]), "c").unwrap()
    }

    fn pkt(pairs: &[(&str, Value)]) -> DataPacket {
        DataPacket::from_pairs(pairs.iter().cloned())
    }

    #[test]
    fn threshold_is_strict() {
        let c = build(ConditionSpec::upper("value", Bound::Column("upper".into())));
        assert!(c.check(&pkt(&[("value", 13.5.into()), ("upper", 13.0.into())])));
        assert!(!c.check(&pkt(&[("value", 13.0.into()), ("upper", 13.0.into())])));
        assert!(!c.check(&pkt(&[("value", Value::Missing), ("upper", 13.0.into())])));
        assert!(!c.check(&pkt(&[("value", 14.0.into()), ("upper", Value::Missing)])));
    }

    #[test]
    fn threshold_literal_bound() {
        let c = build(ConditionSpec::lower("value", Bound::Literal(-1.0)));
        assert!(c.check(&pkt(&[("value", (-1.5).into())])));
        assert!(!c.check(&pkt(&[("value", (-1.0).into())])));
    }

    #[test]
    fn missing_value_condition() {
        let c = build(ConditionSpec::missing(["s1", "s2", "s3"]));
        assert!(c.check(&pkt(&[("s1", 1.0.into()), ("s2", Value::Missing), ("s3", 3.0.into())])));
        assert!(!c.check(&pkt(&[("s1", 1.0.into()), ("s2", 2.0.into()), ("s3", 3.0.into())])));
        assert!(c.check(&pkt(&[("s1", 1.0.into()), ("s2", 2.0.into())])));
    }

    #[test]
    fn equation_condition() {
        let by_id = build(ConditionSpec::equation("d"));
        assert!(by_id.check(&pkt(&[("d", 1.0.into())])));
        assert!(!by_id.check(&pkt(&[("d", 0.0.into())])));
        assert!(!by_id.check(&pkt(&[("d", Value::Missing)])));
        let inline = build(ConditionSpec::equation("stdev > 2.0"));
        assert!(inline.check(&pkt(&[("stdev", 2.5.into())])));
        assert!(!inline.check(&pkt(&[("stdev", 1.5.into())])));
    }

    #[test]
    fn validation_names_unknown_columns() {
        let err = Condition::build(
            &ConditionSpec::Threshold {
                column: "value".into(),
                upper: Some(Bound::Column("upr".into())),
                lower: None,
            },
            &universe(&["value"]),
            "endpoints[1].condition",
        )
        .unwrap_err();
        assert_eq!(err[0].path, "endpoints[1].condition.upper");
        assert!(Condition::build(
            &ConditionSpec::Threshold { column: "value".into(), upper: None, lower: None },
            &universe(&["value"]),
            "c"
        )
        .is_err());
        assert!(Condition::build(&ConditionSpec::equation("ghost > 1"), &universe(&["value"]), "c").is_err());
    }

    #[test]
    fn deserializes_config_shapes() {
        let spec: ConditionSpec = serde_json::from_str(r#"{"kind":"threshold","columns":"value","upper":"upper"}"#).unwrap();
        assert_eq!(spec, ConditionSpec::upper("value", Bound::Column("upper".into())));
        let spec: ConditionSpec = serde_json::from_str(r#"{"kind":"threshold","column":"value","lower":2.5}"#).unwrap();
        assert_eq!(spec, ConditionSpec::lower("value", Bound::Literal(2.5)));
        let spec: ConditionSpec = serde_json::from_str(r#"{"kind":"always"}"#).unwrap();
        assert_eq!(spec, ConditionSpec::Always);
    }

    proptest! {
        #[test]
        fn two_sided_threshold_is_the_union(
            v in -5.0f64..5.0, u in -5.0f64..5.0, l in -5.0f64..5.0
        ) {
            let p = pkt(&[("value", v.into()), ("upper", u.into()), ("lower", l.into())]);
            let both = build(ConditionSpec::Threshold {
                column: "value".into(),
                upper: Some(Bound::Column("upper".into())),
                lower: Some(Bound::Column("lower".into())),
            });
            let up = build(ConditionSpec::upper("value", Bound::Column("upper".into())));
            let down = build(ConditionSpec::lower("value", Bound::Column("lower".into())));
            prop_assert_eq!(both.check(&p), up.check(&p) || down.check(&p));
        }
    }
}
