//! Independent reference implementations checked against the library.
//! Each check returns a one-line detail on success.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use steam_core::analytics::{FunctionKind, FunctionSet, FunctionSpec};
use steam_core::bench::{quantile, read_log, write_log, BenchLog, LayerTimings, MetricRecord, RunTotals};
use steam_core::expr::{BinaryOp, Expr, Function, LookupFn, Scalar, UnaryOp};
use steam_core::output::EndpointStats;
use steam_core::{ColumnName, DataPacket, SlidingWindow, Value};

pub type Check = Result<String, String>;

fn brute_stats(xs: &[f64]) -> [Option<f64>; 7] {
    if xs.is_empty() {
        return [None, None, None, Some(0.0), None, None, None];
    }
    let n = xs.len() as f64;
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sum: f64 = xs.iter().sum();
    let mean = sum / n;
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    [
        Some(sorted[0]),
        Some(sorted[sorted.len() - 1]),
        Some(sum),
        Some(n),
        Some(mean),
        Some(median),
        Some(var.sqrt()),
    ]
}

fn brute_ewma(xs: &[f64], alpha: f64) -> Option<f64> {
    let (first, rest) = xs.split_first()?;
    Some(rest.iter().fold(*first, |s, x| s + alpha * (x - s)))
}

/// Closed-form least squares over (index, value) pairs.
fn brute_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// Streams random packets through a window and compares every function result
/// with a recomputation from the raw history.
pub fn aggregates(windows: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let kinds = [
        FunctionKind::Min,
        FunctionKind::Max,
        FunctionKind::Sum,
        FunctionKind::Count,
        FunctionKind::Mean,
        FunctionKind::Median,
        FunctionKind::Stdev,
        FunctionKind::Ewma,
        FunctionKind::Slope,
    ];
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    let columns = [ColumnName::from("value")];
    while checked < windows {
        let capacity = rng.random_range(1..=30);
        let specs: Vec<FunctionSpec> = kinds
            .iter()
            .map(|&k| {
                let s = FunctionSpec::new(k).with_batchlen(rng.random_range(1..=capacity));
                if k == FunctionKind::Ewma {
                    s.with_alpha(rng.random_range(0.05..=1.0))
                } else {
                    s
                }
            })
            .collect();
        let set = FunctionSet::build(&specs, &columns, capacity, "functions").map_err(|d| format!("{d:?}"))?;
        let mut window = SlidingWindow::new(capacity);
        let mut history: Vec<Option<f64>> = Vec::new();
        for _ in 0..rng.random_range(1..=60) {
            let v = if rng.random::<f64>() < 0.1 {
                None
            } else {
                Some(rng.random_range(-1000.0..1000.0))
            };
            history.push(v);
            let packet = DataPacket::from_pairs([("value", v.map_or(Value::Missing, Value::Number))]);
            window.push(packet.clone());
            let eval = set.evaluate(&window, &packet);
            for (spec, got) in specs.iter().zip(&eval.results) {
                let b = spec.batchlen.unwrap();
                let tail = &history[history.len().saturating_sub(b)..];
                let present: Vec<f64> = tail.iter().flatten().copied().collect();
                let stats = brute_stats(&present);
                let want = match spec.kind {
                    FunctionKind::Min => stats[0],
                    FunctionKind::Max => stats[1],
                    FunctionKind::Sum => stats[2],
                    FunctionKind::Count => stats[3],
                    FunctionKind::Mean => stats[4],
                    FunctionKind::Median => stats[5],
                    FunctionKind::Stdev => stats[6],
                    FunctionKind::Ewma => brute_ewma(&present, spec.alpha.unwrap()),
                    FunctionKind::Slope => {
                        let pts: Vec<(f64, f64)> =
                            tail.iter().enumerate().filter_map(|(i, v)| v.map(|y| (i as f64, y))).collect();
                        brute_slope(&pts)
                    }
                    _ => unreachable!(),
                };
                let got = match got {
                    Scalar::Number(x) => Some(*x),
                    Scalar::Missing => None,
                    Scalar::Bool(_) => return Err(format!("{:?} returned a boolean", spec.kind)),
                };
                match (want, got) {
                    (None, None) => {}
                    (Some(w), Some(g)) => {
                        let err = (w - g).abs();
                        worst = worst.max(err);
                        if err > 1e-9 {
                            return Err(format!("{:?} over {tail:?}: got {g}, brute force {w}", spec.kind));
                        }
                    }
                    _ => return Err(format!("{:?} over {tail:?}: got {got:?}, brute force {want:?}", spec.kind)),
                }
            }
            checked += 1;
            if checked == windows {
                break;
            }
        }
    }
    Ok(format!("{checked} windows x {} functions, max abs error {worst:.2e}", kinds.len()))
}

const VARS: [&str; 4] = ["a", "b", "c", "d"];

fn env_value(name: &str) -> f64 {
    match name {
        "a" => 1.5,
        "b" => -2.25,
        "c" => 0.375,
        "d" => 7.0,
        _ => unreachable!(),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Ty {
    Num,
    Bool,
}

fn random_expr(rng: &mut ChaCha8Rng, ty: Ty, depth: u32) -> Expr {
    let leaf = depth == 0 || rng.random::<f64>() < 0.2;
    match ty {
        Ty::Num if leaf => {
            if rng.random::<bool>() {
                Expr::Ident(VARS[rng.random_range(0..VARS.len())].to_owned())
            } else {
                Expr::Number(rng.random_range(1..=40) as f64 / 8.0)
            }
        }
        Ty::Num => match rng.random_range(0..7) {
            0 => Expr::Unary(UnaryOp::Neg, Box::new(random_expr(rng, Ty::Num, depth - 1))),
            1 => {
                let f = [Function::Max, Function::Min, Function::Abs][rng.random_range(0..3)];
                let n = if f == Function::Abs { 1 } else { rng.random_range(1..=3) };
                Expr::Call(f, (0..n).map(|_| random_expr(rng, Ty::Num, depth - 1)).collect())
            }
            _ => {
                let op = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div][rng.random_range(0..4)];
                Expr::Binary(
                    op,
                    Box::new(random_expr(rng, Ty::Num, depth - 1)),
                    Box::new(random_expr(rng, Ty::Num, depth - 1)),
                )
            }
        },
        Ty::Bool if leaf || rng.random::<f64>() < 0.4 => {
            let op = [BinaryOp::Lt, BinaryOp::Le, BinaryOp::Gt, BinaryOp::Ge, BinaryOp::Eq, BinaryOp::Ne]
                [rng.random_range(0..6)];
            let d = depth.saturating_sub(1);
            Expr::Binary(op, Box::new(random_expr(rng, Ty::Num, d)), Box::new(random_expr(rng, Ty::Num, d)))
        }
        Ty::Bool => match rng.random_range(0..3) {
            0 => Expr::Unary(UnaryOp::Not, Box::new(random_expr(rng, Ty::Bool, depth - 1))),
            n => Expr::Binary(
                if n == 1 { BinaryOp::And } else { BinaryOp::Or },
                Box::new(random_expr(rng, Ty::Bool, depth - 1)),
                Box::new(random_expr(rng, Ty::Bool, depth - 1)),
            ),
        },
    }
}

/// Binding strength; higher binds tighter.
fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinaryOp::Or, ..) => 1,
        Expr::Binary(BinaryOp::And, ..) => 2,
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 4,
        Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 5,
        Expr::Binary(..) => 3,
        Expr::Unary(..) => 6,
        _ => 7,
    }
}

/// Prints with only the parentheses the grammar needs.
fn minimal(e: &Expr) -> String {
    let wrap = |child: &Expr, needed: bool| {
        if needed {
            format!("({})", minimal(child))
        } else {
            minimal(child)
        }
    };
    match e {
        Expr::Number(x) => format!("{x}"),
        Expr::Ident(n) => n.clone(),
        Expr::Unary(op, inner) => {
            let word = if *op == UnaryOp::Neg { "-" } else { "not " };
            format!("{word}{}", wrap(inner, precedence(inner) < 6))
        }
        Expr::Binary(op, l, r) => {
            let p = precedence(e);
            // Left-associative; comparisons do not chain at all.
            let left_paren = precedence(l) < p || (p == 3 && precedence(l) == 3);
            let right_paren = precedence(r) <= p;
            format!("{} {} {}", wrap(l, left_paren), op.symbol(), wrap(r, right_paren))
        }
        Expr::Call(f, args) => format!("{f}({})", args.iter().map(minimal).collect::<Vec<_>>().join(", ")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ref {
    Num(f64),
    Bool(bool),
    Error,
}

/// Reference semantics written directly over the tree.
fn reference(e: &Expr) -> Ref {
    match e {
        Expr::Number(x) => Ref::Num(*x),
        Expr::Ident(n) => Ref::Num(env_value(n)),
        Expr::Unary(UnaryOp::Neg, i) => match reference(i) {
            Ref::Num(x) => Ref::Num(-x),
            _ => Ref::Error,
        },
        Expr::Unary(UnaryOp::Not, i) => match reference(i) {
            Ref::Bool(b) => Ref::Bool(!b),
            _ => Ref::Error,
        },
        Expr::Call(f, args) => {
            let mut xs = Vec::new();
            for a in args {
                match reference(a) {
                    Ref::Num(x) => xs.push(x),
                    _ => return Ref::Error,
                }
            }
            Ref::Num(match f {
                Function::Abs => xs[0].abs(),
                Function::Max => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Function::Min => xs.iter().copied().fold(f64::INFINITY, f64::min),
            })
        }
        Expr::Binary(op @ (BinaryOp::And | BinaryOp::Or), l, r) => {
            let Ref::Bool(a) = reference(l) else { return Ref::Error };
            if a == (*op == BinaryOp::Or) {
                return Ref::Bool(a);
            }
            match reference(r) {
                Ref::Bool(b) => Ref::Bool(b),
                _ => Ref::Error,
            }
        }
        Expr::Binary(op, l, r) => {
            let (Ref::Num(a), Ref::Num(b)) = (reference(l), reference(r)) else {
                return Ref::Error;
            };
            match op {
                BinaryOp::Add => Ref::Num(a + b),
                BinaryOp::Sub => Ref::Num(a - b),
                BinaryOp::Mul => Ref::Num(a * b),
                BinaryOp::Div if b == 0.0 => Ref::Error,
                BinaryOp::Div => Ref::Num(a / b),
                BinaryOp::Lt => Ref::Bool(a < b),
                BinaryOp::Le => Ref::Bool(a <= b),
                BinaryOp::Gt => Ref::Bool(a > b),
                BinaryOp::Ge => Ref::Bool(a >= b),
                BinaryOp::Eq => Ref::Bool(a == b),
                BinaryOp::Ne => Ref::Bool(a != b),
                BinaryOp::And | BinaryOp::Or => unreachable!(),
            }
        }
    }
}

/// Random expressions printed with minimal parentheses must parse to the same
/// tree as their fully parenthesized form and evaluate like the reference.
pub fn expressions(count: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let env = LookupFn(|name: &str| VARS.contains(&name).then(|| Scalar::Number(env_value(name))));
    let mut errors_agreed = 0;
    for i in 0..count {
        let ty = if i % 3 == 0 { Ty::Bool } else { Ty::Num };
        let tree = random_expr(&mut rng, ty, 5);
        let full = tree.to_string();
        let short = minimal(&tree);
        let from_full = Expr::parse(&full).map_err(|e| format!("{full}: {e}"))?;
        let from_short = Expr::parse(&short).map_err(|e| format!("{short}: {e}"))?;
        if from_full != tree || from_short != tree {
            return Err(format!("precedence mismatch: {short} parsed as {from_short}, expected {full}"));
        }
        if from_full.to_string() != full {
            return Err(format!("print/parse not idempotent for {full}"));
        }
        let got = from_short.evaluate(&env);
        match (reference(&tree), got) {
            (Ref::Num(w), Ok(Scalar::Number(g))) => {
                let tol = 1e-12 * w.abs().max(1.0);
                if (w - g).abs() > tol {
                    return Err(format!("{short}: got {g}, reference {w}"));
                }
            }
            (Ref::Num(w), Err(_)) if !w.is_finite() => errors_agreed += 1,
            (Ref::Bool(w), Ok(Scalar::Bool(g))) if w == g => {}
            (Ref::Error, Err(_)) => errors_agreed += 1,
            (w, g) => return Err(format!("{short}: got {g:?}, reference {w:?}")),
        }
    }
    Ok(format!("{count} expressions agree ({errors_agreed} rejected by both)"))
}

fn sort_interpolate(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = q * (v.len() - 1) as f64;
    let below = rank.floor() as usize;
    let above = rank.ceil() as usize;
    v[below] + (rank - below as f64) * (v[above] - v[below])
}

pub fn quartiles(samples: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let n = rng.random_range(1..200);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1e5)).collect();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        for q in [0.25, 0.5, 0.75] {
            let err = (quantile(&sorted, q) - sort_interpolate(&values, q)).abs();
            worst = worst.max(err);
            if err > 1e-9 {
                return Err(format!("q={q} over {n} values off by {err}"));
            }
        }
    }
    Ok(format!("{samples} samples, max abs error {worst:.2e}"))
}

pub fn log_round_trip(records: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let log = BenchLog {
        records: (1..=records as u64)
            .map(|id| {
                MetricRecord::new(
                    id,
                    LayerTimings {
                        input_ns: rng.random_range(0..5_000_000),
                        processing_ns: rng.random_range(0..5_000_000),
                        output_ns: rng.random_range(0..200_000_000),
                    },
                    (id > 1).then(|| rng.random_range(0.0..100.0)),
                    rng.random_range(0.0..1e6),
                    rng.random_range(20..80),
                    rng.random_range(0..400),
                )
            })
            .collect(),
        endpoints: vec![EndpointStats {
            name: "chart".into(),
            events: records as u64,
            bytes: 12_345,
            errors: 1,
        }],
        run: Some(RunTotals {
            packets_in: records as u64,
            packets_dropped: 0,
            bytes_in: 999,
            bytes_out: 12_345,
            wall_us: 4_186_000,
        }),
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("bench.tsv");
    write_log(&path, &log).map_err(|e| e.to_string())?;
    let back = read_log(&path).map_err(|e| e.to_string())?;
    if back != log {
        return Err("parsed log differs from the written one".into());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    if let Some(bad) = text.lines().filter(|l| !l.starts_with('#')).find(|l| l.split('\t').count() != 9) {
        return Err(format!("line without nine fields: {bad:?}"));
    }
    Ok(format!("{records} records identical after write and parse"))
}
