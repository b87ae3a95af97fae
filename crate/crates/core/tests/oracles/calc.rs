//! Independent expression-tree oracle for the calculator.
//!
//! Every tree shape with up to four binary operators, every operator
//! assignment, and operands from 1..=12 (all combinations up to two
//! operators, twelve sliding patterns beyond that). Each tree is rendered
//! twice, with minimal and with full parenthesization, and evaluated by
//! walking the tree in f64 (must match bit for bit) and in exact rationals
//! (must match to a relative 1e-9).

use num_rational::Ratio;
use toolgap_core::toolbox::{eval_expression, CalcError};

#[derive(Debug, Default)]
pub struct Tally {
    pub structures: usize,
    pub cases: usize,
    /// Exact zero divisors that rounding left nonzero.
    pub exact_divzero_float_finite: usize,
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

const OPS: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];

impl Op {
    fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
            Op::Div => '/',
        }
    }

    fn prec(self) -> u8 {
        match self {
            Op::Add | Op::Sub => 1,
            Op::Mul | Op::Div => 2,
        }
    }
}

/// Tree shape; leaves and operators are filled in order (leaves left to
/// right, operators in pre-order).
#[derive(Clone, Debug)]
enum Shape {
    Leaf,
    Node(Box<Shape>, Box<Shape>),
}

fn shapes(n: usize) -> Vec<Shape> {
    if n == 0 {
        return vec![Shape::Leaf];
    }
    let mut out = Vec::new();
    for left in 0..n {
        for l in shapes(left) {
            for r in shapes(n - 1 - left) {
                out.push(Shape::Node(Box::new(l.clone()), Box::new(r)));
            }
        }
    }
    out
}

pub enum Expr {
    Num(i64),
    Bin(Op, Box<Expr>, Box<Expr>),
}

fn build(shape: &Shape, ops: &mut impl Iterator<Item = Op>, nums: &mut impl Iterator<Item = i64>) -> Expr {
    match shape {
        Shape::Leaf => Expr::Num(nums.next().unwrap()),
        Shape::Node(l, r) => {
            let op = ops.next().unwrap();
            let l = build(l, ops, nums);
            let r = build(r, ops, nums);
            Expr::Bin(op, Box::new(l), Box::new(r))
        }
    }
}

pub fn render_full(e: &Expr) -> String {
    match e {
        Expr::Num(n) => n.to_string(),
        Expr::Bin(op, l, r) => format!("({} {} {})", render_full(l), op.symbol(), render_full(r)),
    }
}

/// Fewest parentheses that keep the tree: a left child needs them when it
/// binds looser, a right child when it binds looser or equally (so that
/// left-associative parsing reproduces the same evaluation order).
pub fn render_min(e: &Expr) -> String {
    match e {
        Expr::Num(n) => n.to_string(),
        Expr::Bin(op, l, r) => {
            let wrap = |child: &Expr, strict: bool| {
                let s = render_min(child);
                match child {
                    Expr::Bin(c, _, _) if c.prec() < op.prec() || (!strict && c.prec() == op.prec()) => format!("({s})"),
                    _ => s,
                }
            };
            format!("{}{}{}", wrap(l, true), op.symbol(), wrap(r, false))
        }
    }
}

fn eval_f64(e: &Expr) -> Result<f64, ()> {
    match e {
        Expr::Num(n) => Ok(*n as f64),
        Expr::Bin(op, l, r) => {
            let a = eval_f64(l)?;
            let b = eval_f64(r)?;
            Ok(match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div if b == 0.0 => return Err(()),
                Op::Div => a / b,
            })
        }
    }
}

fn eval_exact(e: &Expr) -> Option<Ratio<i128>> {
    match e {
        Expr::Num(n) => Some(Ratio::from_integer(*n as i128)),
        Expr::Bin(op, l, r) => {
            let a = eval_exact(l)?;
            let b = eval_exact(r)?;
            match op {
                Op::Add => Some(a + b),
                Op::Sub => Some(a - b),
                Op::Mul => Some(a * b),
                Op::Div if b == Ratio::from_integer(0) => None,
                Op::Div => Some(a / b),
            }
        }
    }
}

fn op_assignments(n: usize) -> Vec<Vec<Op>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                OPS.iter().map(move |op| {
                    let mut p = prefix.clone();
                    p.push(*op);
                    p
                })
            })
            .collect();
    }
    out
}

fn operand_sets(leaves: usize, exhaustive: bool) -> Vec<Vec<i64>> {
    if exhaustive {
        let mut out = vec![Vec::new()];
        for _ in 0..leaves {
            out = out
                .into_iter()
                .flat_map(|p: Vec<i64>| {
                    (1..=12).map(move |v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        out
    } else {
        (0..12).map(|k| (0..leaves).map(|i| ((k + i) % 12) as i64 + 1).collect()).collect()
    }
}

fn check(e: &Expr, tally: &mut Tally) -> Result<(), String> {
    let expected = eval_f64(e);
    let exact = eval_exact(e);
    for text in [render_min(e), render_full(e)] {
        let got = eval_expression(&text);
        match (&expected, &got) {
            (Err(()), Err(CalcError::DivZero)) => {}
            (Ok(x), Ok(y)) if x.to_bits() == y.to_bits() => {}
            _ => return Err(format!("{text}: oracle {expected:?}, calculator {got:?}")),
        }
    }
    match (&expected, &exact) {
        (Ok(x), Some(q)) => {
            let q = *q.numer() as f64 / *q.denom() as f64;
            if (x - q).abs() > 1e-9 * q.abs().max(1.0) {
                return Err(format!("{}: float {x} vs exact {q}", render_full(e)));
            }
        }
        (Err(()), None) => {}
        // A zero divisor in exact arithmetic that rounding left nonzero.
        (Ok(_), None) => tally.exact_divzero_float_finite += 1,
        (Err(()), Some(_)) => return Err(format!("{}: float division by zero on a nonzero exact divisor", render_full(e))),
    }
    tally.cases += 1;
    Ok(())
}

/// Runs the whole enumeration; the first disagreement is an error.
pub fn sweep() -> Result<Tally, String> {
    let mut tally = Tally::default();
    for n in 0..=4 {
        for shape in shapes(n) {
            for ops in op_assignments(n) {
                tally.structures += 1;
                for nums in operand_sets(n + 1, n <= 2) {
                    let e = build(&shape, &mut ops.iter().copied(), &mut nums.into_iter());
                    check(&e, &mut tally)?;
                }
            }
        }
    }
    Ok(tally)
}

pub const EXPECTED_STRUCTURES: usize = 1 + 4 + 2 * 16 + 5 * 64 + 14 * 256;
pub const EXPECTED_CASES: usize = 12 + 4 * 144 + 32 * 1728 + 320 * 12 + 3584 * 12;
