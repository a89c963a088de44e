//! Plain-text dump of LP / IP instances for troubleshooting.
//!
//! The layout follows the common CPLEX LP file conventions:
//!
//! ```text
//! \ <title>
//! Minimize
//!  obj: 1 x0 - 2 x1
//! Subject To
//!  c0: 1 x0 + 1 x1 <= 1
//! Bounds
//!  0 <= x0 <= 1
//! Binary
//!  x0 x1
//! End
//! ```
//!
//! Zero coefficients are omitted. Variables are named `x<index>` unless
//! names are supplied.

use std::fmt::Write;

use super::{IntegerProgram, LinearProgram};

impl LinearProgram {
    pub fn to_lp_text(&self, title: &str, names: Option<&[String]>) -> String {
        render(self, None, title, names)
    }
}

impl IntegerProgram {
    pub fn to_lp_text(&self, title: &str, names: Option<&[String]>) -> String {
        render(&self.lp, Some(&self.integral), title, names)
    }
}

fn render(lp: &LinearProgram, integral: Option<&[bool]>, title: &str, names: Option<&[String]>) -> String {
    let name = |j: usize| -> String { names.and_then(|n| n.get(j).cloned()).unwrap_or_else(|| format!("x{j}")) };
    let expr = |coeffs: &[f64]| -> String {
        let mut out = String::new();
        for (j, &a) in coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            if out.is_empty() {
                let _ = write!(out, "{} {}", a, name(j));
            } else if a < 0.0 {
                let _ = write!(out, " - {} {}", -a, name(j));
            } else {
                let _ = write!(out, " + {} {}", a, name(j));
            }
        }
        if out.is_empty() {
            out.push('0');
        }
        out
    };

    let mut out = String::new();
    let _ = writeln!(out, "\\ {title}");
    let _ = writeln!(out, "Minimize");
    let _ = writeln!(out, " obj: {}", expr(&lp.objective));
    let _ = writeln!(out, "Subject To");
    for (i, c) in lp.constraints.iter().enumerate() {
        let _ = writeln!(out, " c{i}: {} {} {}", expr(&c.coeffs), c.relation.symbol(), c.rhs);
    }
    let _ = writeln!(out, "Bounds");
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        let _ = writeln!(out, " {lo} <= {} <= {hi}", name(j));
    }
    if let Some(flags) = integral {
        let bin: Vec<String> = flags
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(j, _)| name(j))
            .collect();
        if !bin.is_empty() {
            let _ = writeln!(out, "Binary");
            let _ = writeln!(out, " {}", bin.join(" "));
        }
    }
    let _ = writeln!(out, "End");
    out
}
