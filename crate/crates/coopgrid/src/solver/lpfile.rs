//! Plain-text export in the CPLEX LP format, for debugging.

use std::fmt::Write as _;

use super::{ObjSense, Problem, Sense};

fn clean(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn term(out: &mut String, first: bool, c: f64, name: &str) {
    if c < 0.0 {
        let _ = write!(out, " - {} {}", -c, name);
    } else if first {
        let _ = write!(out, " {} {}", c, name);
    } else {
        let _ = write!(out, " + {} {}", c, name);
    }
}

/// Renders `p` as LP text. Column and row names are sanitized and suffixed
/// with their index so they stay unique.
pub fn write_lp(p: &Problem) -> String {
    let vn: Vec<String> = p
        .vars
        .iter()
        .enumerate()
        .map(|(i, v)| format!("{}_{i}", clean(&v.name)))
        .collect();
    let mut out = String::new();
    out.push_str(match p.sense {
        ObjSense::Minimize => "Minimize\n",
        ObjSense::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    let mut first = true;
    for (i, v) in p.vars.iter().enumerate() {
        if v.obj != 0.0 {
            term(&mut out, first, v.obj, &vn[i]);
            first = false;
        }
    }
    if p.obj_offset != 0.0 || first {
        let _ = write!(out, " + {} constant", p.obj_offset);
    }
    out.push_str("\nSubject To\n");
    for (k, r) in p.rows.iter().enumerate() {
        let _ = write!(out, " {}_{k}:", clean(&r.name));
        if r.coefs.is_empty() {
            out.push_str(" 0 constant");
        }
        for (j, &(v, c)) in r.coefs.iter().enumerate() {
            term(&mut out, j == 0, c, &vn[v.0]);
        }
        let op = match r.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", r.rhs);
    }
    out.push_str("Bounds\n constant = 1\n");
    for (i, v) in p.vars.iter().enumerate() {
        match (v.lb.is_finite(), v.ub.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " {} free", vn[i]);
            }
            (true, true) => {
                let _ = writeln!(out, " {} <= {} <= {}", v.lb, vn[i], v.ub);
            }
            (true, false) => {
                let _ = writeln!(out, " {} >= {}", vn[i], v.lb);
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {} <= {}", vn[i], v.ub);
            }
        }
    }
    let ints: Vec<&String> = p
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.integer)
        .map(|(i, _)| &vn[i])
        .collect();
    if !ints.is_empty() {
        out.push_str("General\n");
        for n in ints {
            let _ = writeln!(out, " {n}");
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_sections() {
        let mut p = Problem::default();
        let x = p.add_var("x[1]", 0.0, 4.0, 2.0);
        let b = p.add_binary("b", -1.0);
        p.add_row("cap", [(x, 1.0), (b, -3.0)], Sense::Le, 1.0);
        let s = write_lp(&p);
        assert!(s.starts_with("Minimize\n obj: 2 x_1__0 - 1 b_1"));
        assert!(s.contains(" cap_0: 1 x_1__0 - 3 b_1 <= 1"));
        assert!(s.contains("General\n b_1\n"));
        assert!(s.ends_with("End\n"));
    }
}
