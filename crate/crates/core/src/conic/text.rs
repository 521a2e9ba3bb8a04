//! Canonical line-oriented text form of a [`ConicProgram`].
//!
//! ```text
//! FCSCHED-CONIC 1
//! counts vars=<n> binaries=<b> rows=<m> soc=<s> rsoc=<r>
//! var <name> <C|B> <lower> <upper>
//! obj <affine>
//! row <name> <<=|>=|=> <rhs> <terms>
//! soc <name> <len(u)> t <affine> u <affine> ...
//! rsoc <name> <len(u)> p <affine> q <affine> u <affine> ...
//! end
//! ```
//!
//! `<terms>` is `<k> i:c ...` with zero-based variable indices in insertion
//! order, `<affine>` is `<constant> <terms>`. Numbers use the shortest
//! representation that round-trips, so export/parse/export is byte-identical.

use std::fmt::Write as _;

use thiserror::Error;

use super::{AffineExpr, Cone, ConicError, ConicProgram, Sense, VarId, VarKind};

pub const FORMAT_HEADER: &str = "FCSCHED-CONIC 1";

#[derive(Debug, Error)]
pub enum TextError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Program {
        line: usize,
        #[source]
        source: ConicError,
    },
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn write_terms(out: &mut String, terms: &[(VarId, f64)]) {
    write!(out, " {}", terms.len()).unwrap();
    for (v, c) in terms {
        write!(out, " {}:{}", v.0, num(*c)).unwrap();
    }
}

fn write_affine(out: &mut String, e: &AffineExpr) {
    write!(out, " {}", num(e.constant)).unwrap();
    write_terms(out, &e.terms);
}

pub fn export_text(p: &ConicProgram) -> String {
    let mut out = String::new();
    let soc = p
        .cones()
        .iter()
        .filter(|c| matches!(c, Cone::SecondOrder { .. }))
        .count();
    writeln!(out, "{FORMAT_HEADER}").unwrap();
    writeln!(
        out,
        "counts vars={} binaries={} rows={} soc={} rsoc={}",
        p.num_vars(),
        p.num_binaries(),
        p.rows().len(),
        soc,
        p.cones().len() - soc
    )
    .unwrap();
    for v in p.vars() {
        let kind = match v.kind {
            VarKind::Continuous => "C",
            VarKind::Binary => "B",
        };
        writeln!(
            out,
            "var {} {kind} {} {}",
            v.name,
            num(v.lower),
            num(v.upper)
        )
        .unwrap();
    }
    out.push_str("obj");
    write_affine(&mut out, p.objective());
    out.push('\n');
    for r in p.rows() {
        write!(out, "row {} {} {}", r.name, r.sense, num(r.rhs)).unwrap();
        write_terms(&mut out, &r.terms);
        out.push('\n');
    }
    for c in p.cones() {
        match c {
            Cone::SecondOrder { name, t, u } => {
                write!(out, "soc {name} {} t", u.len()).unwrap();
                write_affine(&mut out, t);
                for e in u {
                    out.push_str(" u");
                    write_affine(&mut out, e);
                }
            }
            Cone::Rotated { name, p: pe, q, u } => {
                write!(out, "rsoc {name} {} p", u.len()).unwrap();
                write_affine(&mut out, pe);
                out.push_str(" q");
                write_affine(&mut out, q);
                for e in u {
                    out.push_str(" u");
                    write_affine(&mut out, e);
                }
            }
        }
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

struct Cursor<'a> {
    tokens: std::str::SplitWhitespace<'a>,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, TextError> {
        Err(TextError::Syntax {
            line: self.line,
            message: message.into(),
        })
    }

    fn next(&mut self) -> Result<&'a str, TextError> {
        match self.tokens.next() {
            Some(t) => Ok(t),
            None => self.err("unexpected end of line"),
        }
    }

    fn expect(&mut self, word: &str) -> Result<(), TextError> {
        let t = self.next()?;
        if t == word {
            Ok(())
        } else {
            self.err(format!("expected `{word}`, found `{t}`"))
        }
    }

    fn float(&mut self) -> Result<f64, TextError> {
        let t = self.next()?;
        t.parse::<f64>()
            .or_else(|_| self.err(format!("bad number `{t}`")))
    }

    fn usize(&mut self) -> Result<usize, TextError> {
        let t = self.next()?;
        t.parse::<usize>()
            .or_else(|_| self.err(format!("bad count `{t}`")))
    }

    fn terms(&mut self, nvars: usize) -> Result<Vec<(VarId, f64)>, TextError> {
        let k = self.usize()?;
        let mut terms = Vec::with_capacity(k);
        for _ in 0..k {
            let t = self.next()?;
            let Some((i, c)) = t.split_once(':') else {
                return self.err(format!("bad term `{t}`"));
            };
            let i: usize = i
                .parse()
                .or_else(|_| self.err(format!("bad index `{i}`")))?;
            let c: f64 = c
                .parse()
                .or_else(|_| self.err(format!("bad coefficient `{c}`")))?;
            if i >= nvars {
                return self.err(format!("variable index {i} out of range"));
            }
            terms.push((VarId(i), c));
        }
        Ok(terms)
    }

    fn affine(&mut self, nvars: usize) -> Result<AffineExpr, TextError> {
        let constant = self.float()?;
        let terms = self.terms(nvars)?;
        Ok(AffineExpr { constant, terms })
    }

    fn done(&mut self) -> Result<(), TextError> {
        match self.tokens.next() {
            None => Ok(()),
            Some(t) => self.err(format!("trailing token `{t}`")),
        }
    }
}

pub fn parse_text(text: &str) -> Result<ConicProgram, TextError> {
    let mut prog = ConicProgram::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == FORMAT_HEADER => {}
        _ => {
            return Err(TextError::Syntax {
                line: 1,
                message: format!("missing `{FORMAT_HEADER}` header"),
            })
        }
    }
    let mut ended = false;
    let mut counts: Option<[usize; 5]> = None;
    for (line, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        if ended {
            return Err(TextError::Syntax {
                line,
                message: "content after `end`".into(),
            });
        }
        let mut c = Cursor {
            tokens: raw.split_whitespace(),
            line,
        };
        let prog_err = |source| TextError::Program { line, source };
        let n = prog.num_vars();
        match c.next()? {
            "counts" => {
                let mut vals = [0usize; 5];
                for (slot, key) in vals
                    .iter_mut()
                    .zip(["vars", "binaries", "rows", "soc", "rsoc"])
                {
                    let t = c.next()?;
                    let Some(v) = t.strip_prefix(key).and_then(|r| r.strip_prefix('=')) else {
                        return c.err(format!("expected `{key}=`"));
                    };
                    *slot = v.parse().or_else(|_| c.err(format!("bad count `{v}`")))?;
                }
                counts = Some(vals);
            }
            "var" => {
                let name = c.next()?;
                let kind = match c.next()? {
                    "C" => VarKind::Continuous,
                    "B" => VarKind::Binary,
                    other => return c.err(format!("bad variable kind `{other}`")),
                };
                let lo = c.float()?;
                let hi = c.float()?;
                prog.add_variable(name, kind, lo, hi).map_err(prog_err)?;
            }
            "obj" => {
                let e = c.affine(n)?;
                prog.set_objective(e).map_err(prog_err)?;
            }
            "row" => {
                let name = c.next()?;
                let sense = match c.next()? {
                    "<=" => Sense::Le,
                    ">=" => Sense::Ge,
                    "=" => Sense::Eq,
                    other => return c.err(format!("bad sense `{other}`")),
                };
                let rhs = c.float()?;
                let terms = c.terms(n)?;
                prog.add_row(
                    name,
                    AffineExpr {
                        constant: 0.0,
                        terms,
                    },
                    sense,
                    rhs,
                )
                .map_err(prog_err)?;
            }
            "soc" => {
                let name = c.next()?;
                let k = c.usize()?;
                c.expect("t")?;
                let t = c.affine(n)?;
                let mut u = Vec::with_capacity(k);
                for _ in 0..k {
                    c.expect("u")?;
                    u.push(c.affine(n)?);
                }
                prog.add_soc(name, t, u).map_err(prog_err)?;
            }
            "rsoc" => {
                let name = c.next()?;
                let k = c.usize()?;
                c.expect("p")?;
                let p = c.affine(n)?;
                c.expect("q")?;
                let q = c.affine(n)?;
                let mut u = Vec::with_capacity(k);
                for _ in 0..k {
                    c.expect("u")?;
                    u.push(c.affine(n)?);
                }
                prog.add_rotated_cone(name, p, q, u).map_err(prog_err)?;
            }
            "end" => ended = true,
            other => return c.err(format!("unknown record `{other}`")),
        }
        c.done()?;
    }
    if !ended {
        return Err(TextError::Syntax {
            line: text.lines().count(),
            message: "missing `end`".into(),
        });
    }
    if let Some([vars, bins, rows, soc, rsoc]) = counts {
        let got_soc = prog
            .cones()
            .iter()
            .filter(|c| matches!(c, Cone::SecondOrder { .. }))
            .count();
        let got = [
            prog.num_vars(),
            prog.num_binaries(),
            prog.rows().len(),
            got_soc,
            prog.cones().len() - got_soc,
        ];
        if got != [vars, bins, rows, soc, rsoc] {
            return Err(TextError::Syntax {
                line: 2,
                message: format!(
                    "counts header {:?} disagrees with body {:?}",
                    [vars, bins, rows, soc, rsoc],
                    got
                ),
            });
        }
    }
    Ok(prog)
}
