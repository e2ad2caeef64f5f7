//! The UAI competition text formats.
//!
//! A `.uai` file is a preamble (`MARKOV` or `BAYES`, variable count,
//! cardinalities, factor count, one scope line per factor) followed by one
//! table per factor: an entry count and the entries, last scope variable
//! changing fastest. For `BAYES` files the last variable of each scope is the
//! CPT child. Evidence files (`.uai.evid`) list a count followed by
//! `variable state` pairs; the newer multi-sample layout with a leading
//! sample count of 1 is also accepted.

use super::{DiscreteModel, Factor, ModelKind, PartialAssignment, CPT_ROW_TOL};
use crate::error::{Error, Result};

/// Rows within this distance of summing to one are renormalized on load;
/// published files are often printed with six significant digits.
const LOAD_ROW_TOL: f64 = 1e-6;

struct Tokens<'a> {
    toks: Vec<(&'a str, usize)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Tokens<'a> {
        let toks = text
            .lines()
            .enumerate()
            .flat_map(|(i, line)| line.split_whitespace().map(move |t| (t, i + 1)))
            .collect();
        Tokens { toks, pos: 0 }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        let line = self
            .toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map_or(0, |t| t.1);
        Error::Parse { line, token: self.pos, message: message.into() }
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        let t = self
            .toks
            .get(self.pos)
            .map(|t| t.0)
            .ok_or_else(|| self.err(format!("unexpected end of input, expected {what}")))?;
        self.pos += 1;
        Ok(t)
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let t = self.next(what)?;
        t.parse().map_err(|_| {
            self.pos -= 1;
            self.err(format!("expected {what}, found {t:?}"))
        })
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let t = self.next(what)?;
        t.parse().map_err(|_| {
            self.pos -= 1;
            self.err(format!("expected {what}, found {t:?}"))
        })
    }

    fn done(&self) -> bool {
        self.pos >= self.toks.len()
    }
}

pub fn parse_uai(text: &str) -> Result<DiscreteModel> {
    let mut t = Tokens::new(text);
    let kind = match t.next("preamble")? {
        "MARKOV" => ModelKind::Undirected,
        "BAYES" => ModelKind::Directed,
        other => {
            t.pos -= 1;
            return Err(t.err(format!("unknown preamble {other:?}")));
        }
    };
    let n = t.usize("variable count")?;
    let mut cards = Vec::with_capacity(n);
    for _ in 0..n {
        let c = t.usize("cardinality")?;
        if c < 2 {
            t.pos -= 1;
            return Err(t.err(format!("cardinality {c} < 2")));
        }
        cards.push(c);
    }
    let nf = t.usize("factor count")?;
    let mut scopes = Vec::with_capacity(nf);
    for _ in 0..nf {
        let len = t.usize("scope size")?;
        let mut scope = Vec::with_capacity(len);
        for _ in 0..len {
            let v = t.usize("scope variable")?;
            if v >= n {
                t.pos -= 1;
                return Err(t.err(format!("variable {v} out of range (n = {n})")));
            }
            scope.push(v);
        }
        scopes.push(scope);
    }
    let mut factors = Vec::with_capacity(nf);
    for scope in scopes {
        let fc: Vec<usize> = scope.iter().map(|&v| cards[v]).collect();
        let expected: usize = fc.iter().product();
        let len = t.usize("table size")?;
        if len != expected {
            t.pos -= 1;
            return Err(t.err(format!("table for scope {scope:?} declares {len} entries, expected {expected}")));
        }
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(t.f64("table entry")?);
        }
        if kind == ModelKind::Directed {
            let k = *fc.last().ok_or_else(|| t.err("CPT with empty scope"))?;
            for row in values.chunks_mut(k) {
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > LOAD_ROW_TOL {
                    return Err(t.err(format!("CPT row sums to {s}")));
                }
                if (s - 1.0).abs() > CPT_ROW_TOL {
                    row.iter_mut().for_each(|x| *x /= s);
                }
            }
        }
        factors.push(Factor::new(scope, fc, values).map_err(|e| t.err(e.to_string()))?);
    }
    if !t.done() {
        return Err(t.err("trailing tokens after last table"));
    }
    match kind {
        ModelKind::Directed => DiscreteModel::bayes(cards, factors),
        ModelKind::Undirected => DiscreteModel::markov(cards, factors),
    }
}

/// Serializes with shortest round-trip float formatting, so parsing the
/// output reproduces every table bit for bit.
pub fn to_uai_string(model: &DiscreteModel) -> String {
    let mut s = String::new();
    s.push_str(if model.is_directed() { "BAYES\n" } else { "MARKOV\n" });
    s.push_str(&format!("{}\n", model.num_vars()));
    s.push_str(&join(model.cards()));
    s.push('\n');
    s.push_str(&format!("{}\n", model.factors().len()));
    for f in model.factors() {
        s.push_str(&format!("{} {}\n", f.scope().len(), join(f.scope())));
    }
    for f in model.factors() {
        s.push('\n');
        s.push_str(&format!("{}\n", f.len()));
        let row = f.cards().last().copied().unwrap_or(1);
        for chunk in f.values().chunks(row) {
            s.push(' ');
            s.push_str(&join(chunk));
            s.push('\n');
        }
    }
    s
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn parse_uai_evidence(text: &str) -> Result<PartialAssignment> {
    let mut t = Tokens::new(text);
    if t.done() {
        return Ok(PartialAssignment::new());
    }
    let total = t.toks.len();
    let first = t.usize("evidence count")?;
    // Single-sample layout: `count (var state)*`. Multi-sample layout:
    // `1 count (var state)*`.
    if total != 1 + 2 * first {
        if first != 1 {
            return Err(t.err("only single-sample evidence files are supported"));
        }
        let count = t.usize("evidence count")?;
        if total != 2 + 2 * count {
            return Err(t.err(format!("evidence declares {count} pairs but has {} tokens", total - 2)));
        }
    }
    let mut ev = PartialAssignment::new();
    while !t.done() {
        let v = t.usize("evidence variable")?;
        let s = t.usize("evidence state")?;
        if ev.insert(v, s).is_some() {
            return Err(t.err(format!("variable {v} observed twice")));
        }
    }
    Ok(ev)
}

pub fn to_evidence_string(ev: &PartialAssignment) -> String {
    let mut s = format!("{}", ev.len());
    for (v, x) in ev.iter() {
        s.push_str(&format!(" {v} {x}"));
    }
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate::{grid_bn, CptPrior, GridShape};
    use crate::rng;

    #[test]
    fn minimal_bayes_file() {
        let m = parse_uai("BAYES\n1\n2\n1\n1 0\n\n2\n 0.4 0.6\n").unwrap();
        assert!(m.is_directed());
        assert_eq!(m.factors().len(), 1);
        assert_eq!(m.factors()[0].values(), &[0.4, 0.6]);
    }

    #[test]
    fn markov_file_with_pairwise_factor() {
        let text = "MARKOV\n2\n2 3\n1\n2 0 1\n6\n1 2 3\n4 5 6\n";
        let m = parse_uai(text).unwrap();
        assert!(!m.is_directed());
        assert_eq!(m.factors()[0].cards(), &[2, 3]);
        let again = parse_uai(&to_uai_string(&m)).unwrap();
        assert_eq!(again.factors()[0].values(), m.factors()[0].values());
    }

    #[test]
    fn evidence_file() {
        let ev = parse_uai_evidence("1 2 0\n").unwrap();
        assert_eq!(ev.iter().collect::<Vec<_>>(), vec![(2, 0)]);
        let ev = parse_uai_evidence("1\n2 2 0 4 1\n").unwrap();
        assert_eq!(ev.iter().collect::<Vec<_>>(), vec![(2, 0), (4, 1)]);
        assert_eq!(parse_uai_evidence(&to_evidence_string(&ev)).unwrap(), ev);
        assert!(parse_uai_evidence("").unwrap().is_empty());
    }

    #[test]
    fn errors_carry_position() {
        let e = parse_uai("BAYES\n1\n2\n1\n1 0\n\n3\n 0.4 0.6 0.0\n").unwrap_err();
        match e {
            Error::Parse { line, .. } => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_uai("FOO\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_uai("MARKOV\n2\n2\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_uai("MARKOV\n1\n2\n1\n1 3\n2\n1 1\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_uai("BAYES\n1\n2\n1\n1 0\n2\n0.3 0.3\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_uai("MARKOV\n1\n2\n1\n1 0\n2\n1 1 7\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn grid_roundtrip_is_bit_exact() {
        let m = grid_bn(GridShape::new(3, 3), 2, &CptPrior::TRAINING, &mut rng::seeded(9)).unwrap();
        let back = parse_uai(&to_uai_string(&m)).unwrap();
        for (a, b) in m.factors().iter().zip(back.factors()) {
            assert_eq!(a.scope(), b.scope());
            assert_eq!(a.values(), b.values());
        }
    }
}
