//! Text formats: DIMACS CNF (read and write) and hypergraph edge lists.
//!
//! DIMACS variables are 1-indexed; variable `i` becomes internal variable
//! `i - 1`. A clause is violated only by the complement of its literals, so a
//! positive literal forbids value 0 and a negative literal forbids value 1.
//!
//! The hypergraph format is one edge per line, whitespace-separated 0-indexed
//! vertex ids, with `#` starting a comment.

use std::fmt::Write as _;
use std::io::Read;

use crate::csp::{AtomicConstraint, AtomicCsp};
use crate::error::CspError;

#[derive(Debug)]
pub struct DimacsInstance {
    pub csp: AtomicCsp,
    /// One message per dropped tautological clause.
    pub warnings: Vec<String>,
}

pub fn read_dimacs<R: Read>(mut reader: R) -> Result<DimacsInstance, CspError> {
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| CspError::Parse { line: 0, msg: e.to_string() })?;
    let text = String::from_utf8(bytes).map_err(|e| CspError::Parse {
        line: 0,
        msg: format!("input is not UTF-8: {e}"),
    })?;
    parse_dimacs(&text)
}

pub fn parse_dimacs(text: &str) -> Result<DimacsInstance, CspError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses_seen = 0usize;
    let mut current: Vec<i64> = Vec::new();
    let mut current_start = 0usize;
    let mut constraints = Vec::new();
    let mut warnings = Vec::new();
    let mut last_line = 0usize;

    'lines: for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('%') {
            // SATLIB end-of-data marker
            break;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(parse_err(line_no, "duplicate header"));
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "p" || parts[1] != "cnf" {
                return Err(parse_err(line_no, "expected header `p cnf <vars> <clauses>`"));
            }
            let n = parts[2]
                .parse::<usize>()
                .map_err(|_| parse_err(line_no, "variable count is not a non-negative integer"))?;
            let m = parts[3]
                .parse::<usize>()
                .map_err(|_| parse_err(line_no, "clause count is not a non-negative integer"))?;
            header = Some((n, m));
            continue;
        }
        let Some((n, _)) = header else {
            return Err(parse_err(line_no, "clause data before the `p cnf` header"));
        };
        for tok in line.split_whitespace() {
            if tok.starts_with('%') {
                break 'lines;
            }
            let lit: i64 = tok
                .parse()
                .map_err(|_| parse_err(line_no, &format!("`{tok}` is not an integer literal")))?;
            if lit == 0 {
                clauses_seen += 1;
                let start = if current.is_empty() { line_no } else { current_start };
                if let Some(c) = clause_to_constraint(&current, start, &mut warnings)? {
                    constraints.push(c);
                }
                current.clear();
                continue;
            }
            if lit.unsigned_abs() as usize > n {
                return Err(parse_err(
                    line_no,
                    &format!("literal {lit} out of range for {n} variables"),
                ));
            }
            if current.is_empty() {
                current_start = line_no;
            }
            current.push(lit);
        }
    }

    let Some((n, m)) = header else {
        return Err(parse_err(last_line.max(1), "missing `p cnf` header"));
    };
    if !current.is_empty() {
        return Err(parse_err(current_start, "clause is not terminated by 0"));
    }
    if clauses_seen != m {
        return Err(parse_err(
            last_line.max(1),
            &format!("header declares {m} clauses but {clauses_seen} were found"),
        ));
    }
    let csp = AtomicCsp::uniform(n, 2, constraints)?;
    Ok(DimacsInstance { csp, warnings })
}

fn clause_to_constraint(
    lits: &[i64],
    line: usize,
    warnings: &mut Vec<String>,
) -> Result<Option<AtomicConstraint>, CspError> {
    if lits.is_empty() {
        return Err(parse_err(line, "empty clause (always false)"));
    }
    let mut vars = Vec::with_capacity(lits.len());
    let mut forbidden = Vec::with_capacity(lits.len());
    for &lit in lits {
        let var = lit.unsigned_abs() as usize - 1;
        let forb = u32::from(lit < 0);
        match vars.iter().position(|&v| v == var) {
            Some(i) if forbidden[i] == forb => {}
            Some(_) => {
                let msg = format!("line {line}: tautological clause on variable {} dropped", var + 1);
                log::warn!("{msg}");
                warnings.push(msg);
                return Ok(None);
            }
            None => {
                vars.push(var);
                forbidden.push(forb);
            }
        }
    }
    AtomicConstraint::new(vars, forbidden).map(Some)
}

fn parse_err(line: usize, msg: &str) -> CspError {
    CspError::Parse {
        line,
        msg: msg.to_string(),
    }
}

/// Serializes a Boolean instance as DIMACS CNF.
pub fn write_dimacs(csp: &AtomicCsp) -> Result<String, CspError> {
    if let Some(v) = csp.alphabets().iter().position(|&a| a != 2) {
        return Err(CspError::Invalid(format!(
            "variable {v} is not Boolean; DIMACS needs every alphabet of size 2"
        )));
    }
    let mut out = format!("p cnf {} {}\n", csp.num_vars(), csp.num_constraints());
    for c in csp.constraints() {
        for (v, f) in c.entries() {
            let lit = v as i64 + 1;
            let _ = write!(out, "{} ", if f == 0 { lit } else { -lit });
        }
        out.push_str("0\n");
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hypergraph {
    pub num_vertices: usize,
    pub edges: Vec<Vec<usize>>,
}

/// Parses an edge list. The vertex count is one more than the largest id,
/// raised to `min_vertices` when given.
pub fn parse_hypergraph(text: &str, min_vertices: Option<usize>) -> Result<Hypergraph, CspError> {
    let mut edges = Vec::new();
    let mut max_vertex: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let edge = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|_| parse_err(idx + 1, &format!("`{tok}` is not a vertex id")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(&m) = edge.iter().max() {
            max_vertex = Some(max_vertex.map_or(m, |cur| cur.max(m)));
        }
        edges.push(edge);
    }
    let inferred = max_vertex.map_or(0, |m| m + 1);
    Ok(Hypergraph {
        num_vertices: inferred.max(min_vertices.unwrap_or(0)),
        edges,
    })
}

/// Proper `q`-colorings of a hypergraph: for each edge and each color, one
/// constraint forbidding the edge to be monochromatic in that color.
pub fn build_coloring_csp(graph: &Hypergraph, q: u32) -> Result<AtomicCsp, CspError> {
    if q < 2 {
        return Err(CspError::Invalid(format!("need at least 2 colors, got {q}")));
    }
    let mut constraints = Vec::with_capacity(graph.edges.len() * q as usize);
    for (i, edge) in graph.edges.iter().enumerate() {
        if edge.is_empty() {
            return Err(CspError::Invalid(format!("edge {i} is empty")));
        }
        let mut sorted = edge.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(CspError::Invalid(format!("edge {i} repeats a vertex: {edge:?}")));
        }
        if edge.len() < 2 {
            return Err(CspError::Invalid(format!("edge {i} has a single vertex")));
        }
        if let Some(&v) = edge.iter().find(|&&v| v >= graph.num_vertices) {
            return Err(CspError::Invalid(format!(
                "edge {i} mentions vertex {v} beyond {} vertices",
                graph.num_vertices
            )));
        }
        for color in 0..q {
            constraints.push(AtomicConstraint::new(edge.clone(), vec![color; edge.len()])?);
        }
    }
    AtomicCsp::uniform(graph.num_vertices, q, constraints)
}
