//! Text serializations.
//!
//! `att_text` writes one `src<TAB>dst<TAB>in<TAB>out` line per transition and
//! a final line holding the initial state. Multi-symbol outputs are joined
//! with single spaces; the empty output is `<eps>`. Within a symbol, `\`,
//! space, tab, newline and `<` are backslash-escaped so that every symbol
//! survives a round trip.

use std::fmt::Write as _;
use std::str::FromStr;

use super::{FstError, RawTransition, StateId, SymbolTable, Transducer};

const EPS: &str = "<eps>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    AttText,
    Dot,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "att" | "att_text" | "fst" => Ok(Format::AttText),
            "dot" => Ok(Format::Dot),
            other => Err(format!("unknown format `{other}` (expected att or dot)")),
        }
    }
}

impl Transducer {
    pub fn serialize(&self, format: Format) -> String {
        match format {
            Format::AttText => to_att_text(self),
            Format::Dot => to_dot(self),
        }
    }
}

fn escape(symbol: &str) -> String {
    let mut out = String::with_capacity(symbol.len());
    for c in symbol.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ' ' => out.push_str("\\s"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '<' => out.push_str("\\<"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(field: &str) -> Result<String, String> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('s') => out.push(' '),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('<') => out.push('<'),
            Some(other) => return Err(format!("bad escape `\\{other}`")),
            None => return Err("dangling backslash".into()),
        }
    }
    Ok(out)
}

pub fn to_att_text(t: &Transducer) -> String {
    let mut s = String::new();
    for tr in t.transitions() {
        let input = escape(t.input_table.symbol(tr.input).unwrap_or_default());
        let output = if tr.output.is_empty() {
            EPS.to_owned()
        } else {
            tr.output
                .iter()
                .map(|&o| escape(t.output_table.symbol(o).unwrap_or_default()))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(s, "{}\t{}\t{}\t{}", tr.source, tr.target, input, output);
    }
    let _ = writeln!(s, "{}", t.initial);
    s
}

fn dot_quote(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn to_dot(t: &Transducer) -> String {
    let mut s = String::from("digraph FST {\n  rankdir=LR;\n  node [shape=circle];\n");
    let _ = writeln!(s, "  start [shape=point];\n  start -> {};", t.initial);
    for q in 0..t.num_states {
        let _ = writeln!(s, "  {q};");
    }
    for tr in t.transitions() {
        let input = t.input_table.symbol(tr.input).unwrap_or_default();
        let output = if tr.output.is_empty() {
            "ε".to_owned()
        } else {
            t.output_table.decode(&tr.output).concat()
        };
        let _ = writeln!(
            s,
            "  {} -> {} [label=\"{}\"];",
            tr.source,
            tr.target,
            dot_quote(&format!("{input}:{output}"))
        );
    }
    s.push_str("}\n");
    s
}

/// Parses `att_text`. Symbol tables are rebuilt in order of first appearance.
pub fn parse_att(text: &str) -> Result<Transducer, FstError> {
    let err = |line: usize, message: String| FstError::Parse { line, message };
    let parse_state = |line: usize, field: &str| {
        field
            .trim()
            .parse::<StateId>()
            .map_err(|e| err(line, format!("bad state `{field}`: {e}")))
    };
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let Some((&(last_no, last), body)) = lines.split_last() else {
        return Err(err(0, "empty input".into()));
    };
    if last.contains('\t') {
        return Err(err(last_no, "missing initial-state line".into()));
    }
    let initial = parse_state(last_no, last)?;

    let mut input_table = SymbolTable::new();
    let mut output_table = SymbolTable::new();
    let mut raw = Vec::with_capacity(body.len());
    let mut max_state = initial;
    for &(no, line) in body {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(err(
                no,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let source = parse_state(no, fields[0])?;
        let target = parse_state(no, fields[1])?;
        let input_sym = unescape(fields[2]).map_err(|m| err(no, m))?;
        if input_sym.is_empty() || fields[2] == EPS {
            return Err(err(no, "epsilon input label".into()));
        }
        let input = input_table.intern(&input_sym);
        let output = if fields[3] == EPS {
            Vec::new()
        } else {
            fields[3]
                .split(' ')
                .map(|f| {
                    let sym = unescape(f).map_err(|m| err(no, m))?;
                    if sym.is_empty() {
                        return Err(err(no, "empty output symbol".into()));
                    }
                    Ok(output_table.intern(&sym))
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        max_state = max_state.max(source).max(target);
        raw.push(RawTransition::new(source, input, output, target));
    }
    Transducer::new(
        input_table,
        output_table,
        max_state as usize + 1,
        initial,
        raw,
    )
}
