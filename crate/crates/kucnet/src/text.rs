//! Plain-text dataset files.
//!
//! Interactions: one line per user, `user item item ...`. KG: `head rel tail`.
//! Alignment: `item entity`. Tokens are whitespace-separated non-negative
//! integers; blank lines are skipped and `#` starts a comment.
//!
//! A comment line made of `key=value` tokens overrides the counts that would
//! otherwise be `1 + max id`: `# users=100 items=40` for interactions and
//! `# entities=80 relations=3` for KG files. Overrides may only grow counts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use kucnet_core::ckg::{InteractionSet, TripleSet};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Default)]
struct Parsed {
    rows: Vec<(usize, Vec<u32>)>,
    overrides: Vec<(String, usize, usize)>,
}

fn parse_lines(path: &Path, text: &str) -> Result<Parsed> {
    let mut out = Parsed::default();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let (body, comment) = match raw.find('#') {
            Some(p) => (&raw[..p], Some(&raw[p + 1..])),
            None => (raw, None),
        };
        if let Some(c) = comment {
            for tok in c.split_whitespace() {
                if let Some((key, value)) = tok.split_once('=') {
                    let v = value
                        .parse()
                        .map_err(|_| parse_err(path, line, format!("bad count `{tok}`")))?;
                    out.overrides.push((key.to_string(), v, line));
                }
            }
        }
        if body.trim().is_empty() {
            continue;
        }
        let ids = body
            .split_whitespace()
            .map(|t| {
                t.parse::<u32>()
                    .map_err(|_| parse_err(path, line, format!("expected an id, found `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.rows.push((line, ids));
    }
    Ok(out)
}

fn parse_err(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

/// Applies `key=value` overrides on top of an observed count.
fn count(path: &Path, parsed: &Parsed, key: &str, observed: usize) -> Result<usize> {
    let mut n = observed;
    for (k, v, line) in &parsed.overrides {
        if k == key {
            if *v < observed {
                return Err(parse_err(
                    path,
                    *line,
                    format!("{key}={v} is below the observed {observed}"),
                ));
            }
            n = *v;
        }
    }
    Ok(n)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn parse_interactions(path: &Path, text: &str) -> Result<InteractionSet> {
    let parsed = parse_lines(path, text)?;
    let mut pairs = Vec::new();
    let mut users = 0usize;
    for (_, ids) in &parsed.rows {
        let u = ids[0];
        users = users.max(u as usize + 1);
        pairs.extend(ids[1..].iter().map(|&i| (u, i)));
    }
    if parsed.rows.is_empty() {
        return Err(kucnet_core::Error::EmptyDataset.into());
    }
    let items = pairs.iter().map(|p| p.1 as usize + 1).max().unwrap_or(0);
    let users = count(path, &parsed, "users", users)?;
    let items = count(path, &parsed, "items", items)?;
    Ok(InteractionSet::new(users, items, pairs)?)
}

pub fn load_interactions(path: &Path) -> Result<InteractionSet> {
    parse_interactions(path, &read(path)?)
}

pub fn parse_kg(path: &Path, text: &str) -> Result<TripleSet> {
    let parsed = parse_lines(path, text)?;
    let mut triples = Vec::with_capacity(parsed.rows.len());
    for (line, ids) in &parsed.rows {
        if ids.len() != 3 {
            return Err(parse_err(
                path,
                *line,
                format!("expected `head rel tail`, found {} tokens", ids.len()),
            ));
        }
        triples.push((ids[0], ids[1], ids[2]));
    }
    let entities = triples.iter().map(|t| t.0.max(t.2) as usize + 1).max().unwrap_or(0);
    let relations = triples.iter().map(|t| t.1 as usize + 1).max().unwrap_or(0);
    let entities = count(path, &parsed, "entities", entities)?;
    let relations = count(path, &parsed, "relations", relations)?;
    Ok(TripleSet::new(entities, relations, triples)?)
}

pub fn load_kg(path: &Path) -> Result<TripleSet> {
    parse_kg(path, &read(path)?)
}

pub fn parse_alignment(path: &Path, text: &str) -> Result<Vec<(u32, u32)>> {
    let parsed = parse_lines(path, text)?;
    parsed
        .rows
        .iter()
        .map(|(line, ids)| match ids[..] {
            [i, e] => Ok((i, e)),
            _ => Err(parse_err(
                path,
                *line,
                format!("expected `item entity`, found {} tokens", ids.len()),
            )),
        })
        .collect()
}

pub fn load_alignment(path: &Path) -> Result<Vec<(u32, u32)>> {
    parse_alignment(path, &read(path)?)
}

pub fn format_interactions(inter: &InteractionSet) -> String {
    let mut s = format!("# users={} items={}\n", inter.user_count(), inter.item_count());
    for (u, items) in inter.items_by_user().iter().enumerate() {
        if items.is_empty() {
            continue;
        }
        let _ = write!(s, "{u}");
        for i in items {
            let _ = write!(s, " {i}");
        }
        s.push('\n');
    }
    s
}

pub fn format_kg(kg: &TripleSet) -> String {
    let mut s = format!("# entities={} relations={}\n", kg.entity_count(), kg.relation_count());
    for (h, r, t) in kg.triples() {
        let _ = writeln!(s, "{h} {r} {t}");
    }
    s
}

pub fn format_alignment(alignment: &[(u32, u32)]) -> String {
    alignment.iter().map(|(i, e)| format!("{i} {e}\n")).collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}
