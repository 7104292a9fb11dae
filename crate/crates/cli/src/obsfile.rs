//! Observation files: a `k,y` header, then one `k,y_k` row per step with
//! `k = 1..K`. Datasets are separated by a blank line; the header is repeated
//! for each block. Latent trajectory files use the same layout with header
//! `k,n`.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pgfad::model::Observations;

/// Parses blocks of counts under header `k,<column>`.
pub fn parse_blocks(text: &str, column: &str) -> Result<Vec<Vec<u64>>> {
    let header = format!("k,{column}");
    let mut blocks = Vec::new();
    let mut current: Option<Vec<u64>> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let at = || format!("line {}", lineno + 1);
        if line.is_empty() {
            if let Some(b) = current.take() {
                blocks.push(b);
            }
            continue;
        }
        if line == header {
            if let Some(b) = current.take() {
                blocks.push(b);
            }
            current = Some(Vec::new());
            continue;
        }
        let Some(block) = current.as_mut() else {
            bail!("{}: expected header '{header}', found '{line}'", at());
        };
        let (k, v) = line
            .split_once(',')
            .with_context(|| format!("{}: expected 'k,{column}', found '{line}'", at()))?;
        let k: usize = k.trim().parse().with_context(|| format!("{}: bad step index", at()))?;
        let v: u64 = v.trim().parse().with_context(|| format!("{}: bad count '{}'", at(), v.trim()))?;
        if k != block.len() + 1 {
            bail!("{}: step {k} out of sequence, expected {}", at(), block.len() + 1);
        }
        block.push(v);
    }
    if let Some(b) = current.take() {
        blocks.push(b);
    }
    if blocks.iter().any(|b| b.is_empty()) {
        bail!("empty dataset block");
    }
    Ok(blocks)
}

pub fn write_blocks(blocks: &[Vec<u64>], column: &str) -> String {
    let mut out = String::new();
    for (i, b) in blocks.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "k,{column}");
        for (k, v) in b.iter().enumerate() {
            let _ = writeln!(out, "{},{v}", k + 1);
        }
    }
    out
}

pub fn parse(text: &str) -> Result<Vec<Observations>> {
    let blocks = parse_blocks(text, "y")?;
    if blocks.is_empty() {
        bail!("no datasets found");
    }
    Ok(blocks.into_iter().map(Observations::new).collect())
}

pub fn load(path: &Path) -> Result<Vec<Observations>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text).with_context(|| format!("in {}", path.display()))
}

pub fn write(datasets: &[Observations]) -> String {
    let blocks: Vec<Vec<u64>> = datasets.iter().map(|o| o.y.clone()).collect();
    write_blocks(&blocks, "y")
}
