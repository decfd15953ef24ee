//! Plain-text MDP spec files.
//!
//! Format: a header line `n_states n_actions gamma`, one line `mu0` with
//! `n_states` entries, a `rewards` block of `n_states` rows with `n_actions`
//! entries, and a `transitions` block of `n_states * n_actions` rows (state
//! major, then action) with `n_states` entries each. Decimal ASCII, blank
//! lines and `#` comments ignored. Reading always yields a dense kernel.

use std::io::{BufRead, Write};

use crate::error::{CoreError, Result};

use super::{TabularMdp, Transition};

pub fn write_mdp_text<W: Write>(mdp: &TabularMdp, w: &mut W) -> Result<()> {
    writeln!(w, "{} {} {}", mdp.n_states(), mdp.n_actions(), mdp.gamma())?;
    writeln!(w, "{}", join(mdp.mu0()))?;
    for s in 0..mdp.n_states() {
        let row: Vec<f64> = (0..mdp.n_actions()).map(|a| mdp.reward(s, a)).collect();
        writeln!(w, "{}", join(&row))?;
    }
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let mut row = vec![0.0; mdp.n_states()];
            for (t, p) in mdp.successors(s, a) {
                row[t] = p;
            }
            writeln!(w, "{}", join(&row))?;
        }
    }
    Ok(())
}

pub fn read_mdp_text<R: BufRead>(r: &mut R) -> Result<TabularMdp> {
    let mut lines = r.lines().filter_map(|l| match l {
        Ok(line) => {
            let t = line.trim().to_string();
            if t.is_empty() || t.starts_with('#') {
                None
            } else {
                Some(Ok(t))
            }
        }
        Err(e) => Some(Err(e)),
    });

    let header = lines
        .next()
        .ok_or_else(|| CoreError::Parse("missing header".into()))??;
    let mut parts = header.split_whitespace();
    let n_states: usize = parse_next(&mut parts, "n_states")?;
    let n_actions: usize = parse_next(&mut parts, "n_actions")?;
    let gamma: f64 = parse_next(&mut parts, "gamma")?;

    let mu0 = parse_row(
        &lines
            .next()
            .ok_or_else(|| CoreError::Parse("missing mu0".into()))??,
        n_states,
    )?;

    let mut reward = Vec::with_capacity(n_states * n_actions);
    for s in 0..n_states {
        let line = lines
            .next()
            .ok_or_else(|| CoreError::Parse(format!("missing reward row {s}")))??;
        reward.extend(parse_row(&line, n_actions)?);
    }

    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for idx in 0..n_states * n_actions {
        let line = lines
            .next()
            .ok_or_else(|| CoreError::Parse(format!("missing transition row {idx}")))??;
        transition.extend(parse_row(&line, n_states)?);
    }

    TabularMdp::new(
        n_states,
        n_actions,
        Transition::Dense(transition),
        reward,
        gamma,
        mu0,
        None,
    )
}

fn join(row: &[f64]) -> String {
    row.iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_next<'a, T: std::str::FromStr>(
    parts: &mut impl Iterator<Item = &'a str>,
    what: &str,
) -> Result<T> {
    parts
        .next()
        .ok_or_else(|| CoreError::Parse(format!("missing {what}")))?
        .parse()
        .map_err(|_| CoreError::Parse(format!("bad {what}")))
}

fn parse_row(line: &str, expected: usize) -> Result<Vec<f64>> {
    let row: Vec<f64> = line
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| CoreError::Parse(format!("bad number `{t}`")))
        })
        .collect::<Result<_>>()?;
    if row.len() != expected {
        return Err(CoreError::Parse(format!(
            "expected {expected} entries, got {}",
            row.len()
        )));
    }
    Ok(row)
}
