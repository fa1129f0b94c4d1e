use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Defender/adversary assignment: `flags[i] == true` replaces agent `i`'s
/// policy with an adversarial one. The all-false partition is the attack-free
/// game.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition {
    flags: Vec<bool>,
}

impl Partition {
    pub fn new(flags: Vec<bool>) -> Self {
        Partition { flags }
    }

    pub fn none(n: usize) -> Self {
        Partition { flags: vec![false; n] }
    }

    pub fn all(n: usize) -> Self {
        Partition { flags: vec![true; n] }
    }

    pub fn one_hot(n: usize, agent: usize) -> Self {
        let mut flags = vec![false; n];
        flags[agent] = true;
        Partition { flags }
    }

    pub fn n_agents(&self) -> usize {
        self.flags.len()
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn is_adversary(&self, agent: usize) -> bool {
        self.flags[agent]
    }

    pub fn n_adversaries(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn is_attack_free(&self) -> bool {
        self.n_adversaries() == 0
    }

    pub fn adversaries(&self) -> Vec<usize> {
        (0..self.flags.len()).filter(|&i| self.flags[i]).collect()
    }

    pub fn defenders(&self) -> Vec<usize> {
        (0..self.flags.len()).filter(|&i| !self.flags[i]).collect()
    }

    pub fn bitstring(&self) -> String {
        self.flags.iter().map(|&f| if f { '1' } else { '0' }).collect()
    }

    /// Parses a bitstring and checks it describes `n` agents with at least
    /// one adversary.
    pub fn parse_attack(s: &str, n: usize) -> Result<Self> {
        let p: Partition = s.parse()?;
        if p.n_agents() != n {
            return Err(Error::Partition(format!(
                "`{s}` has {} flags, expected {n}",
                p.n_agents()
            )));
        }
        if p.is_attack_free() {
            return Err(Error::Partition(format!("`{s}` marks no adversary")));
        }
        Ok(p)
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::Partition("empty partition".into()));
        }
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Partition(format!("bad character `{other}` in `{s}`"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Partition::new)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.bitstring())
    }
}

/// Selects each agent's executed action: the adversary's where flagged,
/// otherwise the defender's.
pub fn compose_perturbed_action(
    defender: &[[f64; 2]],
    adversary: &[[f64; 2]],
    partition: &Partition,
) -> Result<Vec<[f64; 2]>> {
    let n = partition.n_agents();
    if defender.len() != n || adversary.len() != n {
        return Err(Error::Dimension {
            layer: "compose_perturbed_action".into(),
            expected: n,
            got: if defender.len() != n { defender.len() } else { adversary.len() },
        });
    }
    Ok((0..n)
        .map(|i| if partition.is_adversary(i) { adversary[i] } else { defender[i] })
        .collect())
}
