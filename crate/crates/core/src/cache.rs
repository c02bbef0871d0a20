//! Exact-match verdict cache keyed by canonical PC text.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::pc::{canonize, format_pc, PathCondition};
use crate::solver::{SolveError, Solver};

#[derive(Clone, Debug, Default)]
pub struct SolutionCache {
    map: HashMap<String, bool>,
    hits: u64,
    misses: u64,
}

#[derive(Serialize, Deserialize)]
struct Line {
    pc: String,
    sat: bool,
}

impl SolutionCache {
    pub fn new() -> Self {
        SolutionCache::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    /// `hits / (hits + misses)`, 0 before the first lookup.
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }

    pub fn get(&self, key: &str) -> Option<bool> {
        self.map.get(key).copied()
    }

    /// Looks up `pc` by canonical text, solving and storing it on a miss.
    /// Returns `(satisfiable, hit)`. Solver failures are not cached.
    pub fn check(&mut self, pc: &PathCondition, solver: &Solver) -> Result<(bool, bool), SolveError> {
        let key = format_pc(&canonize(pc));
        if let Some(&sat) = self.map.get(&key) {
            self.hits += 1;
            return Ok((sat, true));
        }
        self.misses += 1;
        let sat = solver.solve(pc)?.is_sat();
        self.map.insert(key, sat);
        Ok((sat, false))
    }

    /// JSON Lines `{"pc", "sat"}`, sorted by key.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut keys: Vec<&String> = self.map.keys().collect();
        keys.sort();
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for k in keys {
            let line = Line {
                pc: k.clone(),
                sat: self.map[k],
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    /// Loads entries as stored; counters start at zero.
    pub fn load(path: &Path) -> std::io::Result<SolutionCache> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut cache = SolutionCache::new();
        for (i, line) in file.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: Line = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
            })?;
            cache.map.insert(entry.pc, entry.sat);
        }
        Ok(cache)
    }
}

/// [`SolutionCache::check`] as a free function.
pub fn cache_check(
    pc: &PathCondition,
    cache: &mut SolutionCache,
    solver: &Solver,
) -> Result<(bool, bool), SolveError> {
    cache.check(pc, solver)
}
