//! On-disk JSON document describing the synthesized replacement for each
//! rewritten condition site. Field order is fixed by the struct so identical
//! runs serialize byte-identically; the `pos`/`neg` texts round-trip through
//! the constraint parser.

use std::collections::BTreeMap;

use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};

use drnla::constraints::{blia_text, parse_blia};
use drnla::lang::{find_nla_sites, pretty_bexpr, Loc, Program};
use drnla::refine::RefineResult;
use drnla::validate::ReplacementMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapDocument {
    /// File name of the program the sites refer to.
    pub source: String,
    pub tool_version: String,
    pub seed: u64,
    /// Human-readable description of the validation scope the statuses are
    /// relative to.
    pub scope: String,
    /// One entry per rewritten site, ordered by location label.
    pub sites: Vec<SiteEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteEntry {
    /// Numeric part of the site label (`1` for `L1`).
    pub loc: u32,
    /// Original nonlinear condition, in source syntax.
    pub nla: String,
    /// Candidate holding exactly where the condition holds.
    pub pos: String,
    /// Candidate holding exactly where the condition fails.
    pub neg: String,
    /// `exact` or `partial`.
    pub status: String,
    /// Validation count spent on this site.
    pub iterations: u32,
    /// Comma-separated stage log (`v`, `tp`, `ep`, `tn`, `en`).
    pub stages: String,
}

impl MapDocument {
    pub fn build(
        source: &str,
        program: &Program,
        results: &[RefineResult],
        seed: u64,
        scope: String,
    ) -> MapDocument {
        let conds: BTreeMap<Loc, String> = find_nla_sites(program)
            .into_iter()
            .map(|s| (s.loc, pretty_bexpr(&s.cond)))
            .collect();
        let mut sites: Vec<SiteEntry> = results
            .iter()
            .map(|r| SiteEntry {
                loc: r.loc.0,
                nla: conds.get(&r.loc).cloned().unwrap_or_default(),
                pos: blia_text(&r.b_pos),
                neg: blia_text(&r.b_neg),
                status: r.status.to_string(),
                iterations: r.iterations,
                stages: r.stage_string(),
            })
            .collect();
        sites.sort_by_key(|s| s.loc);
        MapDocument {
            source: source.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            scope,
            sites,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("map document serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<MapDocument> {
        serde_json::from_str(text).context("replacement map is not valid JSON")
    }

    /// Re-parses the candidate texts against the program's declarations.
    pub fn to_replacement_map(&self, program: &Program) -> Result<ReplacementMap> {
        let vars = program.var_names();
        let mut m = ReplacementMap::default();
        for site in &self.sites {
            let pos = parse_blia(&site.pos, &vars)
                .map_err(|e| anyhow!("site L{}: bad pos candidate: {e}", site.loc))?;
            let neg = parse_blia(&site.neg, &vars)
                .map_err(|e| anyhow!("site L{}: bad neg candidate: {e}", site.loc))?;
            m.insert(Loc(site.loc), pos, neg);
        }
        Ok(m)
    }
}
