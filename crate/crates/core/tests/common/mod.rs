//! Oracles shared by the integration tests. They deliberately avoid the
//! library's own evaluation paths.

#![allow(dead_code)]

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use olac_core::aggregator::{Aggregator, HarvestMode, HarvestReport};
use olac_core::oryx::RepositoryDocument;
use olac_core::query::{CompareOp, Comparison, Field, QueryExpr};
use olac_core::testkit::{self, InMemoryWeb, ManualClock, VidaNet};
use olac_core::{Datestamp, ElementQuad};
use regex::Regex;

/// Translates a LIKE pattern into an anchored, case-insensitive regex.
pub fn like_regex(pattern: &str) -> Regex {
    let mut re = String::from("(?is)^");
    let mut chars = pattern.chars();
    while let Some(c) = chars.next() {
        match c {
            '%' => re.push_str(".*"),
            '_' => re.push('.'),
            '\\' => match chars.next() {
                Some(e) => re.push_str(&regex::escape(&e.to_string())),
                None => re.push_str(&regex::escape("\\")),
            },
            c => re.push_str(&regex::escape(&c.to_string())),
        }
    }
    re.push('$');
    Regex::new(&re).expect("translated pattern compiles")
}

thread_local! {
    static LIKE_CACHE: RefCell<HashMap<String, Regex>> = RefCell::new(HashMap::new());
}

fn cached_like_regex(pattern: &str) -> Regex {
    LIKE_CACHE.with(|cache| {
        cache
            .borrow_mut()
            .entry(pattern.to_string())
            .or_insert_with(|| like_regex(pattern))
            .clone()
    })
}

fn field_value(quad: &ElementQuad, field: Field) -> &str {
    match field {
        Field::Tag => &quad.tag,
        Field::Content => &quad.content,
        Field::Type => &quad.type_,
        Field::Code => &quad.code,
    }
}

fn atom_column(c: &Comparison, quads: &[ElementQuad]) -> Vec<bool> {
    let like = matches!(c.op, CompareOp::Like).then(|| cached_like_regex(&c.literal));
    quads
        .iter()
        .map(|quad| {
            let value = field_value(quad, c.field);
            match c.op {
                CompareOp::Eq => value == c.literal,
                CompareOp::Ne => value != c.literal,
                CompareOp::Like => like.as_ref().unwrap().is_match(value),
            }
        })
        .collect()
}

fn atoms<'a>(expr: &'a QueryExpr, out: &mut Vec<&'a Comparison>) {
    match expr {
        QueryExpr::Compare(c) => out.push(c),
        QueryExpr::Not(e) => atoms(e, out),
        QueryExpr::And(es) | QueryExpr::Or(es) => es.iter().for_each(|e| atoms(e, out)),
    }
}

fn eval(expr: &QueryExpr, truth: &dyn Fn(&Comparison) -> bool) -> bool {
    match expr {
        QueryExpr::Compare(c) => truth(c),
        QueryExpr::Not(e) => !eval(e, truth),
        QueryExpr::And(es) => es.iter().all(|e| eval(e, truth)),
        QueryExpr::Or(es) => es.iter().any(|e| eval(e, truth)),
    }
}

/// Exhaustive oracle: tries every assignment of quads to aliases
/// `e1..e{aliases}` (repetition allowed).
pub fn brute_force_matches(expr: &QueryExpr, aliases: usize, quads: &[ElementQuad]) -> bool {
    if quads.is_empty() {
        return false;
    }
    let mut comparisons = Vec::new();
    atoms(expr, &mut comparisons);
    // holds[i][q]: comparison i against quad q
    let holds: Vec<Vec<bool>> = comparisons
        .iter()
        .map(|c| atom_column(c, quads))
        .collect();
    let index_of = |c: &Comparison| {
        comparisons
            .iter()
            .position(|x| std::ptr::eq(*x, c))
            .expect("comparison belongs to the expression")
    };

    let mut assignment = vec![0usize; aliases];
    loop {
        let truth = |c: &Comparison| holds[index_of(c)][assignment[c.alias - 1]];
        if eval(expr, &truth) {
            return true;
        }
        // next assignment, odometer style
        let mut k = 0;
        loop {
            if k == aliases {
                return false;
            }
            assignment[k] += 1;
            if assignment[k] < quads.len() {
                break;
            }
            assignment[k] = 0;
            k += 1;
        }
    }
}

/// Fixture repositories published on an in-memory web, served through
/// Vida and harvested by an in-memory aggregator.
pub struct Federation {
    pub web: Arc<InMemoryWeb>,
    pub clock: Arc<ManualClock>,
    pub net: VidaNet,
    pub aggregator: Arc<Aggregator>,
    pub repos: Vec<RepositoryDocument>,
}

pub fn document_url(repository_id: &str) -> String {
    format!("http://{repository_id}/oryx.xml")
}

pub fn vida_base_url(repository_id: &str) -> String {
    VidaNet::vida_base_url(&format!("{repository_id}/oryx.xml"))
}

impl Federation {
    pub fn new(sources: &[(&str, usize)]) -> Self {
        let web = Arc::new(InMemoryWeb::default());
        let clock = Arc::new(ManualClock::new(Datestamp::from_unix(1_100_000_000)));
        let repos: Vec<RepositoryDocument> = sources
            .iter()
            .map(|(id, n)| testkit::fixture_repository(id, *n, Datestamp::from_unix(1_000_000_000)))
            .collect();
        for repo in &repos {
            web.publish(&document_url(&repo.repository_id), repo);
        }
        let net = VidaNet::new(web.clone(), clock.clone());
        let aggregator = Arc::new(Aggregator::in_memory(testkit::aggregator_identity()));
        Federation {
            web,
            clock,
            net,
            aggregator,
            repos,
        }
    }

    pub fn register_all(&self) {
        for repo in &self.repos {
            let entry = self
                .aggregator
                .register(&vida_base_url(&repo.repository_id), &self.net)
                .expect("fixture provider registers");
            assert_eq!(entry.archive_id, repo.repository_id);
        }
    }

    pub fn harvest(&self, archive_id: &str, mode: HarvestMode) -> HarvestReport {
        self.clock.advance(10);
        let clock = self.clock.clone();
        self.aggregator
            .harvest(archive_id, mode, &self.net, &move || clock.now())
            .expect("harvest runs")
    }

    pub fn harvest_all(&self, mode: HarvestMode) -> Vec<HarvestReport> {
        let ids: Vec<String> = self.repos.iter().map(|r| r.repository_id.clone()).collect();
        ids.iter().map(|id| self.harvest(id, mode)).collect()
    }
}
