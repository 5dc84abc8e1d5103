//! Late-ensemble voting over prediction sets from several models.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::error::EnsembleError;
use crate::model::{normalized_tokens, PredictedSpan, PredictionSet};

/// One containment class after voting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VoteClass {
    pub representative: String,
    pub members: Vec<String>,
    /// Distinct models (by position in the input) with a span in this class.
    pub voters: BTreeSet<usize>,
}

impl VoteClass {
    pub fn votes(&self) -> usize {
        self.voters.len()
    }
}

fn contains(hay: &[String], needle: &[String]) -> bool {
    needle.len() <= hay.len() && hay.windows(needle.len()).any(|w| w == needle)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Groups spans into classes closed under normalized contiguous-token
/// containment. Spans that normalize to nothing are ignored.
pub fn tally(sets: &[PredictionSet]) -> Vec<VoteClass> {
    let items: Vec<(usize, &str, Vec<String>)> = sets
        .iter()
        .enumerate()
        .flat_map(|(m, set)| set.texts().map(move |t| (m, t, normalized_tokens(t))))
        .filter(|(_, _, toks)| !toks.is_empty())
        .collect();
    let mut parent: Vec<usize> = (0..items.len()).collect();
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            let (a, b) = (&items[i].2, &items[j].2);
            if contains(a, b) || contains(b, a) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..items.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut classes: Vec<VoteClass> = groups
        .into_values()
        .map(|members| {
            let best = *members
                .iter()
                .min_by(|&&a, &&b| {
                    let (ta, tb) = (&items[a], &items[b]);
                    tb.2.len()
                        .cmp(&ta.2.len())
                        .then(tb.2.join(" ").len().cmp(&ta.2.join(" ").len()))
                        .then(ta.1.cmp(tb.1))
                })
                .expect("classes are nonempty");
            VoteClass {
                representative: items[best].1.to_owned(),
                members: members.iter().map(|&i| items[i].1.to_owned()).collect(),
                voters: members.iter().map(|&i| items[i].0).collect(),
            }
        })
        .collect();
    classes.sort_by_cached_key(|c| (normalized_tokens(&c.representative).join(" "), c.representative.clone()));
    classes
}

/// Keeps the representative of every class predicted by at least two models.
/// When no class reaches two votes, keeps every representative.
pub fn vote(sets: &[PredictionSet]) -> Result<PredictionSet, EnsembleError> {
    if sets.len() < 2 {
        return Err(EnsembleError::TooFewSets(sets.len()));
    }
    let id = &sets[0].instance_id;
    if let Some(other) = sets.iter().find(|s| &s.instance_id != id) {
        return Err(EnsembleError::MismatchedIds(id.clone(), other.instance_id.clone()));
    }
    let classes = tally(sets);
    let agreed = classes.iter().any(|c| c.votes() >= 2);
    let spans = classes
        .into_iter()
        .filter(|c| !agreed || c.votes() >= 2)
        .map(|c| PredictedSpan { text: c.representative, score: None })
        .collect();
    Ok(PredictionSet::new(id.clone(), spans, "ensemble").expect("unscored spans"))
}

/// Votes instance by instance over per-model prediction files. Every model
/// must cover the same instance ids; output follows the first model's order.
pub fn vote_corpus(models: &[Vec<PredictionSet>]) -> Result<Vec<PredictionSet>, EnsembleError> {
    if models.len() < 2 {
        return Err(EnsembleError::TooFewSets(models.len()));
    }
    let indexed: Vec<HashMap<&str, &PredictionSet>> =
        models.iter().map(|m| m.iter().map(|s| (s.instance_id.as_str(), s)).collect()).collect();
    for (m, index) in indexed.iter().enumerate().skip(1) {
        if let Some(extra) = models[m].iter().find(|s| !indexed[0].contains_key(s.instance_id.as_str())) {
            return Err(EnsembleError::MismatchedIds(extra.instance_id.clone(), "<missing in first set>".into()));
        }
        if let Some(missing) = models[0].iter().find(|s| !index.contains_key(s.instance_id.as_str())) {
            return Err(EnsembleError::MismatchedIds(missing.instance_id.clone(), format!("<missing in set {m}>")));
        }
    }
    models[0]
        .iter()
        .map(|first| {
            let sets: Vec<PredictionSet> =
                indexed.iter().map(|idx| (*idx[first.instance_id.as_str()]).clone()).collect();
            vote(&sets)
        })
        .collect()
}
