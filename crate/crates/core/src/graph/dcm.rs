use rand::Rng;

use super::{attr, DegreeSequence, DiGraph, GraphMode};
use crate::error::{Error, Result};
use crate::seed::{Seed, Stream};

pub const DEFAULT_ATTEMPT_CAP: usize = 1000;

/// Directed configuration model with the default repeated-mode attempt cap.
pub fn generate_dcm(seq: &DegreeSequence, mode: GraphMode, seed: Seed) -> Result<DiGraph> {
    generate_dcm_with_cap(seq, mode, seed, DEFAULT_ATTEMPT_CAP)
}

pub fn generate_dcm_with_cap(seq: &DegreeSequence, mode: GraphMode, seed: Seed, cap: usize) -> Result<DiGraph> {
    seq.validate()?;
    match mode {
        GraphMode::Raw => {
            let in_adj = pair(seq, seed, 0);
            DiGraph::from_in_adj(in_adj, seq.marks(), GraphMode::Raw)
        }
        GraphMode::Repeated => {
            for attempt in 0..cap {
                let in_adj = pair(seq, seed, attempt as u64);
                if is_simple(&in_adj) {
                    return DiGraph::from_in_adj(in_adj, seq.marks(), GraphMode::Repeated);
                }
            }
            Err(Error::AttemptCapExceeded { cap })
        }
        GraphMode::Erased => {
            let mut in_adj = pair(seq, seed, 0);
            for (head, tails) in in_adj.iter_mut().enumerate() {
                let mut kept = Vec::with_capacity(tails.len());
                for &t in tails.iter() {
                    if t != head && !kept.contains(&t) {
                        kept.push(t);
                    }
                }
                *tails = kept;
            }
            let mut marks = seq.marks();
            for (m, &(dm, dp)) in marks.iter_mut().zip(seq.pairs()) {
                m.attr.set(attr::ORIG_D_MINUS, dm as f64);
                m.attr.set(attr::ORIG_D_PLUS, dp as f64);
            }
            DiGraph::from_in_adj(in_adj, marks, GraphMode::Erased)
        }
    }
}

/// Uniform pairing: inbound half-edges are visited vertex by vertex and each
/// takes an outbound stub uniformly from those still unpaired.
fn pair(seq: &DegreeSequence, seed: Seed, attempt: u64) -> Vec<Vec<usize>> {
    let mut rng = seed.rng(Stream::Graph, &[attempt]);
    let mut stubs: Vec<usize> = Vec::with_capacity(seq.l_n());
    for (v, &(_, dp)) in seq.pairs().iter().enumerate() {
        stubs.extend(std::iter::repeat_n(v, dp));
    }
    seq.pairs()
        .iter()
        .map(|&(dm, _)| {
            (0..dm)
                .map(|_| {
                    let k = rng.random_range(0..stubs.len());
                    stubs.swap_remove(k)
                })
                .collect()
        })
        .collect()
}

fn is_simple(in_adj: &[Vec<usize>]) -> bool {
    in_adj
        .iter()
        .enumerate()
        .all(|(h, tails)| !tails.contains(&h) && tails.iter().enumerate().all(|(i, t)| !tails[..i].contains(t)))
}
