use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{BigramLm, Lexicon};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Self-loop probability of every state.
    pub self_loop: f64,
    /// Exponent applied to LM probabilities on word-entry arcs.
    pub lm_scale: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            self_loop: 0.8,
            lm_scale: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub logp: f64,
    /// Entering `to` begins a new word.
    pub word_start: bool,
}

/// State-level decoding network: one node per HMM state, self-loops and
/// forward arcs inside words, LM-weighted arcs from every word-final state to
/// every word-initial state.
#[derive(Clone, Debug)]
pub struct DecodingGraph {
    lexicon: Lexicon,
    arcs: Vec<Arc>,
    /// Indices into `arcs`, grouped by destination and sorted by source.
    incoming: Vec<Vec<usize>>,
    initial: Vec<f64>,
    config: GraphConfig,
}

impl DecodingGraph {
    pub fn new(lexicon: &Lexicon, lm: &BigramLm, config: &GraphConfig) -> Result<Self> {
        if !(config.self_loop > 0.0 && config.self_loop < 1.0) {
            return Err(Error::InvalidInput(format!(
                "self_loop must lie in (0, 1), got {}",
                config.self_loop
            )));
        }
        if !(config.lm_scale >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "lm_scale must be nonnegative, got {}",
                config.lm_scale
            )));
        }
        if lm.num_words() != lexicon.num_words() {
            return Err(Error::Shape(format!(
                "LM covers {} words, lexicon {}",
                lm.num_words(),
                lexicon.num_words()
            )));
        }
        let stay = config.self_loop.ln();
        let leave = (1.0 - config.self_loop).ln();
        let s = lexicon.num_states();
        let mut arcs = Vec::new();
        for from in 0..s {
            arcs.push(Arc {
                from,
                to: from,
                logp: stay,
                word_start: false,
            });
            let w = lexicon.word_of_state(from);
            if !lexicon.is_word_final(from) {
                let chain = lexicon.chain(w);
                let pos = chain.iter().position(|&x| x == from).expect("state in its chain");
                arcs.push(Arc {
                    from,
                    to: chain[pos + 1],
                    logp: leave,
                    word_start: false,
                });
            } else {
                for v in 0..lexicon.num_words() {
                    arcs.push(Arc {
                        from,
                        to: lexicon.chain(v)[0],
                        logp: leave + config.lm_scale * lm.prob(w, v).ln(),
                        word_start: true,
                    });
                }
            }
        }
        let mut incoming = vec![Vec::new(); s];
        for (i, a) in arcs.iter().enumerate() {
            incoming[a.to].push(i);
        }
        for list in &mut incoming {
            list.sort_by_key(|&i| (arcs[i].from, i));
        }
        let mut initial = vec![f64::NEG_INFINITY; s];
        for (w, &p) in lm.start().iter().enumerate() {
            initial[lexicon.chain(w)[0]] = config.lm_scale * p.ln();
        }
        Ok(Self {
            lexicon: lexicon.clone(),
            arcs,
            incoming,
            initial,
            config: config.clone(),
        })
    }

    pub fn num_states(&self) -> usize {
        self.lexicon.num_states()
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn incoming(&self, to: usize) -> impl Iterator<Item = (usize, &Arc)> + '_ {
        self.incoming[to].iter().map(move |&i| (i, &self.arcs[i]))
    }

    pub fn outgoing(&self, from: usize) -> impl Iterator<Item = &Arc> + '_ {
        self.arcs.iter().filter(move |a| a.from == from)
    }

    /// Log-probability of starting in each state; `-inf` for non-initial states.
    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn is_final(&self, s: usize) -> bool {
        self.lexicon.is_word_final(s)
    }

    pub fn find_arc(&self, from: usize, to: usize, word_start: bool) -> Option<&Arc> {
        self.arcs
            .iter()
            .find(|a| a.from == from && a.to == to && a.word_start == word_start)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_words() -> (Lexicon, BigramLm) {
        let lex = Lexicon::new(vec!["a".into(), "b".into()], vec![vec![0, 1], vec![2, 3, 4]]).unwrap();
        let lm = BigramLm::new(vec![0.6, 0.4], vec![vec![0.3, 0.7], vec![0.9, 0.1]]).unwrap();
        (lex, lm)
    }

    #[test]
    fn one_word_graph_loops_back() {
        let lex = Lexicon::new(vec!["a".into()], vec![vec![0, 1]]).unwrap();
        let g = DecodingGraph::new(&lex, &BigramLm::uniform(1), &GraphConfig::default()).unwrap();
        let pairs: Vec<(usize, usize, bool)> = g.arcs().iter().map(|a| (a.from, a.to, a.word_start)).collect();
        assert_eq!(pairs, vec![(0, 0, false), (0, 1, false), (1, 1, false), (1, 0, true)]);
        assert_eq!(g.initial()[0], 0.0);
        assert_eq!(g.initial()[1], f64::NEG_INFINITY);
    }

    #[test]
    fn two_word_counts_match_hand_construction() {
        let (lex, lm) = two_words();
        let g = DecodingGraph::new(&lex, &lm, &GraphConfig::default()).unwrap();
        // 5 self-loops, 3 in-word forward arcs, 2 final states x 2 successors.
        assert_eq!(g.arcs().len(), 5 + 3 + 4);
        assert_eq!(g.num_states(), 5);
        let entry: Vec<usize> = g.incoming(2).map(|(_, a)| a.from).collect();
        assert_eq!(entry, vec![1, 2, 4]);
    }

    #[test]
    fn out_probabilities_normalise() {
        let (lex, lm) = two_words();
        let g = DecodingGraph::new(&lex, &lm, &GraphConfig::default()).unwrap();
        for s in 0..g.num_states() {
            let total: f64 = g.outgoing(s).map(|a| a.logp.exp()).sum();
            assert!((total - 1.0).abs() < 1e-12, "state {s}: {total}");
        }
        let start: f64 = g.initial().iter().map(|v| v.exp()).sum();
        assert!((start - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let (lex, lm) = two_words();
        let bad = GraphConfig {
            self_loop: 1.0,
            ..GraphConfig::default()
        };
        assert!(DecodingGraph::new(&lex, &lm, &bad).is_err());
        assert!(DecodingGraph::new(&lex, &BigramLm::uniform(3), &GraphConfig::default()).is_err());
    }
}
