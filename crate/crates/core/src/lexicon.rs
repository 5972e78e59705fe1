//! Word lexicon and bigram language model shared by the generator and the decoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Words and their left-to-right HMM state chains. Chains are disjoint and
/// together cover every state exactly once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LexiconRepr", into = "LexiconRepr")]
pub struct Lexicon {
    words: Vec<String>,
    chains: Vec<Vec<usize>>,
    num_states: usize,
    word_of_state: Vec<usize>,
    position_of_state: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconRepr {
    words: Vec<String>,
    chains: Vec<Vec<usize>>,
}

impl Lexicon {
    pub fn new(words: Vec<String>, chains: Vec<Vec<usize>>) -> Result<Self> {
        if words.is_empty() || words.len() != chains.len() {
            return Err(Error::InvalidInput(format!(
                "{} words but {} state chains",
                words.len(),
                chains.len()
            )));
        }
        let num_states: usize = chains.iter().map(Vec::len).sum();
        let mut word_of_state = vec![usize::MAX; num_states];
        let mut position_of_state = vec![0; num_states];
        for (w, chain) in chains.iter().enumerate() {
            if chain.is_empty() {
                return Err(Error::InvalidInput(format!("word `{}` has no states", words[w])));
            }
            for (j, &s) in chain.iter().enumerate() {
                if s >= num_states || word_of_state[s] != usize::MAX {
                    return Err(Error::InvalidInput(format!(
                        "state {s} of word `{}` is out of range or shared",
                        words[w]
                    )));
                }
                word_of_state[s] = w;
                position_of_state[s] = j;
            }
        }
        let mut sorted = words.clone();
        sorted.sort();
        if sorted.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::InvalidInput("duplicate word in lexicon".into()));
        }
        Ok(Self {
            words,
            chains,
            num_states,
            word_of_state,
            position_of_state,
        })
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, w: usize) -> &str {
        &self.words[w]
    }

    pub fn chain(&self, w: usize) -> &[usize] {
        &self.chains[w]
    }

    pub fn word_of_state(&self, s: usize) -> usize {
        self.word_of_state[s]
    }

    pub fn is_word_initial(&self, s: usize) -> bool {
        self.position_of_state[s] == 0
    }

    pub fn is_word_final(&self, s: usize) -> bool {
        self.position_of_state[s] + 1 == self.chains[self.word_of_state[s]].len()
    }

    pub fn index_of(&self, word: &str) -> Result<usize> {
        self.words
            .iter()
            .position(|w| w == word)
            .ok_or_else(|| Error::OutOfVocabulary(word.to_string()))
    }

    /// Concatenated state chain of a transcript.
    pub fn transcript_states(&self, words: &[String]) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for w in words {
            out.extend_from_slice(self.chain(self.index_of(w)?));
        }
        Ok(out)
    }
}

impl TryFrom<LexiconRepr> for Lexicon {
    type Error = Error;

    fn try_from(r: LexiconRepr) -> Result<Self> {
        Self::new(r.words, r.chains)
    }
}

impl From<Lexicon> for LexiconRepr {
    fn from(l: Lexicon) -> Self {
        Self {
            words: l.words,
            chains: l.chains,
        }
    }
}

/// Start distribution and row-stochastic bigram matrix over word indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BigramRepr", into = "BigramRepr")]
pub struct BigramLm {
    start: Vec<f64>,
    bigram: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BigramRepr {
    start: Vec<f64>,
    bigram: Vec<Vec<f64>>,
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "{what} must be strictly positive and sum to 1 (sum {sum})"
        )));
    }
    Ok(())
}

impl BigramLm {
    pub fn new(start: Vec<f64>, bigram: Vec<Vec<f64>>) -> Result<Self> {
        check_distribution(&start, "LM start distribution")?;
        if bigram.len() != start.len() {
            return Err(Error::Shape(format!(
                "{} bigram rows for {} words",
                bigram.len(),
                start.len()
            )));
        }
        for (w, row) in bigram.iter().enumerate() {
            if row.len() != start.len() {
                return Err(Error::Shape(format!("bigram row {w} has {} entries", row.len())));
            }
            check_distribution(row, &format!("bigram row {w}"))?;
        }
        Ok(Self { start, bigram })
    }

    pub fn uniform(words: usize) -> Self {
        let p = 1.0 / words as f64;
        Self {
            start: vec![p; words],
            bigram: vec![vec![p; words]; words],
        }
    }

    pub fn num_words(&self) -> usize {
        self.start.len()
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.bigram[from][to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.bigram[from]
    }
}

impl TryFrom<BigramRepr> for BigramLm {
    type Error = Error;

    fn try_from(r: BigramRepr) -> Result<Self> {
        Self::new(r.start, r.bigram)
    }
}

impl From<BigramLm> for BigramRepr {
    fn from(l: BigramLm) -> Self {
        Self {
            start: l.start,
            bigram: l.bigram,
        }
    }
}
