use super::graph::DecodingGraph;
use crate::error::{Error, Result};
use crate::types::{AlignmentTarget, FusedLogPosterior, Matrix, PosteriorSequence};

#[derive(Clone, Debug, PartialEq)]
pub struct Decoding {
    /// Word indices into the graph's lexicon.
    pub words: Vec<usize>,
    pub states: Vec<usize>,
    /// `true` at frames where a new word begins (always at frame 0).
    pub word_starts: Vec<bool>,
    pub score: f64,
}

impl Decoding {
    pub fn word_labels(&self, graph: &DecodingGraph) -> Vec<String> {
        self.words
            .iter()
            .map(|&w| graph.lexicon().word(w).to_string())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DecodeOptions {
    /// Drop hypotheses scoring more than this below the best one at each
    /// frame. `None` keeps every state, which is exact.
    pub beam: Option<f64>,
}

const NO_ARC: u32 = u32::MAX;

/// Maximum-score state path through `graph`, ending in a word-final state.
///
/// Ties are broken towards the lowest predecessor state (and, between
/// parallel arcs, the one created first), and towards the lowest final state.
pub fn viterbi_decode(emissions: &FusedLogPosterior, graph: &DecodingGraph, opts: DecodeOptions) -> Result<Decoding> {
    let em = emissions.frames();
    let (t_len, s) = em.shape();
    if s != graph.num_states() {
        return Err(Error::Shape(format!(
            "emissions have {s} states, graph {}",
            graph.num_states()
        )));
    }
    if t_len == 0 {
        return Err(Error::InvalidInput("cannot decode an empty utterance".into()));
    }
    let mut back = vec![NO_ARC; t_len * s];
    let mut prev: Vec<f64> = (0..s).map(|j| graph.initial()[j] + em.get(0, j)).collect();
    prune(&mut prev, opts.beam);
    let mut cur = vec![f64::NEG_INFINITY; s];
    for t in 1..t_len {
        for (j, slot) in cur.iter_mut().enumerate() {
            let mut best = f64::NEG_INFINITY;
            let mut arg = NO_ARC;
            for (i, a) in graph.incoming(j) {
                let v = prev[a.from] + a.logp;
                if v > best {
                    best = v;
                    arg = i as u32;
                }
            }
            *slot = best + em.get(t, j);
            back[t * s + j] = arg;
        }
        prune(&mut cur, opts.beam);
        std::mem::swap(&mut prev, &mut cur);
    }
    let mut end = None;
    let mut best = f64::NEG_INFINITY;
    for j in (0..s).filter(|&j| graph.is_final(j)) {
        if prev[j] > best {
            best = prev[j];
            end = Some(j);
        }
    }
    let mut j = end.ok_or_else(|| Error::InvalidInput(format!("no complete word path fits in {t_len} frames")))?;
    let mut states = vec![0; t_len];
    let mut word_starts = vec![false; t_len];
    for t in (0..t_len).rev() {
        states[t] = j;
        if t == 0 {
            word_starts[0] = true;
        } else {
            let a = graph.arcs()[back[t * s + j] as usize];
            word_starts[t] = a.word_start;
            j = a.from;
        }
    }
    let lex = graph.lexicon();
    let words = states
        .iter()
        .zip(&word_starts)
        .filter(|(_, &w)| w)
        .map(|(&st, _)| lex.word_of_state(st))
        .collect();
    Ok(Decoding {
        words,
        states,
        word_starts,
        score: best,
    })
}

fn prune(scores: &mut [f64], beam: Option<f64>) {
    if let Some(beam) = beam {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        scores
            .iter_mut()
            .filter(|v| **v < max - beam)
            .for_each(|v| *v = f64::NEG_INFINITY);
    }
}

/// Score of an explicit path (states plus word-start flags) under the graph,
/// or `None` if the path uses a missing arc or does not end word-finally.
pub fn path_score(emissions: &Matrix, graph: &DecodingGraph, states: &[usize], word_starts: &[bool]) -> Option<f64> {
    let first = *states.first()?;
    let mut score = graph.initial()[first] + emissions.get(0, first);
    for t in 1..states.len() {
        let a = graph.find_arc(states[t - 1], states[t], word_starts[t])?;
        score += a.logp + emissions.get(t, states[t]);
    }
    (score.is_finite() && graph.is_final(*states.last()?)).then_some(score)
}

/// Subtracts `scale * ln prior(s)` from every frame, turning posteriors into
/// scaled likelihoods.
pub fn divide_by_priors(emissions: &FusedLogPosterior, priors: &[f64], scale: f64) -> Result<FusedLogPosterior> {
    let m = emissions.frames();
    if priors.len() != m.cols() || priors.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::InvalidInput("priors must be positive, one per state".into()));
    }
    FusedLogPosterior::new(Matrix::from_fn(m.rows(), m.cols(), |t, s| {
        m.get(t, s) - scale * priors[s].ln()
    }))
}

/// Viterbi alignment of `transcript` against `posteriors`, restricted to the
/// left-to-right chain of the transcript's states.
pub fn forced_align(
    transcript: &[String],
    posteriors: &PosteriorSequence,
    graph: &DecodingGraph,
) -> Result<AlignmentTarget> {
    forced_align_scores(transcript, &posteriors.log(), graph)
}

/// [`forced_align`] on arbitrary per-frame log-scores. Ties prefer advancing.
pub fn forced_align_scores(
    transcript: &[String],
    log_scores: &Matrix,
    graph: &DecodingGraph,
) -> Result<AlignmentTarget> {
    let s = graph.num_states();
    if log_scores.cols() != s {
        return Err(Error::Shape(format!(
            "scores have {} states, graph {s}",
            log_scores.cols()
        )));
    }
    let chain = graph.lexicon().transcript_states(transcript)?;
    let (t_len, l) = (log_scores.rows(), chain.len());
    if l == 0 {
        return Err(Error::InvalidInput("empty transcript".into()));
    }
    if t_len < l {
        return Err(Error::InvalidInput(format!(
            "{t_len} frames cannot cover a transcript of {l} states"
        )));
    }
    let stay = graph.config().self_loop.ln();
    let advance = (1.0 - graph.config().self_loop).ln();
    let mut prev = vec![f64::NEG_INFINITY; l];
    prev[0] = log_scores.get(0, chain[0]);
    let mut moved = vec![false; t_len * l];
    let mut cur = vec![f64::NEG_INFINITY; l];
    for t in 1..t_len {
        for j in 0..l {
            let adv = if j > 0 {
                prev[j - 1] + advance
            } else {
                f64::NEG_INFINITY
            };
            let st = prev[j] + stay;
            let (v, m) = if adv >= st && j > 0 { (adv, true) } else { (st, false) };
            cur[j] = v + log_scores.get(t, chain[j]);
            moved[t * l + j] = m;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    if !prev[l - 1].is_finite() {
        return Err(Error::InvalidInput("no finite forced alignment".into()));
    }
    let mut j = l - 1;
    let mut states = vec![0; t_len];
    for t in (0..t_len).rev() {
        states[t] = chain[j];
        if t > 0 && moved[t * l + j] {
            j -= 1;
        }
    }
    AlignmentTarget::new(states, s)
}
