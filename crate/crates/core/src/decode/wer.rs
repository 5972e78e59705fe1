use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WerReport {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_len: usize,
    /// `(S + D + I) / N`. With an empty reference this is the insertion
    /// count and `empty_reference` is set.
    pub wer: f64,
    pub empty_reference: bool,
}

impl WerReport {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    fn finish(mut self) -> Self {
        self.empty_reference = self.reference_len == 0;
        self.wer = self.errors() as f64 / self.reference_len.max(1) as f64;
        self
    }

    /// Pools counts over utterances; the pooled WER is total errors over total
    /// reference words.
    pub fn pooled<'a>(reports: impl IntoIterator<Item = &'a WerReport>) -> WerReport {
        let mut out = WerReport::default();
        for r in reports {
            out.substitutions += r.substitutions;
            out.deletions += r.deletions;
            out.insertions += r.insertions;
            out.reference_len += r.reference_len;
        }
        out.finish()
    }
}

/// Unit-cost Levenshtein alignment of `hypothesis` against `reference`.
/// Among equal-cost alignments the backtrace prefers matches and
/// substitutions, then deletions, then insertions.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> WerReport {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut report = WerReport {
        reference_len: n,
        ..WerReport::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if d[i][j] == d[i - 1][j - 1] + usize::from(!same) {
                report.substitutions += usize::from(!same);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            report.deletions += 1;
            i -= 1;
        } else {
            report.insertions += 1;
            j -= 1;
        }
    }
    report.finish()
}
