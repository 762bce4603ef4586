use super::Segmenter;
use crate::error::Result;

/// Tokens that end in a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "al", "approx", "ca", "cf", "dr", "e.g", "eq", "eqs", "fig", "figs", "i.e", "incl", "jr", "mr",
    "mrs", "ms", "no", "nos", "pp", "prof", "ref", "refs", "resp", "sec", "sr", "st", "tab", "viz",
    "vol", "vs",
];

const CLOSERS: &[char] = &[')', ']', '"', '\'', '\u{201d}', '\u{2019}'];

/// Deterministic rule-based splitter.
///
/// Breaks after `.`, `?` or `!` (plus trailing closing quotes or brackets)
/// when followed by whitespace and a character that is not a lowercase letter,
/// unless the period closes a known abbreviation. Every newline is a hard
/// break. Sentence bounds are trimmed of surrounding whitespace, so every
/// non-whitespace character belongs to exactly one sentence.
#[derive(Debug, Clone, Default)]
pub struct RuleSegmenter;

impl RuleSegmenter {
    pub const IDENTITY: &'static str = "rules-v1";
}

impl Segmenter for RuleSegmenter {
    fn identity(&self) -> &str {
        Self::IDENTITY
    }

    fn boundaries(&self, text: &str) -> Result<Vec<(usize, usize)>> {
        Ok(split(&text.chars().collect::<Vec<_>>()))
    }
}

fn split(chars: &[char]) -> Vec<(usize, usize)> {
    let n = chars.len();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut close = |start: &mut Option<usize>, end: usize| {
        if let Some(s) = start.take() {
            let mut e = end;
            while e > s && chars[e - 1].is_whitespace() {
                e -= 1;
            }
            if e > s {
                out.push((s, e));
            }
        }
    };

    let mut i = 0;
    while i < n {
        let c = chars[i];
        if c == '\n' || c == '\r' {
            close(&mut start, i);
            i += 1;
            continue;
        }
        if start.is_none() {
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            start = Some(i);
        }
        if matches!(c, '.' | '?' | '!') {
            let mut j = i + 1;
            while j < n && (matches!(chars[j], '.' | '?' | '!') || CLOSERS.contains(&chars[j])) {
                j += 1;
            }
            let at_gap = j == n || chars[j].is_whitespace();
            if at_gap && !(c == '.' && ends_with_abbreviation(chars, start.unwrap_or(0), i)) {
                let next = chars[j..].iter().find(|ch| !ch.is_whitespace() || **ch == '\n');
                let continues = matches!(next, Some(ch) if ch.is_lowercase());
                if !continues {
                    close(&mut start, j);
                }
            }
            i = j;
            continue;
        }
        i += 1;
    }
    close(&mut start, n);
    out
}

/// Whether the token ending at the period `dot` is a guarded abbreviation.
fn ends_with_abbreviation(chars: &[char], sentence_start: usize, dot: usize) -> bool {
    let mut k = dot;
    while k > sentence_start && !chars[k - 1].is_whitespace() {
        k -= 1;
    }
    let token: String = chars[k..dot]
        .iter()
        .skip_while(|c| matches!(c, '(' | '[' | '"' | '\''))
        .flat_map(|c| c.to_lowercase())
        .collect();
    !token.is_empty() && ABBREVIATIONS.contains(&token.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(text: &str) -> Vec<(usize, usize)> {
        RuleSegmenter.boundaries(text).unwrap()
    }

    #[test]
    fn two_short_sentences() {
        assert_eq!(seg("A b. C d."), vec![(0, 4), (5, 9)]);
    }

    #[test]
    fn no_terminator_is_one_sentence() {
        let text = "a single clause without an ending";
        assert_eq!(seg(text), vec![(0, text.chars().count())]);
    }

    #[test]
    fn abbreviations_do_not_split() {
        let text = "Smith et al. saw pain fall vs. placebo in Fig. 2. The end.";
        let s = seg(text);
        assert_eq!(s.len(), 2, "{s:?}");
    }

    #[test]
    fn decimals_and_lowercase_continuations() {
        let s = seg("Scores were 3.5 points lower (p = 0.01). e.g. this continues. Next one?");
        assert_eq!(s.len(), 2, "{s:?}");
    }

    #[test]
    fn newline_is_a_hard_break() {
        let text = "TITLE: A trial\n\nABSTRACT.BACKGROUND: We tested it\nBODY: Details follow.";
        let s = seg(text);
        assert_eq!(s.len(), 3);
        let chars: Vec<char> = text.chars().collect();
        let first: String = chars[s[0].0..s[0].1].iter().collect();
        assert_eq!(first, "TITLE: A trial");
    }

    #[test]
    fn closing_quote_stays_with_sentence() {
        let text = "He said \"stop.\" Then left.";
        assert_eq!(seg(text), vec![(0, 15), (16, 26)]);
    }

    #[test]
    fn whitespace_only_yields_nothing() {
        assert!(seg("  \n\t ").is_empty());
    }

    #[test]
    fn covers_every_non_whitespace_char() {
        let text = "One. two? Three!  Four\nfive . six";
        let s = seg(text);
        let chars: Vec<char> = text.chars().collect();
        for (i, c) in chars.iter().enumerate() {
            if !c.is_whitespace() {
                assert!(s.iter().any(|&(a, b)| a <= i && i < b), "char {i} {c:?} uncovered in {s:?}");
            }
        }
    }
}
