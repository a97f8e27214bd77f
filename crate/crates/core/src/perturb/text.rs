//! Lossless word segmentation: concatenating the segments gives back the
//! original text.

use std::ops::Range;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub text: String,
    pub is_word: bool,
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Splits text into alternating word / non-word segments. A word is a run of
/// alphanumerics, optionally joined by inner apostrophes ("don't").
pub fn segments(text: &str) -> Vec<Segment> {
    let chars: Vec<char> = text.chars().collect();
    let mut out: Vec<Segment> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = i;
        if chars[i].is_alphanumeric() {
            while i < chars.len() {
                if chars[i].is_alphanumeric() {
                    i += 1;
                } else if is_apostrophe(chars[i])
                    && i + 1 < chars.len()
                    && chars[i + 1].is_alphanumeric()
                    && i > start
                {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push(Segment {
                text: chars[start..i].iter().collect(),
                is_word: true,
            });
        } else {
            while i < chars.len() && !chars[i].is_alphanumeric() {
                i += 1;
            }
            out.push(Segment {
                text: chars[start..i].iter().collect(),
                is_word: false,
            });
        }
    }
    out
}

/// Segment indices of the words, in order.
pub fn word_indices(segs: &[Segment]) -> Vec<usize> {
    segs.iter()
        .enumerate()
        .filter_map(|(i, s)| s.is_word.then_some(i))
        .collect()
}

pub fn word_count(text: &str) -> usize {
    segments(text).iter().filter(|s| s.is_word).count()
}

pub fn join(segs: &[Segment]) -> String {
    segs.iter().map(|s| s.text.as_str()).collect()
}

pub fn concat(segs: &[Segment], range: Range<usize>) -> String {
    join(&segs[range])
}

fn is_all_caps(s: &str) -> bool {
    let letters: Vec<char> = s.chars().filter(|c| c.is_alphabetic()).collect();
    letters.len() > 1 && letters.iter().all(|c| c.is_uppercase())
}

/// Gives `replacement` the capitalization of `original`: all caps stay all
/// caps, otherwise only the first letter's case is carried over.
pub fn match_case(original: &str, replacement: &str) -> String {
    if is_all_caps(original) {
        return replacement.to_uppercase();
    }
    let upper = original.chars().next().is_some_and(char::is_uppercase);
    let mut chars = replacement.chars();
    match chars.next() {
        Some(first) => {
            let head: String = if upper {
                first.to_uppercase().collect()
            } else {
                first.to_lowercase().collect()
            };
            head + chars.as_str()
        }
        None => String::new(),
    }
}

/// True when the word starts with an uppercase letter and is not the pronoun
/// "I".
pub fn is_capitalized(word: &str) -> bool {
    word != "I" && word.chars().next().is_some_and(char::is_uppercase)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splits_words_and_gaps() {
        let segs = segments("I don't know, James.");
        let words: Vec<&str> = segs.iter().filter(|s| s.is_word).map(|s| s.text.as_str()).collect();
        assert_eq!(words, vec!["I", "don't", "know", "James"]);
        assert_eq!(join(&segs), "I don't know, James.");
    }

    #[test]
    fn case_matching() {
        assert_eq!(match_case("James", "jamal"), "Jamal");
        assert_eq!(match_case("her", "His"), "his");
        assert_eq!(match_case("HER", "his"), "HIS");
        assert_eq!(match_case("A", "the"), "The");
    }

    proptest! {
        #[test]
        fn segmentation_is_lossless(s in "\\PC{0,60}") {
            prop_assert_eq!(join(&segments(&s)), s);
        }
    }
}
