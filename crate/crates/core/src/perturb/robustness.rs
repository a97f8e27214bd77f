use std::collections::BTreeMap;
use std::ops::Range;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::text::{match_case, Segment};
use super::{build_perturbed, example_rng, text_fields, FieldEdit, NotApplicable, PerturbationKind, PerturbedExample, Transform};
use crate::dataset::Example;

/// Fraction of words an example may have edited, rounded up, minimum one.
pub const EDIT_BUDGET: f64 = 0.15;

/// Words shorter than this are left alone by keyboard and typo noise.
const MIN_NOISY_LEN: usize = 4;

const CONTRACTIONS: &[(&str, &str)] = &[
    ("do not", "don't"),
    ("does not", "doesn't"),
    ("did not", "didn't"),
    ("is not", "isn't"),
    ("are not", "aren't"),
    ("was not", "wasn't"),
    ("were not", "weren't"),
    ("can not", "can't"),
    ("cannot", "can't"),
    ("will not", "won't"),
    ("would not", "wouldn't"),
    ("should not", "shouldn't"),
    ("could not", "couldn't"),
    ("have not", "haven't"),
    ("has not", "hasn't"),
    ("had not", "hadn't"),
    ("i am", "i'm"),
    ("you are", "you're"),
    ("we are", "we're"),
    ("they are", "they're"),
    ("it is", "it's"),
    ("that is", "that's"),
    ("there is", "there's"),
    ("he is", "he's"),
    ("she is", "she's"),
    ("i will", "i'll"),
    ("you will", "you'll"),
    ("we will", "we'll"),
    ("they will", "they'll"),
    ("i have", "i've"),
    ("we have", "we've"),
    ("they have", "they've"),
    ("you have", "you've"),
    ("let us", "let's"),
    ("i would", "i'd"),
];

const MISSPELLINGS: &[(&str, &str)] = &[
    ("receive", "recieve"),
    ("believe", "beleive"),
    ("definitely", "definately"),
    ("separate", "seperate"),
    ("occurred", "occured"),
    ("until", "untill"),
    ("because", "becuase"),
    ("which", "wich"),
    ("their", "thier"),
    ("friend", "freind"),
    ("weird", "wierd"),
    ("tomorrow", "tommorow"),
    ("beginning", "begining"),
    ("really", "realy"),
    ("restaurant", "restaraunt"),
    ("necessary", "neccessary"),
    ("government", "goverment"),
    ("different", "diffrent"),
    ("environment", "enviroment"),
    ("accommodate", "accomodate"),
    ("address", "adress"),
    ("business", "buisness"),
    ("calendar", "calender"),
    ("embarrass", "embarass"),
    ("existence", "existance"),
    ("finally", "finaly"),
    ("probably", "probaly"),
    ("across", "accross"),
    ("already", "allready"),
    ("argument", "arguement"),
    ("truly", "truely"),
    ("library", "libary"),
    ("surprise", "suprise"),
    ("february", "febuary"),
    ("foreign", "foriegn"),
    ("interesting", "intresting"),
    ("tongue", "tounge"),
    ("beautiful", "beutiful"),
    ("excellent", "excelent"),
];

const OCR_CONFUSIONS: &[(&str, &str)] = &[
    ("O", "0"),
    ("o", "0"),
    ("0", "O"),
    ("l", "1"),
    ("I", "1"),
    ("1", "l"),
    ("S", "5"),
    ("5", "S"),
    ("B", "8"),
    ("8", "B"),
    ("rn", "m"),
    ("m", "rn"),
];

const KEY_ROWS: [&str; 3] = ["qwertyuiop", "asdfghjkl", "zxcvbnm"];

fn key_neighbors(c: char) -> Vec<char> {
    let lower = c.to_ascii_lowercase();
    let rows: Vec<Vec<char>> = KEY_ROWS.iter().map(|r| r.chars().collect()).collect();
    let Some((r, i)) = rows
        .iter()
        .enumerate()
        .find_map(|(r, row)| row.iter().position(|&k| k == lower).map(|i| (r, i)))
    else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut take = |row: usize, idx: isize| {
        if idx >= 0 {
            if let Some(&k) = rows[row].get(idx as usize) {
                out.push(k);
            }
        }
    };
    let i = i as isize;
    take(r, i - 1);
    take(r, i + 1);
    if r > 0 {
        take(r - 1, i);
        take(r - 1, i + 1);
    }
    if r + 1 < rows.len() {
        take(r + 1, i - 1);
        take(r + 1, i);
    }
    if c.is_uppercase() {
        out.iter_mut().for_each(|k| *k = k.to_ascii_uppercase());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypoOp {
    Swap,
    Delete,
    Duplicate,
}

/// Applies one typo at character index `pos`. Swap exchanges `pos` and
/// `pos + 1`. Returns `None` when `pos` is out of range.
pub fn apply_typo(word: &str, op: TypoOp, pos: usize) -> Option<String> {
    let mut chars: Vec<char> = word.chars().collect();
    match op {
        TypoOp::Swap if pos + 1 < chars.len() => chars.swap(pos, pos + 1),
        TypoOp::Delete if pos < chars.len() => {
            chars.remove(pos);
        }
        TypoOp::Duplicate if pos < chars.len() => chars.insert(pos, chars[pos]),
        _ => return None,
    }
    Some(chars.into_iter().collect())
}

fn normalize_apostrophes(s: &str) -> String {
    s.replace('\u{2019}', "'")
}

fn lookup<'a>(table: &'a [(&'a str, &'a str)], key: &str, reverse: bool) -> Option<&'a str> {
    table
        .iter()
        .find(|(a, b)| if reverse { *b == key } else { *a == key })
        .map(|(a, b)| if reverse { *a } else { *b })
}

struct Candidate {
    field: usize,
    seg_range: Range<usize>,
    position: usize,
}

fn candidates(transform: Transform, segs: &[Segment]) -> Vec<(Range<usize>, usize)> {
    let mut out = Vec::new();
    let mut ordinal = 0usize;
    for (i, seg) in segs.iter().enumerate() {
        let len = seg.text.chars().count();
        let lower = normalize_apostrophes(&seg.text.to_lowercase());
        let hit = if seg.is_word {
            match transform {
                Transform::Contraction => {
                    let pair = segs.get(i + 1).zip(segs.get(i + 2)).filter(|(gap, next)| {
                        gap.text == " " && next.is_word && {
                            let phrase = format!("{lower} {}", next.text.to_lowercase());
                            lookup(CONTRACTIONS, &phrase, false).is_some()
                        }
                    });
                    if pair.is_some() {
                        out.push((i..i + 3, ordinal));
                    }
                    lookup(CONTRACTIONS, &lower, true).is_some() || lookup(CONTRACTIONS, &lower, false).is_some()
                }
                Transform::Keyboard => len >= MIN_NOISY_LEN && seg.text.chars().any(|c| !key_neighbors(c).is_empty()),
                Transform::Typos => len >= MIN_NOISY_LEN,
                Transform::Ocr => OCR_CONFUSIONS.iter().any(|(from, _)| seg.text.contains(from)),
                Transform::SpellingError => lookup(MISSPELLINGS, &lower, false).is_some(),
                Transform::WordCase => seg.text.chars().any(char::is_alphabetic),
                Transform::Punctuation => i + 1 == segs.len(),
            }
        } else {
            transform == Transform::Punctuation && seg.text.chars().any(|c| c.is_ascii_punctuation())
        };
        if hit {
            out.push((i..i + 1, ordinal));
        }
        if seg.is_word {
            ordinal += 1;
        }
    }
    out
}

fn replace(transform: Transform, segs: &[Segment], range: &Range<usize>, rng: &mut ChaCha8Rng) -> Option<String> {
    let original: String = segs[range.clone()].iter().map(|s| s.text.as_str()).collect();
    let chars: Vec<char> = original.chars().collect();
    match transform {
        Transform::Contraction => {
            let key = normalize_apostrophes(&original.to_lowercase());
            let out = lookup(CONTRACTIONS, &key, false).or_else(|| lookup(CONTRACTIONS, &key, true))?;
            Some(match_case(&original, out))
        }
        Transform::Keyboard => {
            let spots: Vec<usize> = (0..chars.len()).filter(|&i| !key_neighbors(chars[i]).is_empty()).collect();
            let &at = spots.choose(rng)?;
            let &sub = key_neighbors(chars[at]).choose(rng)?;
            let mut chars = chars;
            chars[at] = sub;
            Some(chars.into_iter().collect())
        }
        Transform::Typos => {
            let op = [TypoOp::Swap, TypoOp::Delete, TypoOp::Duplicate][rng.random_range(0..3)];
            // first and last characters stay put
            let hi = match op {
                TypoOp::Swap => chars.len().saturating_sub(2),
                _ => chars.len().saturating_sub(1),
            };
            if hi <= 1 {
                return None;
            }
            apply_typo(&original, op, rng.random_range(1..hi))
        }
        Transform::Ocr => {
            let mut spots = Vec::new();
            for (from, to) in OCR_CONFUSIONS {
                for (at, _) in original.match_indices(from) {
                    spots.push((at, *from, *to));
                }
            }
            let &(at, from, to) = spots.choose(rng)?;
            Some(format!("{}{}{}", &original[..at], to, &original[at + from.len()..]))
        }
        Transform::SpellingError => {
            let out = lookup(MISSPELLINGS, &original.to_lowercase(), false)?;
            Some(match_case(&original, out))
        }
        Transform::WordCase => {
            if chars.iter().any(|c| c.is_uppercase()) {
                Some(original.to_lowercase())
            } else {
                Some(original.to_uppercase())
            }
        }
        Transform::Punctuation => {
            if segs[range.start].is_word {
                return Some(format!("{original}."));
            }
            let stripped: String = chars.iter().filter(|c| !c.is_ascii_punctuation()).collect();
            let between_words = range.start > 0 && range.end < segs.len();
            if between_words && stripped.is_empty() {
                Some(" ".to_string())
            } else {
                Some(stripped)
            }
        }
    }
}

/// Applies a character- or word-level transform to at most
/// ceil(`EDIT_BUDGET` × words) non-overlapping spans, picked at random.
pub fn perturb_robustness(example: &Example, transform: Transform, seed: u64) -> Result<PerturbedExample, NotApplicable> {
    let kind = PerturbationKind::Robustness(transform);
    let mut rng = example_rng(seed, &example.uid, &kind.to_string());
    let fields = text_fields(example);
    let words: usize = fields.iter().map(|(_, s)| s.iter().filter(|g| g.is_word).count()).sum();
    let budget = ((words as f64 * EDIT_BUDGET).ceil() as usize).max(1);

    let mut pool: Vec<Candidate> = fields
        .iter()
        .enumerate()
        .flat_map(|(f, (_, segs))| {
            candidates(transform, segs)
                .into_iter()
                .map(move |(seg_range, position)| Candidate {
                    field: f,
                    seg_range,
                    position,
                })
        })
        .collect();
    pool.shuffle(&mut rng);

    let mut chosen: Vec<(Candidate, String)> = Vec::new();
    for c in pool {
        if chosen.len() == budget {
            break;
        }
        let overlaps = chosen.iter().any(|(d, _)| {
            d.field == c.field && d.seg_range.start < c.seg_range.end && c.seg_range.start < d.seg_range.end
        });
        if overlaps {
            continue;
        }
        let segs = &fields[c.field].1;
        let original: String = segs[c.seg_range.clone()].iter().map(|s| s.text.as_str()).collect();
        if let Some(r) = replace(transform, segs, &c.seg_range, &mut rng) {
            if r != original {
                chosen.push((c, r));
            }
        }
    }

    let mut edits: BTreeMap<String, (Vec<Segment>, Vec<FieldEdit>)> = fields
        .iter()
        .map(|(name, segs)| (name.clone(), (segs.clone(), Vec::new())))
        .collect();
    for (c, replacement) in chosen {
        let name = &fields[c.field].0;
        edits.get_mut(name).expect("field exists").1.push(FieldEdit {
            seg_range: c.seg_range,
            position: c.position,
            replacement,
        });
    }
    build_perturbed(example, kind, edits)
}
