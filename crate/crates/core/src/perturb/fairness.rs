use std::collections::BTreeMap;

use rand::Rng;

use super::lexicon::{FairnessLexicon, MAN, WOMAN};
use super::text::{match_case, word_indices};
use super::{
    build_perturbed, example_rng, text_fields, EntityRecognizer, FairnessKind, FieldEdit, NerMode,
    NotApplicable, PerturbationKind, PerturbedExample, SkipReason,
};
use crate::dataset::Example;

fn pick<'a, R: Rng>(rng: &mut R, pool: &[&'a str]) -> Option<&'a str> {
    if pool.is_empty() {
        None
    } else {
        Some(pool[rng.random_range(0..pool.len())])
    }
}

/// Swaps first names to another race/ethnicity group, or swaps gendered
/// names and terms. Names inside a recognized entity are protected; in
/// `NerMode::Example` any protected hit skips the whole example.
pub fn perturb_fairness(
    example: &Example,
    lexicon: &FairnessLexicon,
    kind: FairnessKind,
    seed: u64,
    recognizer: &dyn EntityRecognizer,
    ner_mode: NerMode,
) -> Result<PerturbedExample, NotApplicable> {
    let pkind = PerturbationKind::Fairness(kind);
    let mut rng = example_rng(seed, &example.uid, &pkind.to_string());
    let mut entity_hit = false;
    let mut edits = BTreeMap::new();

    for (field, segs) in text_fields(example) {
        let protected = recognizer.entity_words(&segs);
        let mut field_edits = Vec::new();
        for (ordinal, si) in word_indices(&segs).into_iter().enumerate() {
            let word = segs[si].text.as_str();
            let replacement = match kind {
                FairnessKind::Race => match lexicon.group_of(word) {
                    Some(group) => {
                        if protected.contains(&ordinal) {
                            entity_hit = true;
                            continue;
                        }
                        pick(&mut rng, &lexicon.names_outside_group(group))
                    }
                    None => None,
                },
                FairnessKind::Gender => {
                    if let Some(g) = lexicon.gender_of(word) {
                        if protected.contains(&ordinal) {
                            entity_hit = true;
                            continue;
                        }
                        let other = if g == WOMAN { MAN } else { WOMAN };
                        let pool: Vec<&str> = lexicon.names_of_gender(other).iter().map(String::as_str).collect();
                        pick(&mut rng, &pool)
                    } else {
                        lexicon.paired_term(word)
                    }
                }
            };
            if let Some(r) = replacement {
                field_edits.push(FieldEdit {
                    seg_range: si..si + 1,
                    position: ordinal,
                    replacement: match_case(word, r),
                });
            }
        }
        edits.insert(field, (segs, field_edits));
    }

    if entity_hit && ner_mode == NerMode::Example {
        return Err(NotApplicable {
            reason: SkipReason::EntitySkipped,
        });
    }
    build_perturbed(example, pkind, edits).map_err(|e| {
        if entity_hit {
            NotApplicable {
                reason: SkipReason::EntitySkipped,
            }
        } else {
            e
        }
    })
}
