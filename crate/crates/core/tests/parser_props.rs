use proptest::prelude::*;
use scenetag::builtin_schema;
use scenetag::parsing::{match_tag, MatchTier};

fn category_index() -> impl Strategy<Value = usize> {
    0..builtin_schema().categories.len()
}

/// Answers stitched together from filler words and the category's own
/// vocabulary, so that the interesting tiers are actually exercised.
fn answer_for(cat: usize) -> impl Strategy<Value = String> {
    let c = &builtin_schema().categories[cat];
    let mut words: Vec<String> = c.tags.clone();
    words.extend(c.synonyms.values().flatten().cloned());
    words.extend(
        ["the", "answer", "is", "not", "maybe", "image", "shows", "a", "Answer:", ".", "\"", ",", "unclearly", "lanes"]
            .map(String::from),
    );
    prop::collection::vec(prop::sample::select(words), 0..8).prop_map(|w| w.join(" "))
}

fn flip_case(s: &str, mask: &[bool]) -> String {
    s.chars()
        .zip(mask.iter().cycle())
        .map(|(c, &up)| if up { c.to_ascii_uppercase() } else { c.to_ascii_lowercase() })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn output_is_always_in_vocabulary(cat in category_index(), raw in "\\PC{0,60}", strict in any::<bool>()) {
        let c = &builtin_schema().categories[cat];
        if let Ok(p) = match_tag(&raw, c, strict) {
            prop_assert!(c.tags.contains(&p.tag), "{:?} not in {:?}", p.tag, c.tags);
        }
    }

    #[test]
    fn structured_answers_stay_in_vocabulary(
        (cat, raw) in category_index().prop_flat_map(|c| (Just(c), answer_for(c))),
        strict in any::<bool>(),
    ) {
        let c = &builtin_schema().categories[cat];
        match match_tag(&raw, c, strict) {
            Ok(p) => prop_assert!(c.tags.contains(&p.tag)),
            Err(e) => {
                prop_assert!(strict || c.fallback_tag.is_none());
                prop_assert_eq!(e.raw, raw);
            }
        }
    }

    #[test]
    fn ascii_case_does_not_matter(
        (cat, raw) in category_index().prop_flat_map(|c| (Just(c), answer_for(c))),
        mask in prop::collection::vec(any::<bool>(), 1..16),
    ) {
        let c = &builtin_schema().categories[cat];
        let a = match_tag(&raw, c, true).map(|p| (p.tag, p.tier));
        let b = match_tag(&flip_case(&raw, &mask), c, true).map(|p| (p.tag, p.tier));
        prop_assert_eq!(a.ok(), b.ok());
    }

    #[test]
    fn uppercasing_does_not_matter(cat in category_index(), raw in "\\PC{0,40}") {
        let c = &builtin_schema().categories[cat];
        let a = match_tag(&raw, c, true).map(|p| (p.tag, p.tier)).ok();
        let b = match_tag(&raw.to_uppercase(), c, true).map(|p| (p.tag, p.tier)).ok();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn tag_in_a_sentence_is_found(cat in category_index(), pick in any::<prop::sample::Index>()) {
        let c = &builtin_schema().categories[cat];
        // Only meaningful when no other tag occurs inside the chosen one.
        let tag = pick.get(&c.tags);
        let clean = c.tags.iter().filter(|t| *t != tag).all(|t| !tag.contains(t.as_str()));
        prop_assume!(clean);
        let p = match_tag(&format!("I would say {tag}, judging from the picture"), c, true).unwrap();
        prop_assert_eq!(&p.tag, tag);
        prop_assert_eq!(p.tier, MatchTier::Substring);
    }
}

#[test]
fn every_builtin_tag_matches_itself_exactly() {
    for c in &builtin_schema().categories {
        for t in &c.tags {
            for raw in [t.clone(), t.to_uppercase(), format!("  {t}. "), format!("Answer: \"{t}\"")] {
                let p = match_tag(&raw, c, true).unwrap_or_else(|e| panic!("{e}"));
                assert_eq!((&p.tag, p.tier), (t, MatchTier::Exact), "{raw:?} in {}", c.name);
            }
        }
    }
}

#[test]
fn every_builtin_synonym_resolves_to_its_tag() {
    for c in &builtin_schema().categories {
        for (tag, alts) in &c.synonyms {
            for alt in alts {
                let p = match_tag(alt, c, true).unwrap();
                assert_eq!((&p.tag, p.tier), (tag, MatchTier::Synonym), "{alt:?} in {}", c.name);
            }
        }
    }
}

#[test]
fn longer_lane_mark_tags_win() {
    let schema = builtin_schema();
    let c = schema.category("Lane marks").unwrap();
    let tag = |raw: &str| match_tag(raw, c, true).unwrap().tag;
    assert_eq!(tag("normal lane marks"), "normal lane marks");
    assert_eq!(tag("no lane marks"), "no lane marks");
    assert_eq!(tag("The road has normal lane marks."), "normal lane marks");
    assert_eq!(tag("I can see no lane marks here"), "no lane marks");
}

#[test]
fn clear_is_not_found_inside_unclearly() {
    let schema = builtin_schema();
    let c = schema.category("Weather").unwrap();
    assert!(match_tag("unclearly visible", c, true).is_err());
    assert_eq!(match_tag("unclearly visible", c, false).unwrap().tier, MatchTier::Fallback);
    assert_eq!(match_tag("it is clear", c, true).unwrap().tag, "clear");
}

#[test]
fn earliest_mention_wins() {
    let schema = builtin_schema();
    let c = schema.category("Time of day").unwrap();
    assert_eq!(match_tag("It is daytime, not nighttime", c, true).unwrap().tag, "daytime");
}
