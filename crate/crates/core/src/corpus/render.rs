//! Templated natural-language rendering of propositions.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ObjectRef, Proposition, State, TopicalProposition};

use super::CorpusError;

pub const PATTERNS_PER_TEMPLATE: usize = 5;

/// Five surface forms for one topical proposition. Slots are written `{i}`
/// and each must occur exactly once per pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceTemplate {
    pub topical: TopicalProposition,
    pub patterns: Vec<String>,
}

impl SentenceTemplate {
    pub fn validate(&self, max_predicate_fraction: f64) -> Result<(), CorpusError> {
        let bad = |msg: String| CorpusError::Template {
            topical: self.topical.to_string(),
            msg,
        };
        if self.patterns.len() != PATTERNS_PER_TEMPLATE {
            return Err(bad(format!("{} patterns, need {PATTERNS_PER_TEMPLATE}", self.patterns.len())));
        }
        for p in &self.patterns {
            for i in 0..self.topical.arity() {
                let n = p.matches(&format!("{{{i}}}")).count();
                if n != 1 {
                    return Err(bad(format!("slot {{{i}}} appears {n} times in `{p}`")));
                }
            }
            if p.matches('{').count() != self.topical.arity() {
                return Err(bad(format!("`{p}` has stray slots")));
            }
        }
        let frac = self.predicate_mention_fraction();
        if frac > max_predicate_fraction {
            return Err(bad(format!(
                "predicate named in {frac:.2} of patterns, limit {max_predicate_fraction:.2}"
            )));
        }
        Ok(())
    }

    /// Fraction of patterns whose word sequence contains the predicate name
    /// (hyphen-split) contiguously.
    pub fn predicate_mention_fraction(&self) -> f64 {
        let name: Vec<String> = self
            .topical
            .predicate
            .split(|c: char| !c.is_alphanumeric())
            .filter(|s| !s.is_empty())
            .map(str::to_lowercase)
            .collect();
        let hits = self
            .patterns
            .iter()
            .filter(|p| {
                let words: Vec<String> = p
                    .split(|c: char| !c.is_alphanumeric())
                    .filter(|s| !s.is_empty())
                    .map(str::to_lowercase)
                    .collect();
                words.windows(name.len()).any(|w| w == name.as_slice())
            })
            .count();
        hits as f64 / self.patterns.len() as f64
    }

    pub fn fill(&self, pattern: usize, params: &[ObjectRef]) -> String {
        let mut s = self.patterns[pattern].clone();
        for (i, o) in params.iter().enumerate() {
            s = s.replace(&format!("{{{i}}}"), &o.name);
        }
        s
    }

    /// Reference reverse matcher: if `sentence` is an instance of pattern
    /// `pattern`, returns the objects bound to each slot.
    pub fn match_pattern(&self, pattern: usize, sentence: &str, objects: &[ObjectRef]) -> Option<Vec<ObjectRef>> {
        let pat = &self.patterns[pattern];
        // split the pattern into literal pieces and slot indices
        let mut pieces: Vec<&str> = Vec::new();
        let mut slots: Vec<usize> = Vec::new();
        let mut rest = pat.as_str();
        while let Some(start) = rest.find('{') {
            let end = rest[start..].find('}')? + start;
            pieces.push(&rest[..start]);
            slots.push(rest[start + 1..end].parse().ok()?);
            rest = &rest[end + 1..];
        }
        pieces.push(rest);
        let mut bound: Vec<Option<ObjectRef>> = vec![None; self.topical.arity()];
        let mut cursor = sentence.strip_prefix(pieces[0])?;
        for (k, &slot) in slots.iter().enumerate() {
            let next = pieces[k + 1];
            let obj = objects.iter().find(|o| {
                o.ty == self.topical.signature[slot]
                    && cursor.starts_with(o.name.as_str())
                    && cursor[o.name.len()..].starts_with(next)
            })?;
            cursor = &cursor[obj.name.len() + next.len()..];
            bound[slot] = Some(obj.clone());
        }
        if !cursor.is_empty() {
            return None;
        }
        bound.into_iter().collect()
    }
}

/// Renders every proposition of every state as one sentence, with the
/// template chosen uniformly at random. Sentence order inside a state text is
/// shuffled; the returned gold labels follow the same order.
pub fn render(
    trace: &[State],
    templates: &[SentenceTemplate],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Vec<String>>, Vec<Vec<Proposition>>), CorpusError> {
    let mut texts = Vec::with_capacity(trace.len());
    let mut gold = Vec::with_capacity(trace.len());
    for state in trace {
        let (t, g) = render_state(state.iter(), templates, rng)?;
        texts.push(t);
        gold.push(g);
    }
    Ok((texts, gold))
}

pub fn render_state<'a>(
    props: impl Iterator<Item = &'a Proposition>,
    templates: &[SentenceTemplate],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<String>, Vec<Proposition>), CorpusError> {
    let mut pairs: Vec<(String, Proposition)> = Vec::new();
    for p in props {
        let topical = p.topical();
        let t = templates
            .iter()
            .find(|t| t.topical == topical)
            .ok_or_else(|| CorpusError::MissingTemplate(topical.to_string()))?;
        let k = rng.random_range(0..t.patterns.len());
        pairs.push((t.fill(k, &p.params), p.clone()));
    }
    // Fisher-Yates over the pairs so sentences and labels stay aligned
    for i in (1..pairs.len()).rev() {
        let j = rng.random_range(0..=i);
        pairs.swap(i, j);
    }
    Ok(pairs.into_iter().unzip())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::bundled;
    use rand::SeedableRng;

    #[test]
    fn bundled_templates_are_valid() {
        for name in bundled::NAMES {
            for t in bundled::by_name(name).unwrap().templates {
                t.validate(0.8).unwrap();
            }
        }
    }

    #[test]
    fn some_clear_form_omits_the_word() {
        let b = bundled::blocks();
        let t = b.templates.iter().find(|t| t.topical.predicate == "clear").unwrap();
        let b1 = ObjectRef::new("Block1", "Block");
        let forms: Vec<String> = (0..5).map(|k| t.fill(k, std::slice::from_ref(&b1))).collect();
        assert!(forms.iter().any(|f| !f.to_lowercase().contains("clear")));
        assert!(forms.iter().all(|f| f.contains("Block1")));
    }

    #[test]
    fn empty_state_renders_empty_text() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (texts, gold) = render(&[State::new()], &bundled::blocks().templates, &mut rng).unwrap();
        assert_eq!(texts, vec![Vec::<String>::new()]);
        assert!(gold[0].is_empty());
    }

    #[test]
    fn missing_template_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s: State = [Proposition::new("flying", vec![])].into_iter().collect();
        assert!(matches!(
            render(&[s], &bundled::blocks().templates, &mut rng),
            Err(CorpusError::MissingTemplate(_))
        ));
    }

    #[test]
    fn validation_catches_slot_errors() {
        let t = SentenceTemplate {
            topical: TopicalProposition::new("on", &["Block", "Block"]),
            patterns: vec!["{0} on {0}".into(); 5],
        };
        assert!(t.validate(1.0).is_err());
    }
}
