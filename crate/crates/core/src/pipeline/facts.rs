use serde::{Deserialize, Serialize};

/// Verification outcome of one fact against the retrieved passage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Unverified,
    True,
    False,
    NotMentioned,
}

/// What assembly did with a fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    /// Not yet decided.
    Pending,
    Kept,
    Corrected,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicFact {
    /// 1-based position in extraction order.
    pub index: usize,
    pub text: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_text: Option<String>,
    pub disposition: Disposition,
}

impl AtomicFact {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        Self {
            index,
            text: text.into(),
            label: Label::Unverified,
            corrected_text: None,
            disposition: Disposition::Pending,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }

    /// Text this fact contributes downstream: the correction when there is one.
    pub fn current_text(&self) -> &str {
        self.corrected_text.as_deref().unwrap_or(&self.text)
    }
}

/// Ordered atomic facts of one answer.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FactSet {
    pub facts: Vec<AtomicFact>,
}

impl FactSet {
    pub fn new(facts: Vec<AtomicFact>) -> Self {
        Self { facts }
    }

    /// Builds a set from sentences, indexed from 1.
    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(
            texts
                .into_iter()
                .enumerate()
                .map(|(i, t)| AtomicFact::new(i + 1, t))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn with_label(&self, label: Label) -> impl Iterator<Item = &AtomicFact> {
        self.facts.iter().filter(move |f| f.label == label)
    }

    pub fn true_facts(&self) -> Vec<&AtomicFact> {
        self.with_label(Label::True).collect()
    }

    pub fn false_facts(&self) -> Vec<&AtomicFact> {
        self.with_label(Label::False).collect()
    }

    pub fn not_mentioned(&self) -> Vec<&AtomicFact> {
        self.with_label(Label::NotMentioned).collect()
    }

    pub fn has_false(&self) -> bool {
        self.facts.iter().any(|f| f.label == Label::False)
    }

    /// Facts that were not dropped, in extraction order.
    pub fn survivors(&self) -> impl Iterator<Item = &AtomicFact> {
        self.facts
            .iter()
            .filter(|f| f.disposition != Disposition::Dropped)
    }

    pub fn survivor_texts(&self) -> Vec<&str> {
        self.survivors().map(AtomicFact::current_text).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partitions_are_disjoint_and_cover() {
        let labels = [Label::True, Label::False, Label::NotMentioned, Label::True];
        let set = FactSet::new(
            labels
                .iter()
                .enumerate()
                .map(|(i, l)| AtomicFact::new(i + 1, format!("f{i}")).with_label(*l))
                .collect(),
        );
        let (t, f, nm) = (set.true_facts(), set.false_facts(), set.not_mentioned());
        assert_eq!(t.len() + f.len() + nm.len(), set.len());
        assert_eq!(t.iter().map(|f| f.index).collect::<Vec<_>>(), vec![1, 4]);
        assert!(set.has_false());
    }

    #[test]
    fn current_text_prefers_correction() {
        let mut fact = AtomicFact::new(1, "wrong");
        assert_eq!(fact.current_text(), "wrong");
        fact.corrected_text = Some("right".into());
        assert_eq!(fact.current_text(), "right");
    }
}
