use super::{Disposition, FactSet, Label, PipelineError};
use crate::config::NmPolicy;

/// Decides the disposition of every fact.
///
/// True facts are kept and False facts contribute their correction. Not
/// Mentioned facts are kept or dropped per `nm_policy`. Unverified facts keep
/// whatever correction decided. Order is never changed, and applying
/// assembly twice gives the same result.
pub fn assemble(facts: &FactSet, nm_policy: NmPolicy) -> Result<FactSet, PipelineError> {
    let mut out = facts.clone();
    for fact in &mut out.facts {
        fact.disposition = match fact.label {
            Label::True => Disposition::Kept,
            Label::False => match (&fact.corrected_text, fact.disposition) {
                (Some(_), _) => Disposition::Corrected,
                // correction came back empty and fell back to the original
                (None, Disposition::Kept) => Disposition::Kept,
                (None, _) => return Err(PipelineError::UncorrectedFalse { index: fact.index }),
            },
            Label::NotMentioned => match nm_policy {
                NmPolicy::Keep => Disposition::Kept,
                NmPolicy::Drop => Disposition::Dropped,
            },
            Label::Unverified => match fact.disposition {
                Disposition::Pending => Disposition::Kept,
                other => other,
            },
        };
    }
    Ok(out)
}
