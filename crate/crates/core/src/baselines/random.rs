use crate::error::Result;
use crate::matching::{match_within, DistanceSpec, MatchAssignment, Representations, TreatmentVector};

/// Uniform random matching: every unit gets a control and a treated match
/// drawn uniformly (and independently across units) from the respective arm.
///
/// Same-arm draws skip the unit itself unless it is alone in its arm.
pub fn random_match(t: &TreatmentVector, seed: u64) -> Result<MatchAssignment> {
    let placeholder = vec![0.0; t.len()];
    match_within(Representations::Scalars(&placeholder), t, &DistanceSpec::random(seed))
}
