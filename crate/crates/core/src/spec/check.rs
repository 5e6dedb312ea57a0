use serde::{Deserialize, Serialize};

use super::{evaluate, print_predicate, ProtocolSpec, SpecComponent, SpecError, Subject};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ViolationKind {
    /// Requirement `index` of the component does not hold.
    Requirement { index: usize, requirement: String },
    /// The event came later than its deadline after the trigger.
    Deadline { trigger_event: String, trigger_at: u64, within_ms: u64 },
    /// A requirement could not be evaluated on the subject (missing field,
    /// wrong value type).
    Evaluation { index: usize, error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub event: String,
    pub component: String,
    pub kind: ViolationKind,
    pub subject: String,
    pub clock: u64,
}

fn check_component(c: &SpecComponent, subject: &Subject, clock: u64, out: &mut Vec<Violation>) {
    for (index, req) in c.requirements.iter().enumerate() {
        let kind = match evaluate(req, subject) {
            Ok(true) => continue,
            Ok(false) => ViolationKind::Requirement { index, requirement: print_predicate(req, &c.param) },
            Err(e) => ViolationKind::Evaluation { index, error: e.to_string() },
        };
        out.push(Violation { event: c.event.clone(), component: c.name.clone(), kind, subject: subject.snapshot(), clock });
    }
}

/// Checks `subject` against every requirement attached to `event`, plus the
/// handlers that bridge rules route `event` to.
///
/// `trigger_at` is the clock of the paired triggering event when the handler
/// carries a response deadline; the deadline is checked only when it is
/// given. An empty result means the subject conforms.
pub fn check_event(spec: &ProtocolSpec, event: &str, subject: &Subject, clock: u64, trigger_at: Option<u64>) -> Result<Vec<Violation>, SpecError> {
    let c = spec.component_for_event(event).ok_or_else(|| SpecError::UnknownEvent(event.to_string()))?;
    let mut out = Vec::new();
    check_component(c, subject, clock, &mut out);
    if let (Some(t), Some(at)) = (&c.timing, trigger_at) {
        if clock.saturating_sub(at) > t.within_ms {
            out.push(Violation {
                event: c.event.clone(),
                component: c.name.clone(),
                kind: ViolationKind::Deadline { trigger_event: t.after.clone(), trigger_at: at, within_ms: t.within_ms },
                subject: subject.snapshot(),
                clock,
            });
        }
    }
    for b in spec.bridges.iter().filter(|b| b.from_event == event) {
        let target = spec.component_for_event(&b.to_event).ok_or_else(|| SpecError::DanglingBridge(b.to_event.clone()))?;
        let mut routed = subject.clone();
        routed.kind = target.kind.clone();
        check_component(target, &routed, clock, &mut out);
    }
    Ok(out)
}
