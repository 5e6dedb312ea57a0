use std::collections::BTreeSet;

use super::{Bridge, Guarantee, KindSchema, ProtocolSpec, SpecComponent, SpecError};

fn prefixed(spec: &ProtocolSpec) -> ProtocolSpec {
    if spec.is_system() {
        return spec.clone();
    }
    let p = |s: &str| format!("{}.{s}", spec.name);
    ProtocolSpec {
        name: spec.name.clone(),
        parts: vec![spec.name.clone()],
        schema: spec.schema.iter().map(|k| KindSchema { kind: p(&k.kind), fields: k.fields.clone() }).collect(),
        components: spec
            .components
            .iter()
            .map(|c| SpecComponent {
                name: p(&c.name),
                kind: p(&c.kind),
                event: p(&c.event),
                timing: c.timing.as_ref().map(|t| super::Timing { after: p(&t.after), within_ms: t.within_ms }),
                ..c.clone()
            })
            .collect(),
        guarantees: spec.guarantees.iter().map(|g| Guarantee { from: p(&g.from), to: p(&g.to) }).collect(),
        bridges: spec.bridges.iter().map(|b| Bridge { from_event: p(&b.from_event), to_event: p(&b.to_event) }).collect(),
    }
}

/// Composes two specs into a system spec.
///
/// Kinds, components and events of a single-protocol input are prefixed with
/// its protocol name (`minip.ping_frame`); a system-spec input is taken as
/// is. `bridge` rules use the prefixed event names and route an event of one
/// protocol to the handler of another.
pub fn compose(base: &ProtocolSpec, other: &ProtocolSpec, bridge: &[Bridge]) -> Result<ProtocolSpec, SpecError> {
    let a = prefixed(base);
    let b = prefixed(other);

    let mut parts = BTreeSet::new();
    for p in a.parts.iter().chain(&b.parts) {
        if !parts.insert(p.as_str()) {
            return Err(SpecError::NameCollision(p.clone()));
        }
    }
    let mut seen = BTreeSet::new();
    for name in a.components.iter().chain(&b.components).flat_map(|c| [&c.name, &c.event]) {
        if !seen.insert(name.as_str()) {
            return Err(SpecError::NameCollision(name.clone()));
        }
    }
    let mut kinds = BTreeSet::new();
    for k in a.schema.iter().chain(&b.schema) {
        if !kinds.insert(k.kind.as_str()) {
            return Err(SpecError::NameCollision(k.kind.clone()));
        }
    }

    let mut out = ProtocolSpec {
        name: a.parts.iter().chain(&b.parts).cloned().collect::<Vec<_>>().join("+"),
        parts: a.parts.iter().chain(&b.parts).cloned().collect(),
        schema: a.schema.into_iter().chain(b.schema).collect(),
        components: a.components.into_iter().chain(b.components).collect(),
        guarantees: a.guarantees.into_iter().chain(b.guarantees).collect(),
        bridges: a.bridges.into_iter().chain(b.bridges).collect(),
    };
    for rule in bridge {
        for ev in [&rule.from_event, &rule.to_event] {
            if out.component_for_event(ev).is_none() {
                return Err(SpecError::DanglingBridge(ev.clone()));
            }
        }
        out.bridges.push(rule.clone());
    }
    Ok(out)
}
