//! Per-component token and latency accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::request::Role;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentUsage {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
}

impl ComponentUsage {
    fn add(&mut self, other: &ComponentUsage) {
        self.calls += other.calls;
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
        self.latency_ms += other.latency_ms;
    }
}

/// Sums per role, plus perception latency, which costs no tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub roles: BTreeMap<Role, ComponentUsage>,
    pub perceptor: ComponentUsage,
}

impl UsageLedger {
    pub fn record_call(&mut self, role: Role, input_tokens: u64, output_tokens: u64, latency_ms: u64) {
        self.roles.entry(role).or_default().add(&ComponentUsage {
            calls: 1,
            input_tokens,
            output_tokens,
            latency_ms,
        });
    }

    pub fn record_perception(&mut self, latency_ms: u64) {
        self.perceptor.calls += 1;
        self.perceptor.latency_ms += latency_ms;
    }

    pub fn role(&self, role: Role) -> ComponentUsage {
        self.roles.get(&role).copied().unwrap_or_default()
    }

    /// Model-call totals; perception contributes latency only.
    pub fn total(&self) -> ComponentUsage {
        let mut t = ComponentUsage::default();
        for u in self.roles.values() {
            t.add(u);
        }
        t.latency_ms += self.perceptor.latency_ms;
        t
    }

    pub fn merge(&mut self, other: &UsageLedger) {
        for (role, u) in &other.roles {
            self.roles.entry(*role).or_default().add(u);
        }
        self.perceptor.add(&other.perceptor);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_sum_components() {
        let mut l = UsageLedger::default();
        l.record_call(Role::Manager, 10, 2, 5);
        l.record_call(Role::Manager, 1, 1, 1);
        l.record_call(Role::Operator, 3, 4, 0);
        l.record_perception(7);
        assert_eq!(l.role(Role::Manager).calls, 2);
        let t = l.total();
        assert_eq!((t.calls, t.input_tokens, t.output_tokens, t.latency_ms), (3, 14, 7, 13));
        let mut m = UsageLedger::default();
        m.merge(&l);
        m.merge(&l);
        assert_eq!(m.total().input_tokens, 28);
    }
}
