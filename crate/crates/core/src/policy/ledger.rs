use serde::{Deserialize, Serialize};

/// Per-token prices charged for agent inference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenRates {
    pub input: f64,
    pub output: f64,
}

impl TokenRates {
    pub fn uniform(rate: f64) -> Self {
        Self {
            input: rate,
            output: rate,
        }
    }

    pub fn charge(&self, tokens_in: u64, tokens_out: u64) -> f64 {
        tokens_in as f64 * self.input + tokens_out as f64 * self.output
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub tokens_in: u64,
    pub tokens_out: u64,
    /// Wall-clock seconds spent on the exchange.
    pub wall_latency: f64,
    pub monetary_cost: f64,
    #[serde(default)]
    pub fault: bool,
}

impl LedgerEntry {
    pub fn priced(tokens_in: u64, tokens_out: u64, wall_latency: f64, rates: TokenRates) -> Self {
        Self {
            tokens_in,
            tokens_out,
            wall_latency,
            monetary_cost: rates.charge(tokens_in, tokens_out),
            fault: false,
        }
    }

    pub fn faulted(wall_latency: f64) -> Self {
        Self {
            tokens_in: 0,
            tokens_out: 0,
            wall_latency,
            monetary_cost: 0.0,
            fault: true,
        }
    }
}

/// Token usage and latency of every decision routed to an agentic policy.
/// Totals are always derived from the entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InferenceCostLedger {
    pub entries: Vec<LedgerEntry>,
}

impl InferenceCostLedger {
    pub fn push(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_tokens_in(&self) -> u64 {
        self.entries.iter().map(|e| e.tokens_in).sum()
    }

    pub fn total_tokens_out(&self) -> u64 {
        self.entries.iter().map(|e| e.tokens_out).sum()
    }

    pub fn total_latency(&self) -> f64 {
        self.entries.iter().map(|e| e.wall_latency).sum()
    }

    pub fn total_cost(&self) -> f64 {
        self.entries.iter().map(|e| e.monetary_cost).sum()
    }

    pub fn fault_count(&self) -> usize {
        self.entries.iter().filter(|e| e.fault).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_rate_charges_all_tokens() {
        let r = 0.002;
        let e = LedgerEntry::priced(120, 15, 0.1, TokenRates::uniform(r));
        assert_eq!(e.monetary_cost, 135.0 * r);
    }

    #[test]
    fn split_rates() {
        let rates = TokenRates {
            input: 1e-6,
            output: 4e-6,
        };
        let e = LedgerEntry::priced(120, 15, 0.1, rates);
        assert!((e.monetary_cost - (120.0 * 1e-6 + 15.0 * 4e-6)).abs() < 1e-18);
    }

    #[test]
    fn totals_are_sums() {
        let mut l = InferenceCostLedger::default();
        l.push(LedgerEntry::priced(10, 1, 0.5, TokenRates::uniform(1.0)));
        l.push(LedgerEntry::faulted(2.0));
        l.push(LedgerEntry::priced(5, 2, 0.25, TokenRates::uniform(1.0)));
        assert_eq!(l.len(), 3);
        assert_eq!(l.total_tokens_in(), 15);
        assert_eq!(l.total_tokens_out(), 3);
        assert_eq!(l.total_cost(), 18.0);
        assert_eq!(l.total_latency(), 2.75);
        assert_eq!(l.fault_count(), 1);
    }
}
