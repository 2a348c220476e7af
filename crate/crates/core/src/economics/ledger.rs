use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Category, EconomicsError, PriceBook};

/// Upper bound on a compute savings-plan discount.
pub const MAX_SAVINGS_DISCOUNT: f64 = 0.65;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub id: u64,
    /// Billing period index (hours since start).
    pub period: u64,
    pub period_hours: f64,
    pub resource: String,
    pub provider: String,
    pub category: Category,
    pub quantity: f64,
    pub rate: f64,
    /// Amount before any savings plan.
    pub list_amount: f64,
    pub amount: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CostLedger {
    entries: Vec<LedgerEntry>,
    period: u64,
    period_hours: f64,
}

impl CostLedger {
    pub fn new() -> Self {
        CostLedger {
            entries: Vec::new(),
            period: 0,
            period_hours: 1.0,
        }
    }

    /// Subsequent accruals belong to `period`, which spans `hours`.
    pub fn set_period(&mut self, period: u64, hours: f64) {
        self.period = period;
        self.period_hours = hours;
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.amount).sum()
    }

    pub fn list_total(&self) -> f64 {
        self.entries.iter().map(|e| e.list_amount).sum()
    }

    pub fn accrue(
        &mut self,
        resource: &str,
        provider: &str,
        category: Category,
        quantity: f64,
        book: &PriceBook,
    ) -> Result<&LedgerEntry, EconomicsError> {
        let rate = book.rate(provider, category)?;
        Ok(self.accrue_at_rate(resource, provider, category, quantity, rate))
    }

    pub fn accrue_at_rate(
        &mut self,
        resource: &str,
        provider: &str,
        category: Category,
        quantity: f64,
        rate: f64,
    ) -> &LedgerEntry {
        let amount = quantity * rate;
        self.entries.push(LedgerEntry {
            id: self.entries.len() as u64,
            period: self.period,
            period_hours: self.period_hours,
            resource: resource.to_string(),
            provider: provider.to_string(),
            category,
            quantity,
            rate,
            list_amount: amount,
            amount,
        });
        self.entries.last().expect("just pushed")
    }

    /// Appends an already priced entry, renumbering its id.
    pub fn push(&mut self, mut entry: LedgerEntry) -> &LedgerEntry {
        entry.id = self.entries.len() as u64;
        self.entries.push(entry);
        self.entries.last().expect("just pushed")
    }

    pub fn from_entries(entries: Vec<LedgerEntry>) -> Self {
        CostLedger {
            entries,
            period: 0,
            period_hours: 1.0,
        }
    }
}

/// Hourly compute commitment (in pay-as-you-go dollars) billed at a discount.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SavingsPlan {
    pub commitment_usd_per_hour: f64,
    pub discount: f64,
}

impl SavingsPlan {
    pub fn validate(&self) -> Result<(), EconomicsError> {
        if !(0.0..=MAX_SAVINGS_DISCOUNT).contains(&self.discount) {
            return Err(EconomicsError::InvalidDiscount(self.discount));
        }
        if !(self.commitment_usd_per_hour >= 0.0 && self.commitment_usd_per_hour.is_finite()) {
            return Err(EconomicsError::BadWeights(format!(
                "commitment {} must be a non-negative number",
                self.commitment_usd_per_hour
            )));
        }
        Ok(())
    }
}

/// Discounts the committed share of each period's compute spend; spend above
/// the commitment stays at its undiscounted amount.
pub fn apply_savings_plan(ledger: &CostLedger, plan: &SavingsPlan) -> Result<CostLedger, EconomicsError> {
    plan.validate()?;
    let mut entries = ledger.entries.clone();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by_key(|&i| (entries[i].period, entries[i].id));
    let mut remaining: BTreeMap<u64, f64> = BTreeMap::new();
    for i in order {
        let e = &mut entries[i];
        if !e.category.is_compute() {
            continue;
        }
        let left = remaining
            .entry(e.period)
            .or_insert(plan.commitment_usd_per_hour * e.period_hours);
        let covered = e.amount.min(*left).max(0.0);
        *left -= covered;
        e.amount = covered * (1.0 - plan.discount) + (e.amount - covered);
    }
    Ok(CostLedger {
        entries,
        period: ledger.period,
        period_hours: ledger.period_hours,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BudgetAlert {
    pub entry_id: u64,
    pub running_total: f64,
    pub threshold: f64,
}

/// Running-total monitor; fires once, on the first entry that crosses.
#[derive(Clone, Debug)]
pub struct BudgetMonitor {
    threshold: f64,
    running: f64,
    fired: bool,
}

impl BudgetMonitor {
    pub fn new(threshold: f64) -> Result<Self, EconomicsError> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(EconomicsError::InvalidThreshold(threshold));
        }
        Ok(BudgetMonitor {
            threshold,
            running: 0.0,
            fired: false,
        })
    }

    pub fn observe(&mut self, entry: &LedgerEntry) -> Option<BudgetAlert> {
        self.running += entry.amount;
        if !self.fired && self.running > self.threshold {
            self.fired = true;
            return Some(BudgetAlert {
                entry_id: entry.id,
                running_total: self.running,
                threshold: self.threshold,
            });
        }
        None
    }

    pub fn running_total(&self) -> f64 {
        self.running
    }
}

pub fn budget_check(ledger: &CostLedger, threshold: f64) -> Result<Option<BudgetAlert>, EconomicsError> {
    let mut m = BudgetMonitor::new(threshold)?;
    Ok(ledger.entries().iter().find_map(|e| m.observe(e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economics::paper_2022;

    fn compute_ledger(amounts: &[(u64, f64)]) -> CostLedger {
        let mut l = CostLedger::new();
        for (period, amt) in amounts {
            l.set_period(*period, 1.0);
            l.accrue_at_rate("vm", "azure", Category::GeneralCompute, 1.0, *amt);
        }
        l
    }

    #[test]
    fn full_coverage_at_max_discount() {
        let l = compute_ledger(&[(0, 100.0)]);
        let plan = SavingsPlan {
            commitment_usd_per_hour: 100.0,
            discount: 0.65,
        };
        let out = apply_savings_plan(&l, &plan).unwrap();
        assert!((out.total() - 35.0).abs() < 1e-9);
    }

    #[test]
    fn partial_coverage() {
        let l = compute_ledger(&[(0, 20.0)]);
        let plan = SavingsPlan {
            commitment_usd_per_hour: 10.0,
            discount: 0.65,
        };
        let out = apply_savings_plan(&l, &plan).unwrap();
        assert!((out.total() - 13.5).abs() < 1e-9);
    }

    #[test]
    fn commitment_does_not_carry_across_periods() {
        let l = compute_ledger(&[(0, 5.0), (1, 15.0)]);
        let plan = SavingsPlan {
            commitment_usd_per_hour: 10.0,
            discount: 0.5,
        };
        let out = apply_savings_plan(&l, &plan).unwrap();
        assert!((out.total() - (2.5 + 5.0 + 5.0)).abs() < 1e-9);
    }

    #[test]
    fn non_compute_untouched_and_discount_capped() {
        let mut l = CostLedger::new();
        l.accrue("lake", "azure", Category::Storage, 100.0, &paper_2022()).unwrap();
        let plan = SavingsPlan {
            commitment_usd_per_hour: 1000.0,
            discount: 0.5,
        };
        assert_eq!(apply_savings_plan(&l, &plan).unwrap().total(), l.total());
        let bad = SavingsPlan {
            commitment_usd_per_hour: 1.0,
            discount: 0.7,
        };
        assert_eq!(apply_savings_plan(&l, &bad), Err(EconomicsError::InvalidDiscount(0.7)));
    }

    #[test]
    fn accrue_uses_book_rate() {
        let mut l = CostLedger::new();
        let e = l
            .accrue("aks-0", "aws", Category::GeneralCompute, 2.0, &paper_2022())
            .unwrap();
        assert!((e.amount - 0.2688).abs() < 1e-12);
        assert!(l.accrue("x", "coreweave", Category::Spot, 1.0, &paper_2022()).is_err());
    }

    #[test]
    fn budget_fires_once_at_crossing_entry() {
        let l = compute_ledger(&[(0, 40.0), (1, 40.0), (2, 40.0), (3, 40.0)]);
        let alert = budget_check(&l, 100.0).unwrap().unwrap();
        assert_eq!(alert.entry_id, 2);
        let mut m = BudgetMonitor::new(100.0).unwrap();
        let fired: Vec<_> = l.entries().iter().filter_map(|e| m.observe(e)).collect();
        assert_eq!(fired.len(), 1);
        assert!(budget_check(&l, 1e9).unwrap().is_none());
        assert_eq!(budget_check(&l, 0.0), Err(EconomicsError::InvalidThreshold(0.0)));
    }
}
