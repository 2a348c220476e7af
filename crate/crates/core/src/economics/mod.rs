//! Price book, cost ledger, savings-plan discounting, budget monitoring and
//! provider ranking.

mod ledger;
pub mod mcda;
mod prices;

pub use ledger::{
    apply_savings_plan, budget_check, BudgetAlert, BudgetMonitor, CostLedger, LedgerEntry, SavingsPlan,
    MAX_SAVINGS_DISCOUNT,
};
pub use mcda::{mcda_rank, builtin_matrix, Criterion, DecisionMatrix, Ranking, Weights, Winner};
pub use prices::{gpu_rank, paper_2022, Category, GpuRank, PriceBook, ProviderPrices, PAPER_2022};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EconomicsError {
    #[error("provider `{provider}` has no price for {category}")]
    UnpricedCategory { provider: String, category: Category },
    #[error("no A100 price for `{0}`")]
    MissingGpuPrices(String),
    #[error("unknown price book `{0}`")]
    UnknownBook(String),
    #[error("budget threshold must be > 0, got {0}")]
    InvalidThreshold(f64),
    #[error("savings-plan discount {0} outside [0, 0.65]")]
    InvalidDiscount(f64),
    #[error("invalid price {price} for {provider}/{category}")]
    InvalidPrice { provider: String, category: Category, price: f64 },
    #[error("bad weights: {0}")]
    BadWeights(String),
    #[error("bad rank line `{0}`")]
    BadRankLine(String),
}
