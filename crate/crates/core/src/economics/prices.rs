use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::EconomicsError;

pub const PAPER_2022: &str = "paper-2022";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    /// $/GB-month
    Storage,
    GeneralCompute,
    OptimizedCompute,
    GeneralDiscounted,
    OptimizedDiscounted,
    Spot,
    Accelerated,
    GpuA100,
    /// Managed virtual-WAN hub fee, $/h.
    ManagedHub,
}

impl Category {
    /// Pay-as-you-go compute that a savings plan can cover.
    pub fn is_compute(self) -> bool {
        matches!(
            self,
            Category::GeneralCompute | Category::OptimizedCompute | Category::Accelerated | Category::GpuA100
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Storage => "storage",
            Category::GeneralCompute => "general-compute",
            Category::OptimizedCompute => "optimized-compute",
            Category::GeneralDiscounted => "general-discounted",
            Category::OptimizedDiscounted => "optimized-discounted",
            Category::Spot => "spot",
            Category::Accelerated => "accelerated",
            Category::GpuA100 => "gpu-a100",
            Category::ManagedHub => "managed-hub",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        use Category::*;
        [
            Storage,
            GeneralCompute,
            OptimizedCompute,
            GeneralDiscounted,
            OptimizedDiscounted,
            Spot,
            Accelerated,
            GpuA100,
            ManagedHub,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderPrices {
    pub display: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub general_compute: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimized_compute: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub general_discounted: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimized_discounted: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spot: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accelerated: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gpu_a100: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub managed_hub: Option<f64>,
}

impl ProviderPrices {
    pub fn rate(&self, c: Category) -> Option<f64> {
        match c {
            Category::Storage => self.storage,
            Category::GeneralCompute => self.general_compute,
            Category::OptimizedCompute => self.optimized_compute,
            Category::GeneralDiscounted => self.general_discounted,
            Category::OptimizedDiscounted => self.optimized_discounted,
            Category::Spot => self.spot,
            Category::Accelerated => self.accelerated,
            Category::GpuA100 => self.gpu_a100,
            Category::ManagedHub => self.managed_hub,
        }
    }

    fn all(&self) -> impl Iterator<Item = (Category, Option<f64>)> + '_ {
        use Category::*;
        [
            Storage,
            GeneralCompute,
            OptimizedCompute,
            GeneralDiscounted,
            OptimizedDiscounted,
            Spot,
            Accelerated,
            GpuA100,
            ManagedHub,
        ]
        .into_iter()
        .map(|c| (c, self.rate(c)))
    }
}

/// Unit prices per provider, keyed by a lower-case provider id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceBook {
    pub providers: BTreeMap<String, ProviderPrices>,
}

impl PriceBook {
    pub fn named(name: &str) -> Result<PriceBook, EconomicsError> {
        match name {
            PAPER_2022 => Ok(paper_2022()),
            other => Err(EconomicsError::UnknownBook(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), EconomicsError> {
        for (id, p) in &self.providers {
            for (category, price) in p.all() {
                if let Some(price) = price {
                    if !(price > 0.0 && price.is_finite()) {
                        return Err(EconomicsError::InvalidPrice {
                            provider: id.clone(),
                            category,
                            price,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn rate(&self, provider: &str, category: Category) -> Result<f64, EconomicsError> {
        self.providers
            .get(provider)
            .and_then(|p| p.rate(category))
            .ok_or_else(|| EconomicsError::UnpricedCategory {
                provider: provider.to_string(),
                category,
            })
    }
}

/// The 2022 comparison tables: storage and compute for the three hyperscalers
/// and the A100 40GB hourly price including the GPU-specialist cloud.
pub fn paper_2022() -> PriceBook {
    let hyperscaler = |display: &str, p: [f64; 8]| ProviderPrices {
        display: display.into(),
        storage: Some(p[0]),
        general_compute: Some(p[1]),
        optimized_compute: Some(p[2]),
        general_discounted: Some(p[3]),
        optimized_discounted: Some(p[4]),
        spot: Some(p[5]),
        accelerated: Some(p[6]),
        gpu_a100: Some(p[7]),
        managed_hub: None,
    };
    let mut providers = BTreeMap::new();
    providers.insert(
        "aws".into(),
        hyperscaler("AWS", [0.023, 0.1344, 0.153, 0.079, 0.094, 0.068, 0.90, 4.10]),
    );
    providers.insert(
        "azure".into(),
        hyperscaler("Azure", [0.021, 0.166, 0.1690, 0.0974, 0.10, 0.0259, 0.526, 3.67]),
    );
    providers.insert(
        "gcp".into(),
        hyperscaler("Google", [0.023, 0.150924, 0.2351, 0.095092, 0.13156, 0.0540, 3.678, 3.67]),
    );
    providers.insert(
        "coreweave".into(),
        ProviderPrices {
            display: "Coreweave".into(),
            gpu_a100: Some(2.06),
            ..Default::default()
        },
    );
    PriceBook { providers }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpuRank {
    /// 1-based competition rank; equal prices share a rank.
    pub rank: usize,
    pub provider: String,
    pub display: String,
    pub price: f64,
}

/// Providers by ascending A100 hourly price.
pub fn gpu_rank(book: &PriceBook) -> Result<Vec<GpuRank>, EconomicsError> {
    let mut rows = Vec::with_capacity(book.providers.len());
    for (id, p) in &book.providers {
        let price = p.gpu_a100.ok_or_else(|| EconomicsError::MissingGpuPrices(id.clone()))?;
        rows.push((id.clone(), p.display.clone(), price));
    }
    if rows.is_empty() {
        return Err(EconomicsError::MissingGpuPrices("<empty book>".into()));
    }
    rows.sort_by(|a, b| a.2.total_cmp(&b.2).then_with(|| a.0.cmp(&b.0)));
    let mut out: Vec<GpuRank> = Vec::with_capacity(rows.len());
    for (i, (provider, display, price)) in rows.into_iter().enumerate() {
        let rank = match out.last() {
            Some(prev) if prev.price == price => prev.rank,
            _ => i + 1,
        };
        out.push(GpuRank {
            rank,
            provider,
            display,
            price,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_book_gpu_order() {
        let r = gpu_rank(&paper_2022()).unwrap();
        let view: Vec<_> = r.iter().map(|g| (g.rank, g.display.as_str(), g.price)).collect();
        assert_eq!(
            view,
            vec![(1, "Coreweave", 2.06), (2, "Azure", 3.67), (2, "Google", 3.67), (4, "AWS", 4.10)]
        );
    }

    #[test]
    fn all_equal_prices_share_one_rank() {
        let mut book = paper_2022();
        for p in book.providers.values_mut() {
            p.gpu_a100 = Some(1.0);
        }
        assert!(gpu_rank(&book).unwrap().iter().all(|g| g.rank == 1));
    }

    #[test]
    fn missing_gpu_row() {
        let mut book = paper_2022();
        book.providers.get_mut("coreweave").unwrap().gpu_a100 = None;
        assert_eq!(gpu_rank(&book), Err(EconomicsError::MissingGpuPrices("coreweave".into())));
    }

    #[test]
    fn prices_must_be_positive() {
        let mut book = paper_2022();
        assert!(book.validate().is_ok());
        book.providers.get_mut("aws").unwrap().spot = Some(0.0);
        assert!(book.validate().is_err());
    }

    #[test]
    fn unpriced_category() {
        assert_eq!(
            paper_2022().rate("coreweave", Category::Storage),
            Err(EconomicsError::UnpricedCategory {
                provider: "coreweave".into(),
                category: Category::Storage
            })
        );
    }
}
