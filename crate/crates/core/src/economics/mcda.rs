//! Ordinal multi-criteria ranking of cloud providers.
//!
//! Each criterion is an ordering such as `AZURE > AWS >= GCP`. Tiers separated
//! by `>` or `>=` are strictly ordered; `=` joins a tier. The tier at positions
//! `i..=j` (1-based) scores the mean of the points those positions carry, with
//! position 1 worth `n` points and position `n` worth 1.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::EconomicsError;

const TIE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    Security,
    DataStorage,
    Cost,
    Performance,
    Reliability,
    KubernetesAutomation,
    IdentityManagement,
    AvailabilityZones,
}

impl Criterion {
    pub const ALL: [Criterion; 8] = [
        Criterion::Security,
        Criterion::DataStorage,
        Criterion::Cost,
        Criterion::Performance,
        Criterion::Reliability,
        Criterion::KubernetesAutomation,
        Criterion::IdentityManagement,
        Criterion::AvailabilityZones,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Security => "security",
            Criterion::DataStorage => "data-storage",
            Criterion::Cost => "cost",
            Criterion::Performance => "performance",
            Criterion::Reliability => "reliability",
            Criterion::KubernetesAutomation => "kubernetes-automation",
            Criterion::IdentityManagement => "identity-management",
            Criterion::AvailabilityZones => "availability-zones",
        }
    }

    pub fn parse(s: &str) -> Option<Criterion> {
        Criterion::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionScores {
    pub criterion: Criterion,
    /// The ordering as written, e.g. `AZURE >= AWS > GCP`.
    pub line: String,
    /// Providers grouped best tier first.
    pub tiers: Vec<Vec<String>>,
    pub scores: BTreeMap<String, f64>,
    /// Set when the line uses `>=`, which is scored as strict.
    pub ambiguous: bool,
    pub note: Option<String>,
}

/// Parses a rank line over exactly `providers`.
pub fn parse_rank_line(
    criterion: Criterion,
    line: &str,
    providers: &[&str],
) -> Result<CriterionScores, EconomicsError> {
    let bad = || EconomicsError::BadRankLine(line.to_string());
    let mut tiers: Vec<Vec<String>> = vec![Vec::new()];
    let mut ambiguous = false;
    let mut expect_name = true;
    for tok in line.split_whitespace() {
        if expect_name {
            let name = tok.to_ascii_lowercase();
            if !providers.contains(&name.as_str()) || tiers.iter().flatten().any(|p| *p == name) {
                return Err(bad());
            }
            tiers.last_mut().expect("non-empty").push(name);
        } else {
            match tok {
                "=" => {}
                ">" => tiers.push(Vec::new()),
                ">=" => {
                    ambiguous = true;
                    tiers.push(Vec::new());
                }
                _ => return Err(bad()),
            }
        }
        expect_name = !expect_name;
    }
    let seen = tiers.iter().map(Vec::len).sum::<usize>();
    if expect_name || seen != providers.len() {
        return Err(bad());
    }
    let n = providers.len() as f64;
    let mut scores = BTreeMap::new();
    let mut pos = 0usize;
    for tier in &tiers {
        // positions pos+1 ..= pos+k carry points n-pos .. n-pos-k+1
        let k = tier.len() as f64;
        let mean = n - pos as f64 - (k - 1.0) / 2.0;
        for p in tier {
            scores.insert(p.clone(), mean);
        }
        pos += tier.len();
    }
    Ok(CriterionScores {
        criterion,
        line: line.to_string(),
        tiers,
        scores,
        ambiguous,
        note: None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionMatrix {
    pub providers: Vec<String>,
    pub criteria: Vec<CriterionScores>,
}

impl DecisionMatrix {
    pub fn from_lines(providers: &[&str], lines: &[(Criterion, &str)]) -> Result<Self, EconomicsError> {
        let criteria = lines
            .iter()
            .map(|(c, l)| parse_rank_line(*c, l, providers))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DecisionMatrix {
            providers: providers.iter().map(|p| p.to_string()).collect(),
            criteria,
        })
    }

    pub fn criterion(&self, c: Criterion) -> Option<&CriterionScores> {
        self.criteria.iter().find(|s| s.criterion == c)
    }

    fn score(&self, c: Criterion, provider: &str) -> f64 {
        self.criterion(c)
            .and_then(|s| s.scores.get(provider).copied())
            .unwrap_or(0.0)
    }
}

const KUBERNETES_NOTE: &str = "the Kubernetes rank line places Azure last while the surrounding prose prefers Azure; \
the rank line is used for scoring";

/// The provider comparison's eight rank lines over AWS, Azure and GCP.
pub fn builtin_matrix() -> DecisionMatrix {
    let mut m = DecisionMatrix::from_lines(
        &["aws", "azure", "gcp"],
        &[
            (Criterion::Security, "AZURE > AWS > GCP"),
            (Criterion::DataStorage, "AZURE >= GCP >= AWS"),
            (Criterion::Cost, "AZURE >= AWS > GCP"),
            (Criterion::Performance, "GCP = AWS = AZURE"),
            (Criterion::Reliability, "AZURE = AWS >= GCP"),
            (Criterion::KubernetesAutomation, "AWS >= GCP >= AZURE"),
            (Criterion::IdentityManagement, "AZURE >= AWS = GCP"),
            (Criterion::AvailabilityZones, "AWS >= AZURE > GCP"),
        ],
    )
    .expect("built-in rank lines parse");
    for c in &mut m.criteria {
        if c.criterion == Criterion::KubernetesAutomation {
            c.note = Some(KUBERNETES_NOTE.to_string());
        }
    }
    m
}

/// Non-negative criterion weights, normalized to sum 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights(BTreeMap<Criterion, f64>);

impl Weights {
    pub fn uniform() -> Self {
        let w = 1.0 / Criterion::ALL.len() as f64;
        Weights(Criterion::ALL.into_iter().map(|c| (c, w)).collect())
    }

    /// Normalizes explicit weights for every criterion; missing ones weigh 0.
    pub fn normalized(raw: &BTreeMap<Criterion, f64>) -> Result<Self, EconomicsError> {
        for (c, w) in raw {
            if !(*w >= 0.0 && w.is_finite()) {
                return Err(EconomicsError::BadWeights(format!("{c}={w}")));
            }
        }
        let sum: f64 = raw.values().sum();
        if sum <= 0.0 {
            return Err(EconomicsError::BadWeights("weights sum to zero".into()));
        }
        Ok(Weights(
            Criterion::ALL
                .into_iter()
                .map(|c| (c, raw.get(&c).copied().unwrap_or(0.0) / sum))
                .collect(),
        ))
    }

    /// Explicit weights plus the remainder of 1 shared uniformly by the
    /// criteria not named; the result is normalized.
    pub fn with_remainder(given: &BTreeMap<Criterion, f64>) -> Result<Self, EconomicsError> {
        let sum: f64 = given.values().sum();
        let rest: Vec<Criterion> = Criterion::ALL.into_iter().filter(|c| !given.contains_key(c)).collect();
        let mut all = given.clone();
        if !rest.is_empty() {
            let share = (1.0 - sum).max(0.0) / rest.len() as f64;
            for c in rest {
                all.insert(c, share);
            }
        }
        Weights::normalized(&all)
    }

    /// Parses `k=v[,k=v...]` and applies [`Weights::with_remainder`].
    pub fn parse(spec: &str) -> Result<Self, EconomicsError> {
        let mut given = BTreeMap::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| EconomicsError::BadWeights(format!("expected k=v, got `{part}`")))?;
            let c = Criterion::parse(k.trim())
                .ok_or_else(|| EconomicsError::BadWeights(format!("unknown criterion `{}`", k.trim())))?;
            let w: f64 = v
                .trim()
                .parse()
                .map_err(|_| EconomicsError::BadWeights(format!("bad weight `{}`", v.trim())))?;
            if given.insert(c, w).is_some() {
                return Err(EconomicsError::BadWeights(format!("`{c}` given twice")));
            }
        }
        if given.is_empty() {
            return Ok(Weights::uniform());
        }
        Weights::with_remainder(&given)
    }

    pub fn get(&self, c: Criterion) -> f64 {
        self.0.get(&c).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Criterion, f64)> + '_ {
        self.0.iter().map(|(c, w)| (*c, *w))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Winner {
    Single(String),
    Tie(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedProvider {
    pub provider: String,
    pub total: f64,
    pub cost: f64,
    pub identity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    /// Best first.
    pub ordered: Vec<RankedProvider>,
    pub winner: Winner,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_EPS * a.abs().max(b.abs()).max(1.0)
}

/// Weighted-sum ranking; equal totals fall back to the cost score, then the
/// identity-management score.
pub fn mcda_rank(matrix: &DecisionMatrix, weights: &Weights) -> Ranking {
    let mut ordered: Vec<RankedProvider> = matrix
        .providers
        .iter()
        .map(|p| RankedProvider {
            provider: p.clone(),
            total: weights.iter().map(|(c, w)| w * matrix.score(c, p)).sum(),
            cost: matrix.score(Criterion::Cost, p),
            identity: matrix.score(Criterion::IdentityManagement, p),
        })
        .collect();
    let key_eq = |a: &RankedProvider, b: &RankedProvider| {
        close(a.total, b.total) && a.cost == b.cost && a.identity == b.identity
    };
    ordered.sort_by(|a, b| {
        let by_total = if close(a.total, b.total) {
            std::cmp::Ordering::Equal
        } else {
            b.total.total_cmp(&a.total)
        };
        by_total
            .then_with(|| b.cost.total_cmp(&a.cost))
            .then_with(|| b.identity.total_cmp(&a.identity))
            .then_with(|| a.provider.cmp(&b.provider))
    });
    let winner = match ordered.first() {
        None => Winner::Tie(Vec::new()),
        Some(top) => {
            let tied: Vec<String> = ordered
                .iter()
                .filter(|r| key_eq(r, top))
                .map(|r| r.provider.clone())
                .collect();
            if tied.len() == 1 {
                Winner::Single(top.provider.clone())
            } else {
                Winner::Tie(tied)
            }
        }
    };
    Ranking { ordered, winner }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(c: Criterion) -> (f64, f64, f64) {
        let m = builtin_matrix();
        let s = &m.criterion(c).unwrap().scores;
        (s["azure"], s["aws"], s["gcp"])
    }

    #[test]
    fn ordinal_scores_per_line() {
        assert_eq!(scores(Criterion::Security), (3.0, 2.0, 1.0));
        assert_eq!(scores(Criterion::DataStorage), (3.0, 1.0, 2.0));
        assert_eq!(scores(Criterion::Performance), (2.0, 2.0, 2.0));
        assert_eq!(scores(Criterion::Reliability), (2.5, 2.5, 1.0));
        assert_eq!(scores(Criterion::KubernetesAutomation), (1.0, 3.0, 2.0));
        assert_eq!(scores(Criterion::IdentityManagement), (3.0, 1.5, 1.5));
        assert_eq!(scores(Criterion::AvailabilityZones), (2.0, 3.0, 1.0));
    }

    #[test]
    fn ge_lines_flagged_ambiguous() {
        let m = builtin_matrix();
        assert!(!m.criterion(Criterion::Security).unwrap().ambiguous);
        assert!(m.criterion(Criterion::Cost).unwrap().ambiguous);
        assert!(m.criterion(Criterion::KubernetesAutomation).unwrap().note.is_some());
    }

    #[test]
    fn cost_and_identity_priority_selects_azure() {
        let w = Weights::parse("cost=0.25,identity-management=0.25").unwrap();
        let r = mcda_rank(&builtin_matrix(), &w);
        assert_eq!(r.winner, Winner::Single("azure".into()));
        assert!((r.ordered[0].total - 2.625).abs() < 1e-12);
        assert!((r.ordered[1].total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn availability_zones_only_selects_aws() {
        let w = Weights::parse("availability-zones=1").unwrap();
        assert_eq!(mcda_rank(&builtin_matrix(), &w).winner, Winner::Single("aws".into()));
    }

    #[test]
    fn all_tied_matrix_is_three_way_tie() {
        let lines: Vec<_> = Criterion::ALL.iter().map(|c| (*c, "AWS = AZURE = GCP")).collect();
        let m = DecisionMatrix::from_lines(&["aws", "azure", "gcp"], &lines).unwrap();
        match mcda_rank(&m, &Weights::uniform()).winner {
            Winner::Tie(v) => assert_eq!(v.len(), 3),
            w => panic!("expected tie, got {w:?}"),
        }
    }

    #[test]
    fn malformed_lines_rejected() {
        let p = ["aws", "azure", "gcp"];
        for bad in ["AWS > AZURE", "AWS > AWS > GCP", "AWS ~ AZURE > GCP", "AWS > AZURE > GCP >", "IBM > AWS > GCP"] {
            assert!(parse_rank_line(Criterion::Cost, bad, &p).is_err(), "{bad}");
        }
    }

    #[test]
    fn weight_parsing() {
        assert!(Weights::parse("cost=-1").is_err());
        assert!(Weights::parse("speed=1").is_err());
        assert!(Weights::parse("cost").is_err());
        let w = Weights::parse("cost=2,security=2").unwrap();
        let total: f64 = w.iter().map(|(_, v)| v).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(w.get(Criterion::Performance), 0.0);
    }
}
