//! Metrics across the six monitoring layers, nearest-rank percentiles,
//! throughput buckets and sustained-threshold alert rules.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{SimTime, MICROS_PER_SEC};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layer {
    Application,
    Container,
    GuestOs,
    Resource,
    Subscription,
    Tenant,
}

impl Layer {
    pub const ALL: [Layer; 6] = [
        Layer::Application,
        Layer::Container,
        Layer::GuestOs,
        Layer::Resource,
        Layer::Subscription,
        Layer::Tenant,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Application => "application",
            Layer::Container => "container",
            Layer::GuestOs => "guest-os",
            Layer::Resource => "resource",
            Layer::Subscription => "subscription",
            Layer::Tenant => "tenant",
        }
    }

    pub fn parse(s: &str) -> Option<Layer> {
        Layer::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricPoint {
    pub time: SimTime,
    pub layer: Layer,
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum TelemetryError {
    #[error("percentile of an empty series")]
    EmptySeries,
    #[error("percentile {0} outside [0, 100]")]
    BadPercentile(f64),
    #[error("alert rule `{0}` needs sustained_samples >= 1")]
    BadRule(String),
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(p/100 * n)` of the
/// sorted series (rank 1 for p = 0).
pub fn percentile<T: PartialOrd + Copy>(series: &[T], p: f64) -> Result<T, TelemetryError> {
    if series.is_empty() {
        return Err(TelemetryError::EmptySeries);
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(TelemetryError::BadPercentile(p));
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("series has no NaN"));
    let n = sorted.len();
    // snap ranks that are integral up to float noise (99.9 * 1000 / 100 etc.)
    let exact = p * n as f64 / 100.0;
    let rank = if (exact - exact.round()).abs() < 1e-9 {
        exact.round() as usize
    } else {
        exact.ceil() as usize
    };
    Ok(sorted[rank.clamp(1, n) - 1])
}

/// Completed requests per one-second bucket over `[0, horizon)`; a completion
/// exactly at the horizon lands in the last bucket.
pub fn throughput_series(completions: &[SimTime], horizon: SimTime) -> Vec<u64> {
    let buckets = horizon.micros().div_ceil(MICROS_PER_SEC).max(1) as usize;
    let mut out = vec![0u64; buckets];
    for t in completions {
        let idx = ((t.micros() / MICROS_PER_SEC) as usize).min(buckets - 1);
        out[idx] += 1;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Gt => value > threshold,
            Comparator::Ge => value >= threshold,
            Comparator::Lt => value < threshold,
            Comparator::Le => value <= threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlertRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub metric: String,
    pub comparator: Comparator,
    pub threshold: f64,
    #[serde(default = "one")]
    pub sustained_samples: u32,
    pub action_group: String,
}

fn one() -> u32 {
    1
}

impl AlertRule {
    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("{}{}{}", self.metric, self.comparator.symbol(), self.threshold))
    }

    pub fn validate(&self) -> Result<(), TelemetryError> {
        if self.sustained_samples == 0 {
            return Err(TelemetryError::BadRule(self.label()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlertEvent {
    pub time: SimTime,
    pub rule: String,
    pub action_group: String,
}

/// Incremental evaluator: fires once per excursion, at the sample that
/// completes the required run of consecutive satisfying samples.
#[derive(Clone, Debug)]
pub struct AlertEvaluator {
    rules: Vec<AlertRule>,
    streak: Vec<u32>,
    fired: Vec<bool>,
}

impl AlertEvaluator {
    pub fn new(rules: Vec<AlertRule>) -> Self {
        let n = rules.len();
        AlertEvaluator {
            rules,
            streak: vec![0; n],
            fired: vec![false; n],
        }
    }

    pub fn observe(&mut self, point: &MetricPoint) -> Vec<AlertEvent> {
        let mut out = Vec::new();
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.metric != point.name {
                continue;
            }
            if rule.comparator.holds(point.value, rule.threshold) {
                self.streak[i] += 1;
                if !self.fired[i] && self.streak[i] >= rule.sustained_samples {
                    self.fired[i] = true;
                    out.push(AlertEvent {
                        time: point.time,
                        rule: rule.label(),
                        action_group: rule.action_group.clone(),
                    });
                }
            } else {
                self.streak[i] = 0;
                self.fired[i] = false;
            }
        }
        out
    }
}

pub fn evaluate_alerts(rules: &[AlertRule], points: &[MetricPoint]) -> Vec<AlertEvent> {
    let mut eval = AlertEvaluator::new(rules.to_vec());
    points.iter().flat_map(|p| eval.observe(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_examples() {
        let series: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&series, 99.0).unwrap(), 99);
        assert_eq!(percentile(&[1, 2, 3], 50.0).unwrap(), 2);
        assert_eq!(percentile::<u64>(&[], 50.0), Err(TelemetryError::EmptySeries));
        assert_eq!(percentile(&[3, 1, 2], 0.0).unwrap(), 1);
        assert_eq!(percentile(&[3, 1, 2], 100.0).unwrap(), 3);
        assert!(percentile(&[1], 101.0).is_err());
    }

    #[test]
    fn fractional_percentiles() {
        let series: Vec<u64> = (1..=1000).collect();
        assert_eq!(percentile(&series, 99.9).unwrap(), 999);
        assert_eq!(percentile(&series, 99.95).unwrap(), 1000);
    }

    fn sample(t: u64, v: f64) -> MetricPoint {
        MetricPoint {
            time: SimTime::from_secs(t),
            layer: Layer::Container,
            name: "cpu".into(),
            value: v,
        }
    }

    fn rule(n: u32) -> AlertRule {
        AlertRule {
            name: None,
            metric: "cpu".into(),
            comparator: Comparator::Gt,
            threshold: 0.7,
            sustained_samples: n,
            action_group: "ops".into(),
        }
    }

    #[test]
    fn sustained_rule_fires_on_completing_sample() {
        let pts: Vec<_> = [0.6, 0.72, 0.75, 0.4]
            .iter()
            .enumerate()
            .map(|(i, v)| sample(60 * i as u64, *v))
            .collect();
        let alerts = evaluate_alerts(&[rule(2)], &pts);
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].time, SimTime::from_secs(120));
        assert_eq!(alerts[0].rule, "cpu>0.7");
    }

    #[test]
    fn never_satisfied_rule_is_silent() {
        let pts: Vec<_> = (0..10).map(|i| sample(i, 0.1)).collect();
        assert!(evaluate_alerts(&[rule(1)], &pts).is_empty());
    }

    #[test]
    fn one_alert_per_excursion() {
        let vals = [0.9, 0.9, 0.9, 0.1, 0.95, 0.1, 0.1];
        let pts: Vec<_> = vals.iter().enumerate().map(|(i, v)| sample(i as u64, *v)).collect();
        let alerts = evaluate_alerts(&[rule(1)], &pts);
        let times: Vec<_> = alerts.iter().map(|a| a.time.micros() / MICROS_PER_SEC).collect();
        assert_eq!(times, vec![0, 4]);
    }

    #[test]
    fn throughput_buckets_sum_to_total() {
        let c = vec![SimTime(0), SimTime(999_999), SimTime(1_000_000), SimTime(2_500_000), SimTime(3_000_000)];
        let series = throughput_series(&c, SimTime::from_secs(3));
        assert_eq!(series, vec![2, 1, 2]);
        assert_eq!(series.iter().sum::<u64>(), c.len() as u64);
    }

    #[test]
    fn layers_round_trip() {
        for l in Layer::ALL {
            assert_eq!(Layer::parse(l.as_str()), Some(l));
        }
    }
}
