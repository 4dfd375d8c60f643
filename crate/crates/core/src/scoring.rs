//! Weighted-sum quotients over a score sheet, and the price-normalized
//! Value IQ.
//!
//! Raw scores are divided by their indicator's `max_score` before weighting,
//! so General and Service IQ land in `[0, 100]` for a complete sheet. Value
//! IQ is unbounded above: a cheap product can exceed 100.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scale::{effective_weights, Scale, ScaleKind, WeightingMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuotientKind {
    General,
    Service,
    Value,
}

impl QuotientKind {
    pub fn as_str(self) -> &'static str {
        match self {
            QuotientKind::General => "general",
            QuotientKind::Service => "service",
            QuotientKind::Value => "value",
        }
    }
}

impl From<ScaleKind> for QuotientKind {
    fn from(kind: ScaleKind) -> Self {
        match kind {
            ScaleKind::General => QuotientKind::General,
            ScaleKind::Service => QuotientKind::Service,
        }
    }
}

impl fmt::Display for QuotientKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionPolicy {
    #[default]
    RequireComplete,
    RenormalizeOverScored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Completeness {
    Complete,
    Partial,
}

/// Selling price in a single currency. `amount > 0`; `currency` is a
/// 3-letter uppercase ISO-4217 code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrice")]
pub struct PositivePrice {
    amount: f64,
    currency: String,
}

#[derive(Deserialize)]
struct RawPrice {
    amount: f64,
    currency: String,
}

impl TryFrom<RawPrice> for PositivePrice {
    type Error = Error;

    fn try_from(raw: RawPrice) -> Result<Self> {
        PositivePrice::new(raw.amount, raw.currency)
    }
}

impl PositivePrice {
    pub fn new(amount: f64, currency: impl Into<String>) -> Result<Self> {
        let currency = currency.into();
        if !(amount > 0.0 && amount.is_finite()) {
            return Err(Error::NonpositivePrice(amount));
        }
        if currency.len() != 3 || !currency.bytes().all(|b| b.is_ascii_uppercase()) {
            return Err(Error::InvalidCurrency(currency));
        }
        Ok(PositivePrice { amount, currency })
    }

    pub fn amount(&self) -> f64 {
        self.amount
    }

    pub fn currency(&self) -> &str {
        &self.currency
    }
}

/// Raw per-indicator scores recorded for one administration of a scale.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSheet {
    pub scale_id: String,
    pub entries: BTreeMap<String, f64>,
}

impl ScoreSheet {
    pub fn new(scale_id: impl Into<String>) -> Self {
        ScoreSheet {
            scale_id: scale_id.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn with(mut self, indicator: impl Into<String>, score: f64) -> Self {
        self.entries.insert(indicator.into(), score);
        self
    }

    pub fn completeness(&self, scale: &Scale) -> Completeness {
        if scale.indicators().all(|i| self.entries.contains_key(&i.id)) {
            Completeness::Complete
        } else {
            Completeness::Partial
        }
    }

    /// Scale ids of unscored indicators, in canonical order.
    pub fn missing(&self, scale: &Scale) -> Vec<String> {
        crate::scale::canonical_order(scale)
            .into_iter()
            .filter(|id| !self.entries.contains_key(id))
            .collect()
    }

    /// Checks scale identity, indicator membership and score ranges.
    pub fn check(&self, scale: &Scale) -> Result<()> {
        if self.scale_id != scale.id {
            return Err(Error::ScaleMismatch {
                sheet: self.scale_id.clone(),
                scale: scale.id.clone(),
            });
        }
        for (id, score) in &self.entries {
            let ind = scale
                .indicator(id)
                .ok_or_else(|| Error::UnknownIndicator(id.clone()))?;
            check_score(&ind.id, *score, ind.max_score)?;
        }
        Ok(())
    }
}

pub(crate) fn check_score(indicator: &str, score: f64, max: f64) -> Result<()> {
    if !(0.0..=max).contains(&score) {
        return Err(Error::OutOfRange {
            indicator: indicator.to_string(),
            score,
            max,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientResult {
    pub kind: QuotientKind,
    pub value: f64,
    pub scale_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub weighting_mode: WeightingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<PositivePrice>,
    /// Fraction of the scale's indicators that were scored.
    pub coverage: f64,
}

/// General or Service IQ: `Σ W_i · (F_i / max_i) · 100` over scored
/// indicators, summed in canonical order.
///
/// The weighted sum is divided by the total effective weight of the
/// indicators it covers. For a complete sheet that total is 1 up to
/// rounding, which keeps an all-max sheet at exactly 100; under
/// `RenormalizeOverScored` it rescales the scored subset to sum to 1.
pub fn compute_weighted_iq(
    scale: &Scale,
    sheet: &ScoreSheet,
    policy: CompletionPolicy,
) -> Result<QuotientResult> {
    sheet.check(scale)?;
    let weights = effective_weights(scale)?;
    if policy == CompletionPolicy::RequireComplete {
        let missing = sheet.missing(scale);
        if !missing.is_empty() {
            return Err(Error::IncompleteSheet { missing });
        }
    }

    let mut weighted = 0.0;
    let mut covered_weight = 0.0;
    let mut scored = 0usize;
    for (id, weight) in &weights.entries {
        let Some(score) = sheet.entries.get(id) else {
            continue;
        };
        let max = scale
            .indicator(id)
            .map(|i| i.max_score)
            .ok_or_else(|| Error::UnknownIndicator(id.clone()))?;
        weighted += weight * (score / max);
        covered_weight += weight;
        scored += 1;
    }
    let value = if covered_weight > 0.0 {
        weighted / covered_weight * 100.0
    } else {
        0.0
    };
    let total = weights.len();
    Ok(QuotientResult {
        kind: scale.kind.into(),
        value,
        scale_id: scale.id.clone(),
        session_id: None,
        weighting_mode: scale.weighting_mode,
        price: None,
        coverage: if total == 0 { 0.0 } else { scored as f64 / total as f64 },
    })
}

/// Value IQ: `(service IQ / price) · 100`.
pub fn compute_value_iq(service: &QuotientResult, price: &PositivePrice) -> Result<QuotientResult> {
    if service.kind != QuotientKind::Service {
        return Err(Error::WrongKind {
            expected: QuotientKind::Service.to_string(),
            actual: service.kind.to_string(),
        });
    }
    if !(price.amount > 0.0 && price.amount.is_finite()) {
        return Err(Error::NonpositivePrice(price.amount));
    }
    Ok(QuotientResult {
        kind: QuotientKind::Value,
        value: (service.value / price.amount) * 100.0,
        scale_id: service.scale_id.clone(),
        session_id: service.session_id.clone(),
        weighting_mode: service.weighting_mode,
        price: Some(price.clone()),
        coverage: service.coverage,
    })
}

/// Independent recomputation of the weighted sum for differential testing.
///
/// Works from the declared weights rather than [`effective_weights`]: each
/// category's contribution is accumulated on its own, then the categories are
/// combined. Requires a complete sheet.
pub fn brute_force_iq_oracle(scale: &Scale, sheet: &ScoreSheet) -> Result<f64> {
    sheet.check(scale)?;
    let report = crate::scale::validate_scale(scale);
    if !report.is_empty() {
        return Err(Error::InvalidScale(report));
    }
    let mut missing = Vec::new();
    let mut per_category = Vec::with_capacity(scale.categories.len());
    for cat in &scale.categories {
        let mut num = 0.0;
        let mut den = 0.0;
        for ind in &cat.indicators {
            match sheet.entries.get(&ind.id) {
                Some(score) => num += ind.weight * score / ind.max_score,
                None => missing.push(ind.id.clone()),
            }
            den += ind.weight;
        }
        per_category.push((cat.weight, num, den));
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteSheet { missing });
    }
    let combined = match scale.weighting_mode {
        WeightingMode::Flat => {
            let num: f64 = per_category.iter().map(|(_, n, _)| n).sum();
            let den: f64 = per_category.iter().map(|(_, _, d)| d).sum();
            num / den
        }
        WeightingMode::Hierarchical => {
            let cat_total: f64 = per_category.iter().filter_map(|(w, _, _)| *w).sum();
            per_category
                .iter()
                .map(|(w, n, d)| {
                    let w = w.unwrap_or(0.0);
                    if w == 0.0 {
                        0.0
                    } else {
                        (w / cat_total) * (n / d)
                    }
                })
                .sum()
        }
    };
    Ok(100.0 * combined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scale::{Category, Indicator, Role};

    /// Effective weights 0.5 / 0.3 / 0.2 plus a zero-weight filler so every
    /// category is populated.
    fn five_three_two() -> Scale {
        let w = [0.5, 0.3, 0.2, 0.0];
        Scale {
            id: "s".into(),
            name: "s".into(),
            kind: ScaleKind::General,
            weighting_mode: WeightingMode::Flat,
            categories: Role::ALL
                .iter()
                .zip(w)
                .enumerate()
                .map(|(i, (r, w))| {
                    Category::new(*r, r.as_str(), vec![Indicator::new(format!("i{i}"), "x").with_weight(w)])
                })
                .collect(),
        }
    }

    fn full(scale: &Scale, score: impl Fn(&Indicator) -> f64) -> ScoreSheet {
        let mut sheet = ScoreSheet::new(&scale.id);
        for ind in scale.indicators() {
            sheet.entries.insert(ind.id.clone(), score(ind));
        }
        sheet
    }

    #[test]
    fn worked_example_is_75() {
        let s = five_three_two();
        let sheet = ScoreSheet::new("s")
            .with("i0", 80.0)
            .with("i1", 50.0)
            .with("i2", 100.0)
            .with("i3", 0.0);
        let r = compute_weighted_iq(&s, &sheet, CompletionPolicy::RequireComplete).unwrap();
        // direct summation: 0.5*80 + 0.3*50 + 0.2*100
        let oracle = 0.5 * 80.0 + 0.3 * 50.0 + 0.2 * 100.0;
        assert_eq!(oracle, 75.0);
        assert!((r.value - oracle).abs() < 1e-12);
        assert_eq!(r.coverage, 1.0);
        assert_eq!(r.kind, QuotientKind::General);
    }

    #[test]
    fn ceiling_and_floor() {
        for scale in crate::bundled::all() {
            let top = compute_weighted_iq(&scale, &full(&scale, |i| i.max_score), CompletionPolicy::RequireComplete)
                .unwrap();
            assert_eq!(top.value, 100.0);
            let zero = compute_weighted_iq(&scale, &full(&scale, |_| 0.0), CompletionPolicy::RequireComplete)
                .unwrap();
            assert_eq!(zero.value, 0.0);
        }
    }

    #[test]
    fn incomplete_sheet_lists_missing_in_canonical_order() {
        let s = five_three_two();
        let sheet = ScoreSheet::new("s").with("i1", 10.0);
        match compute_weighted_iq(&s, &sheet, CompletionPolicy::RequireComplete) {
            Err(Error::IncompleteSheet { missing }) => assert_eq!(missing, vec!["i0", "i2", "i3"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn renormalization_records_coverage() {
        let s = five_three_two();
        let sheet = ScoreSheet::new("s").with("i0", 80.0).with("i1", 40.0);
        let r = compute_weighted_iq(&s, &sheet, CompletionPolicy::RenormalizeOverScored).unwrap();
        // (0.5*0.8 + 0.3*0.4) / 0.8 * 100
        assert!((r.value - 65.0).abs() < 1e-12);
        assert_eq!(r.coverage, 0.5);
        let empty = compute_weighted_iq(&s, &ScoreSheet::new("s"), CompletionPolicy::RenormalizeOverScored)
            .unwrap();
        assert_eq!((empty.value, empty.coverage), (0.0, 0.0));
    }

    #[test]
    fn sheet_errors() {
        let s = five_three_two();
        let e = compute_weighted_iq(&s, &ScoreSheet::new("s").with("nope", 1.0), CompletionPolicy::RenormalizeOverScored);
        assert!(matches!(e, Err(Error::UnknownIndicator(id)) if id == "nope"));
        let e = compute_weighted_iq(&s, &ScoreSheet::new("s").with("i0", 100.5), CompletionPolicy::RenormalizeOverScored);
        assert!(matches!(e, Err(Error::OutOfRange { .. })));
        let e = compute_weighted_iq(&s, &ScoreSheet::new("s").with("i0", -1.0), CompletionPolicy::RenormalizeOverScored);
        assert!(matches!(e, Err(Error::OutOfRange { .. })));
        let e = compute_weighted_iq(&s, &ScoreSheet::new("other"), CompletionPolicy::RenormalizeOverScored);
        assert!(matches!(e, Err(Error::ScaleMismatch { .. })));
    }

    fn service(value: f64) -> QuotientResult {
        QuotientResult {
            kind: QuotientKind::Service,
            value,
            scale_id: "service-2017".into(),
            session_id: None,
            weighting_mode: WeightingMode::Flat,
            price: None,
            coverage: 1.0,
        }
    }

    #[test]
    fn value_iq_substitutions() {
        let usd = |a| PositivePrice::new(a, "USD").unwrap();
        assert_eq!(compute_value_iq(&service(50.0), &usd(100.0)).unwrap().value, 50.0);
        assert_eq!(compute_value_iq(&service(0.0), &usd(37.5)).unwrap().value, 0.0);
        assert_eq!(compute_value_iq(&service(40.0), &usd(200.0)).unwrap().value, 20.0);
        assert_eq!(compute_value_iq(&service(40.0), &usd(100.0)).unwrap().value, 40.0);
        let v = compute_value_iq(&service(40.0), &usd(100.0)).unwrap();
        assert_eq!(v.kind, QuotientKind::Value);
        assert_eq!(v.price.unwrap().currency(), "USD");
    }

    #[test]
    fn value_iq_rejects_non_service_input() {
        let mut general = service(50.0);
        general.kind = QuotientKind::General;
        let e = compute_value_iq(&general, &PositivePrice::new(1.0, "EUR").unwrap());
        assert!(matches!(e, Err(Error::WrongKind { .. })));
    }

    #[test]
    fn price_validation() {
        assert!(matches!(PositivePrice::new(0.0, "USD"), Err(Error::NonpositivePrice(_))));
        assert!(matches!(PositivePrice::new(-3.0, "USD"), Err(Error::NonpositivePrice(_))));
        assert!(matches!(PositivePrice::new(f64::NAN, "USD"), Err(Error::NonpositivePrice(_))));
        assert!(matches!(PositivePrice::new(1.0, "usd"), Err(Error::InvalidCurrency(_))));
        assert!(matches!(PositivePrice::new(1.0, "USDT"), Err(Error::InvalidCurrency(_))));
        let bad: std::result::Result<PositivePrice, _> =
            serde_json::from_str(r#"{"amount":0,"currency":"USD"}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn oracle_examples() {
        let mut single = five_three_two();
        for cat in &mut single.categories {
            cat.indicators[0].weight = 0.0;
        }
        single.categories[2].indicators[0].weight = 1.0;
        let sheet = full(&single, |_| 0.0).with("i2", 37.0);
        assert!((brute_force_iq_oracle(&single, &sheet).unwrap() - 37.0).abs() < 1e-12);

        let g = crate::bundled::general_2017();
        let half = full(&g, |_| 50.0);
        assert!((brute_force_iq_oracle(&g, &half).unwrap() - 50.0).abs() < 1e-12);
        let engine = compute_weighted_iq(&g, &half, CompletionPolicy::RequireComplete).unwrap();
        assert!((engine.value - 50.0).abs() < 1e-12);
    }
}
