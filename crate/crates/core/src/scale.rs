//! In-memory test scales: the four-category ability taxonomy, indicators,
//! declared weights and score ranges.
//!
//! Declared weights are relative. [`effective_weights`] normalizes them into
//! the flat vector the scoring engine multiplies against, so a scale whose
//! weights are all scaled by the same constant scores identically.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for weight sums after normalization.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_MAX_SCORE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    General,
    Service,
}

impl ScaleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScaleKind::General => "general",
            ScaleKind::Service => "service",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// Indicator weights normalized over the whole scale.
    #[default]
    Flat,
    /// Category weight times within-category indicator weight.
    Hierarchical,
}

impl WeightingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightingMode::Flat => "flat",
            WeightingMode::Hierarchical => "hierarchical",
        }
    }
}

/// The four abilities of the standard intelligence model, in taxonomy order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Acquisition,
    Mastery,
    Innovation,
    Feedback,
}

impl Role {
    pub const ALL: [Role; 4] = [
        Role::Acquisition,
        Role::Mastery,
        Role::Innovation,
        Role::Feedback,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Acquisition => "acquisition",
            Role::Mastery => "mastery",
            Role::Innovation => "innovation",
            Role::Feedback => "feedback",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Reserved hooks for abilities a scale author may extend per product type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionSlot {
    OtherInput,
    ProfessionalKnowledge,
    ProfessionalInnovation,
    OtherOutput,
}

impl ExtensionSlot {
    pub const ALL: [ExtensionSlot; 4] = [
        ExtensionSlot::OtherInput,
        ExtensionSlot::ProfessionalKnowledge,
        ExtensionSlot::ProfessionalInnovation,
        ExtensionSlot::OtherOutput,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExtensionSlot::OtherInput => "other_input",
            ExtensionSlot::ProfessionalKnowledge => "professional_knowledge",
            ExtensionSlot::ProfessionalInnovation => "professional_innovation",
            ExtensionSlot::OtherOutput => "other_output",
        }
    }

    pub fn parse(s: &str) -> Option<ExtensionSlot> {
        ExtensionSlot::ALL.into_iter().find(|r| r.as_str() == s)
    }

    /// The only category an indicator carrying this slot may live in.
    pub fn role(self) -> Role {
        match self {
            ExtensionSlot::OtherInput => Role::Acquisition,
            ExtensionSlot::ProfessionalKnowledge => Role::Mastery,
            ExtensionSlot::ProfessionalInnovation => Role::Innovation,
            ExtensionSlot::OtherOutput => Role::Feedback,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indicator {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub weight: f64,
    #[serde(default = "default_max_score")]
    pub max_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extension_slot: Option<ExtensionSlot>,
}

fn default_max_score() -> f64 {
    DEFAULT_MAX_SCORE
}

impl Indicator {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Indicator {
            id: id.into(),
            name: name.into(),
            description: String::new(),
            weight: 1.0,
            max_score: DEFAULT_MAX_SCORE,
            extension_slot: None,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_max_score(mut self, max_score: f64) -> Self {
        self.max_score = max_score;
        self
    }

    pub fn with_slot(mut self, slot: ExtensionSlot) -> Self {
        self.extension_slot = Some(slot);
        self
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub role: Role,
    pub name: String,
    /// Present only in hierarchical mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    pub indicators: Vec<Indicator>,
}

impl Category {
    pub fn new(role: Role, name: impl Into<String>, indicators: Vec<Indicator>) -> Self {
        Category {
            role,
            name: name.into(),
            weight: None,
            indicators,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = Some(weight);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub id: String,
    pub name: String,
    pub kind: ScaleKind,
    #[serde(default)]
    pub weighting_mode: WeightingMode,
    pub categories: Vec<Category>,
}

impl Scale {
    pub fn indicators(&self) -> impl Iterator<Item = &Indicator> {
        self.categories.iter().flat_map(|c| c.indicators.iter())
    }

    pub fn indicator(&self, id: &str) -> Option<&Indicator> {
        self.indicators().find(|i| i.id == id)
    }

    pub fn indicator_count(&self) -> usize {
        self.categories.iter().map(|c| c.indicators.len()).sum()
    }
}

/// Lowercase, hyphen-separated identifier derived from a display name.
pub fn slugify(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut pending_dash = false;
    for ch in name.chars() {
        if ch.is_ascii_alphanumeric() {
            if pending_dash && !out.is_empty() {
                out.push('-');
            }
            pending_dash = false;
            out.push(ch.to_ascii_lowercase());
        } else {
            pending_dash = true;
        }
    }
    if out.is_empty() {
        out.push_str("scale");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    CategoryCount,
    CategoryOrder,
    EmptyCategory,
    EmptyId,
    DuplicateId,
    NegativeWeight,
    WeightSum,
    CategoryWeightInFlat,
    MissingCategoryWeight,
    NonpositiveMax,
    SlotMismatch,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::CategoryCount => "CATEGORY_COUNT",
            ViolationCode::CategoryOrder => "CATEGORY_ORDER",
            ViolationCode::EmptyCategory => "EMPTY_CATEGORY",
            ViolationCode::EmptyId => "EMPTY_ID",
            ViolationCode::DuplicateId => "DUPLICATE_ID",
            ViolationCode::NegativeWeight => "NEGATIVE_WEIGHT",
            ViolationCode::WeightSum => "WEIGHT_SUM",
            ViolationCode::CategoryWeightInFlat => "CATEGORY_WEIGHT_IN_FLAT",
            ViolationCode::MissingCategoryWeight => "MISSING_CATEGORY_WEIGHT",
            ViolationCode::NonpositiveMax => "NONPOSITIVE_MAX",
            ViolationCode::SlotMismatch => "SLOT_MISMATCH",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One broken scale invariant. `path` locates the element, e.g.
/// `categories[1]/indicators[3]` or `categories[2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub path: String,
    pub message: String,
    /// Observed sum for `WEIGHT_SUM` violations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<f64>,
}

impl Violation {
    fn new(code: ViolationCode, path: String, message: String) -> Self {
        Violation {
            code,
            path,
            message,
            observed: None,
        }
    }
}

fn category_path(ci: usize) -> String {
    format!("categories[{ci}]")
}

fn indicator_path(ci: usize, ii: usize) -> String {
    format!("categories[{ci}]/indicators[{ii}]")
}

/// Checks every scale, category and indicator invariant. An empty report
/// means the scale may be scored.
pub fn validate_scale(scale: &Scale) -> Vec<Violation> {
    let mut out = Vec::new();

    if scale.categories.len() != Role::ALL.len() {
        out.push(Violation::new(
            ViolationCode::CategoryCount,
            "categories".into(),
            format!(
                "scale has {} categories; exactly 4 are required",
                scale.categories.len()
            ),
        ));
    }
    for (ci, (cat, expected)) in scale.categories.iter().zip(Role::ALL).enumerate() {
        if cat.role != expected {
            out.push(Violation::new(
                ViolationCode::CategoryOrder,
                category_path(ci),
                format!("category {ci} has role {}, expected {expected}", cat.role),
            ));
        }
    }

    let mut seen = HashSet::new();
    for (ci, cat) in scale.categories.iter().enumerate() {
        if cat.indicators.is_empty() {
            out.push(Violation::new(
                ViolationCode::EmptyCategory,
                category_path(ci),
                format!("category {} has no indicators", cat.role),
            ));
        }
        match (scale.weighting_mode, cat.weight) {
            (WeightingMode::Flat, Some(_)) => out.push(Violation::new(
                ViolationCode::CategoryWeightInFlat,
                category_path(ci),
                format!("category {} carries a weight in flat mode", cat.role),
            )),
            (WeightingMode::Hierarchical, None) => out.push(Violation::new(
                ViolationCode::MissingCategoryWeight,
                category_path(ci),
                format!("category {} needs a weight in hierarchical mode", cat.role),
            )),
            (_, Some(w)) if !(w >= 0.0 && w.is_finite()) => out.push(Violation::new(
                ViolationCode::NegativeWeight,
                category_path(ci),
                format!("category {} weight {w} is not a finite value >= 0", cat.role),
            )),
            _ => {}
        }

        for (ii, ind) in cat.indicators.iter().enumerate() {
            let path = indicator_path(ci, ii);
            if ind.id.is_empty() {
                out.push(Violation::new(
                    ViolationCode::EmptyId,
                    path.clone(),
                    "indicator id is empty".into(),
                ));
            } else if !seen.insert(ind.id.as_str()) {
                out.push(Violation::new(
                    ViolationCode::DuplicateId,
                    path.clone(),
                    format!("indicator id {} is used more than once", ind.id),
                ));
            }
            if !(ind.weight >= 0.0 && ind.weight.is_finite()) {
                out.push(Violation::new(
                    ViolationCode::NegativeWeight,
                    path.clone(),
                    format!("indicator {} weight {} is not a finite value >= 0", ind.id, ind.weight),
                ));
            }
            if !(ind.max_score > 0.0 && ind.max_score.is_finite()) {
                out.push(Violation::new(
                    ViolationCode::NonpositiveMax,
                    path.clone(),
                    format!("indicator {} max score {} must be > 0", ind.id, ind.max_score),
                ));
            }
            if let Some(slot) = ind.extension_slot {
                if slot.role() != cat.role {
                    out.push(Violation::new(
                        ViolationCode::SlotMismatch,
                        path,
                        format!(
                            "indicator {} uses slot {} which belongs in {}, not {}",
                            ind.id,
                            slot.as_str(),
                            slot.role(),
                            cat.role
                        ),
                    ));
                }
            }
        }
    }

    // Weight sums are only meaningful once the individual weights are sane.
    if out.iter().any(|v| {
        matches!(
            v.code,
            ViolationCode::NegativeWeight | ViolationCode::MissingCategoryWeight
        )
    }) {
        return out;
    }
    match scale.weighting_mode {
        WeightingMode::Flat => {
            let total: f64 = scale.indicators().map(|i| i.weight).sum();
            if scale.indicator_count() > 0 {
                check_normalizable(&mut out, "categories".into(), "indicator", total);
            }
        }
        WeightingMode::Hierarchical => {
            let total: f64 = scale.categories.iter().filter_map(|c| c.weight).sum();
            if !scale.categories.is_empty() {
                check_normalizable(&mut out, "categories".into(), "category", total);
            }
            for (ci, cat) in scale.categories.iter().enumerate() {
                if cat.indicators.is_empty() || cat.weight.unwrap_or(0.0) == 0.0 {
                    continue;
                }
                let inner: f64 = cat.indicators.iter().map(|i| i.weight).sum();
                check_normalizable(&mut out, category_path(ci), "indicator", inner);
            }
        }
    }
    out
}

fn check_normalizable(out: &mut Vec<Violation>, path: String, what: &str, total: f64) {
    if !(total > 0.0 && total.is_finite()) {
        out.push(Violation {
            code: ViolationCode::WeightSum,
            path,
            message: format!(
                "{what} weights sum to {total}; they cannot be normalized to 1"
            ),
            observed: Some(total),
        });
    }
}

/// One normalized weight per indicator, in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveWeightVector {
    pub entries: Vec<(String, f64)>,
}

impl EffectiveWeightVector {
    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.entries.iter().find(|(i, _)| i == id).map(|(_, w)| *w)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn ensure_valid(scale: &Scale) -> Result<()> {
    let report = validate_scale(scale);
    if report.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidScale(report))
    }
}

/// Normalized weights: flat mode divides each declared weight by the
/// declared total; hierarchical mode multiplies the normalized category
/// weight by the normalized within-category indicator weight.
pub fn effective_weights(scale: &Scale) -> Result<EffectiveWeightVector> {
    ensure_valid(scale)?;
    let entries = match scale.weighting_mode {
        WeightingMode::Flat => {
            let total: f64 = scale.indicators().map(|i| i.weight).sum();
            scale
                .indicators()
                .map(|i| (i.id.clone(), i.weight / total))
                .collect()
        }
        WeightingMode::Hierarchical => {
            let cat_total: f64 = scale.categories.iter().filter_map(|c| c.weight).sum();
            let mut entries = Vec::with_capacity(scale.indicator_count());
            for cat in &scale.categories {
                let cat_share = cat.weight.unwrap_or(0.0) / cat_total;
                let inner: f64 = cat.indicators.iter().map(|i| i.weight).sum();
                for ind in &cat.indicators {
                    let share = if cat_share == 0.0 { 0.0 } else { ind.weight / inner };
                    entries.push((ind.id.clone(), cat_share * share));
                }
            }
            entries
        }
    };
    Ok(EffectiveWeightVector { entries })
}

/// Indicator ids with categories in taxonomy order and indicators in
/// declaration order.
pub fn canonical_order(scale: &Scale) -> Vec<String> {
    let mut cats: Vec<&Category> = scale.categories.iter().collect();
    cats.sort_by_key(|c| c.role);
    cats.iter()
        .flat_map(|c| c.indicators.iter().map(|i| i.id.clone()))
        .collect()
}
