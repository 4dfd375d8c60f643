use std::fmt::Write;

use crate::scale::{Scale, DEFAULT_MAX_SCORE};

/// Up to 9 fractional digits, trailing zeros trimmed: `0.250000000` → `0.25`.
pub fn format_number(value: f64) -> String {
    let mut s = format!("{value:.9}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Canonical text: fixed key order, two-space indentation, LF newlines,
/// one blank line before each category. Comments are not preserved.
pub fn serialize_scale(scale: &Scale) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "scale {} kind {} weighting {}",
        quote(&scale.name),
        scale.kind.as_str(),
        scale.weighting_mode.as_str()
    );
    for cat in &scale.categories {
        out.push('\n');
        let _ = write!(out, "category {} {}", cat.role.as_str(), quote(&cat.name));
        if let Some(w) = cat.weight {
            let _ = write!(out, " weight {}", format_number(w));
        }
        out.push('\n');
        for ind in &cat.indicators {
            let _ = write!(
                out,
                "  indicator {} {} weight {}",
                ind.id,
                quote(&ind.name),
                format_number(ind.weight)
            );
            if ind.max_score != DEFAULT_MAX_SCORE {
                let _ = write!(out, " max {}", format_number(ind.max_score));
            }
            if let Some(slot) = ind.extension_slot {
                let _ = write!(out, " slot {}", slot.as_str());
            }
            out.push('\n');
            if !ind.description.is_empty() {
                let _ = writeln!(out, "    desc {}", quote(&ind.description));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_scale;
    use crate::scale::{Category, Indicator, Role, ScaleKind, WeightingMode};
    use proptest::prelude::*;

    #[test]
    fn numbers_trim_trailing_zeros() {
        assert_eq!(format_number(0.25), "0.25");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(100.0), "100");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333");
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1e6), "1000000");
    }

    #[test]
    fn authored_weight_is_canonicalized() {
        let text = r#"scale "W" kind general
category acquisition "A"
  indicator a "A" weight 0.250000000
category mastery "M"
  indicator b "B" weight 0.75
category innovation "I"
  indicator c "C"
category feedback "F"
  indicator d "D"
"#;
        let canon = serialize_scale(&parse_scale(text).unwrap());
        assert!(canon.contains("indicator a \"A\" weight 0.25\n"));
        assert!(!canon.contains("0.250"));
    }

    #[test]
    fn bundled_round_trip() {
        for text in [crate::bundled::GENERAL_2017, crate::bundled::SERVICE_2017] {
            let s = parse_scale(text).unwrap();
            let canon = serialize_scale(&s);
            assert_eq!(parse_scale(&canon).unwrap(), s);
            assert_eq!(serialize_scale(&parse_scale(&canon).unwrap()), canon);
        }
    }

    #[test]
    fn structurally_equal_scales_serialize_identically() {
        let a = crate::bundled::service_2017();
        let b = parse_scale(&serialize_scale(&a)).map(|mut s| {
            s.id = a.id.clone();
            s
        });
        assert_eq!(serialize_scale(&a), serialize_scale(&b.unwrap()));
    }

    fn arb_text() -> impl Strategy<Value = String> {
        "[A-Za-z0-9 #\"\\\\é_.-]{0,12}"
    }

    fn arb_weight() -> impl Strategy<Value = f64> {
        // decimal literals with at most 9 fractional digits survive printing
        (1u64..1000, 0u64..1_000_000_000)
            .prop_map(|(int, frac)| format!("{int}.{frac:09}").parse().unwrap())
    }

    fn arb_scale() -> impl Strategy<Value = Scale> {
        let ind = (arb_text(), arb_text(), arb_weight(), prop::option::of(1u32..1000));
        let cat = (arb_text(), prop::collection::vec(ind, 1..5), arb_weight());
        (arb_text(), any::<bool>(), any::<bool>(), prop::collection::vec(cat, 4))
            .prop_map(|(name, service, hier, cats)| {
                let mut n = 0;
                let categories = cats
                    .into_iter()
                    .zip(Role::ALL)
                    .map(|((cname, inds, cw), role)| {
                        let indicators = inds
                            .into_iter()
                            .map(|(iname, desc, w, max)| {
                                n += 1;
                                let mut i = Indicator::new(format!("ind-{n}"), iname)
                                    .with_weight(w)
                                    .with_description(desc);
                                if let Some(m) = max {
                                    i.max_score = m as f64;
                                }
                                i
                            })
                            .collect();
                        let mut c = Category::new(role, cname, indicators);
                        if hier {
                            c.weight = Some(cw);
                        }
                        c
                    })
                    .collect();
                let mut s = Scale {
                    id: String::new(),
                    name,
                    kind: if service { ScaleKind::Service } else { ScaleKind::General },
                    weighting_mode: if hier {
                        WeightingMode::Hierarchical
                    } else {
                        WeightingMode::Flat
                    },
                    categories,
                };
                s.id = crate::scale::slugify(&s.name);
                s
            })
    }

    proptest! {
        #[test]
        fn parse_inverts_serialize(s in arb_scale()) {
            let text = serialize_scale(&s);
            let back = parse_scale(&text).map_err(|d| format!("{d:?}\n{text}")).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(serialize_scale(&back), text);
        }
    }
}
