//! Scales shipped with the harness.

use crate::dsl::parse_scale;
use crate::scale::Scale;

pub const GENERAL_2017: &str = include_str!("../scales/general-2017.scale");
pub const SERVICE_2017: &str = include_str!("../scales/service-2017.scale");

pub const GENERAL_2017_ID: &str = "general-2017";
pub const SERVICE_2017_ID: &str = "service-2017";

fn load(id: &str, text: &str) -> Scale {
    let mut scale = parse_scale(text).unwrap_or_else(|d| panic!("bundled scale {id} is invalid: {d:?}"));
    scale.id = id.to_string();
    scale
}

pub fn general_2017() -> Scale {
    load(GENERAL_2017_ID, GENERAL_2017)
}

pub fn service_2017() -> Scale {
    load(SERVICE_2017_ID, SERVICE_2017)
}

/// (id, canonical file name, source text) for every bundled scale.
pub fn sources() -> [(&'static str, &'static str, &'static str); 2] {
    [
        (GENERAL_2017_ID, "general-2017.scale", GENERAL_2017),
        (SERVICE_2017_ID, "service-2017.scale", SERVICE_2017),
    ]
}

pub fn all() -> Vec<Scale> {
    vec![general_2017(), service_2017()]
}
