//! Published ranking tables, bundled verbatim as read-only datasets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::subject::{SubjectDescriptor, SubjectKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    Table1_2014,
    Table2_2016,
}

impl Dataset {
    pub const ALL: [Dataset; 2] = [Dataset::Table1_2014, Dataset::Table2_2016];

    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::Table1_2014 => "table1_2014",
            Dataset::Table2_2016 => "table2_2016",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dataset::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::UnknownDataset(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub dataset: Dataset,
    pub rank: u32,
    pub subject: SubjectDescriptor,
    pub absolute_iq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceDataset {
    pub id: Dataset,
    pub caption: &'static str,
    /// Known problems with the source rows, kept instead of silently
    /// correcting them.
    pub annotation: &'static str,
    pub entries: Vec<ReferenceEntry>,
}

// (rank, region column, country column, name column, absolute IQ)
type Row = (u32, &'static str, &'static str, &'static str, f64);

const TABLE1_2014: [Row; 10] = [
    (1, "Human", "Human", "18 years old", 97.0),
    (2, "Human", "Human", "12 years old", 84.5),
    (3, "Human", "Human", "6 years old", 55.5),
    (4, "America", "America", "Google", 47.28),
    (5, "Asia", "China", "duer", 37.2),
    (6, "Asia", "China", "Baidu", 32.92),
    (7, "Asia", "China", "Sogou", 32.25),
    (8, "America", "America", "Bing", 31.98),
    (9, "America", "America", "Microsoft's Xiaobing", 24.48),
    (10, "America", "America", "SIRI", 23.94),
];

const TABLE2_2016: [Row; 10] = [
    (1, "2014", "Human", "18 years old", 97.0),
    (2, "2014", "Human", "12 years old", 84.5),
    (3, "2014", "Human", "6 years old", 55.5),
    (4, "America", "America", "Google", 47.28),
    (5, "Asia", "China", "Duer", 37.2),
    (6, "Asia", "China", "Baidu", 32.92),
    (7, "Asia", "China", "Sogou", 32.25),
    (8, "America", "America", "Bing", 31.98),
    (9, "America", "America", "Microsoft's Xiaobing", 24.48),
    (10, "America", "America", "SIRI", 23.94),
];

const TABLE1_ANNOTATION: &str = "Caption announces the top 13 systems but only 10 rows were published; \
the 3 missing rows cannot be recovered.";

const TABLE2_ANNOTATION: &str = "As printed, the 2016 table repeats the 2014 values row for row and its \
first column reads \"2014\" for the human rows; rows are kept verbatim rather than corrected.";

fn entries(dataset: Dataset, rows: &[Row]) -> Vec<ReferenceEntry> {
    rows.iter()
        .map(|&(rank, region, country, name, iq)| {
            let (display, kind) = if country == "Human" {
                (format!("Human {name}"), SubjectKind::HumanGroup)
            } else {
                (name.to_string(), SubjectKind::AiSystem)
            };
            let mut subject = SubjectDescriptor::new(display, kind);
            subject.metadata.insert("region".into(), region.into());
            subject.metadata.insert("country".into(), country.into());
            if kind == SubjectKind::HumanGroup {
                subject.metadata.insert("age_group".into(), name.into());
            }
            ReferenceEntry {
                dataset,
                rank,
                subject,
                absolute_iq: iq,
            }
        })
        .collect()
}

/// The bundled rows for `dataset`, in rank order.
pub fn load_reference(dataset: Dataset) -> Vec<ReferenceEntry> {
    reference_dataset(dataset).entries
}

pub fn reference_dataset(dataset: Dataset) -> ReferenceDataset {
    match dataset {
        Dataset::Table1_2014 => ReferenceDataset {
            id: dataset,
            caption: "Ranking of top 13 artificial intelligence IQs for 2014",
            annotation: TABLE1_ANNOTATION,
            entries: entries(dataset, &TABLE1_2014),
        },
        Dataset::Table2_2016 => ReferenceDataset {
            id: dataset,
            caption: "IQ scores of artificial intelligence systems in 2016",
            annotation: TABLE2_ANNOTATION,
            entries: entries(dataset, &TABLE2_2016),
        },
    }
}

/// CSV with header `dataset,rank,subject,kind,absolute_iq`.
pub fn export_reference_csv(dataset: Dataset) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record(["dataset", "rank", "subject", "kind", "absolute_iq"]);
    for e in load_reference(dataset) {
        let _ = w.write_record([
            e.dataset.as_str().to_string(),
            e.rank.to_string(),
            e.subject.name.clone(),
            e.subject.kind.as_str().to_string(),
            format!("{:.2}", e.absolute_iq),
        ]);
    }
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_spot_checks() {
        let t = load_reference(Dataset::Table1_2014);
        assert_eq!(t.len(), 10);
        assert_eq!(t[3].rank, 4);
        assert_eq!(t[3].subject.name, "Google");
        assert_eq!(t[3].absolute_iq, 47.28);
        assert_eq!(t[0].subject.name, "Human 18 years old");
        assert_eq!(t[0].absolute_iq, 97.0);
        assert_eq!(t[9].subject.name, "SIRI");
        assert_eq!(t[9].absolute_iq, 23.94);
        assert_eq!(t[3].subject.metadata["region"], "America");
    }

    #[test]
    fn human_triple_leads_2014() {
        let t = load_reference(Dataset::Table1_2014);
        let humans: Vec<f64> = t[..3].iter().map(|e| e.absolute_iq).collect();
        assert_eq!(humans, vec![97.0, 84.5, 55.5]);
        assert!(t[..3].iter().all(|e| e.subject.kind == SubjectKind::HumanGroup));
        assert!(t[3..].iter().all(|e| e.subject.kind == SubjectKind::AiSystem));
    }

    #[test]
    fn ranks_unique_and_values_monotone() {
        for d in Dataset::ALL {
            let t = load_reference(d);
            assert!(!t.is_empty());
            for (i, pair) in t.windows(2).enumerate() {
                assert_eq!(pair[0].rank as usize, i + 1);
                assert!(pair[0].absolute_iq >= pair[1].absolute_iq);
            }
        }
    }

    #[test]
    fn table2_keeps_printed_quirks() {
        let ds = reference_dataset(Dataset::Table2_2016);
        assert_eq!(ds.entries[0].subject.metadata["region"], "2014");
        assert_eq!(ds.entries[4].subject.name, "Duer");
        assert!(ds.annotation.contains("repeats"));
    }

    #[test]
    fn csv_export() {
        let csv = export_reference_csv(Dataset::Table1_2014);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("dataset,rank,subject,kind,absolute_iq"));
        assert_eq!(lines.next(), Some("table1_2014,1,Human 18 years old,human_group,97.00"));
        assert!(csv.contains("table1_2014,9,Microsoft's Xiaobing,ai_system,24.48\n"));
    }

    #[test]
    fn dataset_ids_parse() {
        assert_eq!("table1_2014".parse::<Dataset>().unwrap(), Dataset::Table1_2014);
        assert!(matches!("table3".parse::<Dataset>(), Err(Error::UnknownDataset(_))));
    }
}
