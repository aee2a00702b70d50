//! Campaign export in the canonical delimited formats.

use std::collections::BTreeMap;

use chrono::DateTime;
use serde::Serialize;
use yn_crowd::io::{write_classes, write_labels, write_objects, write_votes, TableWriter};

use crate::error::Result;
use crate::state::{CampaignState, Mode};

pub const TIMINGS_HEADER: &[&str] = &[
    "labeler_id",
    "object_id",
    "class_id",
    "question_type",
    "issued_at",
    "answered_at",
    "latency_ms",
    "client_latency_ms",
];

/// File name to file content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExportBundle {
    pub campaign_id: String,
    pub files: BTreeMap<String, String>,
}

fn to_string(f: impl FnOnce(&mut Vec<u8>) -> yn_crowd::Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(String::from_utf8(buf).expect("writers emit UTF-8"))
}

pub fn export(state: &CampaignState) -> Result<ExportBundle> {
    let mut files = BTreeMap::new();
    let classes = &state.classes;
    files.insert("classes.csv".into(), to_string(|b| write_classes(classes, b))?);
    files.insert("objects.csv".into(), to_string(|b| write_objects(&state.spec.objects, b))?);
    files.insert(
        "known_labels.csv".into(),
        to_string(|b| write_labels(state.known_labels(), classes, b))?,
    );
    files.insert("votes.csv".into(), to_string(|b| write_votes(&state.vote_table(), classes, b))?);
    files.insert("timings.csv".into(), timings(state)?);
    Ok(ExportBundle {
        campaign_id: state.spec.id.clone(),
        files,
    })
}

/// Server-side answer latency per vote, in answer order.
fn timings(state: &CampaignState) -> Result<String> {
    to_string(|b| {
        let mut w = TableWriter::new(b, TIMINGS_HEADER)?;
        for v in &state.votes {
            let latency = match (
                DateTime::parse_from_rfc3339(&v.question.issued_at),
                DateTime::parse_from_rfc3339(&v.answered_at),
            ) {
                (Ok(a), Ok(b)) => (b - a).num_milliseconds().to_string(),
                _ => String::new(),
            };
            let class = v.question.class.map_or("", |c| state.classes.id(c));
            w.row(&[
                v.labeler.as_str(),
                v.question.object_id.as_str(),
                class,
                match v.question.mode {
                    Mode::Yn => "yn",
                    Mode::Full => "full",
                },
                &v.question.issued_at,
                &v.answered_at,
                &latency,
                &v.client_latency_ms.map(|l| l.to_string()).unwrap_or_default(),
            ])?;
        }
        w.finish()
    })
}
