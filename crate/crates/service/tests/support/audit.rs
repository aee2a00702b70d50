//! Scripted end-to-end session against a live server, restarted mid-way.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};
use tokio::task::JoinHandle;
use yn_crowd::io::{parse_votes, write_votes, ObjectRecord, Payload};
use yn_crowd::model::{ClassInfo, ClassSpace, LabelerId, ObjectId, ResponsePair, VoteTable};
use yn_crowd::rng::id_index;
use yn_crowd_service::{router, BudgetSpec, CampaignSpec, Ordering, Store};

pub struct Server {
    pub base: String,
    handle: JoinHandle<()>,
}

impl Server {
    pub async fn start(dir: &Path, static_dir: Option<PathBuf>) -> Self {
        let store = Arc::new(Store::open(dir).unwrap());
        let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0))).await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let app = router(store, static_dir);
        let handle = tokio::spawn(async move {
            axum::serve(listener, app).await.unwrap();
        });
        Self { base, handle }
    }

    /// Kills the server without any shutdown hook.
    pub async fn crash(self) {
        self.handle.abort();
        let _ = self.handle.await;
    }
}

pub const CLASSES: [&str; 4] = ["eb", "be", "lpb", "cep"];

pub fn campaign_spec(id: &str, n_objects: usize, n_known: usize, n_full_unknown: usize) -> CampaignSpec {
    CampaignSpec {
        id: id.into(),
        classes: CLASSES
            .iter()
            .map(|c| ClassInfo {
                id: c.to_string(),
                name: c.to_uppercase(),
            })
            .collect(),
        objects: (0..n_objects)
            .map(|i| ObjectRecord {
                id: format!("obj{i:03}").into(),
                payload: if i % 2 == 0 {
                    Payload::Image(format!("img/obj{i:03}.png"))
                } else {
                    Payload::Series(vec![(0.0, 1.5), (0.7, -0.25), (2.5, 3.0)])
                },
            })
            .collect(),
        known: (0..n_known)
            .map(|i| (format!("obj{i:03}"), CLASSES[i % 4].to_string()))
            .collect(),
        full_unknown: (n_known..n_known + n_full_unknown).map(|i| format!("obj{i:03}")).collect(),
        seed: 42,
        budget: BudgetSpec { min: 1, max: 4 },
        ordering: Ordering::Uniform,
    }
}

/// The script's answer to a question; deterministic in its arguments.
pub fn scripted_answer(labeler: &str, object: &str, class: Option<&str>) -> String {
    let h = id_index(labeler) ^ id_index(object).rotate_left(7) ^ class.map_or(0, id_index).rotate_left(13);
    match class {
        Some(_) => if h % 3 == 0 { "yes" } else { "no" }.to_string(),
        None => CLASSES[(h % 4) as usize].to_string(),
    }
}

#[derive(Debug, Default)]
pub struct AuditReport {
    pub exported_equals_script: bool,
    pub export_bytes_equal_script: bool,
    pub repeated_pairs: usize,
    pub budget_violations: usize,
    pub acknowledged: usize,
    pub lost_after_restart: usize,
    pub duplicate_acks: usize,
    pub all_done: bool,
    pub final_fractions: Vec<f64>,
}

async fn get(client: &reqwest::Client, url: &str, token: &str) -> Value {
    let r = client.get(url).bearer_auth(token).send().await.unwrap();
    assert!(r.status().is_success(), "GET {url}: {}", r.status());
    r.json().await.unwrap()
}

async fn post(client: &reqwest::Client, url: &str, token: &str, body: Value) -> (u16, Value) {
    let r = client.post(url).bearer_auth(token).json(&body).send().await.unwrap();
    let status = r.status().as_u16();
    (status, r.json().await.unwrap())
}

/// Drives `labelers` through a whole campaign, crashing and restarting the
/// server after `crash_after` acknowledged answers.
pub async fn run_audit(dir: &Path, n_objects: usize, labelers: &[&str], crash_after: usize) -> AuditReport {
    let client = reqwest::Client::new();
    let mut server = Server::start(dir, None).await;
    let spec = campaign_spec("audit", n_objects, 10, 5);
    let budget_of: BTreeMap<(String, String), usize>;
    {
        let r = client.post(format!("{}/campaigns", server.base)).json(&spec).send().await.unwrap();
        assert_eq!(r.status().as_u16(), 201);
    }
    let mut tokens = BTreeMap::new();
    for l in labelers {
        let (status, body) = post(&client, &format!("{}/campaigns/audit/labelers", server.base), "", json!({ "labeler_id": l })).await;
        assert_eq!(status, 201);
        tokens.insert(l.to_string(), body["token"].as_str().unwrap().to_string());
    }
    let classes = ClassSpace::from_ids(&CLASSES).unwrap();
    let mut script = VoteTable::new(4);
    let mut report = AuditReport::default();
    let mut asked: BTreeSet<(String, String, String)> = BTreeSet::new();
    let mut per_pair: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut active: Vec<&str> = labelers.to_vec();
    let mut turn = 0usize;
    let mut crashed = false;
    while !active.is_empty() {
        let l = active[turn % active.len()];
        let token = &tokens[l];
        let next_url = format!("{}/campaigns/audit/labelers/{l}/next", server.base);
        let q = get(&client, &next_url, token).await;
        if q["status"] == "done" {
            active.retain(|x| *x != l);
            continue;
        }
        // Asking again before answering returns the same question.
        let again = get(&client, &next_url, token).await;
        assert_eq!(again["question_token"], q["question_token"]);
        let object = q["object_id"].as_str().unwrap().to_string();
        let class = q["class_id"].as_str().map(str::to_string);
        let key = (l.to_string(), object.clone(), class.clone().unwrap_or_else(|| "FULL".into()));
        if !asked.insert(key) {
            report.repeated_pairs += 1;
        }
        let answer = scripted_answer(l, &object, class.as_deref());
        let body = json!({ "question_token": q["question_token"], "answer": answer, "client_latency_ms": 250 });
        let resp_url = format!("{}/campaigns/audit/labelers/{l}/responses", server.base);
        let (status, ack) = post(&client, &resp_url, token, body.clone()).await;
        assert_eq!((status, ack["status"].as_str()), (200, Some("recorded")));
        report.acknowledged += 1;
        match &class {
            Some(c) => {
                *per_pair.entry((l.to_string(), object.clone())).or_default() += 1;
                let r = if answer == "yes" { ResponsePair::YES } else { ResponsePair::NO };
                script
                    .insert_yn(LabelerId::from(l), ObjectId::from(object.as_str()), classes.index_of(c).unwrap(), r)
                    .unwrap();
            }
            None => script
                .insert_full(LabelerId::from(l), ObjectId::from(object.as_str()), classes.index_of(&answer).unwrap())
                .unwrap(),
        }
        // A retried submission is acknowledged but not stored twice.
        if report.acknowledged % 7 == 0 {
            let (status, ack) = post(&client, &resp_url, token, body).await;
            assert_eq!((status, ack["status"].as_str()), (200, Some("duplicate")));
            report.duplicate_acks += 1;
        }
        if !crashed && report.acknowledged == crash_after {
            server.crash().await;
            server = Server::start(dir, None).await;
            crashed = true;
            let votes = export_votes(&client, &server.base).await;
            let restored = parse_votes(votes.as_bytes(), "export", &classes).unwrap();
            report.lost_after_restart = report.acknowledged - (restored.yn_len() + restored.full_len());
        }
        turn += 1;
    }
    report.all_done = true;
    // Compare the export with the script.
    let votes = export_votes(&client, &server.base).await;
    let exported = parse_votes(votes.as_bytes(), "export", &classes).unwrap();
    report.exported_equals_script = exported == script;
    let mut script_bytes = Vec::new();
    write_votes(&script, &classes, &mut script_bytes).unwrap();
    report.export_bytes_equal_script = script_bytes == votes.as_bytes();
    // Budgets come from the same deterministic draw the server uses.
    budget_of = {
        let state = yn_crowd_service::store::load_log(&dir.join("audit.jsonl")).unwrap().0;
        per_pair
            .keys()
            .map(|(l, o)| ((l.clone(), o.clone()), state.budget(&l.as_str().into(), &o.as_str().into())))
            .collect()
    };
    report.budget_violations = per_pair.iter().filter(|(k, n)| **n > budget_of[*k]).count();
    let progress: Value = client
        .get(format!("{}/campaigns/audit/progress", server.base))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    report.final_fractions = progress["labelers"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["fraction"].as_f64().unwrap())
        .collect();
    server.crash().await;
    report
}

pub async fn export_votes(client: &reqwest::Client, base: &str) -> String {
    let r = client
        .get(format!("{base}/campaigns/audit/export?file=votes.csv"))
        .send()
        .await
        .unwrap();
    assert!(r.status().is_success());
    r.text().await.unwrap()
}
