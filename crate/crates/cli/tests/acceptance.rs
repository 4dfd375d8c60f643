//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Published values are read from `paper.md` at the repository
//! root rather than restated here.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use aiq_core::adapters::{AdapterConfig, AdapterDescriptor, HttpConfig, ProbeOutcome, Prober};
use aiq_core::bundled;
use aiq_core::dsl::{parse, parse_scale, serialize_scale};
use aiq_core::report::{build_value_report, ValueInput};
use aiq_core::scale::{canonical_order, Scale, WeightingMode};
use aiq_core::scoring::{
    compute_value_iq, compute_weighted_iq, CompletionPolicy, PositivePrice, QuotientKind, QuotientResult, ScoreSheet,
};
use aiq_core::session::{SessionState, SessionStore};
use aiq_core::subject::{SubjectDescriptor, SubjectKind};
use aiq_core::testkit::{random_scale, random_sheet, Behavior, TestServer};
use aiq_core::ErrorCode;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let held: bool = $cond;
        if !held {
            return Err(format!($($msg)+));
        }
    }};
}

const TOL: f64 = 1e-9;

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn paper() -> Result<String, String> {
    std::fs::read_to_string(repo_root().join("paper.md")).map_err(|e| format!("paper.md: {e}"))
}

fn section<'a>(text: &'a str, start: &str, end: &str) -> Result<&'a str, String> {
    let from = text.find(start).ok_or_else(|| format!("{start:?} not found"))?;
    let rest = &text[from..];
    let to = rest.find(end).ok_or_else(|| format!("{end:?} not found"))?;
    Ok(&rest[..to])
}

// ---------------------------------------------------------------- oracle

/// Weighted sum from declared weights, accumulated per category.
fn oracle_iq(scale: &Scale, sheet: &ScoreSheet) -> f64 {
    let all: f64 = scale.indicators().map(|i| i.weight).sum();
    let cats: f64 = scale.categories.iter().filter_map(|c| c.weight).sum();
    scale
        .categories
        .iter()
        .map(|cat| {
            let inner: f64 = cat.indicators.iter().map(|i| i.weight).sum();
            let part: f64 = cat
                .indicators
                .iter()
                .map(|i| i.weight * sheet.entries[&i.id] / i.max_score)
                .sum();
            match scale.weighting_mode {
                WeightingMode::Flat => part / all,
                WeightingMode::Hierarchical => cat.weight.unwrap_or(0.0) / cats * part / inner,
            }
        })
        .sum::<f64>()
        * 100.0
}

fn engine_iq(scale: &Scale, sheet: &ScoreSheet) -> Result<f64, String> {
    compute_weighted_iq(scale, sheet, CompletionPolicy::RequireComplete)
        .map(|r| r.value)
        .map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- criteria

fn table1_regression() -> Outcome {
    let paper = paper()?;
    let table = section(&paper, "Table 1.", "Table 2")?;
    let expected: Vec<(String, String, String)> = table
        .lines()
        .filter_map(|l| {
            let c: Vec<&str> = l.split('\t').map(str::trim).collect();
            (c.len() == 5 && c[0].parse::<u32>().is_ok()).then(|| {
                let subject = if c[1] == "Human" {
                    format!("Human {}", c[3])
                } else {
                    c[3].to_string()
                };
                (c[0].to_string(), subject, format!("{:.2}", c[4].parse::<f64>().unwrap()))
            })
        })
        .collect();
    ensure!(expected.len() == 10, "paper.md Table 1 has {} rows", expected.len());

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_aiq"))
        .args(["--output", "csv", "report", "ranking", "--overlay", "table1_2014", "--data-dir"])
        .arg(dir.path().join("store"))
        .env_remove("AIQ_API_URL")
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure!(out.status.success(), "aiq exited {:?}: {}", out.status, String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    let rows: Vec<(String, String, String)> = text
        .split("\r\n")
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(l.as_bytes());
            let rec = r.records().next().unwrap().unwrap();
            (rec[0].to_string(), rec[1].to_string(), rec[2].to_string())
        })
        .collect();
    ensure!(rows == expected, "rows differ:\n got {rows:?}\nwant {expected:?}");
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("10 rows match paper.md, Google {} ({} ms)", rows[3].2, elapsed.as_millis()))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x51_2017);
    let started = Instant::now();
    let mut worst = 0.0f64;
    let n = 1000;
    for i in 0..n {
        let scale = random_scale(&mut rng, 10);
        let sheet = random_sheet(&mut rng, &scale);
        let diff = (engine_iq(&scale, &sheet)? - oracle_iq(&scale, &sheet)).abs();
        worst = worst.max(diff);
        ensure!(diff <= TOL, "instance {i}: |engine - oracle| = {diff:e}");
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("{n} instances, max diff {worst:.1e}, {} ms", elapsed.as_millis()))
}

fn scoring_properties() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xB0_0D);
    let n = 500;
    for i in 0..n {
        let scale = random_scale(&mut rng, 10);
        let sheet = random_sheet(&mut rng, &scale);
        let base = engine_iq(&scale, &sheet)?;

        ensure!((-TOL..=100.0 + TOL).contains(&base), "bounds, instance {i}: {base}");

        let ids: Vec<(String, f64)> = scale.indicators().map(|x| (x.id.clone(), x.max_score)).collect();
        let (id, max) = &ids[rng.random_range(0..ids.len())];
        let mut raised = sheet.clone();
        let now = raised.entries[id];
        raised.entries.insert(id.clone(), rng.random_range(now..=*max));
        ensure!(engine_iq(&scale, &raised)? >= base - TOL, "monotonicity, instance {i}");

        let mut shuffled = scale.clone();
        for cat in &mut shuffled.categories {
            cat.indicators.shuffle(&mut rng);
        }
        let permuted = engine_iq(&shuffled, &sheet)?;
        ensure!((permuted - base).abs() <= TOL, "permutation, instance {i}: {permuted} vs {base}");

        for c in [1e-6, 0.5, 3.0, 1e6] {
            let mut scaled = scale.clone();
            for cat in &mut scaled.categories {
                cat.weight = cat.weight.map(|w| w * c);
                for ind in &mut cat.indicators {
                    ind.weight *= c;
                }
            }
            let v = engine_iq(&scaled, &sheet)?;
            ensure!((v - base).abs() <= TOL, "scaling by {c}, instance {i}: {v} vs {base}");
        }
    }
    Ok(format!("bounds, monotonicity, permutation, scaling x4 on {n} instances each"))
}

fn service(value: f64) -> QuotientResult {
    QuotientResult {
        kind: QuotientKind::Service,
        value,
        scale_id: bundled::SERVICE_2017_ID.into(),
        session_id: None,
        weighting_mode: WeightingMode::Flat,
        price: None,
        coverage: 1.0,
    }
}

fn price(amount: f64) -> Result<PositivePrice, String> {
    PositivePrice::new(amount, "USD").map_err(|e| e.to_string())
}

fn value_iq(s: f64, p: f64) -> Result<f64, String> {
    compute_value_iq(&service(s), &price(p)?)
        .map(|r| r.value)
        .map_err(|e| e.to_string())
}

fn value_properties() -> Outcome {
    let mut rng = StdRng::seed_from_u64(3);
    for _ in 0..100 {
        let (s, p) = (rng.random_range(0.0..=100.0), rng.random_range(0.01..10_000.0));
        let v = value_iq(s, p)?;
        let direct = 100.0 * s / p;
        ensure!((v - direct).abs() <= TOL * direct.abs().max(1.0), "value_iq({s}, {p}) = {v}, want {direct}");
    }
    for _ in 0..100 {
        let (s, p, c) = (
            rng.random_range(0.0..=100.0),
            rng.random_range(0.01..10_000.0),
            rng.random_range(0.001..1000.0),
        );
        let base = value_iq(s, p)?;
        let scaled = value_iq(s, c * p)? * c;
        ensure!(
            (scaled - base).abs() <= TOL * base.abs().max(f64::MIN_POSITIVE),
            "homogeneity: {scaled} vs {base}"
        );
    }
    let cohorts = 100;
    for k in 0..cohorts {
        let p = rng.random_range(1.0..500.0);
        let inputs: Vec<ValueInput> = (0..10)
            .map(|j| {
                Ok(ValueInput {
                    subject: format!("product-{k}-{j}"),
                    result: service(rng.random_range(0.0..=100.0)),
                    price: price(p)?,
                })
            })
            .collect::<Result<_, String>>()?;
        let report = build_value_report(&inputs).map_err(|e| e.to_string())?;
        let by_value: Vec<&str> = report.rows.iter().map(|r| r.subject.as_str()).collect();
        let mut by_service: Vec<&ValueInput> = inputs.iter().collect();
        by_service.sort_by(|a, b| {
            b.result
                .value
                .total_cmp(&a.result.value)
                .then_with(|| a.subject.cmp(&b.subject))
        });
        let by_service: Vec<&str> = by_service.iter().map(|i| i.subject.as_str()).collect();
        ensure!(by_value == by_service, "cohort {k}: {by_value:?} vs {by_service:?}");
    }
    Ok(format!("100 substitutions, 100 homogeneity pairs, {cohorts} equal-price cohorts of 10"))
}

fn fixtures(kind: &str) -> Result<Vec<PathBuf>, String> {
    let dir = repo_root().join("crates/core/tests/fixtures/dsl").join(kind);
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "scale"))
        .collect();
    files.sort();
    Ok(files)
}

/// Second-column labels of a scale table. Cells that wrap onto a line after
/// a blank one continue the previous row; their description starts lower case.
fn table_labels(table: &str) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    let mut after_blank = false;
    for line in table.lines().skip(3) {
        if line.trim().is_empty() {
            after_blank = true;
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() >= 3 && !cols[1].is_empty() {
            let wrapped = after_blank && cols[2].starts_with(|c: char| c.is_lowercase());
            match labels.last_mut() {
                Some(last) if wrapped => {
                    last.push(' ');
                    last.push_str(cols[1]);
                }
                _ => labels.push(cols[1].to_string()),
            }
        }
        after_blank = false;
    }
    labels
}

fn dsl_corpus() -> Outcome {
    let mut corpus: Vec<(String, String)> = Vec::new();
    for p in fixtures("valid")? {
        let text = std::fs::read_to_string(&p).map_err(|e| e.to_string())?;
        corpus.push((p.display().to_string(), text));
    }
    for (id, _, text) in bundled::sources() {
        corpus.push((id.to_string(), text.to_string()));
    }
    ensure!(corpus.len() == 20, "corpus has {} files", corpus.len());
    for (name, text) in &corpus {
        let scale = parse_scale(text).map_err(|d| format!("{name}: {d:?}"))?;
        let canonical = serialize_scale(&scale);
        let again = parse_scale(&canonical).map_err(|d| format!("{name} reparse: {d:?}"))?;
        ensure!(again == scale, "{name}: parse(serialize(s)) != s");
        ensure!(serialize_scale(&again) == canonical, "{name}: serialize not a fixed point");
    }

    let malformed = fixtures("malformed")?;
    ensure!(malformed.len() >= 15, "only {} malformed fixtures", malformed.len());
    for p in &malformed {
        let text = std::fs::read_to_string(p).map_err(|e| e.to_string())?;
        let header: Vec<&str> = text.lines().next().unwrap_or("").split_whitespace().collect();
        ensure!(header.len() == 4 && header[1] == "expect", "{}: bad expectation header", p.display());
        let (code, line) = (header[2], header[3].parse::<usize>().map_err(|e| e.to_string())?);
        let parsed = parse(&text);
        ensure!(parsed.scale.is_none(), "{} parsed", p.display());
        ensure!(
            parsed.errors().any(|d| d.code.as_str() == code && d.span.line == line),
            "{}: want {code} at line {line}, got {:?}",
            p.display(),
            parsed.diagnostics.iter().map(|d| (d.code.as_str(), d.span.line)).collect::<Vec<_>>()
        );
    }

    for (id, _, text) in bundled::sources() {
        ensure!(parse(text).diagnostics.is_empty(), "{id} has diagnostics");
    }
    let paper = paper()?;
    let general = bundled::general_2017();
    let service = bundled::service_2017();
    let has = |scale: &Scale, label: &str| scale.indicators().any(|i| i.name.eq_ignore_ascii_case(label));
    let t3 = table_labels(section(&paper, "Table 3 General", "Let the general IQ")?);
    let t4 = table_labels(section(&paper, "Table 4 Service", "Set the general IQ")?);
    ensure!(t3.len() == 27 && t4.len() == 31, "table reader found {} / {} rows", t3.len(), t4.len());
    for label in &t3 {
        ensure!(has(&general, label), "general-2017 lacks Table 3 row {label:?}");
    }
    for label in &t4 {
        ensure!(has(&service, label), "service-2017 lacks Table 4 row {label:?}");
    }

    let additions = section(&paper, "by mainly adding: **", ".**")?;
    let additions: Vec<String> = additions
        .trim_start_matches("by mainly adding: **")
        .split(';')
        .map(|s| {
            let s = s.trim().trim_start_matches("and ");
            s.trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == ' ').to_string()
        })
        .collect();
    let mapped: [(&str, &[&str]); 6] = [
        ("Ability to recognize dynamic images", &["dynamic-image-recognition"]),
        ("Ability to recognize and express emotions", &["emotion-identification", "emotion-expression"]),
        ("Ability to identify enemies and friends", &["enemy-friend-identification"]),
        ("Ability to disguise true intentions", &["intention-disguise"]),
        ("Ability to achieve mobile positioning", &["mobile-positioning"]),
        ("Ability to transform the world", &["world-transformation"]),
    ];
    let names: Vec<&str> = mapped.iter().map(|(n, _)| *n).collect();
    ensure!(additions == names, "paper.md lists additions {additions:?}");
    for (name, ids) in mapped {
        for id in ids {
            ensure!(general.indicator(id).is_some(), "{name:?}: general-2017 has no {id}");
        }
    }
    Ok(format!(
        "20-file fixed point, {} malformed fixtures, {} + {} table rows, 6 additions",
        malformed.len(),
        t3.len(),
        t4.len()
    ))
}

fn session_lifecycle() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = SessionStore::open(dir.path()).map_err(|e| e.to_string())?;
    let subject = SubjectDescriptor::new("bot", SubjectKind::AiSystem);
    let mut rng = StdRng::seed_from_u64(200);
    let mut rejected = 0;
    let n = 200;
    for i in 0..n {
        let scale = random_scale(&mut rng, 5);
        let ids: Vec<(String, f64)> = scale.indicators().map(|x| (x.id.clone(), x.max_score)).collect();
        let s = store.create(&scale, subject.clone(), "manual").map_err(|e| e.to_string())?;
        let mut expected = BTreeMap::new();
        for _ in 0..rng.random_range(1..=3 * ids.len()) {
            let (id, max) = &ids[rng.random_range(0..ids.len())];
            if rng.random_bool(0.15) {
                store.add_note(&s.id, Some(id), "note").map_err(|e| e.to_string())?;
                continue;
            }
            let score = rng.random_range(0.0..=*max);
            expected.insert(id.clone(), score);
            store
                .record_score(&s.id, &scale, id, score, None)
                .map_err(|e| e.to_string())?;
        }
        let missing: Vec<String> = canonical_order(&scale)
            .into_iter()
            .filter(|id| !expected.contains_key(id))
            .collect();
        match store.complete(&s.id, &scale, CompletionPolicy::RequireComplete) {
            Ok(_) => ensure!(missing.is_empty(), "session {i} completed while missing {missing:?}"),
            Err(aiq_core::Error::IncompleteSheet { missing: reported }) => {
                ensure!(reported == missing, "session {i}: reported {reported:?}, missing {missing:?}");
                rejected += 1;
                store
                    .complete(&s.id, &scale, CompletionPolicy::RenormalizeOverScored)
                    .map_err(|e| e.to_string())?;
            }
            Err(e) => return Err(e.to_string()),
        }
        let snapshot = store.load(&s.id).map_err(|e| e.to_string())?;
        let replayed = snapshot.verify().map_err(|e| e.to_string())?;
        ensure!(replayed.state == SessionState::Complete, "session {i} not complete");
        ensure!(replayed.updated_at == snapshot.updated_at, "session {i}: updated_at");
        ensure!(replayed.final_scores == expected, "session {i}: final scores differ");
        ensure!(snapshot.final_scores() == expected, "session {i}: snapshot scores differ");
    }

    for scale in bundled::all() {
        for (label, want) in [("all-max", "100.00"), ("all-zero", "0.00")] {
            let s = store.create(&scale, subject.clone(), "manual").map_err(|e| e.to_string())?;
            for ind in scale.indicators() {
                let score = if label == "all-max" { ind.max_score } else { 0.0 };
                store
                    .record_score(&s.id, &scale, &ind.id, score, None)
                    .map_err(|e| e.to_string())?;
            }
            let done = store
                .complete(&s.id, &scale, CompletionPolicy::RequireComplete)
                .map_err(|e| e.to_string())?;
            let got = format!("{:.2}", done.result.map(|r| r.value).unwrap_or(f64::NAN));
            ensure!(got == want, "{} {label}: {got}", scale.id);
        }
    }
    Ok(format!("{n} sessions replayed, {rejected} incomplete sheets rejected exactly, 100.00 / 0.00"))
}

fn http_adapter(url: String, timeout_ms: i64, retries: i64) -> AdapterDescriptor {
    let mut c = HttpConfig::new(url, timeout_ms);
    c.retries = retries;
    c.backoff_base_ms = Some(5);
    AdapterDescriptor {
        id: "probe".into(),
        config: AdapterConfig::Http(c),
    }
}

async fn adapter_contract() -> Outcome {
    let prober = Prober::new();
    for retries in 0..=3 {
        let server = TestServer::start(Behavior::Drop).await.map_err(|e| e.to_string())?;
        let r = prober
            .probe(&http_adapter(server.url("/"), 2000, retries), "x", "hi")
            .await
            .map_err(|e| e.to_string())?;
        ensure!(r.outcome == ProbeOutcome::TransportError, "retries {retries}: {:?}", r.outcome);
        ensure!(server.hits() == retries as usize + 1, "retries {retries}: {} attempts", server.hits());
    }

    let ok = TestServer::start(Behavior::Respond {
        status: 200,
        body: "{\"text\":\"fine\"}".into(),
    })
    .await
    .map_err(|e| e.to_string())?;
    let r = prober
        .probe(&http_adapter(ok.url("/"), 2000, 3), "x", "hi")
        .await
        .map_err(|e| e.to_string())?;
    ensure!(r.outcome == ProbeOutcome::Ok, "success probe: {:?}", r.outcome);
    ensure!(ok.hits() == 1, "{} attempts after a success", ok.hits());

    let hang = TestServer::start(Behavior::Hang).await.map_err(|e| e.to_string())?;
    let mut worst = 0i64;
    for timeout in [200i64, 400] {
        let r = prober
            .probe(&http_adapter(hang.url("/"), timeout, 2), "x", "hi")
            .await
            .map_err(|e| e.to_string())?;
        ensure!(r.outcome == ProbeOutcome::Timeout, "timeout {timeout}: {:?}", r.outcome);
        let off = (r.latency_ms as i64 - timeout).abs();
        worst = worst.max(off);
        ensure!(off <= 100, "timeout {timeout} ms honored at {} ms", r.latency_ms);
    }

    let manual = AdapterDescriptor {
        id: "manual".into(),
        config: AdapterConfig::Manual,
    };
    for prompt in ["hi", "2+2?", "describe this image"] {
        let r = prober.probe(&manual, "x", prompt).await.map_err(|e| e.to_string())?;
        ensure!(r.outcome == ProbeOutcome::Refused && r.response.is_none(), "manual answered {prompt:?}");
    }
    Ok(format!("attempts = retries + 1 for 0..=3, 1 attempt on success, timeout within {worst} ms, manual refuses"))
}

async fn api_contract() -> Outcome {
    for &code in ErrorCode::ALL {
        let status = aiq_server::status_for(code).as_u16();
        ensure!([400, 401, 403, 404, 409, 422, 500].contains(&status), "{code} maps to {status}");
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut config = aiq_server::ServeConfig::new(dir.path().join("data"));
    config.port = 0;
    let server = aiq_server::serve(config).await.map_err(|e| e.to_string())?;
    let base = format!("{}/v1", server.url());
    let client = reqwest::Client::new();
    let mut covered = Vec::new();

    macro_rules! call {
        ($method:ident, $route:expr, $path:expr, $body:expr, $status:expr) => {{
            let mut req = client.$method(format!("{base}{}", $path));
            let body: Option<String> = $body;
            if let Some(b) = body {
                req = req.body(b);
            }
            let res = req.send().await.map_err(|e| e.to_string())?;
            let status = res.status().as_u16();
            let bytes = res.bytes().await.map_err(|e| e.to_string())?;
            ensure!(
                status == $status,
                "{} {}: {status} {}",
                stringify!($method),
                $path,
                String::from_utf8_lossy(&bytes)
            );
            covered.push(format!("{} {}", stringify!($method).to_uppercase(), $route));
            serde_json::from_slice::<Value>(&bytes).unwrap_or(Value::Null)
        }};
    }
    let j = |v: Value| Some(v.to_string());

    call!(get, "/health", "/health", None, 200);
    call!(get, "/scales", "/scales", None, 200);
    call!(post, "/scales", "/scales?id=general-copy", Some(bundled::GENERAL_2017.to_string()), 201);
    call!(get, "/scales/{id}", "/scales/general-copy", None, 200);
    call!(get, "/adapters", "/adapters", None, 200);
    call!(
        post,
        "/adapters",
        "/adapters",
        j(json!({"id": "echo", "kind": "mock", "table": {"hi": "hello"}})),
        201
    );
    let new = |scale: &str, name: &str| j(json!({"scale_id": scale, "subject": {"name": name, "kind": "ai_system"}, "adapter_id": "echo"}));
    let s = call!(post, "/sessions", "/sessions", new("general-2017", "bot"), 201);
    let id = s["id"].as_str().unwrap_or_default().to_string();
    call!(get, "/sessions", "/sessions?state=open", None, 200);
    call!(get, "/sessions/{id}", format!("/sessions/{id}"), None, 200);
    let p = call!(
        post,
        "/sessions/{id}/probe",
        format!("/sessions/{id}/probe"),
        j(json!({"indicator_id": "calculation", "prompt": "hi"})),
        200
    );
    ensure!(p["response"] == "hello", "probe answered {p}");

    // preview equals a direct engine call over the same scores
    let scale = bundled::general_2017();
    let mut sheet = ScoreSheet::new(&scale.id);
    let mut rng = StdRng::seed_from_u64(9);
    for ind in scale.indicators().take(6) {
        let score = rng.random_range(0.0..=ind.max_score);
        sheet.entries.insert(ind.id.clone(), score);
        let out = call!(
            post,
            "/sessions/{id}/scores",
            format!("/sessions/{id}/scores"),
            j(json!({"indicator_id": ind.id, "score": score})),
            200
        );
        let direct = compute_weighted_iq(&scale, &sheet, CompletionPolicy::RenormalizeOverScored)
            .map_err(|e| e.to_string())?;
        let shown = out["preview"]["value"].as_f64().unwrap_or(f64::NAN);
        ensure!(shown.to_bits() == direct.value.to_bits(), "preview {shown} vs engine {}", direct.value);
    }

    // a retried score with one idempotency key records one event
    let key_body = json!({"indicator_id": "translation", "score": 42}).to_string();
    let mut replayed = 0;
    for _ in 0..2 {
        let res = client
            .post(format!("{base}/sessions/{id}/scores"))
            .header("Idempotency-Key", "acceptance-1")
            .body(key_body.clone())
            .send()
            .await
            .map_err(|e| e.to_string())?;
        ensure!(res.status().as_u16() == 200, "idempotent score: {}", res.status());
        replayed += usize::from(res.headers().contains_key("idempotent-replayed"));
    }
    let session = call!(get, "/sessions/{id}", format!("/sessions/{id}"), None, 200);
    let translation_events = session["events"]
        .as_array()
        .map(|ev| ev.iter().filter(|e| e["indicator_id"] == "translation").count())
        .unwrap_or(0);
    ensure!(translation_events == 1 && replayed == 1, "{translation_events} events, {replayed} replays");

    call!(
        post,
        "/sessions/{id}/notes",
        format!("/sessions/{id}/notes"),
        j(json!({"note": "done"})),
        200
    );
    call!(
        post,
        "/sessions/{id}/complete",
        format!("/sessions/{id}/complete"),
        j(json!({"policy": "renormalize_over_scored"})),
        200
    );
    let other = call!(post, "/sessions", "/sessions", new("service-2017", "speaker"), 201);
    let other_id = other["id"].as_str().unwrap_or_default().to_string();
    call!(
        post,
        "/sessions/{id}/abandon",
        format!("/sessions/{other_id}/abandon"),
        Some(String::new()),
        200
    );
    let svc = call!(post, "/sessions", "/sessions", new("service-2017", "speaker"), 201);
    let svc_id = svc["id"].as_str().unwrap_or_default().to_string();
    call!(
        post,
        "/sessions/{id}/scores",
        format!("/sessions/{svc_id}/scores"),
        j(json!({"indicator_id": "text-display", "score": 80})),
        200
    );
    call!(
        post,
        "/sessions/{id}/complete",
        format!("/sessions/{svc_id}/complete"),
        j(json!({"policy": "renormalize_over_scored"})),
        200
    );
    call!(
        post,
        "/products",
        "/products",
        j(json!({"name": "speaker", "price": 40, "currency": "USD"})),
        201
    );
    call!(get, "/products", "/products", None, 200);
    call!(get, "/reports/ranking", "/reports/ranking?scale_id=general-2017&overlay=table1_2014", None, 200);
    let v = call!(get, "/reports/value", "/reports/value?currency=USD", None, 200);
    ensure!(v["rows"][0]["value_iq"].as_f64() == Some(200.0), "value report {v}");
    call!(get, "/reference/{dataset}", "/reference/table2_2016", None, 200);

    // error mapping at the wire
    let e = call!(
        post,
        "/sessions/{id}/scores",
        format!("/sessions/{id}/scores"),
        j(json!({"indicator_id": "calculation", "score": 1})),
        409
    );
    ensure!(e["code"] == "SESSION_NOT_OPEN", "{e}");
    call!(get, "/scales/{id}", "/scales/missing", None, 404);
    call!(post, "/sessions", "/sessions", Some("{".into()), 400);
    server.shutdown().await;

    covered.sort();
    covered.dedup();
    let routes = [
        "GET /adapters",
        "GET /health",
        "GET /products",
        "GET /reference/{dataset}",
        "GET /reports/ranking",
        "GET /reports/value",
        "GET /scales",
        "GET /scales/{id}",
        "GET /sessions",
        "GET /sessions/{id}",
        "POST /adapters",
        "POST /products",
        "POST /scales",
        "POST /sessions",
        "POST /sessions/{id}/abandon",
        "POST /sessions/{id}/complete",
        "POST /sessions/{id}/notes",
        "POST /sessions/{id}/probe",
        "POST /sessions/{id}/scores",
    ];
    ensure!(covered == routes, "covered {covered:?}");
    Ok(format!(
        "{} routes, {} codes mapped, idempotent retry = 1 event, preview bit-equal to engine",
        routes.len(),
        ErrorCode::ALL.len()
    ))
}

fn main() {
    let runtime = tokio::runtime::Runtime::new().expect("runtime");
    let criteria: Vec<Criterion> = vec![
        ("Published ranking regression", Box::new(table1_regression)),
        ("Weighted IQ matches independent oracle", Box::new(oracle_equivalence)),
        ("Scoring property suite", Box::new(scoring_properties)),
        ("Value IQ properties", Box::new(value_properties)),
        ("DSL round-trip and diagnostics", Box::new(dsl_corpus)),
        ("Session lifecycle", Box::new(session_lifecycle)),
        ("Adapter contract", Box::new(|| runtime.block_on(adapter_contract()))),
        ("API contract", Box::new(|| runtime.block_on(api_contract()))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>())));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({secs:.2} s)"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name}: {reason} ({secs:.2} s)");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
