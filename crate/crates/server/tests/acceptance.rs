//! Acceptance suite. Runs without the test harness and prints one
//! `PASS`/`FAIL` line per criterion; exits non-zero if any criterion fails.

use std::collections::HashMap;
use std::io::Write;
use std::net::TcpListener as StdListener;
use std::panic::AssertUnwindSafe;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode as AxStatus};
use axum::response::IntoResponse;
use axum::routing::post;
use axum::Router;
use chatpoints_core::tsne::{calibrate_row, compute_affinities, gradient, run_projection, ProjectionConfig};
use chatpoints_core::{synthesize_dataset, Analytics, Dataset, SynthesisSpec};
use chatpoints_dialogue::{build_system_prompt, check_sections, ChatTarget, PersonaRegistry, PromptContext};
use chatpoints_gateway::{
    numeric_tokens, prompt_section, ApiKey, ChatProvider, GatewayConfig, GatewayError, LiveConfig,
    LiveProvider, ProviderKind, ProviderMessage, ProviderRequest, StubProvider,
};
use chatpoints_server::{build, ServerConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const KMEANS_MIN_AGREEMENT: f64 = 0.9;
const TSNE_MAX_SECONDS: f64 = 60.0;
const GRADIENT_REL_TOL: f64 = 1e-5;
const AFFINITY_SUM_TOL: f64 = 1e-9;
const LOG2_PERPLEXITY_TOL: f64 = 1e-4;
const E2E_MAX_SECONDS: f64 = 300.0;
const RETRY_BASE_MS: u128 = 500;
/// Allowed lateness of a retry beyond its scheduled delay.
const RETRY_SLACK_MS: u128 = 250;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [Criterion; 6] = [
        ("t-SNE correctness", tsne_correctness),
        ("perplexity calibration", perplexity_calibration),
        ("cat/dog scenario reproduction", scenario_reproduction),
        ("prompt completeness", prompt_completeness),
        ("offline end-to-end", offline_end_to_end),
        ("gateway contracts", gateway_contracts),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(&p))));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.1} s): {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.1} s): {reason}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

// ---------------------------------------------------------------- t-SNE

fn kl_from_definition(p: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let n = y.nrows();
    let sq = |i: usize, j: usize| (y[[i, 0]] - y[[j, 0]]).powi(2) + (y[[i, 1]] - y[[j, 1]]).powi(2);
    let mut z = 0.0;
    for k in 0..n {
        for l in 0..n {
            if k != l {
                z += 1.0 / (1.0 + sq(k, l));
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && p[[i, j]] > 0.0 {
                let q = 1.0 / (1.0 + sq(i, j)) / z;
                kl += p[[i, j]] * (p[[i, j]] / q).ln();
            }
        }
    }
    kl
}

fn finite_difference_gradient(p: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    let h = 1e-5;
    let mut g = Array2::zeros(y.raw_dim());
    for i in 0..y.nrows() {
        for k in 0..2 {
            let mut plus = y.clone();
            let mut minus = y.clone();
            plus[[i, k]] += h;
            minus[[i, k]] -= h;
            g[[i, k]] = (kl_from_definition(p, &plus) - kl_from_definition(p, &minus)) / (2.0 * h);
        }
    }
    g
}

fn sq_dist(points: &Array2<f64>, i: usize, c: &[f64; 2]) -> f64 {
    (points[[i, 0]] - c[0]).powi(2) + (points[[i, 1]] - c[1]).powi(2)
}

/// Lloyd's algorithm, best inertia over seeded restarts.
fn kmeans(points: &Array2<f64>, k: usize) -> Vec<usize> {
    let n = points.nrows();
    let mut best = (f64::INFINITY, vec![0; n]);
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centers: Vec<[f64; 2]> = (0..k)
            .map(|_| {
                let r = rng.random_range(0..n);
                [points[[r, 0]], points[[r, 1]]]
            })
            .collect();
        let mut labels = vec![0; n];
        for _ in 0..100 {
            for (i, label) in labels.iter_mut().enumerate() {
                *label = (0..k)
                    .min_by(|&a, &b| sq_dist(points, i, &centers[a]).total_cmp(&sq_dist(points, i, &centers[b])))
                    .unwrap();
            }
            for (c, center) in centers.iter_mut().enumerate() {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                if !members.is_empty() {
                    let m = members.len() as f64;
                    center[0] = members.iter().map(|&i| points[[i, 0]]).sum::<f64>() / m;
                    center[1] = members.iter().map(|&i| points[[i, 1]]).sum::<f64>() / m;
                }
            }
        }
        let inertia: f64 = (0..n).map(|i| sq_dist(points, i, &centers[labels[i]])).sum();
        if inertia < best.0 {
            best = (inertia, labels);
        }
    }
    best.1
}

fn agreement_under_best_permutation(truth: &[usize], found: &[usize]) -> f64 {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    PERMS
        .iter()
        .map(|perm| truth.iter().zip(found).filter(|(t, f)| perm[**f] == **t).count())
        .max()
        .unwrap() as f64
        / truth.len() as f64
}

fn tsne_correctness() -> Outcome {
    let ds: Dataset = synthesize_dataset(&SynthesisSpec::new(3, 50, 64, 42)).map_err(|e| e.to_string())?;
    let x = ds.embedding_matrix();
    ensure(x.dim() == (150, 64), || format!("unexpected shape {:?}", x.dim()))?;

    let config = ProjectionConfig::default();
    let started = Instant::now();
    let result = run_projection(x.view(), &config).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < TSNE_MAX_SECONDS, || format!("projection took {secs:.1} s"))?;
    let truth: Vec<usize> = ds.instances().iter().map(|i| i.true_label).collect();
    let agreement = agreement_under_best_permutation(&truth, &kmeans(&result.coordinates, 3));
    ensure(agreement >= KMEANS_MIN_AGREEMENT, || format!("k-means agreement {agreement}"))?;

    let mut worst_grad = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = rng.random_range(4..=10);
        let pts = Array2::from_shape_simple_fn((n, 5), || rng.random_range(-2.0..2.0));
        let perplexity = 1.0 + (n as f64 - 2.0) / 2.0;
        let p = compute_affinities(pts.view(), perplexity).map_err(|e| e.to_string())?.joint;
        let y = Array2::from_shape_simple_fn((n, 2), || rng.random_range(-3.0..3.0));
        let analytic = gradient(p.view(), y.view()).map_err(|e| e.to_string())?;
        let numeric = finite_difference_gradient(&p, &y);
        let norm = |a: &Array2<f64>| a.mapv(|v| v * v).sum().sqrt();
        let rel = norm(&(&analytic - &numeric)) / norm(&analytic).max(norm(&numeric));
        worst_grad = worst_grad.max(rel);
    }
    ensure(worst_grad <= GRADIENT_REL_TOL, || format!("gradient relative error {worst_grad:e}"))?;

    let p = compute_affinities(x.view(), config.perplexity).map_err(|e| e.to_string())?.joint;
    let total = p.sum();
    ensure((total - 1.0).abs() <= AFFINITY_SUM_TOL, || format!("affinities sum to {total}"))?;
    for i in 0..p.nrows() {
        ensure(p[[i, i]] == 0.0, || format!("diagonal {i} is {}", p[[i, i]]))?;
        for j in 0..i {
            ensure(p[[i, j]] == p[[j, i]], || format!("asymmetric at ({i}, {j})"))?;
        }
    }

    let again = run_projection(x.view(), &config).map_err(|e| e.to_string())?;
    let same_bits = result
        .coordinates
        .iter()
        .zip(again.coordinates.iter())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    ensure(same_bits, || "two fixed-seed runs differ".into())?;

    Ok(format!(
        "agreement {agreement:.3}, {secs:.1} s, max gradient rel err {worst_grad:.1e}, affinity sum err {:.1e}, bit-identical rerun",
        (total - 1.0).abs()
    ))
}

// ---------------------------------------------------------- perplexity

fn log2_perplexity_at(d: &[f64], beta: f64) -> f64 {
    let w: Vec<f64> = d.iter().map(|x| (-beta * x).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).filter(|p| *p > 0.0).map(|p| -p * p.log2()).sum()
}

fn perplexity_calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let mut worst = 0.0f64;
    for row in 0..100 {
        let len = rng.random_range(10..300);
        let scale = rng.random_range(0.1..100.0);
        let d: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0) * scale).collect();
        let target = rng.random_range(2.0..(len as f64 / 3.0).max(2.5));
        let cal = calibrate_row(&d, target).map_err(|e| format!("row {row}: {e}"))?;
        let err = (log2_perplexity_at(&d, cal.beta) - target.log2()).abs();
        ensure(err <= LOG2_PERPLEXITY_TOL, || format!("row {row}: log2 error {err:e} at target {target}"))?;
        worst = worst.max(err);
    }
    Ok(format!("100 rows, worst log2-perplexity error {worst:.1e}"))
}

// ------------------------------------------------------------ scenario

const CAT: usize = 3;
const DOG: usize = 5;

fn scenario() -> Dataset {
    synthesize_dataset(&SynthesisSpec::new(10, 50, 16, 7).with_confusion(CAT, DOG, 0.2)).unwrap()
}

/// Eight dogs predicted dog plus three cats predicted dog, found from labels.
fn eleven_ids(ds: &Dataset) -> Vec<u64> {
    let dogs = ds.instances().iter().filter(|i| i.true_label == DOG && i.predicted_label == DOG);
    let cats = ds.instances().iter().filter(|i| i.true_label == CAT && i.predicted_label == DOG);
    dogs.take(8).chain(cats.take(3)).map(|i| i.id).collect()
}

fn random_layout(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, 2), || rng.random_range(-50.0..50.0))
}

fn prompt_for(ds: &Dataset, layout: &Array2<f64>, target: &ChatTarget) -> Result<String, String> {
    let ctx = PromptContext::new(ds, Some(layout.view())).map_err(|e| e.to_string())?;
    let registry = PersonaRegistry::builtin();
    build_system_prompt(target, registry.assign(target), &ctx, None).map_err(|e| e.to_string())
}

fn scenario_reproduction() -> Outcome {
    let ds = scenario();
    let ids = eleven_ids(&ds);
    ensure(ids.len() == 11, || format!("only {} ids", ids.len()))?;
    let layout = random_layout(ds.len(), 8);
    let stats = Analytics::new(&ds, Some(layout.view()))
        .and_then(|a| a.selection_stats(&ids))
        .map_err(|e| e.to_string())?;
    ensure(stats.size == 11 && stats.correct_count == 8, || format!("size {} correct {}", stats.size, stats.correct_count))?;
    let top = stats.top_confusion().ok_or("no confusion pair")?;
    ensure((top.true_class, top.predicted_class, top.count) == (CAT, DOG, 3), || format!("top pair {top:?}"))?;

    let target = ChatTarget::cluster(ids).map_err(|e| e.to_string())?;
    let prompt = prompt_for(&ds, &layout, &target)?;
    let s6 = prompt_section(&prompt, 6).ok_or("section 6 missing")?;
    for needle in ["Cluster size: 11", "Correctly predicted: 8", "Correct fraction: 8/11", "- cat -> dog: 3"] {
        ensure(s6.contains(needle), || format!("{needle:?} not in section 6"))?;
    }
    let request = ProviderRequest {
        system_prompt: prompt,
        messages: vec![ProviderMessage::user("How many of us were predicted correctly?")],
        model_name: "stub".into(),
        temperature: 0.0,
        max_tokens: 64,
    };
    let reply = StubProvider::reply_text(&request);
    ensure(reply.contains("I report: 11, 8, 8/11, 72.73"), || format!("stub reply {reply:?}"))?;
    Ok(format!("stats 11/8/(cat, dog, 3); section 6 and stub reply agree: {reply:?}"))
}

// -------------------------------------------------- prompt completeness

/// Section-6 numbers computed straight from instances and layout.
fn expected_tokens(ds: &Dataset, layout: &Array2<f64>, target: &ChatTarget) -> Vec<String> {
    let names = &ds.manifest().class_names;
    let name = |c: usize| -> Vec<String> { numeric_tokens(&names[c]).into_iter().map(String::from).collect() };
    let coord = |v: f64| format!("{v:.4}");
    let mut ids = target.instance_ids.clone();
    ids.sort_unstable();
    let row_of: HashMap<u64, usize> = ds.instances().iter().enumerate().map(|(r, i)| (i.id, r)).collect();
    let rows: Vec<usize> = ids.iter().map(|id| row_of[id]).collect();
    let inst = |r: usize| &ds.instances()[r];
    let mut out = Vec::new();
    if rows.len() == 1 {
        let r = rows[0];
        out.push(ids[0].to_string());
        out.extend(name(inst(r).true_label));
        out.extend(name(inst(r).predicted_label));
        out.push(coord(layout[[r, 0]]));
        out.push(coord(layout[[r, 1]]));
        return out;
    }
    let size = rows.len();
    let correct = rows.iter().filter(|&&r| inst(r).true_label == inst(r).predicted_label).count();
    out.push(size.to_string());
    out.push(correct.to_string());
    out.push(format!("{correct}/{size}"));
    out.push(format!("{:.2}", 100.0 * correct as f64 / size as f64));
    let mut pairs: HashMap<(usize, usize), usize> = HashMap::new();
    for &r in &rows {
        if inst(r).true_label != inst(r).predicted_label {
            *pairs.entry((inst(r).true_label, inst(r).predicted_label)).or_default() += 1;
        }
    }
    let mut pairs: Vec<_> = pairs.into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    for ((t, p), n) in pairs.into_iter().take(3) {
        out.extend(name(t));
        out.extend(name(p));
        out.push(n.to_string());
    }
    let sx: f64 = rows.iter().map(|&r| layout[[r, 0]]).sum();
    let sy: f64 = rows.iter().map(|&r| layout[[r, 1]]).sum();
    out.push(coord(sx / size as f64));
    out.push(coord(sy / size as f64));
    for (&id, &r) in ids.iter().zip(&rows).take(20) {
        out.push(id.to_string());
        out.extend(name(inst(r).true_label));
        out.extend(name(inst(r).predicted_label));
    }
    if size > 20 {
        out.push((size - 20).to_string());
    }
    out
}

fn prompt_completeness() -> Outcome {
    let cifar = scenario();
    let numbered: Dataset = synthesize_dataset(
        &SynthesisSpec::new(12, 20, 6, 19).with_confusion(1, 10, 0.3).with_confusion(7, 2, 0.25),
    )
    .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    let mut clusters = 0;
    for (ds, count) in [(&cifar, 50), (&numbered, 50)] {
        let layout = random_layout(ds.len(), 4);
        for _ in 0..count {
            let target = if rng.random_bool(0.3) {
                ChatTarget::single(rng.random_range(0..ds.len() as u64))
            } else {
                let k = rng.random_range(2..=45usize);
                clusters += 1;
                let ids = rand::seq::index::sample(&mut rng, ds.len(), k).into_iter().map(|i| i as u64);
                ChatTarget::cluster(ids).map_err(|e| e.to_string())?
            };
            let prompt = prompt_for(ds, &layout, &target)?;
            check_sections(&prompt).map_err(|e| format!("{target}: {e}"))?;
            let s6 = prompt_section(&prompt, 6).ok_or_else(|| format!("{target}: section 6 missing"))?;
            let got = numeric_tokens(s6);
            let want = expected_tokens(ds, &layout, &target);
            ensure(got == want, || format!("{target}: tokens {got:?} != oracle {want:?}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} targets ({clusters} clusters), seven sections each, section 6 numbers match the oracle"))
}

// ---------------------------------------------------------- end to end

struct Served {
    child: Child,
    base: String,
}

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn free_port() -> u16 {
    StdListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn chatpoints() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_chatpoints"));
    for var in ["PROVIDER", "CHAT_API_URL", "CHAT_API_KEY", "TTS_API_URL", "TTS_API_KEY"] {
        cmd.env_remove(var);
    }
    cmd
}

fn serve(data: &Path, log: &Path) -> Result<Served, String> {
    let port = free_port();
    let log = std::fs::File::create(log).map_err(|e| e.to_string())?;
    let child = chatpoints()
        .args(["serve", "--data", data.to_str().unwrap(), "--port", &port.to_string()])
        .args(["--provider", "stub", "--no-auto-project"])
        .stdout(Stdio::null())
        .stderr(log)
        .spawn()
        .map_err(|e| e.to_string())?;
    Ok(Served {
        child,
        base: format!("http://127.0.0.1:{port}"),
    })
}

struct Http {
    client: reqwest::Client,
    base: String,
}

impl Http {
    async fn call(&self, method: reqwest::Method, path: &str, body: Option<Value>) -> Result<(u16, Value), String> {
        let mut req = self.client.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().await.map_err(|e| format!("{path}: {e}"))?;
        let status = resp.status().as_u16();
        let value = resp.json().await.map_err(|e| format!("{path}: {e}"))?;
        Ok((status, value))
    }

    async fn get(&self, path: &str) -> Result<(u16, Value), String> {
        self.call(reqwest::Method::GET, path, None).await
    }

    async fn post(&self, path: &str, body: Value) -> Result<(u16, Value), String> {
        self.call(reqwest::Method::POST, path, Some(body)).await
    }

    async fn wait_ready(&self) -> Result<Value, String> {
        let started = Instant::now();
        loop {
            if let Ok((200, health)) = self.get("/api/health").await {
                return Ok(health);
            }
            if started.elapsed() > Duration::from_secs(30) {
                return Err("server did not come up".into());
            }
            tokio::time::sleep(Duration::from_millis(100)).await;
        }
    }
}

fn offline_end_to_end() -> Outcome {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("cifar-like");
    let out = chatpoints()
        .args(["synth", "--classes", "10", "--per-class", "50", "--dim", "32", "--seed", "7"])
        .args(["--confuse", "cat:dog:0.2", "--out", data.to_str().unwrap()])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;

    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let log = tmp.path().join("serve.log");
    let result = rt.block_on(async {
        let server = serve(&data, &log)?;
        let http = Http {
            client: reqwest::Client::new(),
            base: server.base.clone(),
        };
        let health = http.wait_ready().await?;
        ensure(health["provider"] == "stub" && health["tts_enabled"] == false, || format!("health {health}"))?;

        let (status, _) = http.post("/api/projection", json!({ "seed": 11 })).await?;
        ensure(status == 202, || format!("projection start {status}"))?;
        let projection = loop {
            let (status, body) = http.get("/api/projection").await?;
            match body["status"].as_str() {
                Some("done") => break body,
                Some("running") if status == 202 => tokio::time::sleep(Duration::from_millis(200)).await,
                _ => return Err(format!("projection status {status} {body}")),
            }
        };
        let points = projection["points"].as_array().ok_or("no points")?;
        ensure(points.len() == 500, || format!("{} points", points.len()))?;

        let ds: Dataset = chatpoints_core::load_dataset(&data).map_err(|e| e.to_string())?;
        let ids = eleven_ids(&ds);
        let (status, stats) = http.post("/api/selection", json!({ "ids": ids })).await?;
        ensure(status == 200 && stats["size"] == 11 && stats["correct_count"] == 8, || format!("selection {stats}"))?;
        ensure(stats["centroid"].is_array(), || "selection has no centroid".into())?;

        let target = json!({ "kind": "cluster", "instance_ids": ids });
        let (status, created) = http.post("/api/chat/sessions", json!({ "target": target })).await?;
        ensure(status == 201, || format!("session create {status} {created}"))?;
        let sid = created["session"]["session_id"].as_str().ok_or("no session id")?.to_string();
        let (status, turn) = http
            .post(&format!("/api/chat/sessions/{sid}/turns"), json!({ "text": "How accurate were we?" }))
            .await?;
        let reply = turn["reply"].as_str().unwrap_or_default().to_string();
        ensure(status == 200 && reply.contains("11, 8, 8/11"), || format!("turn {status} {turn}"))?;
        let (status, note) = http
            .post("/api/notes", json!({ "kind": "task", "text": "Investigate the class cat", "linked_session_id": sid }))
            .await?;
        ensure(status == 201, || format!("note {status} {note}"))?;

        let (_, session_before) = http.get(&format!("/api/chat/sessions/{sid}")).await?;
        let (_, notes_before) = http.get("/api/notes").await?;
        drop(server);

        let server = serve(&data, &log)?;
        let http = Http {
            client: reqwest::Client::new(),
            base: server.base.clone(),
        };
        http.wait_ready().await?;
        let (_, session_after) = http.get(&format!("/api/chat/sessions/{sid}")).await?;
        ensure(session_after == session_before, || "session changed across restart".into())?;
        let messages = session_after["messages"].as_array().map(Vec::len).unwrap_or(0);
        ensure(messages == 3, || format!("{messages} messages after restart"))?;
        let (_, notes_after) = http.get("/api/notes").await?;
        ensure(notes_after == notes_before, || "notes changed across restart".into())?;
        let (_, listed) = http.get(&format!("/api/chat/sessions?target=cluster:{}", ids_text(&ids))).await?;
        ensure(listed.as_array().map(Vec::len) == Some(1), || format!("history lookup {listed}"))?;
        let (_, reprojected) = http.get("/api/projection").await?;
        ensure(reprojected["points"] == projection["points"], || "layout not restored from cache".into())?;
        let (status, resumed) = http.post("/api/chat/sessions", json!({ "target": target })).await?;
        ensure(status == 200 && resumed["session"]["session_id"] == sid.as_str(), || format!("resume {status}"))?;
        Ok::<_, String>(reply)
    });
    let reply = result.map_err(|e| {
        let log = std::fs::read_to_string(&log).unwrap_or_default();
        let tail: Vec<&str> = log.lines().rev().take(5).collect();
        format!("{e}; server log tail: {tail:?}")
    })?;
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < E2E_MAX_SECONDS, || format!("took {secs:.1} s"))?;
    Ok(format!("restart kept session, notes and layout; stub reply {reply:?}"))
}

fn ids_text(ids: &[u64]) -> String {
    ids.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

// ------------------------------------------------------------- gateway

const SECRET: &str = "sk-acceptance-4f9e1c2b7d";

#[derive(Clone)]
struct Mock {
    script: Arc<Mutex<Vec<u16>>>,
    arrivals: Arc<Mutex<Vec<Instant>>>,
}

impl Mock {
    fn new(script: Vec<u16>) -> Self {
        Self {
            script: Arc::new(Mutex::new(script)),
            arrivals: Arc::new(Mutex::new(Vec::new())),
        }
    }
}

async fn mock_handler(State(m): State<Mock>, headers: HeaderMap, _body: Bytes) -> axum::response::Response {
    m.arrivals.lock().unwrap().push(Instant::now());
    let status = {
        let mut s = m.script.lock().unwrap();
        if s.len() > 1 { s.remove(0) } else { s[0] }
    };
    let auth = headers.get("authorization").and_then(|v| v.to_str().ok()).unwrap_or("").to_string();
    let body = if status == 200 {
        json!({"choices": [{"message": {"role": "assistant", "content": "fine"}, "finish_reason": "stop"}]}).to_string()
    } else {
        format!("error; credential was {auth}")
    };
    (AxStatus::from_u16(status).unwrap(), body).into_response()
}

async fn start_mock(mock: Mock) -> String {
    let router = Router::new().route("/v1/chat/completions", post(mock_handler)).with_state(mock);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    format!("http://{addr}/v1/chat/completions")
}

#[derive(Clone, Default)]
struct Capture(Arc<Mutex<Vec<u8>>>);

impl Write for Capture {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

fn gap_ms(arrivals: &[Instant], i: usize) -> u128 {
    arrivals[i + 1].duration_since(arrivals[i]).as_millis()
}

fn gateway_contracts() -> Outcome {
    let capture = Capture::default();
    let writer = capture.clone();
    let subscriber = tracing_subscriber::fmt()
        .with_max_level(tracing::Level::TRACE)
        .with_ansi(false)
        .with_writer(move || writer.clone())
        .finish();
    let _guard = tracing::subscriber::set_default(subscriber);
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    let mut seen_errors = Vec::new();
    let summary = rt.block_on(async {
        let request = ProviderRequest {
            system_prompt: "### 1. INTERFACE\nhello".into(),
            messages: vec![ProviderMessage::user("hi")],
            model_name: "gpt-3.5-turbo".into(),
            temperature: 0.7,
            max_tokens: 32,
        };
        let live = |url: String| LiveProvider::new(LiveConfig::new(url, ApiKey::new(SECRET))).map_err(|e| e.to_string());

        let flaky = Mock::new(vec![500, 500, 200]);
        let reply = live(start_mock(flaky.clone()).await)?.complete(&request).await.map_err(|e| e.to_string())?;
        ensure(reply.text == "fine", || format!("reply {:?}", reply.text))?;
        let arrivals = flaky.arrivals.lock().unwrap().clone();
        ensure(arrivals.len() == 3, || format!("{} attempts", arrivals.len()))?;
        let gaps = [gap_ms(&arrivals, 0), gap_ms(&arrivals, 1)];
        for (i, gap) in gaps.iter().enumerate() {
            let want = RETRY_BASE_MS << i;
            ensure(*gap >= want && *gap < want + RETRY_SLACK_MS, || format!("retry gap {i} was {gap} ms, want {want}"))?;
        }

        let down = Mock::new(vec![503]);
        let err = live(start_mock(down.clone()).await)?.complete(&request).await.err().ok_or("503 succeeded")?;
        ensure(down.arrivals.lock().unwrap().len() == 3, || "503 not tried exactly 3 times".into())?;
        seen_errors.push(format!("{err} {err:?}"));

        let denied = Mock::new(vec![401]);
        let err = live(start_mock(denied.clone()).await)?.complete(&request).await.err().ok_or("401 succeeded")?;
        ensure(matches!(err, GatewayError::Auth { .. }), || format!("401 gave {err:?}"))?;
        let attempts = denied.arrivals.lock().unwrap().len();
        ensure(attempts == 1, || format!("401 retried: {attempts} attempts"))?;
        seen_errors.push(format!("{err} {err:?}"));

        // Same failure through the HTTP service.
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let data = tmp.path().join("d");
        chatpoints_core::write_dataset(&data, &scenario()).map_err(|e| e.to_string())?;
        let gateway = GatewayConfig {
            provider: ProviderKind::Live,
            chat_url: Some(start_mock(Mock::new(vec![403])).await),
            chat_key: Some(ApiKey::new(SECRET)),
            ..GatewayConfig::default()
        };
        let (router, _state) = build(&ServerConfig { gateway, ..ServerConfig::new(&data) }).map_err(|e| e.to_string())?;
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
        let client = reqwest::Client::new();
        let created: Value = client
            .post(format!("{base}/api/chat/sessions"))
            .json(&json!({ "target": {"kind": "single_instance", "instance_ids": [38]} }))
            .send()
            .await
            .map_err(|e| e.to_string())?
            .json()
            .await
            .map_err(|e| e.to_string())?;
        let sid = created["session"]["session_id"].as_str().ok_or("no session")?;
        let resp = client
            .post(format!("{base}/api/chat/sessions/{sid}/turns"))
            .json(&json!({ "text": "hello" }))
            .send()
            .await
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().await.map_err(|e| e.to_string())?;
        ensure(status == 502 && body.contains("upstream_failed"), || format!("{status} {body}"))?;
        seen_errors.push(body);
        Ok::<_, String>(format!("retry gaps {} ms and {} ms, 401 tried once", gaps[0], gaps[1]))
    })?;

    let logs = String::from_utf8_lossy(&capture.0.lock().unwrap()).into_owned();
    ensure(logs.contains("rejected credentials"), || "auth failure was not logged".into())?;
    ensure(!logs.contains(SECRET), || "API key found in captured logs".into())?;
    for e in &seen_errors {
        ensure(!e.contains(SECRET), || format!("API key found in error text {e}"))?;
    }
    Ok(format!("{summary}; key absent from {} bytes of logs and all error bodies", logs.len()))
}
