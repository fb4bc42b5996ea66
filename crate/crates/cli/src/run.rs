//! Drivers for `evaluate`, `baseline`, and `replay`: resolve
//! settings, reach (or embed) the service, stream units through a
//! session with bounded concurrency, and persist the run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use futures::StreamExt;

use mmad_client::ApiClient;
use mmad_core::baselines::BaselineMethod;
use mmad_core::dataio::{
    self, file_digest, RunConfig, RunManifest, ANNOTATIONS_FILE, CACHE_DIR, REPORT_FILE,
    SCORES_FILE, SCORES_HEADER,
};
use mmad_core::debate::{DebateTopic, Strategy};
use mmad_core::gateway::{BackendChoice, BackendConfig};
use mmad_core::mqm::{ScoreWeights, TranslationUnit};
use mmad_core::pipeline::{RunOptions, UnitEvaluation};
use mmad_core::prompts::Registry;
use mmad_core::proto::CreateSessionRequest;
use mmad_core::stage1::DimensionSet;

use crate::config::{pick, pick_bool, pick_opt, pick_path, require, usage_error, FileConfig};
use crate::RunArgs;

pub struct RunSettings {
    pub command: String,
    pub segments: PathBuf,
    pub gold: Option<PathBuf>,
    pub out: PathBuf,
    pub backend: BackendConfig,
    pub script_path: Option<PathBuf>,
    pub packs_dir: Option<PathBuf>,
    pub method: Option<BaselineMethod>,
    pub lang_pair: Option<String>,
    pub server: Option<String>,
    pub concurrency: usize,
    pub options: RunOptions,
}

pub fn resolve_run(args: &RunArgs, command: &str) -> anyhow::Result<RunSettings> {
    let config = FileConfig::load(args.config.as_deref())?;

    let segments = require(pick_path(&args.segments, &config, "segments"), "--segments");
    let out = require(pick_path(&args.out, &config, "out"), "--out");
    let backend_kind: BackendChoice = pick_opt(&args.backend, &config, "backend")
        .unwrap_or_else(|| "remote".to_string())
        .parse()
        .unwrap_or_else(|e| usage_error(e));

    let cache_dir =
        pick_path(&None, &config, "cache-dir").unwrap_or_else(|| out.join(CACHE_DIR));
    let backend = BackendConfig {
        kind: backend_kind,
        api_base: pick_opt(&args.api_base, &config, "api-base"),
        api_key_env: pick_opt(&args.api_key_env, &config, "api-key-env"),
        cache_dir: Some(cache_dir),
        max_retries: pick(&None, &config, "max-retries", 3u32),
        backoff_base_ms: pick(&None, &config, "backoff-ms", 500u64),
        max_in_flight: pick(&None, &config, "max-in-flight", 4usize),
    };
    if backend.kind == BackendChoice::Remote && backend.api_base.is_none() {
        usage_error("--backend remote requires --api-base");
    }
    if backend.max_in_flight == 0 {
        usage_error("max-in-flight must be positive");
    }

    let script_path = pick_path(&args.script, &config, "script");
    if backend.kind == BackendChoice::Mock && script_path.is_none() {
        usage_error("--backend mock requires --script");
    }

    let method = match (command, pick_opt(&args.method, &config, "method")) {
        ("baseline", Some(raw)) => {
            Some(raw.parse::<BaselineMethod>().unwrap_or_else(|e| usage_error(e)))
        }
        ("baseline", None) => usage_error("baseline requires --method gemba|eaprompt"),
        (_, _) => None,
    };

    let dimensions = match pick_opt(&args.dimensions, &config, "dimensions") {
        Some(list) => DimensionSet::parse_list(&list).unwrap_or_else(|e| usage_error(e)),
        None => DimensionSet::all(),
    };
    let weights = ScoreWeights {
        w_major: pick(&None, &config, "w-major", 5.0),
        w_minor: pick(&None, &config, "w-minor", 1.0),
        floor: pick(&None, &config, "floor", -25.0),
    };
    weights.validate().unwrap_or_else(|e| usage_error(e));

    let options = RunOptions {
        model_id: pick(&args.model, &config, "model", "gpt-4o-mini".to_string()),
        strategy: pick_opt(&args.strategy, &config, "strategy")
            .map(|s: String| s.parse::<Strategy>().unwrap_or_else(|e| usage_error(e)))
            .unwrap_or(Strategy::Consensus),
        topic: pick_opt(&args.topic, &config, "topic")
            .map(|s: String| s.parse::<DebateTopic>().unwrap_or_else(|e| usage_error(e)))
            .unwrap_or(DebateTopic::Severity),
        max_rounds: pick(&args.max_rounds, &config, "max-rounds", 3),
        dimensions,
        shots: pick(&args.shots, &config, "shots", 4),
        temperature: pick(&args.temperature, &config, "temperature", 0.0),
        lean_minor: match config.get("lean-minor") {
            Some(raw) => raw.parse().unwrap_or_else(|_| usage_error("lean-minor must be a boolean")),
            None => true,
        },
        weights,
        zero_shot_fallback: pick_bool(false, &config, "zero-shot-fallback"),
        span_overlap_collapse: pick_bool(false, &config, "span-overlap-collapse"),
    };
    if options.max_rounds == 0 {
        usage_error("--max-rounds must be >= 1");
    }

    Ok(RunSettings {
        command: command.to_string(),
        segments,
        gold: pick_path(&args.gold, &config, "gold"),
        out,
        backend,
        script_path,
        packs_dir: pick_path(&None, &config, "packs"),
        method,
        lang_pair: pick_opt(&args.lang_pair, &config, "lang-pair"),
        server: pick_opt(&args.server, &config, "server"),
        concurrency: pick(&args.concurrency, &config, "concurrency", 4).max(1),
        options,
    })
}

/// A client plus, when no external server was named, the embedded
/// server task that backs it.
pub struct Connection {
    pub client: ApiClient,
    embedded: Option<tokio::task::JoinHandle<()>>,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(task) = self.embedded.take() {
            task.abort();
        }
    }
}

pub async fn connect(server: Option<&str>) -> anyhow::Result<Connection> {
    match server {
        Some(base) => {
            let client = ApiClient::new(base);
            client
                .health()
                .await
                .with_context(|| format!("cannot reach server at {base}"))?;
            Ok(Connection { client, embedded: None })
        }
        None => {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
                .await
                .context("cannot bind embedded server")?;
            let addr = listener.local_addr().context("embedded server address")?;
            let task = tokio::spawn(async move {
                if let Err(e) = mmad_service::serve(listener).await {
                    eprintln!("embedded server error: {e}");
                }
            });
            let client = ApiClient::new(format!("http://{addr}"));
            client.health().await.context("embedded server did not come up")?;
            Ok(Connection { client, embedded: Some(task) })
        }
    }
}

fn load_packs(dir: Option<&Path>) -> anyhow::Result<Vec<String>> {
    let Some(dir) = dir else { return Ok(Vec::new()) };
    let mut packs = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read packs dir {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    entries.sort();
    for path in entries {
        packs.push(
            std::fs::read_to_string(&path)
                .with_context(|| format!("cannot read pack {}", path.display()))?,
        );
    }
    Ok(packs)
}

pub struct RunOutcome {
    pub failures: Vec<(String, String)>,
    pub manifest: RunManifest,
}

/// Execute a run end to end and persist it under `settings.out`.
pub async fn execute_run(settings: &RunSettings) -> anyhow::Result<RunOutcome> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let units = dataio::load_segments(&settings.segments)?;
    let units: Vec<TranslationUnit> = match &settings.lang_pair {
        Some(lp) => units.into_iter().filter(|u| &u.language_pair == lp).collect(),
        None => units,
    };
    if units.is_empty() {
        anyhow::bail!("no segments to evaluate (check --segments / --lang-pair)");
    }

    let script = match &settings.script_path {
        Some(path) => dataio::load_script(path)?,
        None => Vec::new(),
    };
    let packs = load_packs(settings.packs_dir.as_deref())?;

    let connection = connect(settings.server.as_deref()).await?;
    let client = &connection.client;
    let session = client
        .create_session(&CreateSessionRequest {
            backend: settings.backend.clone(),
            script,
            packs,
        })
        .await
        .context("create session")?;

    let method = settings.method;
    let options = settings.options.clone();
    let outcomes: Vec<(String, Result<UnitEvaluation, mmad_client::ClientError>)> =
        futures::stream::iter(units.iter().cloned().map(|unit| {
            let client = client.clone();
            let session = session.clone();
            let options = options.clone();
            async move {
                let key = unit.key().to_string();
                let result = match method {
                    Some(m) => client.baseline(&session, unit, m, options).await,
                    None => client.evaluate(&session, unit, options).await,
                };
                (key, result)
            }
        }))
        .buffered(settings.concurrency)
        .collect()
        .await;

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (key, outcome) in outcomes {
        match outcome {
            Ok(result) => results.push(result),
            Err(e) => {
                eprintln!("unit {key} failed: {e}");
                failures.push((key, e.to_string()));
            }
        }
    }

    let session_stats = client.session_stats(&session).await.context("session stats")?;
    client.delete_session(&session).await.ok();

    let mut call_stats = mmad_core::transcript::CallStats::default();
    let mut warning_count = 0;
    let mut error_count = 0;
    let mut anomaly_count = 0;
    for result in &results {
        call_stats.absorb(&result.stats);
        warning_count += result.warnings.len();
        error_count += result.errors.len();
        anomaly_count += result.anomalies.len();
    }
    if call_stats.calls as u64 != session_stats.total_calls && failures.is_empty() {
        eprintln!(
            "note: session saw {} calls, unit transcripts carry {}",
            session_stats.total_calls, call_stats.calls
        );
    }

    let mut dataset_digests = BTreeMap::new();
    dataset_digests.insert(
        settings.segments.display().to_string(),
        file_digest(&settings.segments)?,
    );
    if let Some(script_path) = &settings.script_path {
        dataset_digests.insert(script_path.display().to_string(), file_digest(script_path)?);
    }

    let manifest = RunManifest {
        run_id: uuid::Uuid::new_v4().to_string(),
        config: RunConfig {
            command: settings.command.clone(),
            segments_path: settings.segments.display().to_string(),
            out_dir: settings.out.display().to_string(),
            backend: settings.backend.clone(),
            script_path: settings.script_path.as_ref().map(|p| p.display().to_string()),
            method: settings.method.map(|m| m.as_str().to_string()),
            options: settings.options.clone(),
            concurrency: settings.concurrency,
            lang_pair: settings.lang_pair.clone(),
        },
        template_versions: Registry::builtin().template_versions(),
        dataset_digests,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        units_total: units.len(),
        units_failed: failures.len(),
        calls_by_stage: dataio::tally_stages(&results),
        call_stats,
        warning_count,
        error_count,
        anomaly_count,
    };

    dataio::write_outputs(&settings.out, &results, &manifest)?;

    // A gold file alongside the run gets its scores table written out
    // for meta-evaluation.
    if let Some(gold_path) = &settings.gold {
        let (gold, gold_warnings) = dataio::load_gold_annotations(gold_path)?;
        for warning in gold_warnings {
            eprintln!("gold: {warning}");
        }
        let rows = dataio::gold_scores(&gold, &settings.options.weights);
        let mut table = String::from(SCORES_HEADER);
        table.push('\n');
        for row in rows {
            table.push_str(&format!("{}\t{}\t{}\t{}\n", row.lp, row.system, row.seg_id, row.score));
        }
        dataio::write_atomic(&settings.out.join("gold_scores.tsv"), table.as_bytes())?;
    }

    Ok(RunOutcome { failures, manifest })
}

pub async fn cmd_run(args: &RunArgs, command: &str) -> anyhow::Result<i32> {
    let settings = resolve_run(args, command)?;
    let outcome = execute_run(&settings).await?;
    println!(
        "{}: {} unit(s), {} failed, {} call(s) ({} remote, {} mock, {} cache); outputs in {}",
        settings.command,
        outcome.manifest.units_total,
        outcome.manifest.units_failed,
        outcome.manifest.call_stats.calls,
        outcome.manifest.call_stats.remote,
        outcome.manifest.call_stats.mock,
        outcome.manifest.call_stats.cache_hits,
        settings.out.display()
    );
    Ok(if outcome.failures.is_empty() { 0 } else { 1 })
}

/// Re-execute a manifest against its cache with the replay backend
/// and compare the fresh outputs byte for byte with the original run.
pub async fn cmd_replay(
    manifest_path: &Path,
    out: Option<&Path>,
    server: Option<&str>,
) -> anyhow::Result<i32> {
    let manifest = dataio::read_manifest(manifest_path)?;
    let original = &manifest.config;
    let original_out = PathBuf::from(&original.out_dir);
    let cache_dir = original
        .backend
        .cache_dir
        .clone()
        .unwrap_or_else(|| original_out.join(CACHE_DIR));
    if !cache_dir.exists() {
        anyhow::bail!("cache directory {} not found", cache_dir.display());
    }

    let out = match out {
        Some(path) => path.to_path_buf(),
        None => original_out.join("replay"),
    };
    let settings = RunSettings {
        command: original.command.clone(),
        segments: PathBuf::from(&original.segments_path),
        gold: None,
        out: out.clone(),
        backend: BackendConfig {
            kind: BackendChoice::Replay,
            api_base: None,
            api_key_env: None,
            cache_dir: Some(cache_dir),
            max_retries: original.backend.max_retries,
            backoff_base_ms: original.backend.backoff_base_ms,
            max_in_flight: original.backend.max_in_flight,
        },
        script_path: None,
        packs_dir: None,
        method: match &original.method {
            Some(raw) => Some(raw.parse::<BaselineMethod>().map_err(anyhow::Error::msg)?),
            None => None,
        },
        lang_pair: original.lang_pair.clone(),
        server: server.map(str::to_string),
        concurrency: original.concurrency,
        options: original.options.clone(),
    };

    let outcome = execute_run(&settings).await?;
    if !outcome.failures.is_empty() {
        eprintln!("replay: {} unit(s) failed", outcome.failures.len());
        return Ok(1);
    }
    if outcome.manifest.call_stats.remote != 0 {
        eprintln!("replay: performed {} remote call(s)", outcome.manifest.call_stats.remote);
        return Ok(1);
    }

    let mut identical = true;
    for file in [ANNOTATIONS_FILE, SCORES_FILE, REPORT_FILE] {
        let original_bytes = std::fs::read(original_out.join(file))
            .with_context(|| format!("read original {file}"))?;
        let replayed_bytes =
            std::fs::read(out.join(file)).with_context(|| format!("read replayed {file}"))?;
        let ok = original_bytes == replayed_bytes;
        println!("replay {file}: {}", if ok { "identical" } else { "MISMATCH" });
        identical &= ok;
    }
    Ok(if identical { 0 } else { 1 })
}
