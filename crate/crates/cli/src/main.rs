mod fetch;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use geoverify::adversary::{AttackConfig, Selection};
use geoverify::confidence::{confidence_score, ConfidenceParams, Decision, DEFAULT_TAU, DEFAULT_UPSILON};
use geoverify::geo::{great_circle_distance, ZoneMap};
use geoverify::harness::{self, ExperimentConfig, ExperimentReport};
use geoverify::ingest::{self, AnalysisInput, CityTable};
use geoverify::localize::{estimate_location, LocalizeConfig, Reference};
use geoverify::netgen::{generate_network, simulate_measurements, MeasurementSet, Network, ProbeConfig, PropagationMatrix};
use geoverify::propagation::{build_model, read_samples_csv, BuildOptions, LowerBound, PropagationModel, SyntheticCurve};
use geoverify::schedule::{build_schedule, Beacon, ReferenceSchedule};
use geoverify::zoneverify::{score_grid, target_area, verify_zone, zone_scores, ZoneScoreTable, ZoneVerifyConfig};

#[derive(Parser)]
#[command(name = "geoverify", version, about = "RTT-based location verification: simulation, analysis and live-data ingestion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Place nodes uniformly by area over a zone map.
    GenerateNetwork {
        #[arg(long, default_value_t = 1000)]
        nodes: usize,
        /// `europe15` or a GeoJSON path.
        #[arg(long, default_value = "europe15")]
        zone_map: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive the symmetric reference schedule from a beacon.
    Schedule {
        #[arg(long)]
        network: PathBuf,
        #[command(flatten)]
        beacon: BeaconArg,
        #[arg(long, default_value_t = 50)]
        t: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Probe every scheduled pair over a sampled propagation matrix.
    Simulate {
        #[command(flatten)]
        input: NetSched,
        #[arg(long, default_value = "default")]
        model: String,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = ProbeConfig::default().probes)]
        probes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trilaterate every node; per-node CSV.
    Localize {
        #[command(flatten)]
        input: Measured,
        #[arg(long)]
        out: PathBuf,
    },
    /// Zone verification; per-node CSV and an optional grid dump.
    VerifyZone {
        #[command(flatten)]
        input: Measured,
        /// Defaults to the zone map recorded in the network file.
        #[arg(long)]
        zone_map: Option<String>,
        #[arg(long, default_value_t = ZoneVerifyConfig::default().resolution_deg)]
        resolution: f64,
        #[arg(long)]
        out: PathBuf,
        /// JSON with every node's zone masses and scored grid.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Confidence scores; per-node CSV.
    Confidence {
        #[command(flatten)]
        input: Measured,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long, default_value_t = DEFAULT_UPSILON)]
        upsilon: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attack experiment from a JSON experiment config.
    Attack {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sets |A| = |C| to this fraction of the network.
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Per-repetition CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Breaking-point sweep over claiming fractions.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.15,0.2,0.25,0.3,0.35")]
        fractions: Vec<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Baseline, attack, sweep and reference-count curve from one config.
    RunAll {
        #[arg(long, required_unless_present = "print_config")]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "print_config")]
        out_dir: Option<PathBuf>,
        /// Print a default config and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Turn saved payloads into network, schedule and measurement files.
    Ingest {
        #[arg(long)]
        payloads: PathBuf,
        /// JSON list of `{"id", "location"?}`.
        #[arg(long)]
        descriptors: PathBuf,
        /// CSV with columns name,country,lat,lon.
        #[arg(long)]
        cities: PathBuf,
        #[arg(long, default_value_t = 40)]
        references: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Download payloads from a node list into a directory.
    Fetch {
        /// One `id url` pair per line.
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        timeout_secs: u64,
        #[arg(long, default_value_t = 8)]
        concurrency: usize,
    },
    /// Fit a propagation model from calibration samples.
    BuildModel {
        /// CSV with columns distance_km,min_rtt_ms.
        #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
        samples: Option<PathBuf>,
        /// Draw this many samples from the built-in synthetic curve instead.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = BoundKind::Fit)]
        lower_bound: BoundKind,
        /// `z` for the fit bound, `q` for the percentile bound.
        #[arg(long)]
        bound_param: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare self-reported locations of an ingest with external ones.
    Consistency {
        /// `analysis_input.json` written by `ingest`.
        #[arg(long)]
        input: PathBuf,
        /// CSV with columns node,lat,lon.
        #[arg(long)]
        external: PathBuf,
        #[arg(long, default_value = "europe15")]
        zone_map: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct BeaconArg {
    /// Beacon bytes as hex.
    #[arg(long)]
    beacon: Option<String>,
    /// File holding the raw beacon bytes.
    #[arg(long)]
    beacon_file: Option<PathBuf>,
}

#[derive(Args)]
struct NetSched {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    schedule: PathBuf,
}

#[derive(Args)]
struct Measured {
    #[command(flatten)]
    base: NetSched,
    #[arg(long)]
    measurements: PathBuf,
    #[arg(long, default_value = "default")]
    model: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundKind {
    Fit,
    Percentile,
}

struct Loaded {
    net: Network,
    schedule: ReferenceSchedule,
    meas: MeasurementSet,
    model: PropagationModel,
}

impl Measured {
    fn load(&self) -> Result<Loaded> {
        let net = Network::load(&self.base.network)?;
        let schedule = load_schedule(&self.base.schedule)?;
        let meas = MeasurementSet::load(&self.measurements)?;
        let model = PropagationModel::resolve(&self.model)?;
        if schedule.len() != net.len() || meas.nodes() != net.len() {
            bail!("network has {} nodes, schedule {}, measurements {}", net.len(), schedule.len(), meas.nodes());
        }
        Ok(Loaded { net, schedule, meas, model })
    }
}

impl Loaded {
    /// Symmetric RTTs to every reference of `i`, located at claimed positions.
    fn references(&self, i: usize) -> Result<Vec<Reference>> {
        self.schedule
            .refs(i)
            .iter()
            .map(|&j| {
                let rtt = self.meas.symmetric(i, j).with_context(|| format!("pair ({i}, {j}) not measured"))?;
                Ok(Reference { location: self.net.nodes[j].claimed_location, rtt_ms: rtt })
            })
            .collect()
    }

    fn located(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.net.len()).filter(|&i| !self.schedule.refs(i).is_empty())
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    write_text(path, &String::from_utf8(w.into_inner()?)?)
}

fn load_schedule(path: &Path) -> Result<ReferenceSchedule> {
    read_json(path)
}

fn decision_label(d: Decision) -> &'static str {
    match d {
        Decision::Accept => "accept",
        Decision::Reject => "reject",
    }
}

fn experiment_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let cfg = match path {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn summary_line(label: &str, r: &ExperimentReport) -> String {
    let a = &r.aggregate;
    let mut s = format!(
        "{label}: median error {:.1} km, zone rate {:.3}, tp {} tn {} fp {} fn {}, recall {:.3}",
        a.median_error_km, a.zone_rate, a.tp, a.tn, a.fp, a.fn_, a.recall
    );
    if let Some(u) = a.unprotected_success {
        s.push_str(&format!(", unprotected success {u:.3}"));
    }
    s
}

#[derive(Serialize)]
struct LocalizeRow {
    node: usize,
    est_lat: f64,
    est_lon: f64,
    residual_km: f64,
    error_km_vs_truth: f64,
}

#[derive(Serialize)]
struct ZoneRow {
    node: usize,
    claimed_zone: Option<String>,
    winner_zone: Option<String>,
    winner_mass: f64,
    verified: bool,
}

#[derive(Serialize)]
struct ZoneDump {
    node: usize,
    table: Option<ZoneScoreTable>,
    /// `[lat, lon, score]` per member point of the target area.
    grid: Vec<[f64; 3]>,
}

#[derive(Serialize)]
struct ConfidenceRow {
    node: usize,
    score: f64,
    decision: &'static str,
    n_pass: usize,
    n_fail_lower: usize,
    n_fail_upper: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct RunAllConfig {
    experiment: ExperimentConfig,
    /// Attack used for the single attack run; its selection is overridden
    /// by `attack_fraction`.
    attack: AttackConfig,
    attack_fraction: f64,
    sweep_fractions: Vec<f64>,
    sensitivity_r: Vec<usize>,
}

impl Default for RunAllConfig {
    fn default() -> Self {
        RunAllConfig {
            experiment: ExperimentConfig { repetitions: 16, keep_nodes: true, ..ExperimentConfig::default() },
            attack: AttackConfig::default(),
            attack_fraction: 0.05,
            sweep_fractions: vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35],
            sensitivity_r: vec![10, 20, 40, 80, 160],
        }
    }
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    run: usize,
    node: usize,
    role: &'a harness::Role,
    confidence: f64,
    outcome: &'a harness::DecisionOutcome,
}

#[derive(Serialize)]
struct IngestReport<'a> {
    counts: &'a ingest::IngestCounts,
    nodes: usize,
    selected: usize,
    excluded: &'a [ingest::ExcludedNode],
    parse_failures: Vec<ParseFailure>,
}

#[derive(Serialize)]
struct ParseFailure {
    file: String,
    error: String,
}

#[derive(Serialize)]
struct QualityRow<'a> {
    node: usize,
    id: &'a str,
    selected: bool,
    mirrored_directions: usize,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenerateNetwork { nodes, zone_map, seed, out } => {
            let zones = ZoneMap::resolve(&zone_map)?;
            let net = generate_network(nodes, &zones, &zone_map, seed)?;
            ensure_parent(&out)?;
            net.save(&out)?;
        }
        Command::Schedule { network, beacon, t, out } => {
            let net = Network::load(&network)?;
            let beacon = match (beacon.beacon, beacon.beacon_file) {
                (Some(hex), _) => Beacon::from_hex(hex.trim())?,
                (None, Some(path)) => Beacon::new(fs::read(&path).with_context(|| format!("reading {}", path.display()))?)?,
                (None, None) => unreachable!("clap requires one beacon source"),
            };
            let schedule = build_schedule(&beacon, &net.keys(), t)?;
            write_text(&out, &(schedule.to_json() + "\n"))?;
        }
        Command::Simulate { input, model, seed, probes, out } => {
            let net = Network::load(&input.network)?;
            let schedule = load_schedule(&input.schedule)?;
            let model = PropagationModel::resolve(&model)?;
            let matrix = PropagationMatrix::lazy(&net, &model, seed);
            let probe = ProbeConfig { probes, ..ProbeConfig::default() };
            // separate stream for the probe noise
            let meas = simulate_measurements(&schedule, &matrix, &probe, seed.wrapping_add(1))?;
            ensure_parent(&out)?;
            meas.save(&out)?;
        }
        Command::Localize { input, out } => {
            let l = input.load()?;
            let cfg = LocalizeConfig::default();
            let rows = l
                .located()
                .map(|i| {
                    let est = estimate_location(&l.references(i)?, &l.model, &cfg)?;
                    Ok(LocalizeRow {
                        node: i,
                        est_lat: est.estimate.lat,
                        est_lon: est.estimate.lon,
                        residual_km: est.residual,
                        error_km_vs_truth: great_circle_distance(est.estimate, l.net.nodes[i].true_location),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_csv(&out, &rows)?;
        }
        Command::VerifyZone { input, zone_map, resolution, out, dump } => {
            let l = input.load()?;
            let zones = ZoneMap::resolve(zone_map.as_deref().unwrap_or(&l.net.zone_map))?;
            let cfg = ZoneVerifyConfig { resolution_deg: resolution, ..ZoneVerifyConfig::default() };
            let mut rows = Vec::new();
            let mut dumps = Vec::new();
            for i in l.located() {
                let refs = l.references(i)?;
                let area = target_area(&refs, &cfg)?;
                let claimed_zone = zones.zone_of(l.net.nodes[i].claimed_location).map(str::to_string);
                let (table, grid) = if area.is_empty() {
                    (None, Vec::new())
                } else {
                    let scored = score_grid(area, &refs, &l.model)?;
                    let grid = scored.points.iter().zip(&scored.scores).map(|(p, &s)| [p.lat, p.lon, s]).collect();
                    (Some(zone_scores(&scored, &zones)), grid)
                };
                rows.push(ZoneRow {
                    node: i,
                    verified: match (&claimed_zone, &table) {
                        (Some(z), Some(t)) => verify_zone(z, t),
                        _ => false,
                    },
                    claimed_zone,
                    winner_zone: table.as_ref().and_then(|t| t.winner.clone()),
                    winner_mass: table.as_ref().map_or(0.0, ZoneScoreTable::winner_mass),
                });
                if dump.is_some() {
                    dumps.push(ZoneDump { node: i, table, grid });
                }
            }
            write_csv(&out, &rows)?;
            if let Some(path) = dump {
                write_json(&path, &dumps)?;
            }
        }
        Command::Confidence { input, tau, upsilon, out } => {
            let l = input.load()?;
            let params = ConfidenceParams { tau, upsilon };
            params.validate()?;
            let rows = l
                .located()
                .map(|i| {
                    let c = confidence_score(i, &l.schedule, &l.meas, &l.net, &l.model, &params)?;
                    Ok(ConfidenceRow {
                        node: i,
                        score: c.score,
                        decision: decision_label(c.decision),
                        n_pass: c.n_pass,
                        n_fail_lower: c.n_fail_lower,
                        n_fail_upper: c.n_fail_upper,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_csv(&out, &rows)?;
        }
        Command::Attack { config, fraction, out, csv } => {
            let mut cfg = experiment_config(config.as_deref())?;
            let mut attack = cfg.attack.take().unwrap_or_default();
            if let Some(f) = fraction {
                attack.selection = Selection::Fractions { adversarial: f, claiming: f };
            }
            cfg.attack = Some(attack);
            let report = harness::run_attack(&cfg)?;
            write_text(&out, &(report.to_json() + "\n"))?;
            if let Some(path) = csv {
                write_text(&path, &report.runs_csv())?;
            }
            eprintln!("{}", summary_line("attack", &report));
        }
        Command::Sweep { config, fractions, out_dir } => {
            let cfg = experiment_config(config.as_deref())?;
            let reports = harness::sweep_breaking_point(&cfg, &fractions)?;
            write_text(&out_dir.join("sweep.csv"), &harness::sweep_table(&fractions, &reports))?;
            write_json(&out_dir.join("sweep.json"), &reports)?;
            for (f, r) in fractions.iter().zip(&reports) {
                eprintln!("{}", summary_line(&format!("{:.0}%", f * 100.0), r));
            }
        }
        Command::RunAll { config, out_dir, print_config } => {
            if print_config {
                println!("{}", serde_json::to_string_pretty(&RunAllConfig::default())?);
                return Ok(());
            }
            let (Some(config), Some(out_dir)) = (config, out_dir) else {
                bail!("--config and --out-dir are required");
            };
            run_all(&read_json(&config)?, &out_dir)?;
        }
        Command::Ingest { payloads, descriptors, cities, references, seed, out_dir } => {
            let (files, failures) = ingest::read_payload_dir(&payloads)?;
            let descriptors = ingest::read_descriptors(&descriptors)?;
            let cities = CityTable::load(&cities)?;
            let input = ingest::build_analysis_input(&files, &descriptors, &cities, references, seed)?;
            fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            input.network.save(out_dir.join("network.json"))?;
            write_text(&out_dir.join("schedule.json"), &(input.schedule.to_json() + "\n"))?;
            input.measurements.save(out_dir.join("measurements.json"))?;
            write_json(&out_dir.join("analysis_input.json"), &input)?;
            let quality: Vec<QualityRow> = input
                .network
                .nodes
                .iter()
                .enumerate()
                .map(|(i, d)| QualityRow {
                    node: i,
                    id: &d.address,
                    selected: input.selected.contains(&i),
                    mirrored_directions: input.mirrored_for(i),
                })
                .collect();
            write_csv(&out_dir.join("quality.csv"), &quality)?;
            let report = IngestReport {
                counts: &input.counts,
                nodes: input.network.len(),
                selected: input.selected.len(),
                excluded: &input.excluded,
                parse_failures: failures.iter().map(|(f, e)| ParseFailure { file: f.clone(), error: e.to_string() }).collect(),
            };
            write_json(&out_dir.join("ingest_report.json"), &report)?;
            eprintln!(
                "ingest: {} payload files, {} unreadable, {} of {} nodes selected, {} excluded",
                input.counts.files,
                failures.len(),
                input.selected.len(),
                input.network.len(),
                input.excluded.len()
            );
        }
        Command::Fetch { nodes, out_dir, timeout_secs, concurrency } => {
            let targets = fetch::read_targets(&nodes)?;
            fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let outcomes = fetch::fetch_all(&targets, &out_dir, Duration::from_secs(timeout_secs), concurrency);
            write_json(&out_dir.join("fetch_report.json"), &outcomes)?;
            let ok = outcomes.iter().filter(|o| o.error.is_none()).count();
            eprintln!("fetch: {ok} of {} nodes retrieved", outcomes.len());
        }
        Command::BuildModel { samples, synthetic, seed, lower_bound, bound_param, out } => {
            let samples = match (samples, synthetic) {
                (Some(path), _) => read_samples_csv(&path)?,
                (None, Some(n)) => SyntheticCurve::default().samples(n, seed),
                (None, None) => unreachable!("clap requires a sample source"),
            };
            let lower_bound = match lower_bound {
                BoundKind::Fit => LowerBound::FitConfidence { z: bound_param.unwrap_or(1.645) },
                BoundKind::Percentile => LowerBound::Percentile { q: bound_param.unwrap_or(0.01) },
            };
            let model = build_model(&samples, &BuildOptions { lower_bound, ..BuildOptions::default() })?;
            ensure_parent(&out)?;
            model.save(&out)?;
        }
        Command::Consistency { input, external, zone_map, out } => {
            let input: AnalysisInput = read_json(&input)?;
            let zones = ZoneMap::resolve(&zone_map)?;
            let file = fs::File::open(&external).with_context(|| format!("opening {}", external.display()))?;
            let report = ingest::consistency_report(&input, &ingest::read_external_locations(file)?, &zones);
            write_csv(&out, &report.rows)?;
            println!(
                "{} nodes compared, median distance {:.1} km, mean {:.1} km, conflicting zones {:.3}",
                report.rows.len(),
                report.median_km,
                report.mean_km,
                report.conflict_fraction
            );
        }
    }
    Ok(())
}

fn run_all(cfg: &RunAllConfig, out_dir: &Path) -> Result<()> {
    let base = ExperimentConfig { attack: None, ..cfg.experiment.clone() };
    base.validate()?;

    let baseline = harness::run_baseline(&base)?;
    write_text(&out_dir.join("baseline.json"), &(baseline.to_json() + "\n"))?;
    write_text(&out_dir.join("baseline_runs.csv"), &baseline.runs_csv())?;
    eprintln!("{}", summary_line("baseline", &baseline));

    let f = cfg.attack_fraction;
    let attack = AttackConfig { selection: Selection::Fractions { adversarial: f, claiming: f }, ..cfg.attack.clone() };
    let attacked = harness::run_attack(&ExperimentConfig { attack: Some(attack.clone()), ..base.clone() })?;
    write_text(&out_dir.join("attack.json"), &(attacked.to_json() + "\n"))?;
    write_text(&out_dir.join("attack_runs.csv"), &attacked.runs_csv())?;
    let scores: Vec<ScoreRow> = attacked
        .runs
        .iter()
        .enumerate()
        .flat_map(|(k, r)| {
            r.nodes.iter().map(move |n| ScoreRow { run: k, node: n.node, role: &n.role, confidence: n.confidence, outcome: &n.outcome })
        })
        .collect();
    write_csv(&out_dir.join("attack_scores.csv"), &scores)?;
    eprintln!("{}", summary_line("attack", &attacked));

    if !cfg.sweep_fractions.is_empty() {
        let sweep_base = ExperimentConfig { attack: Some(attack), keep_nodes: false, ..base.clone() };
        let reports = harness::sweep_breaking_point(&sweep_base, &cfg.sweep_fractions)?;
        write_text(&out_dir.join("sweep.csv"), &harness::sweep_table(&cfg.sweep_fractions, &reports))?;
    }
    if !cfg.sensitivity_r.is_empty() {
        let points = harness::reference_count_sensitivity(&ExperimentConfig { keep_nodes: false, ..base }, &cfg.sensitivity_r)?;
        write_csv(&out_dir.join("sensitivity.csv"), &points)?;
    }
    Ok(())
}
