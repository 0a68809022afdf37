//! Experiment orchestration: baseline and attack runs, breaking-point sweeps
//! and reference-count sensitivity, with per-node records and
//! median-of-runs aggregates.
//!
//! Seed derivation: repetition `k` uses `derive(master, "rep/<k>")` as its
//! run seed; within a run the network, attachment, beacon, matrix, probe,
//! attack and reference-cap streams derive from the run seed with the labels
//! `network`, `attachment`, `beacon`, `matrix`, `probe`, `attack` and `cap`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{self, AttackConfig, Selection};
use crate::confidence::{confidence_score, ConfidenceParams, Decision, DEFAULT_TAU, DEFAULT_UPSILON};
use crate::error::{Error, Result};
use crate::geo::{great_circle_distance, GeoPoint, ZoneMap};
use crate::localize::{estimate_location, LocalizeConfig, Reference};
use crate::netgen::{attachment_points, generate_network, simulate_measurements, MeasurementSet, Network, ProbeConfig, PropagationMatrix};
use crate::propagation::PropagationModel;
use crate::schedule::{build_schedule, size_t_for, Beacon, ReferenceSchedule};
use crate::seed;
use crate::zoneverify::{score_grid, target_area, zone_scores_lattice, ZoneLattice, ZoneVerifyConfig};

/// Probability with which auto-sized `t` must reach the target reference count.
pub const T_SIZING_CONFIDENCE: f64 = 0.98;
pub const DEFAULT_ATTACHMENT_OFFSET_KM: f64 = 28.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub nodes: usize,
    /// Initial reference-set size; sized from `target_r` when absent.
    pub t: Option<usize>,
    pub target_r: usize,
    /// When set, each node localizes and verifies with a seeded subset of
    /// at most this many of its references.
    pub reference_cap: Option<usize>,
    /// Per-axis scale of the offset between a node's location and its
    /// network attachment point, km; 0 measures from true locations.
    pub attachment_offset_km: f64,
    pub zone_map: String,
    pub model: String,
    pub tau: f64,
    pub upsilon: f64,
    pub probe: ProbeConfig,
    pub localize: LocalizeConfig,
    pub zone_verify: ZoneVerifyConfig,
    pub attack: Option<AttackConfig>,
    pub repetitions: usize,
    pub master_seed: u64,
    /// Keep per-node records in the report.
    pub keep_nodes: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            nodes: 1000,
            t: Some(50),
            target_r: 80,
            reference_cap: None,
            attachment_offset_km: DEFAULT_ATTACHMENT_OFFSET_KM,
            zone_map: "europe15".into(),
            model: "default".into(),
            tau: DEFAULT_TAU,
            upsilon: DEFAULT_UPSILON,
            probe: ProbeConfig::default(),
            localize: LocalizeConfig::default(),
            zone_verify: ZoneVerifyConfig::default(),
            attack: None,
            repetitions: 64,
            master_seed: 1,
            keep_nodes: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.nodes < 2 {
            return bad(format!("nodes must be at least 2, got {}", self.nodes));
        }
        if let Some(t) = self.t {
            if t == 0 || t >= self.nodes {
                return bad(format!("t must lie in [1, N), got {t}"));
            }
        }
        if self.target_r < 3 {
            return bad(format!("target R must be at least 3, got {}", self.target_r));
        }
        if self.reference_cap.is_some_and(|c| c < 3) {
            return bad("reference cap must be at least 3".into());
        }
        if !(self.attachment_offset_km >= 0.0 && self.attachment_offset_km.is_finite()) {
            return bad("attachment offset must be a non-negative distance".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be positive".into());
        }
        if self.probe.probes == 0 {
            return bad("probes must be positive".into());
        }
        if !(self.zone_verify.resolution_deg > 0.0) {
            return bad("grid resolution must be positive".into());
        }
        ConfidenceParams { tau: self.tau, upsilon: self.upsilon }.validate()
    }

    pub fn effective_t(&self) -> Result<usize> {
        match self.t {
            Some(t) => Ok(t),
            None => size_t_for(self.nodes, self.target_r, T_SIZING_CONFIDENCE),
        }
    }

    fn confidence(&self) -> ConfidenceParams {
        ConfidenceParams { tau: self.tau, upsilon: self.upsilon }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Honest,
    /// Adversarial but claiming its true location.
    Adversarial,
    Claiming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionOutcome {
    /// Truthful claim accepted with the claimed zone winning.
    TruePositive,
    /// False claim rejected.
    TrueNegative,
    /// False claim accepted with the falsely claimed zone winning.
    FalsePositive,
    /// Truthful claim rejected.
    FalseNegative,
    /// Truthful claim accepted but another zone won.
    AcceptedWrongZone,
    /// False claim accepted but the claimed zone did not win.
    AcceptedZoneMismatch,
}

pub fn classify_outcome(claims_false: bool, decision: Decision, zone_matches_claim: bool) -> DecisionOutcome {
    use DecisionOutcome::*;
    match (claims_false, decision, zone_matches_claim) {
        (false, Decision::Accept, true) => TruePositive,
        (false, Decision::Accept, false) => AcceptedWrongZone,
        (false, Decision::Reject, _) => FalseNegative,
        (true, Decision::Accept, true) => FalsePositive,
        (true, Decision::Accept, false) => AcceptedZoneMismatch,
        (true, Decision::Reject, _) => TrueNegative,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node: usize,
    pub role: Role,
    pub true_location: GeoPoint,
    pub claimed_location: GeoPoint,
    pub estimate: GeoPoint,
    pub error_km: f64,
    pub residual_km: f64,
    pub true_zone: Option<String>,
    pub claimed_zone: Option<String>,
    pub winner_zone: Option<String>,
    pub winner_mass: f64,
    pub references: usize,
    pub confidence: f64,
    pub decision: Decision,
    pub outcome: DecisionOutcome,
    /// Whether the node was re-analyzed after the attack.
    pub reanalyzed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub accepted_wrong_zone: usize,
    pub accepted_zone_mismatch: usize,
}

impl Counts {
    pub fn add(&mut self, o: DecisionOutcome) {
        use DecisionOutcome::*;
        match o {
            TruePositive => self.tp += 1,
            TrueNegative => self.tn += 1,
            FalsePositive => self.fp += 1,
            FalseNegative => self.fn_ += 1,
            AcceptedWrongZone => self.accepted_wrong_zone += 1,
            AcceptedZoneMismatch => self.accepted_zone_mismatch += 1,
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            return f64::NAN;
        }
        self.tp as f64 / (self.tp + self.fn_) as f64
    }

    pub fn rejects(&self) -> usize {
        self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub run: u64,
    pub network: u64,
    pub attachment: u64,
    pub beacon: u64,
    pub matrix: u64,
    pub probe: u64,
    pub attack: u64,
    pub cap: u64,
}

impl RunSeeds {
    pub fn for_repetition(master: u64, k: usize) -> Self {
        let run = seed::derive(master, &format!("rep/{k}"));
        RunSeeds {
            run,
            network: seed::derive(run, "network"),
            attachment: seed::derive(run, "attachment"),
            beacon: seed::derive(run, "beacon"),
            matrix: seed::derive(run, "matrix"),
            probe: seed::derive(run, "probe"),
            attack: seed::derive(run, "attack"),
            cap: seed::derive(run, "cap"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seeds: RunSeeds,
    pub t: usize,
    /// Median localization error over truthful nodes, km.
    pub median_error_km: f64,
    pub mean_error_km: f64,
    /// Truthful nodes whose winning zone is their true zone.
    pub zone_rate: f64,
    pub counts: Counts,
    pub recall: f64,
    /// Claimants whose claimed zone wins, ignoring confidence.
    pub unprotected_success: Option<f64>,
    pub min_benign_score: f64,
    pub max_adversarial_score: Option<f64>,
    pub mean_references: f64,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub median_error_km: f64,
    pub mean_error_km: f64,
    pub zone_rate: f64,
    pub tp: f64,
    pub tn: f64,
    pub fp: f64,
    pub fn_: f64,
    pub rejects: f64,
    pub accepted_wrong_zone: f64,
    pub recall: f64,
    pub unprotected_success: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub runs: Vec<RunReport>,
    /// Medians over runs.
    pub aggregate: Aggregate,
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Static inputs shared by every node analysis in a run.
pub struct Analyzer<'a> {
    pub zones: &'a ZoneMap,
    pub lattice: ZoneLattice<'a>,
    pub model: &'a PropagationModel,
    pub localize: LocalizeConfig,
    pub zone_verify: ZoneVerifyConfig,
    pub confidence: ConfidenceParams,
    pub reference_cap: Option<usize>,
}

impl<'a> Analyzer<'a> {
    pub fn new(zones: &'a ZoneMap, model: &'a PropagationModel, cfg: &ExperimentConfig) -> Self {
        Analyzer {
            zones,
            lattice: ZoneLattice::new(zones, cfg.zone_verify.resolution_deg),
            model,
            localize: cfg.localize,
            zone_verify: cfg.zone_verify,
            confidence: cfg.confidence(),
            reference_cap: cfg.reference_cap,
        }
    }

    fn used_references(&self, node: usize, schedule: &ReferenceSchedule, cap_seed: u64) -> Vec<usize> {
        let refs = schedule.refs(node);
        match self.reference_cap {
            Some(cap) if refs.len() > cap => {
                let mut rng = seed::rng(seed::mix(cap_seed, node as u64, 0));
                adversary::sample_targets(refs, cap, &mut rng)
            }
            _ => refs.to_vec(),
        }
    }

    /// Localizes, verifies and scores one node.
    pub fn analyze(
        &self,
        node: usize,
        net: &Network,
        schedule: &ReferenceSchedule,
        meas: &MeasurementSet,
        cap_seed: u64,
    ) -> Result<NodeRecord> {
        let d = &net.nodes[node];
        let used = self.used_references(node, schedule, cap_seed);
        let refs: Vec<Reference> = used
            .iter()
            .map(|&j| {
                let rtt = meas.symmetric(node, j).ok_or_else(|| Error::arg(format!("pair ({node}, {j}) not measured")))?;
                Ok(Reference { location: net.nodes[j].claimed_location, rtt_ms: rtt })
            })
            .collect::<Result<_>>()?;
        let est = estimate_location(&refs, self.model, &self.localize)?;
        let area = target_area(&refs, &self.zone_verify)?;
        let table = if area.is_empty() {
            None
        } else {
            Some(zone_scores_lattice(&score_grid(area, &refs, self.model)?, &self.lattice))
        };
        let conf = confidence_score(node, schedule, meas, net, self.model, &self.confidence)?;
        let claimed_zone = self.zones.zone_of(d.claimed_location).map(str::to_string);
        let winner_zone = table.as_ref().and_then(|t| t.winner.clone());
        let zone_matches = winner_zone.is_some() && winner_zone == claimed_zone;
        let role = match (d.is_adversarial, d.claims_false_location) {
            (_, true) => Role::Claiming,
            (true, false) => Role::Adversarial,
            _ => Role::Honest,
        };
        Ok(NodeRecord {
            node,
            role,
            true_location: d.true_location,
            claimed_location: d.claimed_location,
            estimate: est.estimate,
            error_km: great_circle_distance(est.estimate, d.true_location),
            residual_km: est.residual,
            true_zone: self.zones.zone_of(d.true_location).map(str::to_string),
            claimed_zone,
            winner_mass: table.as_ref().map_or(0.0, |t| t.winner_mass()),
            winner_zone,
            references: refs.len(),
            confidence: conf.score,
            decision: conf.decision,
            outcome: classify_outcome(d.claims_false_location, conf.decision, zone_matches),
            reanalyzed: false,
        })
    }
}

/// The simulated world of one repetition before any attack.
pub struct World {
    pub net: Network,
    pub schedule: ReferenceSchedule,
    pub measurements: MeasurementSet,
}

pub fn build_world(cfg: &ExperimentConfig, zones: &ZoneMap, model: &PropagationModel, seeds: &RunSeeds) -> Result<World> {
    let t = cfg.effective_t()?;
    let net = generate_network(cfg.nodes, zones, &cfg.zone_map, seeds.network)?;
    let schedule = build_schedule(&Beacon::from_seed(seeds.beacon), &net.keys(), t)?;
    let points = attachment_points(&net, zones, cfg.attachment_offset_km, seeds.attachment);
    let matrix = PropagationMatrix::from_points(&points, model, seeds.matrix);
    let measurements = simulate_measurements(&schedule, &matrix, &cfg.probe, seeds.probe)?;
    Ok(World { net, schedule, measurements })
}

fn summarize(seeds: RunSeeds, t: usize, nodes: Vec<NodeRecord>, keep_nodes: bool) -> RunReport {
    let truthful: Vec<&NodeRecord> = nodes.iter().filter(|n| n.role != Role::Claiming).collect();
    let errors: Vec<f64> = truthful.iter().map(|n| n.error_km).collect();
    let zone_hits = truthful.iter().filter(|n| n.winner_zone.is_some() && n.winner_zone == n.true_zone).count();
    let mut counts = Counts::default();
    for n in &nodes {
        counts.add(n.outcome);
    }
    let claimants: Vec<&NodeRecord> = nodes.iter().filter(|n| n.role == Role::Claiming).collect();
    let unprotected_success = (!claimants.is_empty()).then(|| {
        claimants.iter().filter(|n| n.winner_zone.is_some() && n.winner_zone == n.claimed_zone).count() as f64
            / claimants.len() as f64
    });
    let min_benign_score = truthful.iter().map(|n| n.confidence).fold(f64::INFINITY, f64::min);
    let max_adversarial_score = claimants.iter().map(|n| n.confidence).reduce(f64::max);
    RunReport {
        seeds,
        t,
        median_error_km: median(&errors),
        mean_error_km: errors.iter().sum::<f64>() / errors.len().max(1) as f64,
        zone_rate: zone_hits as f64 / truthful.len().max(1) as f64,
        recall: counts.recall(),
        counts,
        unprotected_success,
        min_benign_score,
        max_adversarial_score,
        mean_references: nodes.iter().map(|n| n.references).sum::<usize>() as f64 / nodes.len().max(1) as f64,
        nodes: if keep_nodes { nodes } else { Vec::new() },
    }
}

/// One repetition: baseline analysis of every node, then, if an attack is
/// configured, the attack and re-analysis of the claimants and all nodes in
/// their reference sets.
pub fn run_once(cfg: &ExperimentConfig, zones: &ZoneMap, model: &PropagationModel, seeds: RunSeeds) -> Result<RunReport> {
    let world = build_world(cfg, zones, model, &seeds)?;
    let baseline = analyze_all(cfg, zones, model, &world, seeds.cap)?;
    run_on_world(cfg, zones, model, seeds, &world, baseline)
}

/// Pre-attack analysis of every node in `world`.
pub fn analyze_all(cfg: &ExperimentConfig, zones: &ZoneMap, model: &PropagationModel, world: &World, cap_seed: u64) -> Result<Vec<NodeRecord>> {
    let analyzer = Analyzer::new(zones, model, cfg);
    (0..world.net.len())
        .into_par_iter()
        .map(|i| analyzer.analyze(i, &world.net, &world.schedule, &world.measurements, cap_seed))
        .collect()
}

/// Finishes a repetition from a prebuilt world and its baseline records,
/// applying the configured attack if any.
pub fn run_on_world(
    cfg: &ExperimentConfig,
    zones: &ZoneMap,
    model: &PropagationModel,
    seeds: RunSeeds,
    world: &World,
    mut records: Vec<NodeRecord>,
) -> Result<RunReport> {
    let t = cfg.effective_t()?;
    if records.len() != world.net.len() {
        return Err(Error::arg("baseline records do not match the network"));
    }
    let analyzer = Analyzer::new(zones, model, cfg);

    if let Some(attack) = &cfg.attack {
        let attack = AttackConfig { seed: seeds.attack, ..attack.clone() };
        let net = adversary::assign_roles(&world.net, zones, &attack)?;
        let mut meas = adversary::apply_attack(&net, &world.schedule, &world.measurements, model, &attack)?;
        if !attack.framing_targets.is_empty() {
            meas = adversary::framing_attack(&net, &world.schedule, &meas, model, &attack, cfg.tau)?;
        }
        let mut affected = vec![false; net.len()];
        for c in adversary::claiming_set(&net) {
            affected[c] = true;
            for &r in world.schedule.refs(c) {
                affected[r] = true;
            }
        }
        for &h in &attack.framing_targets {
            affected[h] = true;
            for &r in world.schedule.refs(h) {
                affected[r] |= net.nodes[r].is_adversarial;
            }
        }
        let redo: Vec<usize> = (0..net.len()).filter(|&i| affected[i]).collect();
        let fresh: Vec<NodeRecord> = redo
            .par_iter()
            .map(|&i| analyzer.analyze(i, &net, &world.schedule, &meas, seeds.cap))
            .collect::<Result<_>>()?;
        for mut r in fresh {
            r.reanalyzed = true;
            let k = r.node;
            records[k] = r;
        }
        // adversarial nodes that were not re-analyzed keep their baseline
        // numbers but report their role
        for (k, rec) in records.iter_mut().enumerate() {
            if !rec.reanalyzed && net.nodes[k].is_adversarial {
                rec.role = Role::Adversarial;
            }
        }
    }
    Ok(summarize(seeds, t, records, cfg.keep_nodes))
}

fn aggregate(runs: &[RunReport]) -> Aggregate {
    let col = |f: &dyn Fn(&RunReport) -> f64| median(&runs.iter().map(f).collect::<Vec<_>>());
    let unprotected: Vec<f64> = runs.iter().filter_map(|r| r.unprotected_success).collect();
    Aggregate {
        median_error_km: col(&|r| r.median_error_km),
        mean_error_km: col(&|r| r.mean_error_km),
        zone_rate: col(&|r| r.zone_rate),
        tp: col(&|r| r.counts.tp as f64),
        tn: col(&|r| r.counts.tn as f64),
        fp: col(&|r| r.counts.fp as f64),
        fn_: col(&|r| r.counts.fn_ as f64),
        rejects: col(&|r| r.counts.rejects() as f64),
        accepted_wrong_zone: col(&|r| r.counts.accepted_wrong_zone as f64),
        recall: col(&|r| r.recall),
        unprotected_success: (!unprotected.is_empty()).then(|| median(&unprotected)),
    }
}

/// Runs every repetition of `cfg` (baseline or attack).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let zones = ZoneMap::resolve(&cfg.zone_map)?;
    let model = PropagationModel::resolve(&cfg.model)?;
    run_experiment_with(cfg, &zones, &model)
}

pub fn run_experiment_with(cfg: &ExperimentConfig, zones: &ZoneMap, model: &PropagationModel) -> Result<ExperimentReport> {
    cfg.validate()?;
    cfg.effective_t()?;
    let runs = (0..cfg.repetitions)
        .map(|k| run_once(cfg, zones, model, RunSeeds::for_repetition(cfg.master_seed, k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport { config: cfg.clone(), aggregate: aggregate(&runs), runs })
}

pub fn run_baseline(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.attack.is_some() {
        return Err(Error::Config("baseline configuration must not contain an attack".into()));
    }
    run_experiment(cfg)
}

pub fn run_attack(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.attack.is_none() {
        return Err(Error::Config("attack configuration missing".into()));
    }
    run_experiment(cfg)
}

/// One attack run per claiming fraction (`|A| = |C|`), all sharing the
/// master seed.
pub fn sweep_breaking_point(cfg: &ExperimentConfig, fractions: &[f64]) -> Result<Vec<ExperimentReport>> {
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
        return Err(Error::Config(format!("fraction {f} outside (0, 1)")));
    }
    let base_attack = cfg.attack.clone().unwrap_or_default();
    fractions
        .iter()
        .map(|&f| {
            let attack = AttackConfig { selection: Selection::Fractions { adversarial: f, claiming: f }, ..base_attack.clone() };
            run_attack(&ExperimentConfig { attack: Some(attack), ..cfg.clone() })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub r: usize,
    pub t: usize,
    pub median_error_km: f64,
    pub zone_rate: f64,
}

/// Baseline error and zone rate as a function of the reference count. For
/// each `R`, `t` is sized so that `|R_i| >= R` with high probability and
/// every node uses at most `R` references.
pub fn reference_count_sensitivity(cfg: &ExperimentConfig, r_values: &[usize]) -> Result<Vec<SensitivityPoint>> {
    if let Some(r) = r_values.iter().find(|&&r| r < 3) {
        return Err(Error::Config(format!("R values must be at least 3, got {r}")));
    }
    r_values
        .iter()
        .map(|&r| {
            let c = ExperimentConfig { t: None, target_r: r, reference_cap: Some(r), attack: None, ..cfg.clone() };
            let rep = run_experiment(&c)?;
            Ok(SensitivityPoint {
                r,
                t: c.effective_t()?,
                median_error_km: rep.aggregate.median_error_km,
                zone_rate: rep.aggregate.zone_rate,
            })
        })
        .collect()
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One CSV row per repetition.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from(
            "run,t,median_error_km,mean_error_km,zone_rate,tp,tn,fp,fn,accepted_wrong_zone,accepted_zone_mismatch,recall,unprotected_success,min_benign_score,max_adversarial_score\n",
        );
        for (k, r) in self.runs.iter().enumerate() {
            let c = &r.counts;
            out.push_str(&format!(
                "{k},{},{:.3},{:.3},{:.4},{},{},{},{},{},{},{:.4},{},{:.4},{}\n",
                r.t,
                r.median_error_km,
                r.mean_error_km,
                r.zone_rate,
                c.tp,
                c.tn,
                c.fp,
                c.fn_,
                c.accepted_wrong_zone,
                c.accepted_zone_mismatch,
                r.recall,
                r.unprotected_success.map_or(String::new(), |u| format!("{u:.4}")),
                r.min_benign_score,
                r.max_adversarial_score.map_or(String::new(), |u| format!("{u:.4}")),
            ));
        }
        out
    }
}

/// Table-shaped sweep summary: fraction, rejects, TP, FP, FN, recall.
pub fn sweep_table(fractions: &[f64], reports: &[ExperimentReport]) -> String {
    let mut out = String::from("fraction,rejects,tp,fp,fn,recall\n");
    for (f, r) in fractions.iter().zip(reports) {
        let a = &r.aggregate;
        out.push_str(&format!("{f},{},{},{},{},{:.3}\n", a.rejects, a.tp, a.fp, a.fn_, a.recall));
    }
    out
}
