//! Seeded experiment runs with exact regret accounting, the regret bound,
//! and run-time checks on the learner (optimism, visit sums, tail loss).

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, AgentState, BonusSchedule, ExplorationBonus, Learner, NoBonus};
use crate::aggregation::{epsilon_from_q, validate, Aggregation, AggregationError};
use crate::config::{AgentKind, ConfigError, ExperimentConfig};
use crate::mdp::{
    backward_induction, policy_value_at_start, DeterministicPolicy, EpisodicMdp, QTables, VTables,
};

/// Regret values below `-REGRET_TOLERANCE` mean `V^π > V*`, which is a bug.
pub const REGRET_TOLERANCE: f64 = 1e-10;
/// Slack for the optimism comparison `Q̂ ≥ Q*`.
pub const OPTIMISM_TOLERANCE: f64 = 1e-10;
/// Slack for the deterministic visit-sum inequality.
pub const VISIT_SUM_TOLERANCE: f64 = 1e-9;
/// Instances with a measured aggregation error at or below this count as exact.
pub const EXACT_EPSILON: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error("seed {seed}, episode {k}: negative regret {regret}")]
    NegativeRegret { seed: u64, k: u64, regret: f64 },
    #[error("seed {seed}: visit-sum inequality violated ({lhs} > {rhs})")]
    VisitSum { seed: u64, lhs: f64, rhs: f64 },
    #[error("exact evaluation costs {cost} operations per episode, over the budget of {budget}")]
    EvaluationBudget { cost: u64, budget: u64 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// High-probability regret envelope
/// `24√(H⁵MK·log(3HK/δ)) + 12√(2H³K·log(3/δ)) + 3H²M + 6εHK`.
pub fn theorem_bound(episodes: f64, horizon: f64, num_cells: f64, delta: f64, epsilon: f64) -> f64 {
    let (k, h, m) = (episodes, horizon, num_cells);
    24.0 * (h.powi(5) * m * k * (3.0 * h * k / delta).ln()).sqrt()
        + 12.0 * (2.0 * h.powi(3) * k * (3.0 / delta).ln()).sqrt()
        + 3.0 * h * h * m
        + 6.0 * epsilon * h * k
}

/// Parameters of the regret envelope for one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParameters {
    pub episodes: u64,
    pub horizon: usize,
    pub num_cells: usize,
    pub delta: f64,
    pub epsilon: f64,
}

impl BoundParameters {
    pub fn bound_at(&self, k: u64) -> f64 {
        theorem_bound(
            k as f64,
            self.horizon as f64,
            self.num_cells as f64,
            self.delta,
            self.epsilon,
        )
    }
}

/// Result of [`visit_sum_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisitSumCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// `Σ_h Σ_m Σ_{j ≤ N_h(m)} 1/√j ≤ 2√(H²MK)`, with `K` the number of
/// processed trajectories. Holds for every run by counting alone.
pub fn visit_sum_check(state: &AgentState) -> VisitSumCheck {
    let mut lhs = 0.0;
    for h in 0..state.horizon() {
        for &n in state.stage_visits(h) {
            lhs += (1..=n).map(|j| 1.0 / (j as f64).sqrt()).sum::<f64>();
        }
    }
    let h = state.horizon() as f64;
    let rhs = 2.0 * (h * h * state.num_cells() as f64 * state.episode_index() as f64).sqrt();
    VisitSumCheck {
        lhs,
        rhs,
        ok: lhs <= rhs + VISIT_SUM_TOLERANCE,
    }
}

/// Outcome of one [`optimism_monitor`] pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OptimismReport {
    /// Triples `(h, s, a)` with `Q̂_h(φ_h(s, a)) < Q*_h(s, a) − tol`.
    pub violations: usize,
    pub checked: usize,
}

/// Counts state-action pairs whose cell estimate is below `Q*`.
/// Meaningful for zero-error aggregations only.
pub fn optimism_monitor(
    state: &AgentState,
    q_star: &QTables,
    agg: &Aggregation,
) -> Result<OptimismReport, HarnessError> {
    use crate::mdp::ActionValues;
    if q_star.horizon() != state.horizon()
        || q_star.num_states() != agg.num_states()
        || q_star.num_actions() != agg.num_actions()
        || agg.horizon() != state.horizon()
        || agg.num_cells() != state.num_cells()
    {
        return Err(HarnessError::Agent(AgentError::AggregationMismatch {
            agg_horizon: agg.horizon(),
            agg_cells: agg.num_cells(),
            horizon: state.horizon(),
            cells: state.num_cells(),
        }));
    }
    Ok(count_optimism_violations(state, q_star, agg))
}

fn count_optimism_violations(
    state: &AgentState,
    q_star: &QTables,
    agg: &Aggregation,
) -> OptimismReport {
    let mut violations = 0;
    let mut checked = 0;
    for h in 0..state.horizon() {
        let stage = state.stage_q_hat(h);
        let truth = q_star.stage(h);
        for s in 0..agg.num_states() {
            for (a, &m) in agg.cells_at(h, s).iter().enumerate() {
                checked += 1;
                if stage[m] < truth[s * agg.num_actions() + a] - OPTIMISM_TOLERANCE {
                    violations += 1;
                }
            }
        }
    }
    OptimismReport {
        violations,
        checked,
    }
}

/// Per-seed record of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretLedger {
    pub seed: u64,
    /// `V*_1(s1) − V^{π_k}_1(s1)` for `k = 1..=K` (index `k − 1`).
    pub instantaneous: Vec<f64>,
    pub cumulative: Vec<f64>,
    /// Whether episode `k`'s value was computed exactly or held over.
    pub evaluated: Vec<bool>,
    /// Total optimism violations over monitored episodes; `None` when the
    /// monitor did not run.
    pub optimism_violations: Option<u64>,
    pub visit_sum: VisitSumCheck,
    /// `(k, π_k)` at the configured snapshot stride.
    #[serde(skip)]
    pub policy_snapshots: Vec<(u64, DeterministicPolicy)>,
}

impl RegretLedger {
    pub fn episodes(&self) -> u64 {
        self.instantaneous.len() as u64
    }

    /// `Regret(k)`; zero for `k = 0`.
    pub fn regret_at(&self, k: u64) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.cumulative[k as usize - 1]
        }
    }

    pub fn total_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn is_optimistic(&self) -> Option<bool> {
        self.optimism_violations.map(|v| v == 0)
    }

    /// Mean instantaneous regret over the last `ceil(tail_fraction·K)` episodes.
    pub fn tail_average(&self, tail_fraction: f64) -> f64 {
        let n = self.instantaneous.len();
        let tail = tail_len(n as u64, tail_fraction) as usize;
        if tail == 0 {
            return 0.0;
        }
        self.instantaneous[n - tail..].iter().sum::<f64>() / tail as f64
    }
}

fn tail_len(episodes: u64, tail_fraction: f64) -> u64 {
    ((episodes as f64 * tail_fraction).ceil() as u64).clamp(1, episodes.max(1))
}

/// Result of [`asymptotic_loss_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossCheck {
    pub tail_average: f64,
    pub threshold: f64,
    pub ok: bool,
}

/// Compares the tail-average regret with `6εH` plus the leading square-root
/// term of the envelope amortized over the tail,
/// `24√(H⁵M·log(3HK/δ)/K_tail)`.
pub fn asymptotic_loss_check(
    ledger: &RegretLedger,
    params: &BoundParameters,
    tail_fraction: f64,
) -> LossCheck {
    let episodes = ledger.episodes();
    let tail = tail_len(episodes, tail_fraction) as f64;
    let h = params.horizon as f64;
    let m = params.num_cells as f64;
    let log_term = (3.0 * h * episodes as f64 / params.delta).ln();
    let slack = 24.0 * (h.powi(5) * m * log_term / tail).sqrt();
    let threshold = 6.0 * params.epsilon * h + slack;
    let tail_average = ledger.tail_average(tail_fraction);
    LossCheck {
        tail_average,
        threshold,
        ok: tail_average <= threshold,
    }
}

/// A solved environment with its aggregation.
#[derive(Debug, Clone)]
pub struct Instance {
    pub mdp: EpisodicMdp,
    pub aggregation: Aggregation,
    pub q_star: QTables,
    pub v_star: VTables,
    pub measured_epsilon: f64,
}

impl Instance {
    pub fn new(mdp: EpisodicMdp, aggregation: Aggregation) -> Result<Self, HarnessError> {
        validate(&aggregation, &mdp)?;
        let (q_star, v_star) = backward_induction(&mdp);
        let measured_epsilon = epsilon_from_q(&q_star, &aggregation);
        Ok(Self {
            mdp,
            aggregation,
            q_star,
            v_star,
            measured_epsilon,
        })
    }

    pub fn optimal_value(&self) -> f64 {
        self.v_star.get(0, self.mdp.initial_state())
    }

    pub fn is_exact(&self) -> bool {
        self.measured_epsilon <= EXACT_EPSILON
    }

    /// Multiply-adds of one exact policy evaluation, `S·S·A·H`.
    pub fn evaluation_cost(&self) -> u64 {
        let s = self.mdp.num_states() as u64;
        s * s * self.mdp.num_actions() as u64 * self.mdp.horizon() as u64
    }
}

/// Knobs of a single-seed run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub episodes: u64,
    /// Evaluate `π_k` exactly at `k = 1, 1 + stride, …` and at `k = K`.
    pub stride: u64,
    pub monitor_optimism: bool,
    /// Keep `π_k` every this many episodes.
    pub policy_snapshot_stride: Option<u64>,
}

impl RunOptions {
    pub fn new(episodes: u64) -> Self {
        Self {
            episodes,
            stride: default_stride(episodes),
            monitor_optimism: false,
            policy_snapshot_stride: None,
        }
    }
}

/// Evaluation stride: 1 up to 10⁴ episodes, 10 beyond.
pub fn default_stride(episodes: u64) -> u64 {
    if episodes <= 10_000 {
        1
    } else {
        10
    }
}

/// Runs one seed of the learner and scores every greedy policy exactly.
pub fn run_seed<B: ExplorationBonus>(
    instance: &Instance,
    bonus: B,
    options: &RunOptions,
    seed: u64,
) -> Result<RegretLedger, HarnessError> {
    let stride = options.stride.max(1);
    let mdp = &instance.mdp;
    let agg = &instance.aggregation;
    let optimal = instance.optimal_value();
    let mut learner = Learner::new(mdp, agg, bonus, seed)?;

    let k_total = options.episodes as usize;
    let mut instantaneous = Vec::with_capacity(k_total);
    let mut cumulative = Vec::with_capacity(k_total);
    let mut evaluated = Vec::with_capacity(k_total);
    let mut snapshots = Vec::new();

    let mut scratch = VTables::zeros(mdp.horizon(), mdp.num_states());
    let mut policy = DeterministicPolicy::constant(mdp.horizon(), mdp.num_states(), 0);
    let mut actions = vec![0; mdp.horizon() * mdp.num_states()];
    let mut current: Option<f64> = None;
    let mut regret = 0.0;
    let mut total = 0.0;
    let mut violations = 0u64;

    for k in 1..=options.episodes {
        learner.step()?;
        let state = learner.state();
        let exact = (k - 1) % stride == 0 || k == options.episodes;
        if exact {
            state.greedy_actions_into(agg, &mut actions);
            if current.is_none() || actions != policy.actions() {
                policy = DeterministicPolicy::new(
                    mdp.horizon(),
                    mdp.num_states(),
                    mdp.num_actions(),
                    actions.clone(),
                )
                .expect("greedy actions are in range");
                current = Some(policy_value_at_start(mdp, &policy, &mut scratch));
            }
            regret = optimal - current.unwrap();
            if regret < -REGRET_TOLERANCE {
                return Err(HarnessError::NegativeRegret { seed, k, regret });
            }
            if options.monitor_optimism {
                violations +=
                    count_optimism_violations(state, &instance.q_star, agg).violations as u64;
            }
        }
        if let Some(every) = options.policy_snapshot_stride {
            if every > 0 && k % every == 0 {
                snapshots.push((k, learner.greedy_policy()));
            }
        }
        total += regret;
        instantaneous.push(regret);
        cumulative.push(total);
        evaluated.push(exact);
    }

    let visit_sum = visit_sum_check(learner.state());
    if !visit_sum.ok {
        return Err(HarnessError::VisitSum {
            seed,
            lhs: visit_sum.lhs,
            rhs: visit_sum.rhs,
        });
    }
    Ok(RegretLedger {
        seed,
        instantaneous,
        cumulative,
        evaluated,
        optimism_violations: options.monitor_optimism.then_some(violations),
        visit_sum,
        policy_snapshots: snapshots,
    })
}

/// Runs `seeds` independently (in parallel) and returns ledgers in seed order.
pub fn run_seeds(
    instance: &Instance,
    kind: AgentKind,
    schedule: &BonusSchedule,
    options: &RunOptions,
    seeds: &[u64],
) -> Result<Vec<RegretLedger>, HarnessError> {
    seeds
        .par_iter()
        .map(|&seed| match kind {
            AgentKind::Aqucb => run_seed(instance, *schedule, options, seed),
            AgentKind::Sarsa => run_seed(instance, NoBonus, options, seed),
        })
        .collect()
}

/// Per-seed line of the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub cumulative_regret: f64,
    pub optimism_violations: Option<u64>,
    pub visit_sum: VisitSumCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub num_cells: usize,
    pub optimal_value: f64,
}

/// Everything but timing; identical inputs give byte-identical JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub instance: InstanceSummary,
    pub measured_epsilon: f64,
    pub schedule_epsilon: f64,
    pub bound: BoundParameters,
    pub theorem_bound: f64,
    pub stride: u64,
    pub approximate: bool,
    pub optimism_frequency: Option<f64>,
    pub mean_cumulative_regret: f64,
    pub all_within_bound: bool,
    pub visit_sum_ok: bool,
    pub seeds: Vec<SeedSummary>,
}

/// Wall-clock figures, kept out of the summary so reruns stay byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub solve_seconds: f64,
    pub run_seconds: f64,
}

pub struct ExperimentReport {
    pub ledgers: Vec<RegretLedger>,
    pub summary: Summary,
    pub timing: Timing,
}

/// Builds the instance, runs every seed and summarizes.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let started = Instant::now();
    let instance = cfg.build_instance()?;
    let solve_seconds = started.elapsed().as_secs_f64();

    let budget = cfg.harness.evaluation_budget;
    if instance.evaluation_cost() > budget {
        return Err(HarnessError::EvaluationBudget {
            cost: instance.evaluation_cost(),
            budget,
        });
    }

    let horizon = instance.mdp.horizon();
    let episodes = cfg.agent.episodes;
    let schedule_epsilon = cfg.agent.epsilon.resolve(instance.measured_epsilon);
    let schedule = BonusSchedule::new(horizon, episodes, cfg.agent.delta, schedule_epsilon)?;
    let stride = cfg
        .harness
        .stride
        .unwrap_or_else(|| default_stride(episodes));
    let options = RunOptions {
        episodes,
        stride,
        monitor_optimism: instance.is_exact(),
        policy_snapshot_stride: cfg.harness.policy_snapshot_stride,
    };

    let run_started = Instant::now();
    let ledgers = run_seeds(
        &instance,
        cfg.agent.name,
        &schedule,
        &options,
        &cfg.harness.seeds,
    )?;
    let run_seconds = run_started.elapsed().as_secs_f64();

    let bound = BoundParameters {
        episodes,
        horizon,
        num_cells: instance.aggregation.num_cells(),
        delta: cfg.agent.delta,
        epsilon: instance.measured_epsilon,
    };
    let theorem_value = bound.bound_at(episodes);
    let seeds: Vec<SeedSummary> = ledgers
        .iter()
        .map(|l| SeedSummary {
            seed: l.seed,
            cumulative_regret: l.total_regret(),
            optimism_violations: l.optimism_violations,
            visit_sum: l.visit_sum,
        })
        .collect();
    let n = ledgers.len() as f64;
    let optimism_frequency = options.monitor_optimism.then(|| {
        ledgers
            .iter()
            .filter(|l| l.is_optimistic() == Some(true))
            .count() as f64
            / n
    });
    let summary = Summary {
        config: cfg.echo(),
        instance: InstanceSummary {
            num_states: instance.mdp.num_states(),
            num_actions: instance.mdp.num_actions(),
            horizon,
            num_cells: instance.aggregation.num_cells(),
            optimal_value: instance.optimal_value(),
        },
        measured_epsilon: instance.measured_epsilon,
        schedule_epsilon,
        bound,
        theorem_bound: theorem_value,
        stride,
        approximate: stride > 1,
        optimism_frequency,
        mean_cumulative_regret: seeds.iter().map(|s| s.cumulative_regret).sum::<f64>() / n,
        all_within_bound: seeds.iter().all(|s| s.cumulative_regret <= theorem_value),
        visit_sum_ok: seeds.iter().all(|s| s.visit_sum.ok),
        seeds,
    };
    Ok(ExperimentReport {
        ledgers,
        summary,
        timing: Timing {
            total_seconds: started.elapsed().as_secs_f64(),
            solve_seconds,
            run_seconds,
        },
    })
}

/// One CSV row per episode per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub seed: u64,
    pub k: u64,
    pub instantaneous_regret: f64,
    pub cumulative_regret: f64,
    pub evaluated: bool,
}

pub fn write_csv<W: Write>(ledgers: &[RegretLedger], out: W) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_writer(out);
    for ledger in ledgers {
        for (i, (&inst, &cum)) in ledger
            .instantaneous
            .iter()
            .zip(&ledger.cumulative)
            .enumerate()
        {
            writer.serialize(CsvRow {
                seed: ledger.seed,
                k: i as u64 + 1,
                instantaneous_regret: inst,
                cumulative_regret: cum,
                evaluated: ledger.evaluated[i],
            })?;
        }
    }
    writer.flush().map_err(|e| HarnessError::Io {
        path: "<csv>".into(),
        source: e,
    })?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>, HarnessError> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader.deserialize().collect::<Result<Vec<CsvRow>, _>>()?;
    Ok(rows)
}

/// Writes `regret.csv`, `summary.json` and `timing.json` into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<(), HarnessError> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| HarnessError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join("regret.csv");
    let file = std::fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    write_csv(&report.ledgers, std::io::BufWriter::new(file))?;

    let summary_path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&report.summary)?;
    text.push('\n');
    std::fs::write(&summary_path, text).map_err(io_err(&summary_path))?;

    let timing_path = dir.join("timing.json");
    let mut text = serde_json::to_string_pretty(&report.timing)?;
    text.push('\n');
    std::fs::write(&timing_path, text).map_err(io_err(&timing_path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::trivial_aggregation;
    use crate::envs::{chain_mdp, random_mdp};

    #[test]
    fn bound_separates_epsilon_term() {
        let with = theorem_bound(1000.0, 3.0, 5.0, 0.1, 0.25);
        let without = theorem_bound(1000.0, 3.0, 5.0, 0.1, 0.0);
        assert!((without - with + 6.0 * 0.25 * 3.0 * 1000.0).abs() < 1e-6);
    }

    #[test]
    fn bound_reference_value() {
        // Independent calculator: H=2, M=4, K=1e4, δ=0.1, ε=0.
        let v = theorem_bound(1e4, 2.0, 4.0, 0.1, 0.0);
        assert!((v - 107_942.120_836_468_54).abs() < 1e-6, "{v}");
    }

    #[test]
    fn bound_scales_like_root_k() {
        let ratio = theorem_bound(4e6, 2.0, 4.0, 0.1, 0.0) / theorem_bound(1e6, 2.0, 4.0, 0.1, 0.0);
        assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn visit_sum_single_episode() {
        let mdp = random_mdp(3, 4, 2, None, 1).unwrap();
        let agg = trivial_aggregation(3, 4, 2);
        let out = crate::agent::baseline_greedy_sarsa(&mdp, &agg, 1, 0).unwrap();
        let check = visit_sum_check(&out.state);
        assert_eq!(check.lhs, 3.0);
        assert!((check.rhs - 2.0 * (9.0f64 * 8.0).sqrt()).abs() < 1e-12);
        assert!(check.ok);
    }

    #[test]
    fn visit_sum_concentrated_visits() {
        // One cell per stage: every visit lands in it.
        let mdp = random_mdp(2, 3, 2, None, 4).unwrap();
        let agg = Aggregation::from_fn(5, 2, 3, 2, |_, _, _| 0).unwrap();
        let k = 400;
        let out = crate::agent::baseline_greedy_sarsa(&mdp, &agg, k, 9).unwrap();
        let check = visit_sum_check(&out.state);
        let per_stage: f64 = (1..=k).map(|j| 1.0 / (j as f64).sqrt()).sum();
        assert!((check.lhs - 2.0 * per_stage).abs() < 1e-9);
        assert!(check.lhs <= 2.0 * 2.0 * (k as f64).sqrt());
        assert!(check.ok);
    }

    #[test]
    fn fresh_agent_is_optimistic() {
        let mdp = random_mdp(4, 5, 3, None, 2).unwrap();
        let agg = trivial_aggregation(4, 5, 3);
        let (q, _) = backward_induction(&mdp);
        let report = optimism_monitor(&AgentState::new(4, 15), &q, &agg).unwrap();
        assert_eq!(
            report,
            OptimismReport {
                violations: 0,
                checked: 60
            }
        );
        assert!(optimism_monitor(&AgentState::new(4, 14), &q, &agg).is_err());
    }

    #[test]
    fn action_independent_environment_has_no_regret() {
        let mdp = EpisodicMdp::from_fn(
            3,
            3,
            2,
            0,
            |_, _, _, n| [0.2, 0.3, 0.5][n],
            |h, s, _| 0.1 * (h + s) as f64,
        )
        .unwrap();
        let instance = Instance::new(mdp, trivial_aggregation(3, 3, 2)).unwrap();
        let schedule = BonusSchedule::new(3, 200, 0.1, 0.0).unwrap();
        let ledger = run_seed(&instance, schedule, &RunOptions::new(200), 5).unwrap();
        assert!(ledger.instantaneous.iter().all(|&r| r.abs() <= 1e-12));
    }

    #[test]
    fn first_episode_regret_on_deterministic_chain() {
        // H = 4, L = 3, no slip: V*_1(0) = 2. After the first update the
        // estimates touched by the random first trajectory are still H
        // (bonus dominates), so π_1 is the lowest-index greedy policy: LEFT
        // everywhere, which never collects anything.
        let instance =
            Instance::new(chain_mdp(4, 3, 0.0).unwrap(), trivial_aggregation(4, 3, 2)).unwrap();
        let schedule = BonusSchedule::new(4, 1, 0.1, 0.0).unwrap();
        let ledger = run_seed(&instance, schedule, &RunOptions::new(1), 0).unwrap();
        assert_eq!(instance.optimal_value(), 2.0);
        assert_eq!(ledger.instantaneous, vec![2.0]);
        assert_eq!(ledger.cumulative, vec![2.0]);
    }

    #[test]
    fn stride_holds_values_between_evaluations() {
        let instance = Instance::new(
            random_mdp(3, 3, 2, None, 8).unwrap(),
            trivial_aggregation(3, 3, 2),
        )
        .unwrap();
        let schedule = BonusSchedule::new(3, 25, 0.1, 0.0).unwrap();
        let options = RunOptions {
            stride: 10,
            ..RunOptions::new(25)
        };
        let ledger = run_seed(&instance, schedule, &options, 1).unwrap();
        let exact: Vec<u64> = (1..=25)
            .filter(|&k| ledger.evaluated[k as usize - 1])
            .collect();
        assert_eq!(exact, vec![1, 11, 21, 25]);
        for k in 2..=10 {
            assert_eq!(ledger.instantaneous[k - 1], ledger.instantaneous[0]);
        }
    }

    #[test]
    fn tail_average_and_loss_check() {
        let ledger = RegretLedger {
            seed: 0,
            instantaneous: vec![1.0, 1.0, 0.5, 0.1, 0.1],
            cumulative: vec![1.0, 2.0, 2.5, 2.6, 2.7],
            evaluated: vec![true; 5],
            optimism_violations: None,
            visit_sum: VisitSumCheck {
                lhs: 0.0,
                rhs: 0.0,
                ok: true,
            },
            policy_snapshots: vec![],
        };
        assert!((ledger.tail_average(0.4) - 0.1).abs() < 1e-15);
        let params = BoundParameters {
            episodes: 5,
            horizon: 1,
            num_cells: 1,
            delta: 0.1,
            epsilon: 0.0,
        };
        let check = asymptotic_loss_check(&ledger, &params, 0.4);
        let slack = 24.0 * ((3.0f64 * 5.0 / 0.1).ln() / 2.0).sqrt();
        assert!((check.threshold - slack).abs() < 1e-12);
        assert!(check.ok);
        assert_eq!(ledger.regret_at(0), 0.0);
        assert_eq!(ledger.regret_at(3), 2.5);
    }
}
