//! The experiment runners: resolve parameters, drive the library, and write
//! `manifest.json`, `results.csv`, `summary.json` atomically.
//!
//! Every numeric CSV row carries the effective seed and the config hash.
//! Artifacts are written before a failing status is returned, so a failed or
//! inconclusive audit still leaves its evidence on disk.

use std::path::PathBuf;

use serde_json::{json, Value};

use procure::agents::{audit_bic, audit_eiir, default_deviations, draw_population};
use procure::benchmarks::{approx_ratio_experiment, BenchmarkKind};
use procure::contract::build_contract;
use procure::mechanism::{accuracy_bound, params_for_accuracy, run_mechanism, MechanismParams};
use procure::privacy::{audit_estimate_dp, audit_payment_dp, AdjacentPair, RatioTestConfig};
use procure::rng::StreamSeed;
use procure::stats::RunningStats;

use crate::config::{
    AuditStatistic, BenchmarkComparison, ExperimentConfig, ExperimentKind, ParamMode,
};
use crate::error::CliError;
use crate::manifest::{now_utc, short_hash, RunManifest};
use crate::output::{artifact_paths, fmt_f64, write_atomic, CsvBuilder};

pub struct ExperimentContext {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub noise_off: bool,
    pub hash: String,
}

impl ExperimentContext {
    fn root(&self) -> StreamSeed {
        StreamSeed::new(self.seed)
    }

    fn short(&self) -> String {
        short_hash(&self.hash).to_string()
    }

    fn write_artifacts(
        &self,
        resolved: Value,
        results_csv: String,
        summary: Value,
    ) -> Result<(), CliError> {
        let (manifest_path, results_path, summary_path) = artifact_paths(&self.out_dir);
        let manifest = RunManifest {
            kind: self.config.kind.as_str().to_string(),
            seed: self.seed,
            noise_off: self.noise_off,
            config_hash: self.hash.clone(),
            created_utc: now_utc(),
            config: serde_json::to_value(&self.config).expect("config serializes"),
            resolved,
            artifacts: vec!["results.csv".into(), "summary.json".into()],
        };
        write_atomic(&results_path, &results_csv)?;
        write_atomic(
            &summary_path,
            &format!("{}\n", serde_json::to_string_pretty(&summary).expect("summary serializes")),
        )?;
        write_atomic(&manifest_path, &format!("{}\n", manifest.to_json()))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Check {
    name: String,
    pass: bool,
    detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Check { name: name.into(), pass, detail }
    }

    fn to_json(&self) -> Value {
        json!({ "name": self.name, "pass": self.pass, "detail": self.detail })
    }
}

fn checks_json(checks: &[Check]) -> Value {
    Value::Array(checks.iter().map(Check::to_json).collect())
}

fn fail_if_any(checks: &[Check]) -> Result<(), CliError> {
    let failed: Vec<&Check> = checks.iter().filter(|c| !c.pass).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::AuditFailed(
            failed.iter().map(|c| c.name.clone()).collect::<Vec<_>>().join(", "),
        ))
    }
}

pub fn dispatch(ctx: &ExperimentContext) -> Result<String, CliError> {
    match ctx.config.kind {
        ExperimentKind::Run => run_cmd(ctx),
        ExperimentKind::AuditDp => audit_dp_cmd(ctx),
        ExperimentKind::AuditBic => audit_bic_cmd(ctx),
        ExperimentKind::AccuracySweep => accuracy_sweep_cmd(ctx),
        ExperimentKind::Benchmark => benchmark_cmd(ctx),
    }
}

fn mode_str(mode: ParamMode) -> &'static str {
    match mode {
        ParamMode::C => "c",
        ParamMode::K => "k",
        ParamMode::Budget => "budget",
    }
}

fn run_cmd(ctx: &ExperimentContext) -> Result<String, CliError> {
    let config = &ctx.config;
    let types = config.database_types()?;
    let dists = config.build_distributions()?;
    let (mode, c, epsilon) = config.resolve_params()?;
    let contract = build_contract(&dists, c, epsilon)?;
    let params = MechanismParams::new(epsilon, c, config.target_type)?
        .with_noise_off(ctx.noise_off);
    let n = types.len();
    let n1 = types.iter().filter(|&&t| t == config.target_type).count();
    let reps = config.replications;
    let root = ctx.root();
    let short = ctx.short();

    let mut csv = CsvBuilder::new(&[
        "seed",
        "config_hash",
        "rep",
        "s_hat",
        "raw_s",
        "m",
        "w_size",
        "total_payment",
    ]);
    let mut raw_stats = RunningStats::new();
    let mut hat_stats = RunningStats::new();
    let bound = accuracy_bound(n1 as u64, c, epsilon);
    let mut exceed = 0usize;
    for rep in 0..reps {
        let mut pop_rng = root.child_index("population", rep as u64).rng();
        let pop = draw_population(&types, &dists, &mut pop_rng)?;
        let out = run_mechanism(&pop, &contract, &params, root.child_index("mechanism", rep as u64))?;
        raw_stats.push(out.raw_estimate);
        hat_stats.push(out.estimate);
        if (out.estimate - n1 as f64).abs() >= bound {
            exceed += 1;
        }
        csv.row(&[
            ctx.seed.to_string(),
            short.clone(),
            rep.to_string(),
            fmt_f64(out.estimate),
            fmt_f64(out.raw_estimate),
            out.target_accepted.to_string(),
            out.accepted_count().to_string(),
            fmt_f64(out.total_payment()),
        ]);
    }

    let sigma = ((n1 as f64 * c * (1.0 - c) + 2.0 / (epsilon * epsilon)) / (c * c)).sqrt();
    let unbias_tol = 3.0 * sigma / (reps as f64).sqrt();
    let frac = exceed as f64 / reps as f64;
    let frac_limit = 1.0 / 3.0 + 3.0 * ((1.0 / 3.0) * (2.0 / 3.0) / reps as f64).sqrt();
    let mut checks = vec![Check::new(
        "estimate-in-range",
        hat_stats.mean() >= 0.0 && hat_stats.mean() <= n as f64,
        format!("mean s_hat {}", hat_stats.mean()),
    )];
    if !ctx.noise_off {
        checks.push(Check::new(
            "unbiased-raw-estimate",
            (raw_stats.mean() - n1 as f64).abs() <= unbias_tol,
            format!("|{} - {n1}| <= {unbias_tol}", raw_stats.mean()),
        ));
        checks.push(Check::new(
            "chebyshev-accuracy",
            frac <= frac_limit,
            format!("frac |s_hat - n1| >= {bound} is {frac} <= {frac_limit}"),
        ));
    }

    let resolved = json!({
        "mode": mode_str(mode),
        "c": c,
        "epsilon": epsilon,
        "gamma": contract.gamma,
        "offers": contract.offers,
        "n": n,
        "n1": n1,
        "accuracy_bound": bound,
    });
    let summary = json!({
        "kind": "run",
        "seed": ctx.seed,
        "config_hash": ctx.hash,
        "replications": reps,
        "n": n,
        "n1": n1,
        "c": c,
        "epsilon": epsilon,
        "gamma": contract.gamma,
        "mean_raw_s": raw_stats.mean(),
        "mean_s_hat": hat_stats.mean(),
        "accuracy_bound": bound,
        "frac_exceeding_bound": frac,
        "checks": checks_json(&checks),
    });
    ctx.write_artifacts(resolved, csv.finish(), summary)?;
    fail_if_any(&checks)?;
    Ok(format!(
        "run: {reps} replications, mean s_hat {:.3}, accuracy frac {:.4} (bound {bound:.3})",
        hat_stats.mean(),
        frac
    ))
}

fn audit_dp_cmd(ctx: &ExperimentContext) -> Result<String, CliError> {
    let config = &ctx.config;
    let spec = config.audit_dp.as_ref().expect("validated");
    let types_a = config.database_types()?;
    let mut types_b = types_a.clone();
    types_b[spec.flip_index] = spec.flip_to;
    let pair = AdjacentPair::new(types_a, types_b)?;
    let dists = config.build_distributions()?;
    let (mode, c, epsilon) = config.resolve_params()?;
    let params = MechanismParams::new(epsilon, c, config.target_type)?;
    let epsilon_target = spec.epsilon_target.unwrap_or(epsilon);
    let cfg = RatioTestConfig {
        samples: spec.samples,
        bins: spec.bins,
        min_bin_count: spec.min_bin_count,
        slack: spec.slack,
    };
    let stream = ctx.root().child("audit-dp");

    let statistic = match spec.statistic {
        AuditStatistic::Estimate => "estimate",
        AuditStatistic::Payment => "payment",
    };
    let result = match spec.statistic {
        AuditStatistic::Estimate => {
            audit_estimate_dp(&pair, &dists, &params, epsilon_target, &cfg, stream)
        }
        AuditStatistic::Payment => audit_payment_dp(
            &pair,
            &dists,
            &params,
            spec.player_index.unwrap_or(spec.flip_index),
            epsilon_target,
            &cfg,
            stream,
        ),
    };

    let resolved = json!({
        "mode": mode_str(mode),
        "c": c,
        "epsilon": epsilon,
        "epsilon_target": epsilon_target,
        "statistic": statistic,
        "flipped_index": pair.flipped_index,
    });

    match result {
        Ok(report) => {
            let mut csv = CsvBuilder::new(&[
                "seed",
                "config_hash",
                "statistic",
                "epsilon_target",
                "max_log_ratio",
                "qualifying_bins",
                "direction",
                "pass",
            ]);
            csv.row(&[
                ctx.seed.to_string(),
                ctx.short(),
                statistic.to_string(),
                fmt_f64(epsilon_target),
                fmt_f64(report.max_log_ratio),
                report.qualifying_bins.to_string(),
                report.direction.clone(),
                report.pass.to_string(),
            ]);
            let checks = vec![Check::new(
                "ratio-bounded",
                report.pass,
                format!(
                    "max log ratio {} <= {} + ln({})",
                    report.max_log_ratio, epsilon_target, report.slack
                ),
            )];
            let summary = json!({
                "kind": "audit-dp",
                "seed": ctx.seed,
                "config_hash": ctx.hash,
                "status": if report.pass { "pass" } else { "fail" },
                "report": report,
                "checks": checks_json(&checks),
            });
            ctx.write_artifacts(resolved, csv.finish(), summary)?;
            fail_if_any(&checks)?;
            Ok(format!(
                "audit-dp ({statistic}): max log ratio {:.4} at target {epsilon_target} -> pass",
                report.max_log_ratio
            ))
        }
        Err(err) => {
            let cli_err = CliError::from(err);
            if matches!(cli_err, CliError::Inconclusive(_)) {
                let csv = CsvBuilder::new(&[
                    "seed",
                    "config_hash",
                    "statistic",
                    "epsilon_target",
                    "max_log_ratio",
                    "qualifying_bins",
                    "direction",
                    "pass",
                ]);
                let summary = json!({
                    "kind": "audit-dp",
                    "seed": ctx.seed,
                    "config_hash": ctx.hash,
                    "status": "inconclusive",
                    "detail": cli_err.to_string(),
                });
                ctx.write_artifacts(resolved, csv.finish(), summary)?;
            }
            Err(cli_err)
        }
    }
}

fn audit_bic_cmd(ctx: &ExperimentContext) -> Result<String, CliError> {
    let config = &ctx.config;
    let spec = config.audit_bic.as_ref().expect("validated");
    let types = config.database_types()?;
    let dists = config.build_distributions()?;
    let (mode, c, epsilon) = config.resolve_params()?;
    let contract = build_contract(&dists, c, epsilon)?;
    let player_type = types[spec.player_index];
    let alpha = contract.offers[player_type].expected_price();
    let deviations = default_deviations(alpha);

    let reports = audit_bic(
        &contract,
        &dists,
        &types,
        spec.player_index,
        &deviations,
        config.replications,
        ctx.root().child("audit-bic"),
    )?;
    let eiir = audit_eiir(
        &contract,
        &dists,
        &types,
        config.replications,
        ctx.root().child("audit-eiir"),
    )?;

    let short = ctx.short();
    let mut csv = CsvBuilder::new(&[
        "seed",
        "config_hash",
        "deviation",
        "own_cost",
        "utility_gap",
        "ci_halfwidth",
        "replications",
    ]);
    let mut checks = Vec::new();
    let mut worst = f64::INFINITY;
    for r in &reports {
        csv.row(&[
            ctx.seed.to_string(),
            short.clone(),
            r.deviation.clone(),
            fmt_f64(r.own_cost),
            fmt_f64(r.utility_gap),
            fmt_f64(r.ci_halfwidth),
            r.replications.to_string(),
        ]);
        worst = worst.min(r.utility_gap + r.ci_halfwidth);
        if r.utility_gap < -r.ci_halfwidth {
            checks.push(Check::new(
                "bic-no-profitable-deviation",
                false,
                format!("{} at cost {}: gap {} < -{}", r.deviation, r.own_cost, r.utility_gap, r.ci_halfwidth),
            ));
        }
    }
    if checks.is_empty() {
        checks.push(Check::new(
            "bic-no-profitable-deviation",
            true,
            format!("min(gap + ci) = {worst}"),
        ));
    }
    for t in &eiir {
        checks.push(Check::new(
            &format!("eiir-type-{}", t.player_type),
            t.mean_utility >= -t.ci_halfwidth,
            format!("mean utility {} (ci {})", t.mean_utility, t.ci_halfwidth),
        ));
    }

    let resolved = json!({
        "mode": mode_str(mode),
        "c": c,
        "epsilon": epsilon,
        "gamma": contract.gamma,
        "offers": contract.offers,
        "audited_player": spec.player_index,
        "audited_type": player_type,
        "deviations": deviations.iter().map(|d| d.label()).collect::<Vec<_>>(),
    });
    let summary = json!({
        "kind": "audit-bic",
        "seed": ctx.seed,
        "config_hash": ctx.hash,
        "replications": config.replications,
        "deviation_reports": reports,
        "eiir_reports": eiir,
        "checks": checks_json(&checks),
    });
    ctx.write_artifacts(resolved, csv.finish(), summary)?;
    fail_if_any(&checks)?;
    Ok(format!(
        "audit-bic: {} deviation cells, no profitable deviation; {} types EIIR-clean",
        reports.len(),
        eiir.len()
    ))
}

fn accuracy_sweep_cmd(ctx: &ExperimentContext) -> Result<String, CliError> {
    let config = &ctx.config;
    let spec = config.accuracy_sweep.as_ref().expect("validated");
    let short = ctx.short();
    let root = ctx.root();

    let empirical = config.replications > 0;
    let (types, dists) = if empirical {
        let types = config.database_types()?;
        if types.len() as u64 != spec.n {
            return Err(CliError::config(format!(
                "accuracy_sweep.n = {} but the database has {} players",
                spec.n,
                types.len()
            )));
        }
        (types, config.build_distributions()?)
    } else {
        (Vec::new(), Vec::new())
    };

    let mut csv = CsvBuilder::new(&[
        "seed",
        "config_hash",
        "k",
        "n",
        "c",
        "epsilon",
        "bound",
        "frac_exceeding_k",
        "replications",
        "pass",
    ]);
    let mut checks = Vec::new();
    let mut resolved_entries = Vec::new();
    for (ki, &k) in spec.ks.iter().enumerate() {
        let (c, epsilon) = params_for_accuracy(k, spec.n)?;
        let bound = accuracy_bound(spec.n, c, epsilon);
        let formula_ok = bound <= k * (1.0 + 1e-12);
        checks.push(Check::new(
            &format!("bound-within-k-{k}"),
            formula_ok,
            format!("accuracy_bound(n={}, c={c}, eps={epsilon}) = {bound} <= {k}", spec.n),
        ));

        let mut frac = f64::NAN;
        let mut pass = formula_ok;
        if empirical {
            let contract = build_contract(&dists, c, epsilon)?;
            let params = MechanismParams::new(epsilon, c, config.target_type)?;
            let n1 = types.iter().filter(|&&t| t == config.target_type).count();
            let mut exceed = 0usize;
            for rep in 0..config.replications {
                let label = (ki * config.replications + rep) as u64;
                let mut pop_rng = root.child_index("sweep/population", label).rng();
                let pop = draw_population(&types, &dists, &mut pop_rng)?;
                let out =
                    run_mechanism(&pop, &contract, &params, root.child_index("sweep/mechanism", label))?;
                if (out.estimate - n1 as f64).abs() >= k {
                    exceed += 1;
                }
            }
            frac = exceed as f64 / config.replications as f64;
            let limit = 1.0 / 3.0
                + 3.0 * ((1.0 / 3.0) * (2.0 / 3.0) / config.replications as f64).sqrt();
            pass = pass && frac <= limit;
            checks.push(Check::new(
                &format!("empirical-k-accuracy-{k}"),
                frac <= limit,
                format!("frac |s_hat - n1| >= {k} is {frac} <= {limit}"),
            ));
        }

        csv.row(&[
            ctx.seed.to_string(),
            short.clone(),
            fmt_f64(k),
            spec.n.to_string(),
            fmt_f64(c),
            fmt_f64(epsilon),
            fmt_f64(bound),
            if frac.is_nan() { String::new() } else { fmt_f64(frac) },
            config.replications.to_string(),
            pass.to_string(),
        ]);
        resolved_entries.push(json!({ "k": k, "c": c, "epsilon": epsilon, "bound": bound }));
    }

    let resolved = json!({ "mode": "k", "n": spec.n, "entries": resolved_entries });
    let summary = json!({
        "kind": "accuracy-sweep",
        "seed": ctx.seed,
        "config_hash": ctx.hash,
        "n": spec.n,
        "ks": spec.ks,
        "replications": config.replications,
        "checks": checks_json(&checks),
    });
    ctx.write_artifacts(resolved, csv.finish(), summary)?;
    fail_if_any(&checks)?;
    Ok(format!("accuracy-sweep: {} k values resolved and checked", spec.ks.len()))
}

fn benchmark_cmd(ctx: &ExperimentContext) -> Result<String, CliError> {
    let config = &ctx.config;
    let spec = config.benchmark.as_ref().expect("validated");
    let dist_spec = &config.distributions[spec.dist_index];
    let dist = match dist_spec.build()? {
        procure::dist::CostDistribution::Continuous(d) => d,
        _ => {
            return Err(CliError::config(
                "benchmark comparisons need a continuous distribution",
            ))
        }
    };
    let kind = match spec.comparison {
        BenchmarkComparison::EnvyFree => BenchmarkKind::EnvyFree,
        BenchmarkComparison::Myerson => BenchmarkKind::Myerson,
    };

    let short = ctx.short();
    let mut csv = CsvBuilder::new(&[
        "seed",
        "config_hash",
        "dist_id",
        "n",
        "w",
        "mech_payment",
        "benchmark_payment",
        "benchmark_ci",
        "ratio",
        "bound",
        "r",
        "pass",
    ]);
    let mut checks = Vec::new();
    let mut reports = Vec::new();
    for &w in &spec.ws {
        let report = approx_ratio_experiment(
            &dist,
            spec.n,
            w,
            config.replications,
            kind,
            spec.slack,
            ctx.root().child_index("benchmark", w as u64),
        )?;
        csv.row(&[
            ctx.seed.to_string(),
            short.clone(),
            dist_spec.id(),
            spec.n.to_string(),
            w.to_string(),
            fmt_f64(report.mechanism_payment),
            fmt_f64(report.benchmark.mean),
            fmt_f64(report.benchmark.ci_halfwidth),
            fmt_f64(report.ratio),
            fmt_f64(report.bound),
            report.stretch_ratio.map(fmt_f64).unwrap_or_default(),
            report.pass.to_string(),
        ]);
        checks.push(Check::new(
            &format!("ratio-bounded-w-{w}"),
            report.pass,
            format!("ratio {} <= {} * {}", report.ratio, report.bound, spec.slack),
        ));
        reports.push(report);
    }

    let resolved = json!({
        "mode": "per-w",
        "dist": dist_spec.id(),
        "n": spec.n,
        "ws": spec.ws,
        "comparison": spec.comparison,
    });
    let summary = json!({
        "kind": "benchmark",
        "seed": ctx.seed,
        "config_hash": ctx.hash,
        "replications": config.replications,
        "reports": reports,
        "checks": checks_json(&checks),
    });
    ctx.write_artifacts(resolved, csv.finish(), summary)?;
    fail_if_any(&checks)?;
    Ok(format!("benchmark: {} w values within bound", spec.ws.len()))
}
