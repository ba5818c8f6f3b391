use std::fmt::Write as _;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use liftbid_core::harness::examples::{format_number, EXAMPLE_CPA};
use liftbid_core::harness::{
    reproduce_examples, run_replications, training_log, verify_theorems, BidSource, ExampleReport, ReplicationSummary,
    VerificationSweepReport,
};
use liftbid_core::lift::sampling::write_samples;
use liftbid_core::lift::{generate_samples, schema_for_log, train_model, CalibratedModel, DecileRow, TimelineIndex};
use liftbid_core::world::eventlog::EventLog;
use liftbid_core::world::summarize;
use liftbid_core::Money;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{log_error, CliError};
use crate::output::{opt, OutDir, Stamp};
use crate::ConfigArgs;

fn load(args: &ConfigArgs) -> Result<(RunConfig, Stamp), CliError> {
    let cfg = RunConfig::load(args.config.as_deref(), &args.overrides)?;
    let stamp = Stamp { seed: cfg.seed, digest: cfg.digest() };
    Ok((cfg, stamp))
}

fn banner(command: &str, stamp: &Stamp) {
    println!("liftbid {command}  seed={}  config={}", stamp.seed, stamp.digest);
}

pub fn simulate(args: &ConfigArgs, out: &mut OutDir) -> Result<(), CliError> {
    let (cfg, stamp) = load(args)?;
    cfg.simulate.world.validate()?;
    let log = training_log(&cfg.simulate, &stamp.digest)?;
    let summary = summarize(&log, cfg.simulate.action_window_days);
    let path = out.path("events.log");
    out.write_with(&path, |w| log.write_to(w))?;

    #[derive(Serialize)]
    struct Report<'a> {
        log_file: &'a str,
        summary: &'a liftbid_core::world::LogSummary,
    }
    out.write_json("simulate.json", &stamp, &Report { log_file: "events.log", summary: &summary })?;

    banner("simulate", &stamp);
    println!("users        {}", summary.users);
    println!("requests     {}", summary.requests);
    println!("impressions  {}", summary.impressions);
    println!("clicks       {}", summary.clicks);
    println!("actions      {}", summary.actions);
    println!(
        "preceded by an impression within {}d: {}",
        cfg.simulate.action_window_days,
        opt(summary.precedent_impression_fraction)
    );
    Ok(())
}

fn read_log(path: &Path) -> Result<EventLog, CliError> {
    let f = std::fs::File::open(path).map_err(CliError::io(path))?;
    EventLog::read_from(BufReader::new(f)).map_err(|e| log_error(path, e))
}

fn decile_rows(name: &str, table: &[DecileRow]) -> Vec<Vec<String>> {
    table
        .iter()
        .map(|r| {
            vec![
                name.to_string(),
                r.decile.to_string(),
                r.n.to_string(),
                r.weight.to_string(),
                r.mean_predicted.to_string(),
                r.empirical_rate.to_string(),
                r.std_error.to_string(),
                (r.within_tolerance as u8).to_string(),
            ]
        })
        .collect()
}

fn decile_text(table: &[DecileRow]) -> String {
    let mut s = String::from("decile      n  predicted  empirical  std_err  ok\n");
    for r in table {
        let _ = writeln!(
            s,
            "{:>6} {:>6}  {:>9.4}  {:>9.4}  {:>7.4}  {}",
            r.decile,
            r.n,
            r.mean_predicted,
            r.empirical_rate,
            r.std_error,
            if r.within_tolerance { "yes" } else { "NO" }
        );
    }
    s
}

pub fn train(args: &ConfigArgs, log_path: &Path, export_samples: bool, out: &mut OutDir) -> Result<(), CliError> {
    let (cfg, stamp) = load(args)?;
    cfg.train.validate()?;
    let log = read_log(log_path)?;
    let schema = Arc::new(schema_for_log(&log));
    let index = TimelineIndex::from_log(log, schema);
    let mut outcome = train_model(&index, &cfg.train)?;
    if !outcome.model.isotonic.is_valid() {
        return Err(CliError::Assertion("isotonic map is not monotone within [0, 1]".into()));
    }
    if let Some(m) = outcome.model.metadata.as_mut() {
        m.config_digest = Some(stamp.digest.clone());
    }

    if export_samples {
        let set = generate_samples(&index, &cfg.train.sampling)?;
        let header = format!("seed={}\tdigest={}", stamp.seed, stamp.digest);
        let path = out.path("samples.tsv");
        out.write_with(&path, |w| write_samples(&set, &header, w))?;
    }
    let model_path = out.path("model.json");
    out.write_bytes(&model_path, &outcome.model.to_json())?;
    let columns =
        ["table", "decile", "n", "weight", "mean_predicted", "empirical_rate", "std_error", "within_tolerance"];
    let mut rows = decile_rows("per_user", &outcome.calibration_table);
    rows.extend(decile_rows("all_samples", &outcome.sample_calibration_table));
    out.write_records("calibration.tsv", "calibration", &stamp, &columns, &rows)?;

    #[derive(Serialize)]
    struct Report<'a> {
        model_file: &'a str,
        sampling: &'a liftbid_core::lift::sampling::SamplingStats,
        test_auc: Option<f64>,
        positives_from_unexposed_users: usize,
        calibration_pass: bool,
        calibration_table: &'a [DecileRow],
        sample_calibration_table: &'a [DecileRow],
    }
    let calibration_pass = outcome.calibration_table.iter().all(|r| r.within_tolerance);
    out.write_json(
        "train.json",
        &stamp,
        &Report {
            model_file: "model.json",
            sampling: &outcome.sampling,
            test_auc: outcome.test_auc,
            positives_from_unexposed_users: outcome.positives_from_unexposed_users,
            calibration_pass,
            calibration_table: &outcome.calibration_table,
            sample_calibration_table: &outcome.sample_calibration_table,
        },
    )?;

    banner("train", &stamp);
    let s = &outcome.sampling;
    println!(
        "samples: {} draws, {} positives, {} negatives kept ({:?})",
        s.draws, s.positives, s.negatives_kept, s.termination
    );
    println!("positives from users never shown the ad: {}", outcome.positives_from_unexposed_users);
    println!("held-out AUC: {}", opt(outcome.test_auc.map(|a| format!("{a:.4}"))));
    println!("calibration, one sample per held-out user:");
    print!("{}", decile_text(&outcome.calibration_table));
    Ok(())
}

fn verify_records(report: &VerificationSweepReport) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (name, setting) in [("simple", &report.simple), ("generalized", &report.generalized)] {
        for i in &setting.instances {
            let r = &i.report;
            rows.push(vec![
                name.to_string(),
                i.index.to_string(),
                i.rejected_draws.to_string(),
                i.beta.to_string(),
                r.a1.to_string(),
                r.a2.to_string(),
                r.c1.to_string(),
                r.c2.to_string(),
                r.attribution_residual.to_string(),
                (r.verdict.actions as u8).to_string(),
                (r.verdict.cost as u8).to_string(),
                opt(i.monte_carlo.map(|m| m.agrees as u8)),
            ]);
        }
    }
    rows
}

pub fn verify(args: &ConfigArgs, out: &mut OutDir) -> Result<(), CliError> {
    let (cfg, stamp) = load(args)?;
    let report = verify_theorems(&cfg.verify)?;
    out.write_json("verify.json", &stamp, &report)?;
    let columns = [
        "setting",
        "instance",
        "rejected_draws",
        "beta",
        "a1",
        "a2",
        "c1",
        "c2",
        "residual",
        "actions_ok",
        "cost_ok",
        "mc_agrees",
    ];
    out.write_records("verify.tsv", "verify", &stamp, &columns, &verify_records(&report))?;

    banner("verify", &stamp);
    let n = report.n_instances;
    println!("setting      actions  cost     monte-carlo  skipped  max_residual");
    for (name, s) in [("simple", &report.simple), ("generalized", &report.generalized)] {
        println!(
            "{:<12} {:>3}/{:<4} {:>3}/{:<4} {:>3}/{:<8} {:>7}  {:.2e}",
            name,
            s.actions_passes,
            n,
            s.cost_passes,
            n,
            s.monte_carlo_agreed,
            s.monte_carlo_checked,
            s.skipped,
            s.max_residual
        );
    }
    println!(
        "degenerate attribution: {} of {} users tied ({})",
        report.degenerate.ties,
        report.degenerate.users,
        if report.degenerate.all_ties { "all ties, detected" } else { "NOT all ties" }
    );
    if report.all_pass() {
        Ok(())
    } else {
        Err(CliError::Assertion("an expected inequality failed; see verify.json".into()))
    }
}

/// Expected figures of the two-user examples.
const EXPECTED: [(&str, f64, f64, f64); 2] = [("value", 0.041, 4.0, 3.5), ("lift", 0.05, 2.0, 3.5)];

fn example_mismatches(r: &ExampleReport) -> Vec<String> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
    let mut bad = Vec::new();
    for (row, (name, actions, revenue, cost)) in [&r.value, &r.lift].into_iter().zip(EXPECTED) {
        if !close(row.expected_actions, actions) {
            bad.push(format!("{name} expected actions {} != {actions}", row.expected_actions));
        }
        if !close(row.revenue, revenue) {
            bad.push(format!("{name} revenue {} != {revenue}", row.revenue));
        }
        if row.inventory_cost != Money::from_currency(cost).expect("constant") {
            bad.push(format!("{name} inventory cost {} != {cost}", row.inventory_cost));
        }
    }
    bad
}

fn print_examples(r: &ExampleReport) {
    let users: Vec<String> =
        r.users.iter().map(|(p, dp)| format!("(p={}, dp={})", format_number(*p), format_number(*dp))).collect();
    println!("users {}  competitor {}  CPA ${EXAMPLE_CPA}", users.join(" "), r.competitor);
    print!("{}", r.table());
}

pub fn verify_examples(args: &ConfigArgs, out: &mut OutDir) -> Result<(), CliError> {
    let (_, stamp) = load(args)?;
    let report = reproduce_examples();
    out.write_json("examples.json", &stamp, &report)?;
    banner("verify examples", &stamp);
    print_examples(&report);
    let bad = example_mismatches(&report);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(bad.join("; ")))
    }
}

pub fn examples() -> Result<(), CliError> {
    print_examples(&reproduce_examples());
    Ok(())
}

fn load_model(path: &Path) -> Result<CalibratedModel, CliError> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    CalibratedModel::from_json(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn abtest_records(summary: &ReplicationSummary) -> Vec<Vec<String>> {
    summary
        .reports
        .iter()
        .map(|r| {
            let mut row = vec![r.replication.to_string(), r.world_seed.to_string(), r.beta.to_string()];
            for g in [&r.passive, &r.value, &r.lift] {
                row.extend([g.impressions.to_string(), g.actions.to_string(), g.attributed_actions.to_string()]);
                row.push(g.inventory_cost.micros().to_string());
            }
            row.extend([
                opt(r.value_lift),
                opt(r.lift_lift),
                opt(r.lift_over_lift),
                opt(r.inventory_cost_diff),
                opt(r.cost_per_imp_diff),
            ]);
            row
        })
        .collect()
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{:+.1}%", 100.0 * v))
}

pub fn abtest(args: &ConfigArgs, model: Option<&Path>, out: &mut OutDir) -> Result<(), CliError> {
    let (cfg, stamp) = load(args)?;
    let source = match model {
        None => BidSource::Oracle,
        Some(p) => {
            let m = load_model(p)?;
            m.require_schema(&cfg.abtest.feature_schema())?;
            let fw = m.metadata.as_ref().map_or(7 * 86_400, |md| md.sampling.feature_window_seconds);
            BidSource::Model { model: Arc::new(m), feature_window_seconds: fw }
        }
    };
    let summary = run_replications(&cfg.abtest, &source)?;
    #[derive(Serialize)]
    struct Report<'a> {
        bid_source: &'a str,
        note: &'a str,
        #[serde(flatten)]
        summary: &'a ReplicationSummary,
    }
    let bid_source = if model.is_some() { "model" } else { "oracle" };
    let note = "synthetic world; only the signs of the comparisons are meaningful";
    out.write_json("abtest.json", &stamp, &Report { bid_source, note, summary: &summary })?;
    let mut columns: Vec<String> = ["replication", "world_seed", "beta"].map(String::from).to_vec();
    for g in ["passive", "value", "lift"] {
        for c in ["impressions", "actions", "attributed", "inventory_cost_micros"] {
            columns.push(format!("{g}_{c}"));
        }
    }
    columns.extend(
        ["value_lift", "lift_lift", "lift_over_lift", "inventory_cost_diff", "cost_per_imp_diff"].map(String::from),
    );
    let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
    out.write_records("abtest.tsv", "abtest", &stamp, &columns, &abtest_records(&summary))?;

    banner("abtest", &stamp);
    println!("bids from {bid_source}; {note}");
    println!("rep   actions p/v/l          value_lift  lift_lift  lift/lift  inv_cost_diff  cpi_diff");
    for r in &summary.reports {
        println!(
            "{:>3}   {:>6}/{:>6}/{:>6}   {:>9}  {:>9}  {:>9}  {:>13}  {:>8}",
            r.replication,
            r.passive.actions,
            r.value.actions,
            r.lift.actions,
            pct(r.value_lift),
            pct(r.lift_lift),
            pct(r.lift_over_lift),
            pct(r.inventory_cost_diff),
            pct(r.cost_per_imp_diff)
        );
    }
    let n = summary.replications;
    println!(
        "lift bidder more actions:     {:>3}/{n}  sign test p={:.2e}",
        summary.lift_more_actions, summary.p_lift_more_actions
    );
    println!(
        "inventory cost higher:        {:>3}/{n}  sign test p={:.2e}",
        summary.inventory_cost_higher, summary.p_inventory_cost_higher
    );
    println!(
        "cost per impression lower:    {:>3}/{n}  sign test p={:.2e}",
        summary.cost_per_imp_lower, summary.p_cost_per_imp_lower
    );
    Ok(())
}
