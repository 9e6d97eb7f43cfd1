use std::fs;
use std::process::Command;

use sfl_sim::harness::report::{rounds_csv, ROUNDS_HEADER};
use sfl_sim::harness::sweep::{first_round_problem, small_instance};
use sfl_sim::harness::{
    emit_reports, fmt_num, run_simulation, sweep_resources, sweep_ste_curve, ClientRow,
    OutputFormat, RoundReport, ScenarioConfig,
};
use sfl_sim::optimizer::{
    optimize_with_mode, ste, AllocationDecision, ClientAllocation, ConvergenceTrace, Mode,
    SolverTolerances,
};

fn sample_report() -> RoundReport {
    RoundReport {
        round: 3,
        candidates: vec![4, 7],
        selected: vec![7],
        rows: vec![
            ClientRow {
                client_id: 4,
                selected: false,
                reason: "mobility".into(),
                tokens: None,
                bandwidth: None,
                power: None,
                forward_latency: 1.25,
                uplink_latency: None,
                uplink_energy: None,
            },
            ClientRow {
                client_id: 7,
                selected: true,
                reason: "ok".into(),
                tokens: Some(12),
                bandwidth: Some(2.5e7),
                power: Some(0.2),
                forward_latency: 0.8,
                uplink_latency: Some(1.0 / 3.0),
                uplink_energy: Some(0.2 / 3.0),
            },
        ],
        decision: AllocationDecision {
            clients: vec![ClientAllocation {
                id: 7,
                tokens: 12,
                bandwidth: 2.5e7,
                power: 0.2,
                feasible: true,
                reason: None,
            }],
            tau: 1.0 / 3.0,
            ste: 123.456789123,
        },
        trace: ConvergenceTrace::default(),
        downlink_delay: 1.0,
        tau: 1.0 / 3.0,
        ste: 123.456789123,
        elapsed: 2.1333,
    }
}

#[test]
fn golden_rounds_csv() {
    let want = "\
round,client_id,selected,reason,K,W_hz,p_w,T_F_s,T_U_s,E_U_j,tau_s,ste
3,4,0,mobility,,,,1.25,,,0.333333333,123.456789
3,7,1,ok,12,25000000,0.2,0.8,0.333333333,0.0666666667,0.333333333,123.456789
";
    assert_eq!(rounds_csv(&[sample_report()]), want);
}

#[test]
fn csv_round_trip() {
    let cfg = ScenarioConfig {
        rounds: 3,
        ..ScenarioConfig::default()
    };
    let reports = run_simulation(&cfg).unwrap();
    let text = rounds_csv(&reports);
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(
        rd.headers().unwrap().iter().collect::<Vec<_>>().join(","),
        ROUNDS_HEADER
    );
    let records: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    let rows: Vec<(&RoundReport, &ClientRow)> = reports
        .iter()
        .flat_map(|r| r.rows.iter().map(move |row| (r, row)))
        .collect();
    assert_eq!(records.len(), rows.len());
    let close = |field: &str, v: f64| {
        let got: f64 = field.parse().unwrap();
        assert!((got - v).abs() <= 1e-8 * v.abs().max(1e-300), "{field} vs {v}");
    };
    for (rec, (r, row)) in records.iter().zip(rows) {
        assert_eq!(rec[0].parse::<usize>().unwrap(), r.round);
        assert_eq!(rec[1].parse::<usize>().unwrap(), row.client_id);
        assert_eq!(&rec[2] == "1", row.selected);
        assert_eq!(&rec[3], row.reason);
        match row.tokens {
            Some(k) => assert_eq!(rec[4].parse::<usize>().unwrap(), k),
            None => assert!(rec[4].is_empty()),
        }
        for (i, v) in [row.bandwidth, row.power].into_iter().enumerate() {
            match v {
                Some(v) => close(&rec[5 + i], v),
                None => assert!(rec[5 + i].is_empty()),
            }
        }
        close(&rec[7], row.forward_latency);
        for (i, v) in [row.uplink_latency, row.uplink_energy].into_iter().enumerate() {
            match v {
                Some(v) => close(&rec[8 + i], v),
                None => assert!(rec[8 + i].is_empty()),
            }
        }
        close(&rec[10], r.tau);
        close(&rec[11], r.ste);
    }
}

#[test]
fn report_ste_matches_recomputation() {
    let cfg = ScenarioConfig {
        rounds: 4,
        ..ScenarioConfig::default()
    };
    for r in run_simulation(&cfg).unwrap() {
        assert!(r.selected.iter().all(|id| r.candidates.contains(id)));
        if r.decision.feasible_count() == 0 {
            assert_eq!(r.ste, 0.0);
            continue;
        }
        let problem = sfl_sim::harness::round::build_problem(
            &regenerate_fleet(&cfg, r.round),
            &r.candidates,
            &cfg,
            r.round,
        )
        .unwrap()
        .0;
        let again = ste(&problem, &r.decision).unwrap();
        assert!((again - r.ste).abs() <= 1e-9 * r.ste);
    }
}

/// Fleet state at the start of `round`, replayed from the seed.
fn regenerate_fleet(cfg: &ScenarioConfig, round: usize) -> Vec<sfl_sim::model::ClientProfile> {
    let mut s = sfl_sim::harness::Scenario::new(cfg.clone());
    for r in 0..round {
        let c = s.next_candidates();
        let rep = sfl_sim::harness::run_round(&s.fleet, &c, cfg, r, cfg.mode, &cfg.tolerances)
            .unwrap();
        s.advance(rep.elapsed);
    }
    s.fleet
}

#[test]
fn no_token_mode_sends_everything() {
    let cfg = ScenarioConfig {
        rounds: 2,
        mode: Mode::NoToken,
        ..ScenarioConfig::default()
    };
    for r in run_simulation(&cfg).unwrap() {
        for a in r.decision.clients.iter().filter(|a| a.feasible) {
            assert_eq!(a.tokens, cfg.params.num_patches);
        }
    }
}

#[test]
fn full_mode_passes_through_optimizer() {
    let cfg = ScenarioConfig::default();
    let problem = first_round_problem(&cfg).unwrap();
    let (direct, _) = optimize_with_mode(&problem, &SolverTolerances::default(), Mode::Full);
    let report = &run_simulation(&ScenarioConfig { rounds: 1, ..cfg }).unwrap()[0];
    assert_eq!(report.decision, direct);
}

#[test]
fn ste_curve_covers_range() {
    let problem = first_round_problem(&ScenarioConfig::default()).unwrap();
    let p = &problem.params;
    let curve = sweep_ste_curve(&problem, p.min_tokens..=p.num_patches).unwrap();
    assert_eq!(curve.first().unwrap().tokens, p.min_tokens);
    assert_eq!(curve.last().unwrap().tokens, p.num_patches);
}

#[test]
fn ste_curve_peaks_at_n_for_flat_importance_and_fast_links() {
    // uniform importance, huge rate: latency is linear in K + 2 so f(K)/(K+2) rises to N
    let mut problem = small_instance(5);
    problem.params.total_bandwidth = 1e12;
    let n = problem.params.num_patches;
    for c in &mut problem.clients {
        c.importance = sfl_sim::tokens::ImportanceProfile::from_ranked(vec![0.5; n]).unwrap();
        c.standing = c.base_latency + 1e6;
    }
    let curve = sweep_ste_curve(&problem, 1..=n).unwrap();
    let best = curve
        .iter()
        .max_by(|a, b| a.ste.total_cmp(&b.ste))
        .unwrap();
    assert_eq!(best.tokens, n);
}

#[test]
fn resource_grid_shape() {
    let cfg = ScenarioConfig {
        sweep_seeds: 1,
        sweep_bandwidth: vec![1e7, 2e7, 4e7],
        sweep_energy: vec![0.1, 0.2],
        ..ScenarioConfig::default()
    };
    let cells = sweep_resources(&cfg).unwrap();
    assert_eq!(cells.len(), 6);
    assert_eq!(cells[1].total_bandwidth, 1e7);
    assert_eq!(cells[1].energy_budget, 0.2);
}

#[test]
fn emitted_files_are_deterministic() {
    let cfg = ScenarioConfig {
        rounds: 3,
        ..ScenarioConfig::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for fmt in [OutputFormat::Csv, OutputFormat::JsonLike] {
        let pa = emit_reports(&run_simulation(&cfg).unwrap(), fmt, a.path()).unwrap();
        let pb = emit_reports(&run_simulation(&cfg).unwrap(), fmt, b.path()).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
        }
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["rounds"].as_array().unwrap().len(), 3);
}

#[test]
fn unwritable_path_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let err = emit_reports(&[sample_report()], OutputFormat::Csv, &blocker.join("sub")).unwrap_err();
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn number_format_examples() {
    assert_eq!(fmt_num(2.5e7), "25000000");
    assert_eq!(fmt_num(0.2 / 3.0), "0.0666666667");
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sfl-sim"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "clients = 0\n").unwrap();
    let status = cli()
        .args(["run", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let missing = cli()
        .args(["run", "--config", "/nonexistent/cfg.toml"])
        .status()
        .unwrap();
    assert_eq!(missing.code(), Some(4));

    let good = dir.path().join("good.toml");
    fs::write(&good, "rounds = 2\n").unwrap();
    let out = dir.path().join("out");
    let status = cli()
        .args(["run", "--mode", "no-bandwidth", "--seed", "4", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for f in ["rounds.csv", "summary.json", "trace.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let tight = dir.path().join("tight.toml");
    fs::write(&tight, "latency_cap = 0.001\n").unwrap();
    let status = cli()
        .args(["sweep-ste", "--config"])
        .arg(&tight)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));

    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "x").unwrap();
    let status = cli()
        .args(["sweep-ste", "--out"])
        .arg(blocker.join("x"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}
