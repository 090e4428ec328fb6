use std::path::Path;
use std::process::Command;
use std::time::Instant;

use gbf::gengibbs::{gengibbs_run, GibbsRunConfig};
use gbf::rng::stream;
use gbf_harness::config::AlgorithmConfig;
use gbf_harness::experiment::{prepare_bank, recompute_metrics, run_experiment, AGGREGATE_FILE};
use gbf_harness::manifest::{list_files, Manifest};
use gbf_harness::report::write_report;
use gbf_harness::ExperimentConfig;

fn lg_config(out: &Path, algorithm: &str, replicates: usize) -> String {
    format!(
        r#"schema_version = 1
name = "lg"
seed = 11
horizon = 60
replicates = {replicates}
out = "{}"
[model]
kind = "linear_gaussian"
phi = 0.9
sigma_x = 0.5
sigma_y = 1.0
[algorithm]
{algorithm}
"#,
        out.display()
    )
}

const PF: &str = "kind = \"pf\"\nn_particles = 400";

fn gbf_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gbf"))
}

#[test]
fn same_seed_gives_byte_identical_aggregates_at_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut tables = Vec::new();
    for (i, threads) in [1, 2, 1].into_iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let text = format!("{}[reference]\nkind = \"kalman\"\n", lg_config(&out, PF, 4));
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        run_experiment(&cfg, &text, "filter", threads).unwrap();
        tables.push(std::fs::read(out.join(AGGREGATE_FILE)).unwrap());
        tables.push(std::fs::read(out.join("distances.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[2]);
    assert_eq!(tables[0], tables[4]);
    assert_eq!(tables[1], tables[3]);
    assert_eq!(tables[1], tables[5]);
}

#[test]
fn manifest_lists_every_output_with_its_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let text = lg_config(&out, "kind = \"kalman\"", 3);
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    let run = run_experiment(&cfg, &text, "filter", 1).unwrap();
    let m = Manifest::read(&out).unwrap();
    assert_eq!(m, run.manifest);
    assert_eq!(m.files, list_files(&out).unwrap());
    assert!(m.stale_files(&out).is_empty());
    let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
    for want in [
        "aggregate.csv",
        "config.toml",
        "diagnostics.jsonl",
        "replicates/rep_0000/metrics.json",
        "replicates/rep_0002/summary.csv",
    ] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    assert_eq!(m.replicate_wall_seconds.len(), 3);
    assert!(m.failed_replicates.is_empty());

    std::fs::write(out.join("aggregate.csv"), "tampered").unwrap();
    assert_eq!(m.stale_files(&out), ["aggregate.csv"]);
}

#[test]
fn metrics_verb_rebuilds_the_same_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let text = lg_config(&out, PF, 3);
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    run_experiment(&cfg, &text, "filter", 1).unwrap();
    let before = std::fs::read(out.join(AGGREGATE_FILE)).unwrap();
    std::fs::remove_file(out.join(AGGREGATE_FILE)).unwrap();
    let m = recompute_metrics(&out).unwrap();
    assert_eq!(std::fs::read(out.join(AGGREGATE_FILE)).unwrap(), before);
    assert!(m.stale_files(&out).is_empty());
    let report = write_report(&out).unwrap();
    assert!(report.contains("| method | replicates | rmse |"), "{report}");
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let out = dir.path().join("ok");
    let cfg = dir.path().join("ok.toml");
    std::fs::write(&cfg, lg_config(&out, "kind = \"kalman\"", 2)).unwrap();
    let st = gbf_bin().args(["filter", "--config"]).arg(&cfg).args(["--threads", "1"]).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(out.join("manifest.json").exists());
    let st = gbf_bin().args(["report", "--out"]).arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert!(out.join("report.md").exists());

    // An unknown key is rejected before anything is computed or written.
    let out = dir.path().join("typo");
    let cfg = dir.path().join("typo.toml");
    std::fs::write(&cfg, lg_config(&out, "kind = \"kalman\"", 2).replace("phi = 0.9", "phi = 0.9\nphii = 1")).unwrap();
    let o = gbf_bin().args(["filter", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("phii"));
    assert!(!out.exists());

    // Verb/algorithm mismatch is a configuration error too.
    let cfg = dir.path().join("ok.toml");
    let o = gbf_bin().args(["gengibbs", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    // A missing returns file is a runtime error.
    let out = dir.path().join("bt");
    let cfg = dir.path().join("bt.toml");
    let text = lg_config(
        &out,
        r#"kind = "gen_gibbs"
lag = 3
n_train = 100
n_iter = 10
burn_in = 5
model = { kind = "linear_gaussian", phi = 0.9 }
priors.psi_x = { family = "gamma", shape = 2.0, rate = 2.0 }
priors.psi_y = { family = "gamma", shape = 2.0, rate = 2.0 }"#,
        1,
    ) + &format!(
        "[backtest]\nreturns_csv = \"{}\"\nprice_column = \"close\"\n",
        dir.path().join("missing.csv").display()
    );
    std::fs::write(&cfg, text).unwrap();
    let o = gbf_bin().args(["backtest", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_and_filter_share_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, lg_config(&out, "kind = \"kalman\"", 1)).unwrap();
    for verb in ["simulate", "filter"] {
        let st = gbf_bin().arg(verb).arg("--config").arg(&cfg).status().unwrap();
        assert_eq!(st.code(), Some(0));
    }
    let traj = std::fs::read_to_string(out.join("replicates/rep_0000/trajectory.csv")).unwrap();
    let summary = std::fs::read_to_string(out.join("replicates/rep_0000/summary.csv")).unwrap();
    // trajectory: replicate,t,x,y (t = 0 has no y); summary: t,y,x,...
    let ty: Vec<(String, String)> = traj
        .lines()
        .skip(2)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[3].to_string(), f[2].to_string())
        })
        .collect();
    let sy: Vec<(String, String)> = summary
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].to_string())
        })
        .collect();
    assert_eq!(ty, sy);
}

#[test]
fn bank_inference_is_cheap_relative_to_training() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"schema_version = 1
name = "amortize"
seed = 5
horizon = 50
[model]
kind = "linear_gaussian"
phi = 0.9
sigma_x = 0.5
sigma_y = 1.0
[algorithm]
kind = "gen_gibbs"
lag = 5
n_train = 40000
n_iter = 200
burn_in = 50
model = {{ kind = "linear_gaussian", phi = 0.9 }}
bank_dir = "{}"
priors.psi_x = {{ family = "gamma", shape = 2.0, rate = 2.0 }}
priors.psi_y = {{ family = "gamma", shape = 2.0, rate = 2.0 }}
[algorithm.train]
n_epochs = 10
"#,
        dir.path().join("bank").display()
    );
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    let AlgorithmConfig::GenGibbs(g) = &cfg.algorithm else {
        unreachable!()
    };
    let t0 = Instant::now();
    let bank = prepare_bank(&cfg, g, None).unwrap();
    let train = t0.elapsed().as_secs_f64();

    let reloaded = prepare_bank(&cfg, g, None).unwrap();
    assert_eq!(reloaded.spec, bank.spec);

    let rc = GibbsRunConfig {
        n_iter: g.n_iter,
        burn_in: g.burn_in,
        init: None,
        store_states: false,
    };
    let t1 = Instant::now();
    for k in 0..5 {
        let mut rng = stream(99, k);
        let (_, y) = g.model.simulate(&[4.0, 1.0], cfg.horizon, &mut rng).unwrap();
        let chain = gengibbs_run(&reloaded, &y, &rc, &mut rng).unwrap();
        assert_eq!(chain.len(), g.n_iter);
    }
    let infer = t1.elapsed().as_secs_f64();
    assert!(infer < 0.1 * train, "inference {infer:.2}s vs training {train:.2}s");
}
