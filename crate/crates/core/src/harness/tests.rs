use std::path::Path;

use super::*;
use crate::error::Error;
use crate::intrinsic::Method;

fn tiny(env: &str, method: Method) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        env: env.into(),
        method,
        total_steps: 256,
        n_envs: 2,
        checkpoint_every: 2,
        ..ExperimentConfig::default()
    };
    c.ppo.rollout_len = 32;
    c.ppo.hidden = 16;
    c.intrinsic.hidden = 16;
    c.phase1.cluster.budget = 128;
    c
}

#[test]
fn kv_overrides_nested_and_top_level_keys() {
    let c = ExperimentConfig::from_kv(
        "# comment\nenv = coin_sparse\nmethod = rnd  # trailing\nseeds = [1, 2, 3]\nppo.clip = 0.2\nphase1.cluster.budget = 5000\nphase1.collection = random\n",
    )
    .unwrap();
    assert_eq!(c.env, "coin_sparse");
    assert_eq!(c.method, Method::Rnd);
    assert_eq!(c.seeds, vec![1, 2, 3]);
    assert_eq!(c.ppo.clip, 0.2);
    assert_eq!(c.phase1.cluster.budget, 5000);
    assert_eq!(c.phase1.collection, Collection::Random);
    assert_eq!(c.ppo.lr, ExperimentConfig::default().ppo.lr);
}

#[test]
fn unknown_keys_are_rejected() {
    for text in ["ppo.clipp = 0.2", "bogus = 1", "ppo = 3", "ppo.clip.x = 1", "env"] {
        let err = ExperimentConfig::from_kv(text).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{text}: {err}");
    }
}

#[test]
fn ill_typed_values_are_rejected() {
    assert!(ExperimentConfig::from_kv("ppo.epochs = many").is_err());
    assert!(ExperimentConfig::from_kv("method = dqn").is_err());
    assert!(ExperimentConfig::from_kv("env = atari").is_err());
    assert!(ExperimentConfig::from_kv("ppo.gamma = 1.5").is_err());
}

#[test]
fn kv_dump_round_trips() {
    let mut c = ExperimentConfig::from_kv("env = coin_dense\nppo.c_ext = 0\nphase1.cluster.tau = 0.25").unwrap();
    c.out_dir = "runs/with space".into();
    let back = ExperimentConfig::from_kv(&c.to_kv().unwrap()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn method_none_idles_the_intrinsic_head() {
    let c = ExperimentConfig::from_kv("method = none").unwrap();
    assert_eq!(c.effective_ppo().c_int, 0.0);
    assert!(ExperimentConfig::from_kv("method = none\nppo.c_ext = 0").is_err());
}

#[test]
fn sparse_coin_variant_follows_env_id() {
    let c = ExperimentConfig::from_kv("env = coin_sparse").unwrap();
    match c.env_config().unwrap() {
        crate::envs::EnvConfig::Coin(cc) => assert!(cc.sparse),
        other => panic!("{other:?}"),
    }
}

#[test]
fn content_hash_uses_blob_framing() {
    assert_eq!(
        content_hash(b"hello"),
        "8aec4e4876f854f688d0ebfc8f37598f38e5fd6903cccc850ca36591175aeb60"
    );
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn runs_are_byte_identical_and_carry_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny("billiard", Method::Rnd);
    let a = run_seed(&cfg, 7, &tmp.path().join("a")).unwrap();
    let b = run_seed(&cfg, 7, &tmp.path().join("b")).unwrap();
    assert_eq!(a, b);
    assert_eq!(read(&tmp.path().join("a/log.csv")), read(&tmp.path().join("b/log.csv")));
    let c = run_seed(&cfg, 8, &tmp.path().join("c")).unwrap();
    assert_ne!(read(&tmp.path().join("a/log.csv")), read(&tmp.path().join("c/log.csv")));
    assert!(c.total_steps == 256);
    let dir = tmp.path().join("a");
    let resolved = ExperimentConfig::load(&dir.join("config.kv")).unwrap();
    assert_eq!(resolved.seeds, vec![7]);
    assert_eq!(resolved.ppo, cfg.ppo);
    let prov: serde_json::Value = serde_json::from_str(&read(&dir.join("provenance.json"))).unwrap();
    assert_eq!(prov["code_hash"], content_hash(code_version().as_bytes()));
    assert!(dir.join("checkpoint/policy.bin").is_file());
    assert!(dir.join("checkpoint/normalizer.json").is_file());
}

#[test]
fn log_schema_is_shared_across_methods() {
    let tmp = tempfile::tempdir().unwrap();
    for method in [Method::None, Method::Cluster, Method::Sndreg, Method::Icm] {
        let mut cfg = tiny("coin_dense", method);
        cfg.total_steps = 128;
        let dir = tmp.path().join(method.name());
        let s = run_seed(&cfg, 1, &dir).unwrap();
        let (header, rows) = read_log(&dir.join("log.csv")).unwrap();
        assert_eq!(header, LOG_HEADER, "{method}");
        assert_eq!(rows.len(), s.iterations);
        let steps: Vec<f64> = rows.iter().map(|r| r[2].unwrap()).collect();
        assert!(steps.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*steps.last().unwrap(), 128.0);
        let loss_col = LOG_HEADER.iter().position(|h| *h == "predictor_loss").unwrap();
        let cluster_col = LOG_HEADER.iter().position(|h| *h == "cluster_count").unwrap();
        let has_predictor = matches!(method, Method::Sndreg | Method::Icm);
        assert_eq!(rows[0][loss_col].is_some(), has_predictor, "{method}");
        assert_eq!(rows[0][cluster_col].is_some(), method == Method::Cluster, "{method}");
    }
}

#[test]
fn rollouts_never_overshoot_the_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny("line", Method::None);
    cfg.total_steps = 100;
    let s = run_seed(&cfg, 0, tmp.path()).unwrap();
    assert_eq!(s.total_steps, 100);
}

#[test]
fn random_agent_never_trains_the_policy() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny("billiard", Method::None);
    cfg.agent = Agent::Random;
    run_seed(&cfg, 0, tmp.path()).unwrap();
    let (header, rows) = read_log(&tmp.path().join("log.csv")).unwrap();
    let col = header.iter().position(|h| h == "policy_loss").unwrap();
    assert!(rows.iter().all(|r| r[col].is_none()));
}

#[test]
fn aep_on_silent_env_aborts_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny("line", Method::Aep);
    match run_seed(&cfg, 0, tmp.path()) {
        Err(Error::TooFewClusters { found, required, .. }) => {
            assert_eq!(found, 0);
            assert_eq!(required, crate::clustering::K_MIN);
        }
        other => panic!("expected a too-few-clusters abort, got {other:?}"),
    }
}

#[test]
fn aep_protocol_freezes_classes_within_bounds() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny("coin_dense", Method::Aep);
    cfg.phase1.cluster.budget = 2048;
    cfg.total_steps = 2304;
    cfg.n_envs = 8;
    let s = run_seed(&cfg, 3, tmp.path()).unwrap();
    let classes = crate::clustering::EventClasses::load(&tmp.path().join("event_classes.json")).unwrap();
    assert!((crate::clustering::K_MIN..=crate::clustering::K_MAX).contains(&classes.k_events()));
    assert_eq!(s.event_classes, Some(classes.k_events()));
    assert!(s.phase1_steps <= 2048);
    assert_eq!(s.total_steps, 2304);
    let (header, rows) = read_log(&tmp.path().join("log.csv")).unwrap();
    let phase = header.iter().position(|h| h == "phase").unwrap();
    assert_eq!(rows.first().unwrap()[phase], Some(1.0));
    assert_eq!(rows.last().unwrap()[phase], Some(2.0));
    let ckpt = tmp.path().join("checkpoint");
    assert!(ckpt.join("aep_aep_head.bin").is_file());
    assert_eq!(crate::clustering::EventClasses::load(&ckpt.join("aep_event_classes.json")).unwrap(), classes);
}

fn write_log(dir: &Path, rows: &[(u64, Option<f64>)]) {
    std::fs::create_dir_all(dir).unwrap();
    let mut text = LOG_HEADER.join(",") + "\n";
    for (i, (steps, ret)) in rows.iter().enumerate() {
        let row = LogRow {
            iteration: i + 1,
            phase: 1,
            steps: *steps,
            mean_ext_return: *ret,
            ..LogRow::default()
        };
        text.push_str(&row.to_csv());
    }
    std::fs::write(dir.join("log.csv"), text).unwrap();
}

#[test]
fn merged_band_is_the_sample_std_across_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("aep");
    write_log(&run.join("seed_0"), &[(10, Some(1.0)), (20, Some(4.0))]);
    write_log(&run.join("seed_1"), &[(10, Some(2.0)), (20, None)]);
    write_log(&run.join("seed_2"), &[(10, Some(6.0)), (20, Some(8.0))]);
    let m = merge_runs(&run, "mean_ext_return").unwrap();
    assert_eq!(m.points.len(), 2);
    let (x, mean, std, n) = m.points[0];
    assert_eq!((x, n), (10.0, 3));
    assert!((mean - 3.0).abs() < 1e-12);
    let oracle = (((1.0f64 - 3.0).powi(2) + (2.0f64 - 3.0).powi(2) + (6.0f64 - 3.0).powi(2)) / 2.0).sqrt();
    assert!((std - oracle).abs() < 1e-12);
    let (_, mean, std, n) = m.points[1];
    assert_eq!(n, 2);
    assert!((mean - 6.0).abs() < 1e-12);
    assert!((std - 8.0f64.sqrt()).abs() < 1e-12);
}

#[test]
fn single_seed_band_has_zero_width() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("solo");
    write_log(&run, &[(10, Some(1.5)), (20, Some(2.5))]);
    let m = merge_runs(&run, "mean_ext_return").unwrap();
    assert!(m.points.iter().all(|p| p.2 == 0.0 && p.3 == 1));
}

#[test]
fn emitted_csv_matches_recomputation_from_raw_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    write_log(&a.join("seed_0"), &[(8, Some(1.0)), (16, Some(3.0))]);
    write_log(&a.join("seed_1"), &[(8, Some(2.0)), (16, Some(5.0))]);
    write_log(&b, &[(8, Some(-1.0)), (16, None)]);
    let out = tmp.path().join("plots");
    let files = emit_plots(&[a.clone(), b.clone()], &out).unwrap();
    assert!(files.iter().any(|f| f.ends_with("mean_ext_return.svg")));
    let csv = read(&out.join("mean_ext_return.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("steps,run,mean,std,n"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let (_, raw_a) = read_log(&a.join("seed_1/log.csv")).unwrap();
    let (_, raw_a0) = read_log(&a.join("seed_0/log.csv")).unwrap();
    let col = LOG_HEADER.iter().position(|h| *h == "mean_ext_return").unwrap();
    for r in 0..2 {
        let v = [raw_a0[r][col].unwrap(), raw_a[r][col].unwrap()];
        let mean = (v[0] + v[1]) / 2.0;
        let std = ((v[0] - mean).powi(2) + (v[1] - mean).powi(2)).sqrt();
        assert_eq!(rows[r][1], "a");
        assert!((rows[r][2].parse::<f64>().unwrap() - mean).abs() < 1e-12);
        assert!((rows[r][3].parse::<f64>().unwrap() - std).abs() < 1e-12);
    }
    assert_eq!(rows[2], vec!["8", "b", "-1", "0", "1"]);
    let svg = read(&out.join("mean_ext_return.svg"));
    assert!(svg.starts_with("<svg") && svg.contains("<polyline") && svg.contains("<polygon"));
}

#[test]
fn plots_reject_foreign_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("log.csv"), "a,b\n1,2\n").unwrap();
    assert!(merge_runs(tmp.path(), "mean_ext_return").is_err());
    assert!(emit_plots(&[], tmp.path()).is_err());
}
