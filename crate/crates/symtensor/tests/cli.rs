use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use symtensor::fusion_tree::FusionTree;
use symtensor::gamma::GammaCache;
use symtensor::verify::random_tensor;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_symtensor"));
    c.env_remove("SYMTENSOR_CACHE_DIR");
    c
}

#[test]
fn cache_survives_a_reload() {
    let dir = tempfile::tempdir().unwrap();
    let t = random_tensor(&mut ChaCha8Rng::seed_from_u64(1), 4, 300, true);
    let first = GammaCache::with_dir(dir.path());
    let a = t.permute_with(&[3, 1, 0, 2], &FusionTree::right_comb(4), &first).unwrap();
    assert!(first.stats().networks_evaluated > 0);
    first.save().unwrap();

    let second = GammaCache::with_dir(dir.path());
    assert!(second.load_warning().is_none());
    let b = t.permute_with(&[3, 1, 0, 2], &FusionTree::right_comb(4), &second).unwrap();
    assert_eq!(second.stats().networks_evaluated, 0);
    assert_eq!(second.stats().hits, 1);
    assert_eq!(a.max_block_diff(&b), 0.0);
}

#[test]
fn corrupt_cache_warns_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("gamma_cache.json"), "{ not json").unwrap();
    let out = bin().args(["verify", "--suite", "kernels", "--gamma-cache"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("rebuilding"));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn invalid_config_exits_with_schema_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"q":1,"levels":[[[0,1],[2,-1]]],"twice_j":0,"chi_top":1,"sweeps":5,"seed":1}"#).unwrap();
    let out = bin().args(["solve", "mera", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("levels[0][1][1]"));

    std::fs::write(&cfg, r#"{"spins":6,"colour":"red"}"#).unwrap();
    let out = bin().args(["solve", "ed", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ed_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ed.json");
    std::fs::write(&cfg, r#"{"spins":8,"sectors":[0,2],"levels":2,"dense_check":false}"#).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let st = bin().args(["solve", "ed", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
        assert!(st.success());
        serde_json::from_str::<serde_json::Value>(&std::fs::read_to_string(out).unwrap()).unwrap()
    };
    let a = run("a.json");
    assert_eq!(a, run("b.json"));
    assert_eq!(a["format_version"], symtensor::FORMAT_VERSION);
    assert_eq!(a["ground"]["twice_j"], 0);
    assert_eq!(a["sectors"].as_array().unwrap().len(), 2);
}

#[test]
fn bench_emits_versioned_csv() {
    let out = bin().args(["bench", "--op", "matmul", "--charges", "3", "--deg", "5", "--reps", "1"]).output().unwrap();
    assert!(out.status.success());
    let mut r = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(r.headers().unwrap(), vec!["format_version", "op", "mode", "q", "d", "seconds", "flops"]);
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][2], "sym");
    assert_eq!(&rows[0][6], "375");
    let bad = bin().args(["bench", "--op", "qr"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn mera_runs_repeat_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mera.json");
    std::fs::write(&cfg, r#"{"q":1,"levels":[[[0,1],[2,1]]],"twice_j":0,"chi_top":1,"sweeps":3,"seed":4}"#).unwrap();
    let run = || {
        let out = bin().args(["solve", "mera", "--config"]).arg(&cfg).output().unwrap();
        assert!(out.status.success());
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    let trace = a["trace"].as_array().unwrap();
    assert_eq!(trace.len(), 3);
    assert!(trace.windows(2).all(|w| w[1]["energy"].as_f64().unwrap() <= w[0]["energy"].as_f64().unwrap() + 1e-8));
    assert!(a["energy"].as_f64().unwrap() >= a["ed_energy"].as_f64().unwrap());
}
