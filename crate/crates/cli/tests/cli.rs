use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

struct Run {
    out: PathBuf,
    output: Output,
}

impl Run {
    fn code(&self) -> i32 {
        self.output.status.code().unwrap_or(-1)
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.output.stderr).into_owned()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&std::fs::read_to_string(self.out.join(name)).unwrap()).unwrap()
    }

    fn text(&self, name: &str) -> String {
        std::fs::read_to_string(self.out.join(name)).unwrap()
    }
}

fn entwave(dir: &Path, sub: &str, name: &str, config: &str) -> Run {
    let cfg = dir.join(format!("{name}.toml"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(name);
    let output = Command::new(env!("CARGO_BIN_EXE_entwave"))
        .arg(sub)
        .arg(&cfg)
        .env("ENTWAVE_OUTPUT_DIR", &out)
        .output()
        .unwrap();
    Run { out, output }
}

#[test]
fn solve_singlet_and_dimer() {
    let dir = tempfile::tempdir().unwrap();
    let r = entwave(dir.path(), "solve", "singlet", "[model]\nkind = \"heisenberg\"\nsites = 2\n");
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let report = r.json("report.json");
    assert!((report["energy"].as_f64().unwrap() + 0.75).abs() < 1e-12);
    assert!((report["entanglement"]["entropy"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-12);

    let r = entwave(dir.path(), "solve", "dimer", "[model]\nkind = \"hubbard\"\nsites = 2\nt = 1.0\nu = 2.0\n");
    assert_eq!(r.code(), 0, "{}", r.stderr());
    assert!((r.json("report.json")["energy"].as_f64().unwrap() + 1.2360679775).abs() < 1e-10);
}

#[test]
fn every_output_carries_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let r = entwave(dir.path(), "solve", "h", "[model]\nkind = \"heisenberg\"\nsites = 6\n[run]\nranks = [1, 2]\n");
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let hash = r.json("report.json")["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    for name in ["fits.json", "counters.json", "plan.json"] {
        assert_eq!(r.json(name)["config_hash"], hash.as_str(), "{name}");
    }
    let line = format!("# config_hash: {hash}\n");
    for name in ["convergence.csv", "entanglement_spectrum.csv", "sector_weights.csv", "config.resolved.toml"] {
        assert!(r.text(name).starts_with(&line), "{name}");
    }
    let state = std::fs::read(r.out.join("state.bin")).unwrap();
    let (header, _, _) = entwave_core::state_io::decode_header(&state).unwrap();
    assert_eq!(entwave_core::state_io::hex(&header.run_hash), hash);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let r = entwave(dir.path(), "solve", "bad", "[model]\nkind = \"ising\"\nsites = 4\n");
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("kind") && r.stderr().contains("ising"), "{}", r.stderr());

    let r = entwave(dir.path(), "solve", "typo", "[model]\nkind = \"heisenberg\"\nsites = 4\n[solver]\nmax_iter = 3\n");
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("max_iter"), "{}", r.stderr());

    let r = entwave(dir.path(), "solve", "cut", "[model]\nkind = \"heisenberg\"\nsites = 4\n[cut]\nposition = 7\n");
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("cut"), "{}", r.stderr());
    assert!(!r.out.exists(), "nothing is written before validation succeeds");

    let missing = Command::new(env!("CARGO_BIN_EXE_entwave")).args(["solve", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let r = entwave(dir.path(), "solve", "short", "[model]\nkind = \"heisenberg\"\nsites = 10\n[solver]\nmax_iterations = 3\n");
    assert_eq!(r.code(), 1);
    assert!(r.stderr().contains("converge"), "{}", r.stderr());
}

#[test]
fn oracle_passes_and_localizes_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let r = entwave(dir.path(), "oracle", "h10", "[model]\nkind = \"heisenberg\"\nsites = 10\n[run]\nranks = [1, 2, 4]\n");
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let report = r.json("report.json");
    assert_eq!(report["pass"], true);
    for run in report["runs"].as_array().unwrap() {
        assert!(run["max_matvec_deviation"].as_f64().unwrap() <= 1e-12);
        assert!(run["energy_deviation"].as_f64().unwrap() <= 1e-10);
    }

    let hubbard = "[model]\nkind = \"hubbard\"\nsites = 6\nu = 2.0\nv = 0.5\n[run]\nranks = [1, 3]\n";
    let r = entwave(dir.path(), "oracle", "v", hubbard);
    assert_eq!(r.code(), 0, "{}", r.stderr());

    let r = entwave(dir.path(), "oracle", "corrupt", &format!("{hubbard}[oracle]\ncorrupt_boundary = 2\nsamples = 3\n"));
    assert_eq!(r.code(), 1);
    assert!(r.stderr().contains("pair"), "{}", r.stderr());
    let report = r.json("report.json");
    assert_eq!(report["pass"], false);
    assert!(report["runs"][0]["worst_pair"]["index"].is_u64());
}

#[test]
fn oracle_refuses_above_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let r = entwave(dir.path(), "oracle", "cap", "[model]\nkind = \"heisenberg\"\nsites = 10\n[run]\noracle_cap = 100\n");
    assert_eq!(r.code(), 1);
    assert!(r.stderr().contains("252"), "{}", r.stderr());
}

#[test]
fn rank_sweep_speedup_is_monotone_without_latency() {
    let dir = tempfile::tempdir().unwrap();
    let r = entwave(
        dir.path(),
        "sweep",
        "ranks",
        "[model]\nkind = \"heisenberg\"\nsites = 12\n[sweep]\naxis = \"ranks\"\nvalues = [1, 2, 4, 8, 16]\n",
    );
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let report = r.json("report.json");
    let s: Vec<f64> = report["points"].as_array().unwrap().iter().map(|p| p["speedup"].as_f64().unwrap()).collect();
    assert_eq!(s.len(), 5);
    assert!(s.windows(2).all(|w| w[1] >= w[0]), "{s:?}");
    let fits = r.json("fits.json");
    assert!(fits["amdahl"]["f"].as_f64().unwrap() > 0.0);
    assert!(fits["speedup_power"]["k"].as_f64().unwrap() > 0.0);
    assert!(r.text("sweep.csv").lines().nth(1).unwrap().starts_with("ranks,"));
}

#[test]
fn chi_sweep_ratio_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let r = entwave(
        dir.path(),
        "sweep",
        "chi",
        "[model]\nkind = \"heisenberg\"\nsites = 12\n[run]\nranks = [1, 4]\n\
         [sweep]\naxis = \"chi_cutoff\"\nvalues = [4, 8, 16, 32, 64]\n",
    );
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let report = r.json("report.json");
    let ratios: Vec<f64> = report["points"].as_array().unwrap().iter().map(|p| p["ratio"].as_f64().unwrap()).collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

#[test]
fn single_point_sweep_skips_fits() {
    let dir = tempfile::tempdir().unwrap();
    let r = entwave(
        dir.path(),
        "sweep",
        "one",
        "[model]\nkind = \"hubbard\"\nsites = 6\n[sweep]\naxis = \"u\"\nvalues = [2.0]\n",
    );
    assert_eq!(r.code(), 0, "{}", r.stderr());
    assert!(r.stderr().contains("notice"));
    let report = r.json("report.json");
    assert_eq!(report["points"].as_array().unwrap().len(), 1);
    assert!(r.json("fits.json")["notice"].is_string());

    let r = entwave(
        dir.path(),
        "sweep",
        "one_rank",
        "[model]\nkind = \"heisenberg\"\nsites = 6\n[sweep]\naxis = \"ranks\"\nvalues = [2]\n",
    );
    assert_eq!(r.code(), 0, "{}", r.stderr());
    assert!(r.json("fits.json")["amdahl"]["skipped"].is_string());
}

#[test]
fn sweep_records_failed_points_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let r = entwave(
        dir.path(),
        "sweep",
        "partial",
        "[model]\nkind = \"hubbard\"\nsites = 4\n[solver]\nmax_iterations = 14\n\
         [sweep]\naxis = \"u\"\nvalues = [0.0, 2.0, 40.0]\n",
    );
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let report = r.json("report.json");
    assert_eq!(report["points"].as_array().unwrap().len(), 1);
    let failures = report["failures"].as_array().unwrap();
    assert_eq!(failures.len(), 2);
    assert!(failures[0]["error"].as_str().unwrap().contains("converge"));
    assert_eq!(r.text("sweep.csv").lines().count(), 3);
}

#[test]
fn analyze_reproduces_the_solve() {
    let dir = tempfile::tempdir().unwrap();
    let model = "[model]\nkind = \"hubbard\"\nsites = 6\nu = 4.0\n";
    let r = entwave(dir.path(), "solve", "src", &format!("{model}[run]\nranks = [3]\nscalar = \"complex\"\n"));
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let solved = r.json("report.json");
    let state = r.out.join("state.bin");

    let a = entwave(
        dir.path(),
        "analyze",
        "again",
        &format!("{model}[run]\nranks = [3]\n[analyze]\nstate = {:?}\n", state.display().to_string()),
    );
    assert_eq!(a.code(), 0, "{}", a.stderr());
    let again = a.json("report.json");
    assert!((again["energy"].as_f64().unwrap() - solved["energy"].as_f64().unwrap()).abs() < 1e-10);
    assert_eq!(again["entanglement"]["entropy"], solved["entanglement"]["entropy"]);
    assert_eq!(a.text("sector_weights.csv").lines().skip(1).collect::<Vec<_>>(), r.text("sector_weights.csv").lines().skip(1).collect::<Vec<_>>());

    let wrong = entwave(
        dir.path(),
        "analyze",
        "wrong",
        &format!("[model]\nkind = \"hubbard\"\nsites = 6\nu = 5.0\n[analyze]\nstate = {:?}\n", state.display().to_string()),
    );
    assert_eq!(wrong.code(), 1);
    assert!(wrong.stderr().contains("different model"), "{}", wrong.stderr());
}
