use std::fs;
use std::path::{Path, PathBuf};

use hermite_fpf::experiments::config::{BenchmarkParams, ConvergenceParams, GainCompareParams, GridParams};
use hermite_fpf::experiments::{load_config, run_experiment, ExperimentKind, ExperimentSpec, Report};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    (header, rows)
}

fn is_sci16(s: &str) -> bool {
    let Some((mantissa, exp)) = s.split_once('e') else {
        return false;
    };
    let digits = mantissa.trim_start_matches('-');
    digits.len() == 18 && digits.as_bytes()[1] == b'.' && exp.parse::<i32>().is_ok() && s.parse::<f64>().is_ok()
}

fn small_grid() -> GridParams {
    GridParams {
        points: 201,
        ..GridParams::default()
    }
}

#[test]
fn shipped_configs_load_and_validate() {
    let mut kinds = Vec::new();
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let spec = load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            spec.validate().unwrap();
            kinds.push(spec.kind);
        }
    }
    for kind in [
        ExperimentKind::GainCompare,
        ExperimentKind::ConvergenceM,
        ExperimentKind::ConvergenceNp,
        ExperimentKind::Benchmark,
    ] {
        assert!(kinds.contains(&kind), "no shipped config for {}", kind.name());
    }
}

#[test]
fn configs_reject_unknown_keys_and_foreign_sections() {
    let typo = "kind = \"benchmark\"\n[benchmark]\nparticle = 10\n";
    assert!(ExperimentSpec::from_toml(typo).unwrap_err().to_string().contains("particle"));
    assert!(ExperimentSpec::from_toml("kind = \"benchmark\"\nextra = 1\n").is_err());
    assert!(ExperimentSpec::from_toml("kind = \"warp_drive\"\n").is_err());
    let foreign = "kind = \"gain_compare\"\n[benchmark]\nruns = 2\n";
    assert!(ExperimentSpec::from_toml(foreign).and_then(|s| s.validate()).is_err());
}

#[test]
fn gain_compare_writes_formatted_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(ExperimentKind::GainCompare);
    spec.gain_compare = Some(GainCompareParams {
        orders: vec![1, 4],
        grid: small_grid(),
        ..GainCompareParams::default()
    });
    let Report::GainCompare(report) = run_experiment(&spec, dir.path()).unwrap() else {
        panic!("wrong report kind");
    };
    assert_eq!(report.l2_error_vs_kde_exact.len(), 2);

    for name in ["gain_exact.csv", "gain_exact_kde.csv", "gain_hg_m1.csv", "gain_hg_m4.csv"] {
        let (header, rows) = read_csv(&dir.path().join(name));
        assert_eq!(header[0], "x", "{name}");
        assert_eq!(rows.len(), 201, "{name}");
        assert!(rows.iter().flatten().all(|v| is_sci16(v)), "{name}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["kind"], "gain_compare");
}

#[test]
fn convergence_sweeps_write_one_row_per_setting() {
    let dir = tempfile::tempdir().unwrap();
    let params = ConvergenceParams {
        orders: vec![2, 6],
        particles: 50,
        particle_counts: vec![10, 40],
        order: 6,
        grid: small_grid(),
        ..ConvergenceParams::default()
    };
    for (kind, file, rows_expected) in [
        (ExperimentKind::ConvergenceM, "error_vs_order.csv", 2),
        (ExperimentKind::ConvergenceNp, "error_vs_particles.csv", 2),
    ] {
        let mut spec = ExperimentSpec::new(kind);
        spec.seeds = Some(vec![0, 1, 2]);
        spec.convergence = Some(params.clone());
        let out = dir.path().join(kind.name());
        run_experiment(&spec, &out).unwrap();
        let (header, rows) = read_csv(&out.join(file));
        assert_eq!(rows.len(), rows_expected);
        assert!(rows.iter().all(|r| r.len() == header.len()));
        assert!(out.join("summary.json").exists());
    }
}

#[test]
fn benchmark_shares_observations_and_reruns_identically() {
    let params = BenchmarkParams {
        t_final: 1.0,
        runs: 2,
        timing_particles: vec![20],
        timing_steps: 2,
        ..BenchmarkParams::default()
    };
    let run = |dir: &Path| {
        let mut spec = ExperimentSpec::new(ExperimentKind::Benchmark);
        spec.benchmark = Some(params.clone());
        let Report::Benchmark(report) = run_experiment(&spec, dir).unwrap() else {
            panic!("wrong report kind");
        };
        report
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let report = run(a.path());
    run(b.path());
    assert!(report.observation_streams_shared);
    assert_eq!(report.seeds, vec![0, 1]);
    assert_eq!(report.methods.len(), 3);

    let (header, rows) = read_csv(&a.path().join("rmse_runs.csv"));
    assert_eq!(header, ["seed", "hermite_galerkin", "diffusion_map", "constant"]);
    assert_eq!(rows.len(), 2);
    for name in [
        "rmse_runs.csv",
        "armse.csv",
        "trajectory_hermite_galerkin.csv",
        "trajectory_diffusion_map.csv",
        "trajectory_constant.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs between reruns"
        );
    }
}
