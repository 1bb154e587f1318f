use std::path::{Path, PathBuf};
use std::process::Command;

use panel_dml::canonical;
use panel_dml_core::synthetic::linear_plm;
use panel_dml_core::PanelDataset;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn panel_dml(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_panel-dml")).args(args).output().unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn ingest_config(dir: &Path, extra: &str) -> String {
    write_config(
        dir,
        &format!(
            "[ingest]\ninput = {:?}\nschema = {:?}\nassets = {:?}\noutput = \"panel.csv\"\n{extra}",
            fixture("survey.csv"),
            fixture("schema.toml"),
            fixture("assets.toml")
        ),
    )
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn ingest_fixture_builds_balanced_adult_panel() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ingest_config(dir.path(), "");
    let r = panel_dml(&["ingest", "--config", &cfg]);
    assert_eq!(r.code, 0, "{}", r.stderr);

    let (ds, prov) = canonical::read(&dir.path().join("panel.csv")).unwrap();
    // H010 loses a row to a missing age, H011 skips 2017, H012 has a minor head.
    assert_eq!(ds.households().len(), 9);
    assert_eq!(ds.len(), 9 * 3);
    assert!(ds.is_balanced());
    assert!(ds.values("age").unwrap().iter().all(|a| *a >= 18.0));
    assert!(prov.contains_key("config_sha256"));
    assert!(prov.contains_key("fa_score_weights"));

    let numeric = ds.columns().iter().filter(|c| !c.is_categorical()).count();
    let lines = data_lines(&r.stdout);
    assert_eq!(lines[0], "variable,n,median,mean,sd,min,max");
    assert_eq!(lines.len() - 1, numeric);
    assert!(r.stderr.contains("missing required value"));
}

#[test]
fn ingest_missing_schema_is_a_config_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("[ingest]\ninput = {:?}\nschema = \"nowhere/schema.toml\"\n", fixture("survey.csv")),
    );
    let r = panel_dml(&["ingest", "--config", &cfg]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("nowhere/schema.toml"), "{}", r.stderr);
}

#[test]
fn ingest_trim_stage_error_propagates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ingest_config(dir.path(), "trim = { fraction = 0.6, variables = [\"sharpe\"] }\n");
    let r = panel_dml(&["ingest", "--config", &cfg]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("trim:"), "{}", r.stderr);
}

fn planted_panel(path: &Path) {
    let n = 60;
    let ids: Vec<String> = (0..n).map(|i| format!("h{i:02}")).collect();
    let years = vec![2019; n];
    let x1: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
    let x2: Vec<f64> = (0..n).map(|i| ((i * 5) % 13) as f64 * 0.5).collect();
    let prov: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
    let effect = [0.0, 1.5, -2.0];
    let y: Vec<f64> = (0..n)
        .map(|i| 0.25 + 2.0 * x1[i] - 0.5 * x2[i] + effect[prov[i] as usize])
        .collect();
    let ds = PanelDataset::new(ids, years)
        .unwrap()
        .with_column("x1", x1)
        .unwrap()
        .with_column("x2", x2)
        .unwrap()
        .with_column("y", y)
        .unwrap()
        .with_column("rural", vec![0.0; n])
        .unwrap()
        .with_categorical("province", prov, vec!["a".into(), "b".into(), "c".into()])
        .unwrap();
    canonical::write(path, &ds, &Vec::new()).unwrap();
}

fn estimate_of(csv: &str, term: &str) -> f64 {
    data_lines(csv)
        .iter()
        .find_map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            (cells[0] == term).then(|| cells[1].parse().unwrap())
        })
        .unwrap()
}

#[test]
fn estimate_fe_recovers_planted_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    planted_panel(&dir.path().join("panel.csv"));
    let cfg = write_config(
        dir.path(),
        "[estimate]\ninput = \"panel.csv\"\nestimator = \"fe\"\noutcome = \"y\"\ntreatments = [\"x1\"]\ncontrols = [\"x2\"]\nfixed_effects = [\"province\"]\noutput = \"fe.csv\"\n",
    );
    let r = panel_dml(&["estimate", "--config", &cfg]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = std::fs::read_to_string(dir.path().join("fe.csv")).unwrap();
    assert!((estimate_of(&text, "x1") - 2.0).abs() < 1e-8, "{text}");
    assert!((estimate_of(&text, "x2") + 0.5).abs() < 1e-8, "{text}");
    assert!(text.contains("# estimator: fe"));
    assert!(text.contains("# config_sha256: "));
}

#[test]
fn estimate_empty_subset_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    planted_panel(&dir.path().join("panel.csv"));
    let cfg = write_config(
        dir.path(),
        "[estimate]\ninput = \"panel.csv\"\nestimator = \"fe\"\noutcome = \"y\"\ntreatments = [\"x1\"]\n",
    );
    let r = panel_dml(&["estimate", "--config", &cfg, "--subset", "rural=1@2019"]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("empty subset"), "{}", r.stderr);
}

fn dml_fixture(dir: &Path) -> String {
    let s = linear_plm(400, 3, 0.5, 17);
    let n = s.y.len();
    let mut ds = PanelDataset::new((0..n).map(|i| format!("h{i:03}")).collect(), vec![2019; n])
        .unwrap()
        .with_column("y", s.y)
        .unwrap()
        .with_column("d", s.d)
        .unwrap();
    for j in 0..3 {
        ds = ds.with_column(&format!("x{}", j + 1), s.x.column(j)).unwrap();
    }
    canonical::write(&dir.join("panel.csv"), &ds, &Vec::new()).unwrap();
    write_config(
        dir,
        "seed = 5\n[estimate]\ninput = \"panel.csv\"\nestimator = \"dml\"\noutcome = \"y\"\ntreatments = [\"d\"]\ncontrols = [\"x1\", \"x2\", \"x3\"]\noutput = \"dml.csv\"\ndml = { folds = 3, learner = { kind = \"forest\", n_trees = 10 } }\n",
    )
}

#[test]
fn estimate_dml_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dml_fixture(dir.path());
    let out = dir.path().join("dml.csv");
    assert_eq!(panel_dml(&["estimate", "--config", &cfg]).code, 0);
    let first = std::fs::read(&out).unwrap();
    assert_eq!(panel_dml(&["estimate", "--config", &cfg]).code, 0);
    assert_eq!(first, std::fs::read(&out).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(text.contains("# seed: 5"));

    assert_eq!(panel_dml(&["estimate", "--config", &cfg, "--seed", "6"]).code, 0);
    assert_ne!(text.as_bytes(), std::fs::read(&out).unwrap().as_slice());
}

#[test]
fn estimate_json_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dml_fixture(dir.path());
    let out = dir.path().join("dml.json");
    let r = panel_dml(&["estimate", "--config", &cfg, "--format", "json", "--output", out.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["rows"][0]["term"], "d");
    assert_eq!(v["provenance"]["seed"], "5");
}

#[test]
fn stochastic_estimator_without_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dml_fixture(dir.path());
    let text = std::fs::read_to_string(&cfg).unwrap().replace("seed = 5\n", "");
    std::fs::write(&cfg, text).unwrap();
    assert_eq!(panel_dml(&["estimate", "--config", &cfg]).code, 2);
}

fn simulate_config(dir: &Path, params: &str) -> String {
    write_config(
        dir,
        &format!("seed = 3\n[simulate]\nhouseholds = 50\noutput = \"sim.csv\"\nparams = {{ {params} }}\n"),
    )
}

const NOISY: &str = "a = [0.5, 0.0], b = [[0.5, 0.0], [0.0, 0.3]], c = [0.0, 0.0], alpha = 0.3, d = [0.4, 0.2], e = 1.0, sigma = [0.0, 0.0], f = [0.6, -0.2], state_noise_sd = 1.0, treatment_noise_sd = 1.0, outcome_noise_sd = 1.0, periods = 3";

#[test]
fn simulate_null_zero_noise_outcome_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate_config(
        dir.path(),
        "a = [0.5], b = [[0.5]], c = [0.0], alpha = 0.3, d = [0.4], e = 0.0, sigma = [0.0], f = [0.0], state_noise_sd = 0.0, treatment_noise_sd = 0.0, outcome_noise_sd = 0.0, periods = 3",
    );
    let r = panel_dml(&["simulate", "--config", &cfg]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (ds, _) = canonical::read(&dir.path().join("sim.csv")).unwrap();
    assert_eq!(ds.len(), 150);
    assert!(ds.values("y").unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn simulate_rerun_is_byte_identical_and_writes_true_effects() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate_config(dir.path(), NOISY);
    let out = dir.path().join("sim.csv");
    let te = dir.path().join("sim.true_effects.csv");
    assert_eq!(panel_dml(&["simulate", "--config", &cfg]).code, 0);
    let (a, b) = (std::fs::read(&out).unwrap(), std::fs::read(&te).unwrap());
    assert_eq!(panel_dml(&["simulate", "--config", &cfg]).code, 0);
    assert_eq!(a, std::fs::read(&out).unwrap());
    assert_eq!(b, std::fs::read(&te).unwrap());
    let text = String::from_utf8(b).unwrap();
    assert_eq!(data_lines(&text).len(), 4);
    assert!(text.contains("# seed: 3"));
}

#[test]
fn simulate_nonlinear_state_omits_true_effects_with_notice() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate_config(dir.path(), &NOISY.replace("c = [0.0, 0.0]", "c = [0.2, 0.0]"));
    let r = panel_dml(&["simulate", "--config", &cfg]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(dir.path().join("sim.csv").exists());
    assert!(!dir.path().join("sim.true_effects.csv").exists());
    assert!(r.stderr.contains("true effects omitted"), "{}", r.stderr);
}

#[test]
fn simulate_invalid_params_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate_config(dir.path(), &NOISY.replace("alpha = 0.3", "alpha = 1.5"));
    assert_eq!(panel_dml(&["simulate", "--config", &cfg]).code, 2);
}

#[test]
fn output_override_resolves_against_working_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate_config(dir.path(), NOISY);
    let target: PathBuf = dir.path().join("elsewhere.csv");
    let r = panel_dml(&["simulate", "--config", &cfg, "--output", target.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(target.exists());
}
