use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

use mt3_core::embedding::occupancy_embedding;
use mt3_core::sim::{generate, randomize_scene, record_demo, Category, RolloutOptions, SceneMode, TaskSpec};
use mt3_core::stats::{ExperimentConfig, ExperimentMode, Split};
use mt3_core::store::{format_cloud, format_trajectory_rows, read_cloud_file, Dataset};

fn mt3(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mt3")).args(args).env_remove("MT3_DATASET").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Records `mug` demos for scene seeds 1..=4 and one kettle demo; returns the mug description.
fn recorded_dataset(dir: &Path) -> String {
    let mut description = String::new();
    for (cat, seed) in [("mug", 1), ("mug", 2), ("mug", 3), ("mug", 4), ("kettle", 1)] {
        let seed = seed.to_string();
        let o = mt3(&["gen-scene", "--category", cat, "--instance-seed", &seed, "--scene-seed", &seed, "--record", s(dir)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["recorded"], format!("{cat}-{seed}"));
        if cat == "mug" {
            description = v["description"].as_str().unwrap().to_string();
        }
    }
    description
}

fn write_demo_files(dir: &Path, category: Category, seed: u64) -> (String, String) {
    let task = TaskSpec::for_category(category);
    let scene = randomize_scene(&task, &generate(category, seed), SceneMode::Controlled, seed);
    let input = record_demo(&task, &scene, "x", &RolloutOptions::default().render).unwrap();
    let cloud = dir.join(format!("cloud-{seed}.txt"));
    let traj = dir.join(format!("traj-{seed}.txt"));
    std::fs::write(&cloud, format_cloud(&input.object_cloud)).unwrap();
    std::fs::write(&traj, format_trajectory_rows(&input.trajectory)).unwrap();
    (cloud.to_str().unwrap().into(), traj.to_str().unwrap().into())
}

#[test]
fn ingest_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let (cloud, traj) = write_demo_files(tmp.path(), Category::Box, 3);
    let args = |id: &str, t: &str| {
        mt3(&["ingest", "--dataset", s(&ds), "--id", id, "--description", "open the box", "--cloud", &cloud, "--trajectory", t])
    };
    let ok = args("box-a", &traj);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert_eq!(stdout(&ok).trim(), "box-a");
    assert_eq!(Dataset::load(&ds).unwrap().len(), 1);

    let text = std::fs::read_to_string(&traj).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let last = lines.last().unwrap();
    let cut = format!("{}\n{}\n", lines[..lines.len() - 1].join("\n"), &last[..last.len() / 2]);
    let truncated = tmp.path().join("truncated.txt");
    std::fs::write(&truncated, cut).unwrap();
    let bad = args("box-b", s(&truncated));
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains(&format!("truncated.txt:{}:", lines.len())), "{}", stderr(&bad));

    assert_eq!(code(&args("box-a", &traj)), 0, "identical re-ingest is a no-op");
    let (_, other) = write_demo_files(tmp.path(), Category::Box, 4);
    let dup = args("box-a", &other);
    assert_eq!(code(&dup), 2);
    assert!(stderr(&dup).to_lowercase().contains("duplicate"), "{}", stderr(&dup));
    assert_eq!(Dataset::load(&ds).unwrap().len(), 1);
}

#[test]
fn retrieve_and_rank() {
    let tmp = tempfile::tempdir().unwrap();
    let ds_dir = tmp.path().join("ds");
    let description = recorded_dataset(&ds_dir);
    let query = tmp.path().join("query.txt");
    let o = mt3(&["gen-scene", "--category", "mug", "--instance-seed", "2", "--scene-seed", "9", "--cloud-out", s(&query)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let best = mt3(&["retrieve", "--dataset", s(&ds_dir), "--description", &description, "--cloud", s(&query)]);
    assert_eq!(code(&best), 0, "{}", stderr(&best));
    let best: serde_json::Value = serde_json::from_str(&stdout(&best)).unwrap();

    let top = mt3(&["retrieve", "--dataset", s(&ds_dir), "--description", &description, "--cloud", s(&query), "--top", "5"]);
    assert_eq!(code(&top), 0, "{}", stderr(&top));
    let top: Vec<serde_json::Value> = serde_json::from_str(&stdout(&top)).unwrap();

    // brute-force ranking over the mug demos
    let ds = Dataset::load(&ds_dir).unwrap();
    let q = occupancy_embedding(&read_cloud_file(&query).unwrap(), ds.grid()).unwrap();
    let cosine = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
    };
    let mut want: Vec<(String, f64)> = ds
        .demos()
        .filter(|d| d.id.starts_with("mug"))
        .map(|d| (d.id.clone(), cosine(q.values(), d.embedding.values())))
        .collect();
    want.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    assert_eq!(top.len(), 4);
    for (got, (id, sim)) in top.iter().zip(&want) {
        assert_eq!(got["demo_id"], id.as_str());
        assert!((got["similarity"].as_f64().unwrap() - sim).abs() < 1e-9);
    }
    assert_eq!(best["demo_id"], want[0].0.as_str());

    let unknown = mt3(&["retrieve", "--dataset", s(&ds_dir), "--description", "fold the towel", "--cloud", s(&query)]);
    assert_eq!(code(&unknown), 3, "{}", stderr(&unknown));
    let empty = tmp.path().join("bad.txt");
    std::fs::write(&empty, "3\n0 0 0\n").unwrap();
    let bad = mt3(&["retrieve", "--dataset", s(&ds_dir), "--description", &description, "--cloud", s(&empty)]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn register_rollout_and_align_data() {
    let tmp = tempfile::tempdir().unwrap();
    let ds_dir = tmp.path().join("ds");
    recorded_dataset(&ds_dir);
    let (a, b) = (tmp.path().join("a.txt"), tmp.path().join("b.txt"));
    for (path, seed) in [(&a, "5"), (&b, "6")] {
        let o = mt3(&["gen-scene", "--category", "kettle", "--instance-seed", "1", "--scene-seed", seed, "--cloud-out", s(path)]);
        assert_eq!(code(&o), 0);
    }
    let out = tmp.path().join("aligned");
    let r = mt3(&["register", "--source", s(&a), "--target", s(&b), "--head-camera", "--aligned-out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let v: serde_json::Value = serde_json::from_str(&stdout(&r)).unwrap();
    assert!(v["fitness"].as_f64().unwrap() > 0.5);
    assert_eq!(read_cloud_file(&out.join("target.txt")).unwrap(), read_cloud_file(&b).unwrap());
    assert!(read_cloud_file(&out.join("source_aligned.txt")).is_ok());
    assert_eq!(code(&mt3(&["register", "--source", s(&a), "--target", s(&b), "--inlier-radius", "-1"])), 2);

    let ro = mt3(&["rollout", "--dataset", s(&ds_dir), "--category", "mug", "--instance-seed", "3", "--scene-seed", "3"]);
    assert_eq!(code(&ro), 0, "{}", stderr(&ro));
    let v: serde_json::Value = serde_json::from_str(&stdout(&ro)).unwrap();
    assert_eq!(v["success"], true);

    let gen = tmp.path().join("align.jsonl");
    let g = mt3(&["gen-align-data", "--dataset", s(&ds_dir), "--demo", "mug-1", "--count", "7", "--out", s(&gen)]);
    assert_eq!(code(&g), 0, "{}", stderr(&g));
    assert_eq!(std::fs::read_to_string(&gen).unwrap().lines().count(), 7);
    assert_eq!(code(&mt3(&["gen-align-data", "--dataset", s(&ds_dir), "--demo", "nope", "--out", s(&gen)])), 2);
}

fn minimal_config() -> ExperimentConfig {
    ExperimentConfig {
        families: vec![Category::Tray],
        demos_per_task: vec![1],
        task_counts: vec![1],
        repeats: 3,
        splits: vec![Split::Seen],
        ..ExperimentConfig::dataset_size()
    }
}

#[test]
fn evaluate_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    std::fs::write(&config, serde_json::to_string_pretty(&minimal_config()).unwrap()).unwrap();
    let run = |out: &str, extra: &[&str]| {
        let dir = tmp.path().join(out);
        let mut args = vec!["evaluate", "--config", s(&config), "--out", s(&dir)];
        args.extend_from_slice(extra);
        let o = mt3(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_eq!(stdout(&o).lines().count(), 1);
        dir
    };
    let a = run("a", &["--seed", "7"]);
    let b = run("b", &["--seed", "7"]);
    let csv = std::fs::read(a.join("results.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&csv).lines().count(), 2);
    assert_eq!(csv, std::fs::read(b.join("results.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("traces.jsonl")).unwrap(), std::fs::read(b.join("traces.jsonl")).unwrap());

    // the summary's config echo is itself a runnable config
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    let echo = tmp.path().join("echo.json");
    std::fs::write(&echo, summary["config"].to_string()).unwrap();
    let c = tmp.path().join("c");
    assert_eq!(code(&mt3(&["evaluate", "--config", s(&echo), "--out", s(&c)])), 0);
    assert_eq!(std::fs::read(c.join("traces.jsonl")).unwrap(), std::fs::read(a.join("traces.jsonl")).unwrap());

    let rep = tmp.path().join("rep");
    let o = mt3(&["report", "--traces", s(&a.join("traces.jsonl")), "--out", s(&rep)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(rep.join("results.csv")).unwrap(), csv);
    assert!(rep.join("success.svg").exists() && rep.join("failures.svg").exists());

    let bad = ExperimentConfig {
        mode: ExperimentMode::Diversity,
        task_counts: vec![10, 30, 50],
        demos_per_task: vec![15, 5, 4],
        budget: Some(150),
        ..minimal_config()
    };
    std::fs::write(&config, serde_json::to_string(&bad).unwrap()).unwrap();
    let o = mt3(&["evaluate", "--config", s(&config), "--out", s(&tmp.path().join("bad"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("infeasible diversity split"), "{}", stderr(&o));
    std::fs::write(&config, "{\"nonsense\": 1}").unwrap();
    assert_eq!(code(&mt3(&["evaluate", "--config", s(&config), "--out", s(&tmp.path().join("bad"))])), 2);
}

#[test]
fn unknown_flags_are_rejected_and_config_is_logged() {
    let o = mt3(&["retrieve", "--dataset", "x", "--description", "d", "--cloud", "c", "--bogus"]);
    assert_eq!(code(&o), 2);
    let o = mt3(&["gen-scene", "--category", "tray"]);
    assert_eq!(code(&o), 0);
    let line = stderr(&o).lines().find(|l| l.starts_with("config: ")).unwrap().to_string();
    let v: serde_json::Value = serde_json::from_str(&line["config: ".len()..]).unwrap();
    assert_eq!(v["command"]["command"], "gen-scene");
    assert_eq!(v["command"]["scene"]["mode"], "controlled");
    assert_eq!(code(&mt3(&["gen-scene", "--category", "towel"])), 2);
}

const SUBCOMMANDS: [&str; 8] = ["ingest", "retrieve", "register", "rollout", "evaluate", "report", "gen-scene", "gen-align-data"];

fn flags_in(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let b = text.as_bytes();
    let mut i = 0;
    while let Some(at) = text[i..].find("--") {
        let start = i + at;
        let mut end = start + 2;
        while end < b.len() && (b[end].is_ascii_lowercase() || b[end] == b'-') {
            end += 1;
        }
        let before_ok = start == 0 || !(b[start - 1].is_ascii_alphanumeric() || b[start - 1] == b'-');
        if end > start + 2 && before_ok {
            out.insert(text[start..end].to_string());
        }
        i = end;
    }
    out
}

/// Each subcommand's flag table in the README lists exactly what `--help` accepts.
#[test]
fn readme_flag_tables_match_help() {
    let readme = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap();
    for sub in SUBCOMMANDS {
        let help = mt3(&[sub, "--help"]);
        assert_eq!(code(&help), 0);
        let mut accepted = flags_in(&stdout(&help));
        accepted.remove("--help");
        let heading = format!("### `mt3 {sub}`");
        let at = readme.find(&heading).unwrap_or_else(|| panic!("README lacks {heading}"));
        let section = &readme[at + heading.len()..];
        let section = &section[..section.find("\n#").unwrap_or(section.len())];
        let documented: BTreeSet<String> = section
            .lines()
            .filter(|l| l.starts_with("| `--"))
            .flat_map(|l| flags_in(l.split('|').nth(1).unwrap()))
            .collect();
        assert_eq!(documented, accepted, "{sub}");
    }
}
