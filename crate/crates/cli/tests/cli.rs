use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use toponav_core::stream::read_stream_file;
use toponav_core::sim::RouteSpec;
use toponav_core::TopologicalMap;

fn toponav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toponav"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn routes_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../routes")
}

/// Records the easy route and builds a map from it.
fn easy_map(dir: &TempDir) -> (PathBuf, PathBuf) {
    let stream = p(dir, "easy.jsonl");
    let map = p(dir, "easy.map.json");
    assert_eq!(code(&toponav(&["sim", "record", "--route", "easy", "--out", s(&stream)])), 0);
    assert_eq!(code(&toponav(&["build", "--stream", s(&stream), "--out", s(&map)])), 0);
    (stream, map)
}

#[test]
fn record_build_episode_reaches_goal() {
    let dir = TempDir::new().unwrap();
    let (stream, map) = easy_map(&dir);
    assert!(read_stream_file(&stream).unwrap().len() > 10);
    assert!(p(&dir, "easy.jsonl.config.json").exists());
    let log = p(&dir, "ep.jsonl");
    let out = toponav(&["sim", "episode", "--route", "easy", "--map", s(&map), "--log", s(&log)]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).starts_with("success=true goal_reached=true"));
    let text = std::fs::read_to_string(&log).unwrap();
    assert!(text.lines().last().unwrap().contains("\"goal_reached\""));
}

#[test]
fn build_reports_counts_and_writes_log() {
    let dir = TempDir::new().unwrap();
    let (stream, _) = easy_map(&dir);
    let map = p(&dir, "m.json");
    let log = p(&dir, "build.jsonl");
    let out = toponav(&["build", "--stream", s(&stream), "--out", s(&map), "--log", s(&log)]);
    assert_eq!(code(&out), 0);
    let m = TopologicalMap::read_file(&map).unwrap();
    assert_eq!(stdout(&out).trim(), format!("nodes={} arcs={} loops=0", m.len(), m.arc_count()));
    let frames = read_stream_file(&stream).unwrap().len();
    // The first frame founds node 0 without a log entry.
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), frames - 1);
}

#[test]
fn threshold_flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let (stream, _) = easy_map(&dir);
    let cfg = p(&dir, "run.json");
    std::fs::write(&cfg, r#"{"thresholds": {"t_interval": 7, "t_add_new_node": 0.5}}"#).unwrap();
    let map = p(&dir, "m.json");
    let out = toponav(&[
        "build", "--stream", s(&stream), "--out", s(&map), "--config", s(&cfg), "--t-add", "0.7",
    ]);
    assert_eq!(code(&out), 0);
    let m = TopologicalMap::read_file(&map).unwrap();
    assert_eq!(m.config.t_interval, 7);
    assert_eq!(m.config.t_add_new_node.value(), 0.7);
}

#[test]
fn optimize_rejects_inverted_thresholds() {
    let dir = TempDir::new().unwrap();
    let (_, map) = easy_map(&dir);
    let out_path = p(&dir, "o.json");
    let out = toponav(&["optimize", "--map", s(&map), "--merge", "0.8", "--sparsify", "0.9", "--out", s(&out_path)]);
    assert_eq!(code(&out), 3);
    let out = toponav(&["optimize", "--map", s(&map), "--merge", "0.99", "--sparsify", "0.9", "--out", s(&out_path)]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("nodes: "));
    TopologicalMap::read_file(&out_path).unwrap();
}

#[test]
fn export_dot_lists_every_node_and_arc() {
    let dir = TempDir::new().unwrap();
    let (_, map) = easy_map(&dir);
    let m = TopologicalMap::read_file(&map).unwrap();
    let out = toponav(&["export", "--map", s(&map), "--format", "dot"]);
    assert_eq!(code(&out), 0);
    let dot = stdout(&out);
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("->").count(), m.arc_count());
    assert_eq!(dot.matches("[label=\"N").count(), m.len());
}

#[test]
fn navigate_replay_exit_codes() {
    let dir = TempDir::new().unwrap();
    let (stream, map) = easy_map(&dir);
    let m = TopologicalMap::read_file(&map).unwrap();
    let last = (m.len() - 1).to_string();

    let out = toponav(&["navigate", "--map", s(&map), "--stream", s(&stream), "--goal-node", &last]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).lines().last().unwrap().contains("goal_reached"));

    let goal_frame = m.nodes[1].frame_index.to_string();
    let out = toponav(&["navigate", "--map", s(&map), "--stream", s(&stream), "--goal-frame", &goal_frame]);
    assert_eq!(code(&out), 0);

    // A descriptor unlike anything in the map.
    let mut far = vec![0.0; m.dim];
    for node in &m.nodes {
        for (f, v) in far.iter_mut().zip(node.descriptor.values()) {
            *f -= v;
        }
    }
    let goal = p(&dir, "goal.json");
    std::fs::write(&goal, serde_json::to_string(&far).unwrap()).unwrap();
    let out = toponav(&["navigate", "--map", s(&map), "--stream", s(&stream), "--goal-descriptor", s(&goal)]);
    assert_eq!(code(&out), 4);

    // Stream ends before the goal: only the first three frames.
    let short = p(&dir, "short.jsonl");
    let text = std::fs::read_to_string(&stream).unwrap();
    std::fs::write(&short, text.lines().take(3).collect::<Vec<_>>().join("\n")).unwrap();
    let out = toponav(&["navigate", "--map", s(&map), "--stream", s(&short), "--goal-node", &last]);
    assert_eq!(code(&out), 1);
}

#[test]
fn navigate_reports_localization_failure() {
    let dir = TempDir::new().unwrap();
    let (_, map) = easy_map(&dir);
    // A different world seed: nothing matches the map.
    let other = p(&dir, "other.jsonl");
    assert_eq!(
        code(&toponav(&["sim", "record", "--route", "easy", "--seed", "99", "--out", s(&other)])),
        0
    );
    let out = toponav(&["navigate", "--map", s(&map), "--stream", s(&other), "--goal-node", "0"]);
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_inputs_exit_with_format_code() {
    let dir = TempDir::new().unwrap();
    let bad = p(&dir, "bad.jsonl");
    std::fs::write(&bad, "{\"frame\": 0, \"full\": [0.6, 0.8]}\n{\"frame\": 1, \"full\": [0.6,\n").unwrap();
    let out = toponav(&["build", "--stream", s(&bad), "--out", s(&p(&dir, "m.json"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let map = p(&dir, "v.json");
    std::fs::write(&map, r#"{"version": "99", "dim": 2, "config": {}, "nodes": []}"#).unwrap();
    assert_eq!(code(&toponav(&["export", "--map", s(&map)])), 2);

    assert_eq!(code(&toponav(&["build", "--stream"])), 2);
}

#[test]
fn bad_config_exits_with_config_code() {
    let dir = TempDir::new().unwrap();
    let (stream, map) = easy_map(&dir);
    let out = toponav(&["build", "--stream", s(&stream), "--out", s(&p(&dir, "m.json")), "--t-interval", "0"]);
    assert_eq!(code(&out), 3);
    let cfg = p(&dir, "typo.json");
    std::fs::write(&cfg, r#"{"thresholds": {"t_add": 0.5}}"#).unwrap();
    let out = toponav(&["build", "--stream", s(&stream), "--out", s(&p(&dir, "m.json")), "--config", s(&cfg)]);
    assert_eq!(code(&out), 3);
    // Map recorded at dim 512, world asked for 64.
    let cfg = p(&dir, "dim.json");
    std::fs::write(&cfg, r#"{"sim": {"dim": 64}}"#).unwrap();
    let out = toponav(&["sim", "episode", "--route", "easy", "--map", s(&map), "--config", s(&cfg)]);
    assert_eq!(code(&out), 3);
    assert_eq!(code(&toponav(&["sim", "record", "--route", "nowhere", "--out", s(&p(&dir, "x"))])), 3);
}

#[test]
fn calibrate_prints_valid_thresholds() {
    let dir = TempDir::new().unwrap();
    let (stream, _) = easy_map(&dir);
    let out = toponav(&["calibrate", "--stream", s(&stream), "--gap", "15"]);
    assert_eq!(code(&out), 0);
    let cfg: toponav_core::ThresholdConfig = serde_json::from_str(&stdout(&out)).unwrap();
    cfg.validate().unwrap();
}

#[test]
fn eval_writes_csv_with_sidecar() {
    let dir = TempDir::new().unwrap();
    let csv = p(&dir, "eval.csv");
    let out = toponav(&[
        "sim", "eval", "--route", "easy", "--settings", "sparse,dense", "--seeds", "3", "--out", s(&csv),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "route,sparsity_setting,episodes,sr,mean_steps,mean_relocalizations"
    );
    assert!(lines.next().unwrap().starts_with("easy,sparse,3,"));
    assert!(lines.next().unwrap().starts_with("easy,dense,3,"));
    let sidecar: toponav_cli::RunConfig =
        serde_json::from_str(&std::fs::read_to_string(p(&dir, "eval.csv.config.json")).unwrap()).unwrap();
    assert_eq!(sidecar.seeds, 3);
    assert_eq!(sidecar.settings.len(), 2);
}

#[test]
fn shipped_route_files_match_builtins() {
    for route in [RouteSpec::easy(), RouteSpec::moderate(), RouteSpec::hard(), RouteSpec::square_loop()] {
        let file = routes_dir().join(format!("{}.json", route.name));
        assert_eq!(RouteSpec::read_file(&file).unwrap(), route);
    }
}
