use std::path::Path;
use std::process::{Command, Output};

use painpaint::commands::compare_runs;

fn painpaint(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_painpaint"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PAINPAINT_SEED")
        .env_remove("PAINPAINT_TAU")
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = painpaint(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn dataset(dir: &Path) {
    ok(&["generate", "--output", "ds", "--width", "64", "--height", "48", "--views", "10", "--seed", "2"], dir);
}

#[test]
fn cached_graph_gives_the_same_run() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    dataset(d);
    let common = ["--dataset", "ds", "--seed", "4", "--inpainter", "corrupting", "--set", "k=3"];
    let built = ok(&[&["build-graph", "--output", "cached"][..], &common].concat(), d);
    assert!(built.contains("10 nodes"));
    ok(&[&["run", "--output", "cached"][..], &common].concat(), d);
    ok(&[&["run", "--output", "fresh"][..], &common].concat(), d);
    assert_eq!(compare_runs(&d.join("cached"), &d.join("fresh")).unwrap(), Vec::<std::path::PathBuf>::new());
    assert!(d.join("fresh/views/view_0009.png").exists());
    assert!(d.join("fresh/metrics.csv").exists());
}

#[test]
fn replay_is_byte_identical() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    dataset(d);
    ok(&["run", "--dataset", "ds", "--output", "r1", "--seed", "11", "--inpainter", "corrupting", "--set", "verification=false"], d);
    let out = ok(&["replay", "--from", "r1", "--output", "r2"], d);
    assert!(out.contains("replay matches"));
    for f in ["trajectory.jsonl", "rounds.jsonl", "graph.json", "summary.json", "metrics.csv"] {
        assert_eq!(std::fs::read(d.join("r1").join(f)).unwrap(), std::fs::read(d.join("r2").join(f)).unwrap(), "{f}");
    }

    // A tampered log must be caught.
    let log = std::fs::read_to_string(d.join("r1/trajectory.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    let anchor = first["plan"]["anchor"].as_u64().unwrap();
    let other = (anchor + 1) % 10;
    let tampered = log.replacen(&format!("\"anchor\":{anchor},"), &format!("\"anchor\":{other},"), 1);
    assert_ne!(tampered, log);
    std::fs::write(d.join("r1/trajectory.jsonl"), tampered).unwrap();
    let out = painpaint(&["replay", "--from", "r1", "--output", "r3"], d);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("replay diverged"));
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    dataset(d);
    ok(&["run", "--dataset", "ds", "--output", "r"], d);
    assert!(ok(&["eval", "--dataset", "ds", "--run", "r"], d).contains("mean PSNR"));

    // Unknown subcommand, bad value, bad config key, missing dataset.
    assert_eq!(painpaint(&["frobnicate"], d).status.code(), Some(2));
    assert_eq!(painpaint(&["run", "--dataset", "ds", "--output", "x", "--set", "eta=3"], d).status.code(), Some(2));
    std::fs::write(d.join("bad.toml"), "colour = 1\n").unwrap();
    assert_eq!(painpaint(&["run", "--config", "bad.toml", "--dataset", "ds", "--output", "x"], d).status.code(), Some(2));
    assert_eq!(painpaint(&["run", "--output", "x"], d).status.code(), Some(2));
    assert_eq!(painpaint(&["warp", "--dataset", "ds", "--from", "0", "--to", "99", "--output", "w.png"], d).status.code(), Some(2));

    // Data errors.
    assert_eq!(painpaint(&["run", "--dataset", "nowhere", "--output", "x"], d).status.code(), Some(3));

    // Backend errors.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = format!("service_endpoint=http://127.0.0.1:{port}/");
    let out = painpaint(&["run", "--dataset", "ds", "--output", "x", "--inpainter", "service", "--set", &endpoint], d);
    assert_eq!(out.status.code(), Some(4));

    // Evaluation without ground truth is a usage error.
    std::fs::remove_dir_all(d.join("ds/gt")).unwrap();
    assert_eq!(painpaint(&["eval", "--dataset", "ds", "--run", "r"], d).status.code(), Some(2));
}

#[test]
fn config_file_and_environment() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    dataset(d);
    std::fs::write(d.join("run.toml"), "dataset = \"ds\"\noutput = \"c\"\nk = 2\nseed = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_painpaint"))
        .args(["run", "--config", "run.toml", "--iters", "1"])
        .env("PAINPAINT_SEED", "9")
        .current_dir(d)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let resolved = std::fs::read_to_string(d.join("c/config.toml")).unwrap();
    assert!(resolved.contains("seed = 9") && resolved.contains("k = 2") && resolved.contains("iters = 1"), "{resolved}");
}

#[test]
fn single_round_tools() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    dataset(d);
    let out = ok(&["propagate", "--dataset", "ds", "--output", "p", "--anchor", "3"], d);
    assert!(out.contains("round 0: anchor 3"), "{out}");
    assert!(out.contains("1 rounds"));
    let out = ok(&["warp", "--dataset", "ds", "--from", "0", "--to", "1", "--output", "w/w.png"], d);
    assert!(out.starts_with("valid pixels"));
    assert!(d.join("w/w_valid.png").exists());
}

#[test]
fn verify_picks_the_consistent_candidate() {
    use painpaint::io;
    use painpaint_core::inpaint::{CorruptionKind, corrupt};
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    dataset(d);
    let gt = io::load_image(&d.join("ds/gt/view_0000.png")).unwrap();
    let depth = io::load_depth(&d.join("ds/gt/depth_0000.pfm")).unwrap();
    let mask = io::load_mask(&d.join("ds/mask_0000.png")).unwrap();
    let c = d.join("cands");
    for (name, img) in [
        ("a_noise", corrupt(&gt, &mask, CorruptionKind::Noise, 0.3, 1).unwrap()),
        ("b_clean", gt.clone()),
        ("c_shift", corrupt(&gt, &mask, CorruptionKind::ColorShift, 0.3, 2).unwrap()),
    ] {
        io::save_image(&c.join(format!("{name}.png")), &img).unwrap();
        io::save_depth(&c.join(format!("{name}.pfm")), &depth).unwrap();
    }
    let out = ok(&["verify", "--anchor-image", "ds/gt/view_0000.png", "--anchor-depth", "ds/gt/depth_0000.pfm", "--mask", "ds/mask_0000.png", "--candidates", "cands"], d);
    let last: serde_json::Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
    assert_eq!(last["selected"], "b_clean", "{out}");
    assert_eq!(out.lines().count(), 4);

    // Precomputed features keyed by file stem.
    let feats = "view_0000 1 0\nview_0000:depth 1 0\na_noise 1 0\na_noise:depth 1 0\nb_clean 0 1\nb_clean:depth 0 1\nc_shift 1 1\nc_shift:depth 1 1\n";
    std::fs::write(d.join("f.txt"), feats).unwrap();
    let out = ok(
        &["verify", "--anchor-image", "ds/gt/view_0000.png", "--anchor-depth", "ds/gt/depth_0000.pfm", "--mask", "ds/mask_0000.png", "--candidates", "cands", "--features", "f.txt"],
        d,
    );
    let last: serde_json::Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
    assert_eq!(last["selected"], "a_noise", "{out}");
}
