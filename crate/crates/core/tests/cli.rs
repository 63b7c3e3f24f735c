use std::path::Path;
use std::process::{Command, Output};

fn msm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msm")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_noiseless_ball_pt1_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = msm(dir.path(), &["verify", "--preset", "ball_pt1", "--noise", "0"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let reports = multifreq_sampling::verify::parse_reports(&stdout(&o)).unwrap();
    assert_eq!(reports.len(), 4);
    assert!(reports.iter().all(|r| r.passed));
}

#[test]
fn verify_noisy_scenario_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = msm(dir.path(), &["verify", "--preset", "ball_pt1", "--only", "factorization"]);
    assert_ne!(code(&o), 0);
    assert!(stdout(&o).contains("noiseless"));
    let o = msm(dir.path(), &["verify", "--preset", "ball_pt1", "--only", "symmetries"]);
    assert_eq!(code(&o), 1, "noise breaks the symmetry");
}

#[test]
fn verify_only_runs_one_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = msm(dir.path(), &["verify", "--preset", "ball_pt14", "--only", "psf"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(text.matches("check: ").count(), 1);
    assert!(text.starts_with("check: psf\n"));
}

#[test]
fn usage_and_io_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&msm(p, &["simulate", "--out", "x.msm"])), 2);
    assert_eq!(code(&msm(p, &["simulate", "--preset", "nope", "--out", "x.msm"])), 2);
    assert_eq!(code(&msm(p, &["simulate", "--config", "missing.toml", "--out", "x.msm"])), 3);
    std::fs::write(p.join("bad.toml"), "colour = 3\n").unwrap();
    let o = msm(p, &["simulate", "--config", "bad.toml", "--out", "x.msm"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    assert_eq!(code(&msm(p, &["image", "--preset", "ball_pt1", "--data", "none.msm", "--out", "img"])), 3);
    assert_eq!(code(&msm(p, &["simulate", "--preset", "ball_pt1", "--out", "no/such/dir/x.msm"])), 3);
}

#[test]
fn simulate_image_and_hash_guard() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = msm(p, &["simulate", "--preset", "ball_pt1", "--out", "d.msm"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("L = 1, J = 11, columns = 23"));
    let o = msm(p, &["image", "--preset", "ball_pt1", "--grid", "16", "--data", "d.msm", "--out", "img"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["img.field", "img_x1.csv", "img_x2.csv", "img_x3.csv", "img_iso0p7.mask"] {
        assert!(p.join(f).exists(), "{f}");
    }
    let o = msm(p, &["image", "--preset", "ball_pt1", "--seed", "5", "--data", "d.msm", "--out", "img2"]);
    assert_eq!(code(&o), 2);
    let o = msm(
        p,
        &["image", "--preset", "ball_pt1", "--seed", "5", "--grid", "8", "--force", "--data", "d.msm", "--out", "img2"],
    );
    assert_eq!(code(&o), 0);
}

#[test]
fn seeds_change_only_payload_and_seed_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&msm(p, &["simulate", "--preset", "ball_pt14", "--seed", "1", "--out", "a.msm"])), 0);
    assert_eq!(code(&msm(p, &["simulate", "--preset", "ball_pt14", "--seed", "2", "--out", "b.msm"])), 0);
    let (a, b) = (std::fs::read(p.join("a.msm")).unwrap(), std::fs::read(p.join("b.msm")).unwrap());
    let payload = 14 * 23 * 16;
    let (ha, hb) = (&a[..a.len() - payload], &b[..b.len() - payload]);
    let ha = String::from_utf8_lossy(ha);
    let hb = String::from_utf8_lossy(hb);
    let differing: Vec<(&str, &str)> = ha.lines().zip(hb.lines()).filter(|(x, y)| x != y).collect();
    assert_eq!(differing.len(), 2, "{differing:?}");
    assert!(differing.iter().any(|(x, y)| *x == "seed: 1" && *y == "seed: 2"));
    assert!(differing.iter().any(|(x, _)| x.starts_with("scenario_hash: ")));
    assert_ne!(&a[a.len() - payload..], &b[b.len() - payload..]);

    assert_eq!(code(&msm(p, &["simulate", "--preset", "ball_pt14", "--noise", "0", "--out", "c.msm"])), 0);
    assert_eq!(code(&msm(p, &["simulate", "--preset", "ball_pt14", "--noise", "0", "--out", "d.msm"])), 0);
    assert_eq!(std::fs::read(p.join("c.msm")).unwrap(), std::fs::read(p.join("d.msm")).unwrap());
}

#[test]
fn write_config_round_trips_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = msm(p, &["write-config", "--preset", "lshape_pt14"]);
    assert_eq!(code(&o), 0);
    std::fs::write(p.join("l.toml"), stdout(&o)).unwrap();
    let again = msm(p, &["write-config", "--config", "l.toml"]);
    assert_eq!(stdout(&again), stdout(&o));
    let list = stdout(&msm(p, &["presets"]));
    assert_eq!(list.lines().count(), 9);
}
