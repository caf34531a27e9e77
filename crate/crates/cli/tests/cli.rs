use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pcq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcq")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 3 s clean, 3 s noisy, 3 s clean at 10 Hz on a small scan.
const SCRIPT: &str = "profile lidar2\nrate 10\nresolution 32x128\n\
                      3 street none\n\
                      3 street scattered count=600\n\
                      3 street none\n";

fn generate(dir: &Path, seed: &str) -> std::path::PathBuf {
    let script = dir.join("scenario.txt");
    fs::write(&script, SCRIPT).unwrap();
    let data = dir.join(format!("data-{seed}"));
    let out = pcq(&["generate", path(&script), path(&data), "--seed", seed]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    data
}

fn score_rows(csv: &str) -> Vec<(u64, f64)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn score_follows_cadence_and_finds_the_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(tmp.path(), "5");
    let csv = stdout(&pcq(&["score", path(&data), "--cadence", "10"]));
    assert_eq!(csv.lines().next().unwrap(), "frame_id,timestamp_us,score,unweighted,mean_range_variance");
    let rows = score_rows(&csv);
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), [0, 10, 20, 30, 40, 50, 60, 70, 80]);
    assert!(csv.lines().nth(2).unwrap().starts_with("10,1000000,"));
    let (at, _) = rows.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert!((30..60).contains(&at), "minimum at {at}");
}

#[test]
fn output_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (generate(tmp.path(), "9"), generate(tmp.path(), "9"));
    for entry in fs::read_dir(&a).unwrap() {
        let entry = entry.unwrap();
        assert_eq!(fs::read(entry.path()).unwrap(), fs::read(b.join(entry.file_name())).unwrap());
    }
    let one = pcq(&["score", path(&a), "--cadence", "7", "--workers", "1"]);
    let many = pcq(&["score", path(&b), "--cadence", "7", "--workers", "4"]);
    assert_eq!(stdout(&one), stdout(&many));

    let from_env = Command::new(env!("CARGO_BIN_EXE_pcq"))
        .args(["score", path(&a), "--cadence", "7"])
        .env("PCQ_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(stdout(&from_env), stdout(&one));
    let bad_env = Command::new(env!("CARGO_BIN_EXE_pcq"))
        .args(["score", path(&a)])
        .env("PCQ_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(1));
}

#[test]
fn report_sweeps_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    let scores = tmp.path().join("scores.csv");
    fs::write(
        &scores,
        "frame_id,timestamp_us,score,unweighted,mean_range_variance\n\
         0,0,0.8,0.8,1\n1,100000,0.7,0.7,1\n2,200000,-0.5,-0.4,1\n3,300000,-0.6,-0.5,1\n",
    )
    .unwrap();
    let labels = tmp.path().join("labels.csv");
    fs::write(&labels, "frame_id,label\n0,positive\n1,tp\n2,negative\n3,0\n").unwrap();
    let thresholds = tmp.path().join("thresholds.csv");
    let cdf = tmp.path().join("cdf.csv");
    let out = pcq(&[
        "report", "--scores", path(&scores), "--labels", path(&labels),
        "--thresholds", "-1,0,1", "-o", path(&thresholds), "--cdf", path(&cdf),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = fs::read_to_string(&thresholds).unwrap();
    let rows: Vec<Vec<f64>> = sweep
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows, [vec![-1.0, 0.0, 1.0], vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]]);
    let cdf = fs::read_to_string(&cdf).unwrap();
    assert_eq!(cdf.lines().next().unwrap(), "set,score,cumulative_fraction");
    assert!(cdf.lines().any(|l| l == "all,0.8,1"));

    fs::write(&labels, "frame_id,label\n0,positive\n1,tp\n").unwrap();
    let missing = pcq(&["report", "--scores", path(&scores), "--labels", path(&labels)]);
    assert_eq!(missing.status.code(), Some(2));
    let err = String::from_utf8_lossy(&missing.stderr);
    assert!(err.contains('2') && err.contains('3'), "{err}");
}

fn text_frame(dir: &Path, name: &str, rows: &[&str]) -> std::path::PathBuf {
    let p = dir.join(name);
    let mut text = String::from("range_m,azimuth_deg,elevation_deg,intensity_raw\n");
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn grid_dump_lists_every_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = text_frame(tmp.path(), "frame_000001.csv", &[]);
    let csv = stdout(&pcq(&["grid-dump", path(&empty), "--profile", "lidar2"]));
    assert_eq!(csv.lines().next().unwrap(), "row,col,count,autocorrelation,multiplier,product,flag");
    assert_eq!(csv.lines().count(), 1 + 8 * 16);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",0,,,,empty")));

    let one = text_frame(tmp.path(), "frame_000002.csv", &["12.5,10,0,200"]);
    let csv = stdout(&pcq(&["grid-dump", path(&one), "--profile", "lidar2", "--grid", "4x4"]));
    let filled: Vec<&str> = csv.lines().skip(1).filter(|l| !l.ends_with("empty")).collect();
    assert_eq!(filled, ["2,2,1,-1,1,-1,low"]);
}

#[test]
fn noisy_frames_flag_more_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(tmp.path(), "2");
    let flagged = |id: &str| {
        let frame = data.join(format!("frame_{id}.pcq"));
        let csv = stdout(&pcq(&["grid-dump", path(&frame), "--flag-threshold", "0.2"]));
        csv.lines().filter(|l| l.ends_with(",low")).count()
    };
    let (clean, noisy) = (flagged("000010"), flagged("000040"));
    assert!(noisy > clean, "noisy {noisy}, clean {clean}");
}

#[test]
fn exit_codes_separate_usage_from_data() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(pcq(&[]).status.code(), Some(1));
    assert_eq!(pcq(&["--help"]).status.code(), Some(0));
    assert_eq!(pcq(&["score", "--bogus"]).status.code(), Some(1));

    let frame = text_frame(tmp.path(), "frame_000003.csv", &["5,1,0,10"]);
    assert_eq!(pcq(&["score", path(&frame), "--grid", "0x4"]).status.code(), Some(1));
    assert_eq!(pcq(&["score", path(&frame), "--profile", "lidar9"]).status.code(), Some(1));
    assert_eq!(pcq(&["score", path(&frame), "--cadence", "0"]).status.code(), Some(1));
    assert_eq!(pcq(&["score", path(&frame), "--gamma-ref", "0"]).status.code(), Some(1));
    assert_eq!(pcq(&["score", path(&frame)]).status.code(), Some(0));

    let missing = tmp.path().join("nowhere");
    assert_eq!(pcq(&["score", path(&missing)]).status.code(), Some(2));
    let broken = text_frame(tmp.path(), "frame_000004.csv", &["5,1,0"]);
    let out = pcq(&["score", path(&broken)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let script = tmp.path().join("bad.txt");
    fs::write(&script, "10 street fog\n").unwrap();
    assert_eq!(pcq(&["generate", path(&script), path(&tmp.path().join("x"))]).status.code(), Some(1));
}
