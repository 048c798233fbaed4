use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "\
# small model for quick runs
part_feature = 8
rgnn_hidden = 8
rgnn_steps = 2
spatial_output = 8
frames = 12
clip_len = 3
lstm_hidden = 8
head_hidden = 8
classes = 4
dropout = 0.1
epochs = 3
batch = 8
lr = 0.003
synth_per_class = 10
synth_frames = 24
split = random:0.75
";

fn srtsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srtsl"))
        .args(args)
        .env("SRTSL_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status,
        stdout(o),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.conf");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn path(p: &Path) -> String {
    p.display().to_string()
}

/// The echoed `key = value` block.
fn echoed_config(out: &str) -> String {
    out.lines()
        .skip_while(|l| *l != "# resolved configuration")
        .skip(1)
        .take_while(|l| *l != "# end configuration")
        .map(|l| format!("{l}\n"))
        .collect()
}

fn dir_contents(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<(PathBuf, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Checkpoints differ in their recorded output path, so compare the restored state.
fn assert_same_state(a: &Path, b: &Path) {
    let load = |d: &Path| srtsl::training::load_checkpoint::<f32>(&d.join("last.ckpt")).unwrap().trainer;
    let (ta, tb) = (load(a), load(b));
    assert!(ta.model == tb.model, "parameters or RNG state differ");
    assert!(ta.optimizer == tb.optimizer, "optimizer state differs");
    assert_eq!(ta.epoch, tb.epoch);
}

#[test]
fn gradcheck_passes_on_micro_config() {
    let o = srtsl(&["gradcheck", "--seed", "1"]);
    assert_ok(&o);
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("max relative error")).expect("error line");
    let v: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(v < 1e-4, "{v}");
    assert!(echoed_config(&text).contains("precision = f64"));
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = srtsl(&["synth", "--classes", "4", "--per-class", "75", "--seed", "9", "--out", &path(d)]);
        assert_ok(&o);
    }
    let (ca, cb) = (dir_contents(&a), dir_contents(&b));
    assert_eq!(ca.len(), 301);
    assert!(ca == cb, "synthetic directories differ");
    let index = fs::read_to_string(a.join("index.tsv")).unwrap();
    assert_eq!(index.lines().count(), 300);
    assert!(index.lines().all(|l| l.split('\t').count() == 4));
}

#[test]
fn train_eval_predict_round() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), TINY);
    let data = tmp.path().join("data");
    assert_ok(&srtsl(&["synth", "--config", &conf, "--seed", "4", "--out", &path(&data)]));

    let run = tmp.path().join("run");
    let o = srtsl(&["train", "--config", &conf, "--data", &path(&data), "--out", &path(&run), "--keep-every", "2"]);
    assert_ok(&o);
    let log = fs::read_to_string(run.join("metrics.tsv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "epoch\tlr\ttrain_loss\ttrain_acc\ttest_acc\tL_p\tL_v\tL_s");
    assert!(lines[1..].iter().all(|l| l.split('\t').count() == 8));
    assert!(run.join("last.ckpt").exists() && run.join("epoch-002.ckpt").exists());
    assert_eq!(fs::read_to_string(run.join("config.txt")).unwrap(), echoed_config(&stdout(&o)));

    let ckpt = path(&run.join("last.ckpt"));
    let o = srtsl(&["eval", "--checkpoint", &ckpt]);
    assert_ok(&o);
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("accuracy ")), "{text}");
    let matrix: Vec<&str> = text.lines().skip_while(|l| !l.starts_with("confusion")).skip(1).collect();
    assert_eq!(matrix.len(), 4);

    let sample = fs::read_dir(&data)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "skeleton"))
        .unwrap();
    let o = srtsl(&["predict", "--checkpoint", &ckpt, &path(&sample)]);
    assert_ok(&o);
    let class: usize = stdout(&o).lines().last().unwrap().parse().unwrap();
    assert!(class < 4);
}

#[test]
fn echoed_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), TINY);
    let first = tmp.path().join("first");
    let o = srtsl(&["train", "--config", &conf, "--epochs", "2", "--seed", "5", "--out", &path(&first)]);
    assert_ok(&o);

    let echo = echoed_config(&stdout(&o)).replace(&path(&first), &path(&tmp.path().join("second")));
    let again = write_config(tmp.path(), &echo);
    assert_ok(&srtsl(&["train", "--config", &again]));
    let read = |d: &str| fs::read(tmp.path().join(d).join("metrics.tsv")).unwrap();
    assert_eq!(read("first"), read("second"));
    assert_same_state(&tmp.path().join("first"), &tmp.path().join("second"));
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), TINY);
    let full = tmp.path().join("full");
    let split = tmp.path().join("split");
    assert_ok(&srtsl(&["train", "--config", &conf, "--epochs", "4", "--out", &path(&full)]));
    assert_ok(&srtsl(&["train", "--config", &conf, "--epochs", "2", "--out", &path(&split)]));
    let ckpt = path(&split.join("last.ckpt"));
    assert_ok(&srtsl(&["train", "--resume", &ckpt, "--epochs", "4"]));
    assert_eq!(
        fs::read_to_string(full.join("metrics.tsv")).unwrap(),
        fs::read_to_string(split.join("metrics.tsv")).unwrap()
    );
    assert_same_state(&full, &split);
}

#[test]
fn f64_runs_train_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), TINY);
    let out = tmp.path().join("run");
    assert_ok(&srtsl(&["train", "--config", &conf, "--precision", "f64", "--epochs", "1", "--out", &path(&out)]));
    assert_ok(&srtsl(&["eval", "--checkpoint", &path(&out.join("last.ckpt"))]));
}

#[test]
fn bad_input_exits_nonzero_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: Vec<(Vec<String>, &str)> = vec![
        (vec!["fly".into()], "unrecognized subcommand"),
        (vec!["train".into(), "--bogus".into()], "unexpected argument"),
        (vec!["train".into(), "--variant".into(), "huge".into()], "variant"),
        (vec!["train".into(), "--split".into(), "random:2".into()], "split"),
        (
            vec!["train".into(), "--config".into(), write_config(tmp.path(), "colour = blue\n")],
            "unknown key",
        ),
        (
            vec!["eval".into(), "--checkpoint".into(), path(&tmp.path().join("missing.ckpt"))],
            "missing.ckpt",
        ),
    ];
    for (args, needle) in cases {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = srtsl(&refs);
        assert!(!o.status.success(), "{args:?} succeeded");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{args:?}: {err}");
    }
}

/// Desk-scale side-by-side runs: the full model should not trail the
/// part-encoder + plain LSTM baseline.
#[test]
fn full_variant_beats_fc_lstm() {
    let desk = "\
part_feature = 32
rgnn_hidden = 32
rgnn_steps = 3
spatial_output = 32
frames = 50
clip_len = 5
lstm_hidden = 32
head_hidden = 32
classes = 4
dropout = 0.2
epochs = 50
batch = 16
lr = 0.001
seed = 7
split = random:0.75
";
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), desk);
    let mut finals = Vec::new();
    for variant in ["fc-lstm", "full"] {
        let out = tmp.path().join(variant);
        assert_ok(&srtsl(&["train", "--config", &conf, "--variant", variant, "--out", &path(&out)]));
        let log = fs::read_to_string(out.join("metrics.tsv")).unwrap();
        assert_eq!(log.lines().count(), 51, "{variant}");
        let last: f64 = log.lines().last().unwrap().split('\t').nth(4).unwrap().parse().unwrap();
        finals.push(last);
    }
    assert!(finals[1] >= finals[0], "full {} < fc-lstm {}", finals[1], finals[0]);
}
