use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nser(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nser"))
        .args(args)
        .env("NSER_LOG", "error")
        .output()
        .expect("spawn nser")
}

fn ok(args: &[&str]) -> String {
    let out = nser(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn err(args: &[&str]) -> String {
    let out = nser(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let e = String::from_utf8(out.stderr).unwrap();
    assert_eq!(
        e.trim_end().lines().count(),
        1,
        "diagnostic is not one line: {e}"
    );
    e
}

const SMALL: [&str; 4] = ["--set", "synth.users=30", "--set", "synth.items=50"];

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates a small graph, then trains a teacher and a short model on it.
fn trained(dir: &Path) {
    let d = s(dir);
    let trips = dir.join("triples.tsv");
    let mut gen = vec!["gen-synth", "--out", d, "--seed", "3"];
    gen.extend(SMALL);
    ok(&gen);
    ok(&[
        "train-teacher",
        "--graph",
        s(&trips),
        "--out",
        d,
        "--seed",
        "3",
    ]);
    let teacher = dir.join("teacher.ckpt");
    ok(&[
        "train",
        "--graph",
        s(&trips),
        "--teacher",
        s(&teacher),
        "--out",
        d,
        "--seed",
        "3",
        "--set",
        "train.epochs=3",
    ]);
}

#[test]
fn recommend_without_model_fails() {
    let dir = tempfile::tempdir().unwrap();
    let mut gen = vec!["gen-synth", "--out", s(dir.path())];
    gen.extend(SMALL);
    ok(&gen);
    let trips = dir.path().join("triples.tsv");
    let e = err(&["recommend", "--graph", s(&trips), "--user", "user_0"]);
    assert!(e.contains("model checkpoint required"), "{e}");
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    let trips = d.join("triples.tsv");
    let (model, teacher) = (d.join("model.ckpt"), d.join("teacher.ckpt"));
    let before = fs::read(&trips).unwrap();

    let ingest_out = d.join("ingested");
    let stats = ok(&["ingest", "--graph", s(&trips), "--out", s(&ingest_out)]);
    assert!(stats.contains("triples\tpurchase\t"));
    assert_eq!(fs::read(ingest_out.join("triples.tsv")).unwrap(), before);

    let table = ok(&[
        "evaluate",
        "--graph",
        s(&trips),
        "--model",
        s(&model),
        "--teacher",
        s(&teacher),
        "--out",
        s(d),
        "--seed",
        "3",
    ]);
    assert!(table.contains("HR@10"));
    let csv = fs::read_to_string(d.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("variant,n,ndcg,recall,hit_rate,precision\n"));
    assert_eq!(csv.lines().count(), 4);

    let layout = ok(&[
        "layout",
        "--graph",
        s(&trips),
        "--model",
        s(&model),
        "--user",
        "user_1",
    ]);
    assert!(layout.starts_with("0,root,1\n"));
    assert!(layout.contains("metapath,v,y"));

    let rec = ok(&[
        "recommend",
        "--graph",
        s(&trips),
        "--model",
        s(&model),
        "--user",
        "user_1",
        "--topn",
        "5",
        "--out",
        s(d),
    ]);
    let rows = fs::read_to_string(d.join("recommendations_user_1.csv")).unwrap();
    assert!(rows.starts_with("user,rank,item,score,layout_leaf_id,rendered_path\n"));
    let first = rec.lines().next().expect("at least one recommendation");
    let item = first.split(' ').nth(1).unwrap();
    let paths = ok(&[
        "explain",
        "--graph",
        s(&trips),
        "--model",
        s(&model),
        "--user",
        "user_1",
        "--item",
        item,
    ]);
    assert!(paths.lines().count() >= 1);
    assert!(
        paths
            .lines()
            .all(|l| l.starts_with("user_1 --") && l.ends_with(item)),
        "{paths}"
    );

    assert_eq!(
        fs::read(&trips).unwrap(),
        before,
        "inputs are never modified"
    );
}

#[test]
fn commands_are_idempotent() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    trained(a.path());
    trained(b.path());
    for f in [
        "triples.tsv",
        "teacher.ckpt",
        "model.ckpt",
        "train_log.csv",
        "teacher_log.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn layout_of_user_without_history_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut gen = vec!["gen-synth", "--out", s(d)];
    gen.extend(SMALL);
    ok(&gen);
    let ents = d.join("entities.tsv");
    let mut text = fs::read_to_string(&ents).unwrap();
    text.push_str("user\tnewcomer\n");
    fs::write(&ents, text).unwrap();
    let trips = d.join("triples.tsv");
    ok(&["train-teacher", "--graph", s(&trips), "--out", s(d)]);
    ok(&[
        "train",
        "--graph",
        s(&trips),
        "--teacher",
        s(&d.join("teacher.ckpt")),
        "--out",
        s(d),
        "--set",
        "train.epochs=1",
    ]);
    let out = ok(&[
        "layout",
        "--graph",
        s(&trips),
        "--model",
        s(&d.join("model.ckpt")),
        "--user",
        "newcomer",
    ]);
    assert!(out.contains("no interactions"));
    assert!(out.ends_with("0,root,1\n"));
}

#[test]
fn bad_inputs_give_one_line_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("run.cfg");
    fs::write(&cfg, "run.seed = 1\nbogus line\n").unwrap();
    let e = err(&["gen-synth", "--config", s(&cfg), "--out", s(d)]);
    assert!(e.contains("line 2"), "{e}");

    let e = err(&[
        "train",
        "--graph",
        s(&d.join("missing.tsv")),
        "--teacher",
        "x",
    ]);
    assert!(e.contains("No such file"), "{e}");
    assert_eq!(e.matches("No such file").count(), 1, "{e}");

    let mut gen = vec!["gen-synth", "--out", s(d)];
    gen.extend(SMALL);
    ok(&gen);
    let trips = d.join("triples.tsv");
    let e = err(&["train", "--graph", s(&trips)]);
    assert!(e.contains("teacher checkpoint required"), "{e}");
    let out = nser(&["layout", "--graph", "x", "--layout-strategy", "best"]);
    assert!(!out.status.success());
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("run.cfg");
    fs::write(&cfg, "synth.users = 12\nsynth.items = 20\nrun.seed = 5\n").unwrap();
    let out = ok(&[
        "gen-synth",
        "--config",
        s(&cfg),
        "--out",
        s(d),
        "--seed",
        "6",
    ]);
    assert!(
        out.starts_with(&format!("{} entities", 12 + 20 + 10 + 12 + 40)),
        "{out}"
    );
    let flagged = fs::read(d.join("triples.tsv")).unwrap();
    let e = tempfile::tempdir().unwrap();
    ok(&["gen-synth", "--config", s(&cfg), "--out", s(e.path())]);
    assert_ne!(
        fs::read(e.path().join("triples.tsv")).unwrap(),
        flagged,
        "--seed overrides run.seed"
    );
}
