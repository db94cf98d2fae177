#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

pub fn armada(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_armada")).args(args).output().expect("spawn armada binary")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// File name to contents for every file in `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).expect("read output dir") {
        let e = e.unwrap();
        out.insert(e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap());
    }
    out
}

fn run_ok(args: &[String]) -> Result<(), String> {
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = armada(&argv);
    if code(&o) != 0 {
        return Err(format!("`armada {}` exited {}: {}", argv.join(" "), code(&o), stderr(&o)));
    }
    Ok(())
}

/// Runs every subcommand three times (twice at one worker, once at two) and
/// compares the output directories byte for byte.
pub fn check_cli_determinism(root: &Path) -> Result<Vec<String>, String> {
    let p = |x: &Path| x.to_string_lossy().into_owned();
    let sim = root.join("sim");
    run_ok(&["simulate".into(), "--out".into(), p(&sim), "--seed".into(), "4".into()])?;
    let data = p(&sim.join("data.csv"));
    let scores = p(&root.join("select-0").join("scores.tsv"));

    let commands: Vec<(&str, Vec<String>)> = vec![
        ("simulate", vec!["simulate", "--design", "mixture", "--seed", "9"]),
        ("select", vec!["select", "--input", &data, "--clusters", "4", "--seed", "2", "--write-corrected"]),
        ("heatmap", vec!["heatmap", "--input", &data, "--scores", &scores, "--threshold", "6"]),
        ("bootstrap", vec!["bootstrap", "--input", &data, "--clusters", "4", "--replicates", "3", "--seed", "5"]),
        ("benchmark", vec!["benchmark", "--design", "main", "--runs", "2", "--seed", "8"]),
    ]
    .into_iter()
    .map(|(n, v)| (n, v.into_iter().map(String::from).collect()))
    .collect();

    let mut checked = Vec::new();
    for (name, args) in commands {
        let mut snaps = Vec::new();
        for (rep, jobs) in [(0, "1"), (1, "1"), (2, "2")] {
            let out = root.join(format!("{name}-{rep}"));
            let mut a = args.clone();
            a.extend(["--out".into(), p(&out), "--jobs".into(), jobs.into()]);
            run_ok(&a)?;
            snaps.push(snapshot(&out));
        }
        for (i, s) in snaps.iter().enumerate().skip(1) {
            if s != &snaps[0] {
                let diff: Vec<&String> =
                    s.keys().chain(snaps[0].keys()).filter(|k| s.get(*k) != snaps[0].get(*k)).collect();
                return Err(format!("{name}: run {i} differs from run 0 in {diff:?}"));
            }
        }
        checked.push(format!("{name} ({} files)", snaps[0].len()));
    }
    Ok(checked)
}
