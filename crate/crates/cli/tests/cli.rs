use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dwmerge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dwmerge")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, shape: &str, overlap: &str) -> (std::path::PathBuf, std::path::PathBuf) {
    let (a, b) = (dir.join("dw1"), dir.join("dw2"));
    let out = dwmerge(&[
        "gen", p(&a), p(&b), "--seed", "7", "--dim-size", "200", "--fact-rows", "1500", "--overlap", overlap,
        "--shape", shape,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (a, b)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn exp1_merges_to_a_star_with_laws() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = gen(tmp.path(), "exp1", "0.75");
    let out = tmp.path().join("out");
    let res = dwmerge(&["merge", p(&a), p(&b), p(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["output"], "star");
    assert_eq!(report["config"]["strict"], false);
    assert_eq!(report["config"]["userMap"], false);
    for t in report["tables"].as_array().unwrap() {
        let n = |k: &str| t[k].as_u64().unwrap();
        assert_eq!(n("n1") + n("n2") - n("nShared"), n("nMerged"), "{t}");
    }
    let schema = read_json(&out.join("schema.json"));
    assert_eq!(schema["facts"].as_array().unwrap().len(), 1);
}

#[test]
fn exp2_merges_to_a_constellation() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = gen(tmp.path(), "exp2", "0.75");
    let out = tmp.path().join("out");
    let res = dwmerge(&["merge", p(&a), p(&b), p(&out), "--report", p(&tmp.path().join("r.json"))]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(read_json(&tmp.path().join("r.json"))["output"], "constellation");
    assert!(!out.join("report.json").exists());
    let validate = dwmerge(&["validate", p(&out)]);
    assert!(validate.status.success(), "{}", String::from_utf8_lossy(&validate.stderr));
}

#[test]
fn merge_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = gen(tmp.path(), "customer", "0.5");
    let (o1, o2) = (tmp.path().join("o1"), tmp.path().join("o2"));
    assert!(dwmerge(&["merge", p(&a), p(&b), p(&o1)]).status.success());
    assert!(dwmerge(&["merge", p(&a), p(&b), p(&o2)]).status.success());
    assert_eq!(listing(&o1), listing(&o2));
}

#[test]
fn gen_is_byte_identical_per_seed() {
    let t1 = tempfile::tempdir().unwrap();
    let t2 = tempfile::tempdir().unwrap();
    let (a1, b1) = gen(t1.path(), "exp1", "0.75");
    let (a2, b2) = gen(t2.path(), "exp1", "0.75");
    assert_eq!(listing(&a1), listing(&a2));
    assert_eq!(listing(&b1), listing(&b2));
    let manifest = read_json(&a1.join("manifest.json"));
    assert_eq!(manifest["seed"], 7);
}

#[test]
fn match_prints_correspondences() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = gen(tmp.path(), "exp1", "1");
    let out = dwmerge(&["match", p(&a), p(&b), "--matcher", "edit:1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("Customer.Custkey ~ Customer.Custkey")), "{text}");
    assert!(text.contains("Lineorder.Quantity"), "{text}");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    assert_eq!(dwmerge(&["validate", p(&missing)]).status.code(), Some(2));
    assert_eq!(dwmerge(&["merge", "a"]).status.code(), Some(5));
    assert_eq!(dwmerge(&["merge", "a", "b", "c", "--matcher", "fuzzy"]).status.code(), Some(5));
    assert_eq!(dwmerge(&["--help"]).status.code(), Some(0));
    assert_eq!(dwmerge(&["gen", "x", "y", "--overlap", "2"]).status.code(), Some(5));

    // a warehouse whose only dimension shares no attribute with the other one
    let (a, _) = gen(tmp.path(), "exp1", "0.75");
    let other = tmp.path().join("other");
    fs::create_dir_all(&other).unwrap();
    fs::write(other.join("Item.csv"), "Sku,Colour\nS1,red\n").unwrap();
    fs::write(other.join("Sales.csv"), "Sku,Units\nS1,3\n").unwrap();
    fs::write(
        other.join("schema.json"),
        r#"{"formatVersion":1,"name":"Other",
            "facts":[{"name":"Sales","table":"Sales.csv","measures":[{"name":"Units"}],
                      "dimensionKeys":[{"dimension":"Item","column":"Sku"}]}],
            "dimensions":[{"name":"Item","table":"Item.csv","id":"Sku","attributes":[{"name":"Colour"}],
                           "hierarchies":[{"name":"H","parameters":["Sku","Colour"]}]}]}"#,
    )
    .unwrap();
    assert!(dwmerge(&["validate", p(&other)]).status.success());
    let res = dwmerge(&["merge", p(&a), p(&other), p(&tmp.path().join("o"))]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn conflict_policy_error_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, _) = gen(tmp.path(), "exp1", "1");
    let b = tmp.path().join("changed");
    fs::create_dir_all(&b).unwrap();
    for (name, bytes) in listing(&a) {
        fs::write(b.join(&name), bytes).unwrap();
    }
    // rewrite every city of the copy
    let path = b.join("Customer.csv");
    let text = fs::read_to_string(&path).unwrap().replace("city_", "town_");
    fs::write(&path, text).unwrap();
    let res = dwmerge(&["merge", p(&a), p(&b), p(&tmp.path().join("o")), "--conflict", "error"]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    let ok = dwmerge(&["merge", p(&a), p(&b), p(&tmp.path().join("o2")), "--conflict", "right"]);
    assert!(ok.status.success());
    let report = read_json(&tmp.path().join("o2").join("report.json"));
    assert!(!report["conflicts"].as_array().unwrap().is_empty());
}
