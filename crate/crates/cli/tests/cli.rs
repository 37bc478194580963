use std::path::PathBuf;
use std::process::{Command, Output};

fn wcet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wcet")).args(args).output().unwrap()
}

fn program(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "core", "programs", name]
        .iter()
        .collect();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value<'a>(out: &'a str, key: &str) -> &'a str {
    out.split_whitespace()
        .find_map(|w| w.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in {out}"))
}

#[test]
fn analyze_reports_exact_bound() {
    let o = wcet(&["analyze", &program("ticks.prog"), "--mode", "exact"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().next(), Some("lower=3 upper=3 exact=true"));
}

#[test]
fn exhausted_budget_still_brackets() {
    let o = wcet(&[
        "analyze",
        &program("ticks.prog"),
        "--epsilon",
        "0.05",
        "--budget-ms",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let out = stdout(&o);
    let upper: u64 = value(&out, "upper").parse().unwrap();
    assert!(upper >= 3);
    assert!(matches!(value(&out, "lower"), "bottom" | "0" | "1" | "2" | "3"));
}

#[test]
fn iteration_cap_counts_as_budget() {
    let o = wcet(&["analyze", &program("ticks.prog"), "--max-iterations", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(value(&stdout(&o), "upper"), "4");
}

#[test]
fn input_errors_exit_one() {
    assert_eq!(wcet(&["analyze", "missing.prog"]).status.code(), Some(1));
    assert_eq!(
        wcet(&["analyze", &program("ticks.prog"), "--mode", "fast"])
            .status
            .code(),
        Some(1)
    );
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.prog");
    std::fs::write(&bad, "vars x\npoint a\nstart a\ntrans a -> b assume x > 0\n").unwrap();
    let o = wcet(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn oracle_outputs() {
    let o = wcet(&["oracle", &program("ticks.prog")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().next(), Some("wcet=3"));
    assert_eq!(value(&stdout(&wcet(&["oracle", &program("single.prog")])), "wcet"), "7");
    assert_eq!(wcet(&["oracle", &program("huge.prog")]).status.code(), Some(3));
}

#[test]
fn compare_reports_improvement() {
    let out = stdout(&wcet(&["compare", &program("ticks.prog")]));
    assert_eq!((value(&out, "ai_upper"), value(&out, "oracle")), ("6", "3"));
    assert_eq!(value(&out, "improvement"), "100%");
    assert_eq!(
        value(&stdout(&wcet(&["compare", &program("single.prog")])), "improvement"),
        "0%"
    );
    let o = wcet(&[
        "compare",
        &program("cache_diamonds.prog"),
        "--cache-sets",
        "4",
        "--miss-penalty",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let ai: u64 = value(&out, "ai_upper").parse().unwrap();
    let exact: u64 = value(&out, "oracle").parse().unwrap();
    assert!(ai > exact);
    assert_eq!(value(&out, "upper"), value(&out, "oracle"));
}

#[test]
fn trace_csv_reads_back_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("trace.csv");
    let o = wcet(&[
        "analyze",
        &program("cache_diamonds.prog"),
        "--cache-sets",
        "4",
        "--miss-penalty",
        "10",
        "--log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let mut r = csv::Reader::from_path(&log).unwrap();
    assert_eq!(
        r.headers().unwrap(),
        vec!["iteration", "elapsed_ms", "lower", "upper", "ai_leaves", "dominated"]
    );
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let num = |s: &str| if s == "bottom" { -1 } else { s.parse::<i64>().unwrap() };
    for w in rows.windows(2) {
        assert!(num(&w[0][2]) <= num(&w[1][2]));
        assert!(num(&w[1][3]) <= num(&w[0][3]));
    }
    assert_eq!((&rows[2][2], &rows[2][3]), ("84", "84"));
}

#[test]
fn loops_are_unrolled_before_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("loop.prog");
    std::fs::write(
        &p,
        "vars i\npoint a\npoint h\npoint body\npoint end terminal\nstart a\nloopbound h 3\n\
         trans a -> h assign i := 0\n\
         trans h -> body assume i < 2 cost 5\n\
         trans body -> h assign i := i + 1 cost 1\n\
         trans h -> end assume i >= 2\n",
    )
    .unwrap();
    let path = p.to_str().unwrap();
    let out = stdout(&wcet(&["analyze", path]));
    assert!(out.starts_with("lower=12 upper=12 exact=true"), "{out}");
    assert_eq!(value(&stdout(&wcet(&["oracle", path])), "wcet"), "12");
}

#[test]
fn generated_programs_round_trip_through_the_analyzer() {
    let text = stdout(&wcet(&["generate", "--seed", "7"]));
    assert_eq!(text, stdout(&wcet(&["generate", "--seed", "7"])));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.prog");
    std::fs::write(&p, text).unwrap();
    let o = wcet(&[
        "compare",
        p.to_str().unwrap(),
        "--cache-sets",
        "4",
        "--miss-penalty",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(value(&out, "upper"), value(&out, "oracle"));
}
