use std::fs;
use std::path::{Path, PathBuf};

use npmle::cli::main_with_args;
use npmle::prior::read_prior;
use tempfile::TempDir;

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> u8 {
    main_with_args(std::iter::once("npmle").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_estimate(path: &Path) -> Vec<(String, u64, f64)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].to_string(), rec[1].parse().unwrap(), rec[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn fit_two_atom_example() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "c.csv", "a,0\nb,0\nc,0\nd,2\n");
    assert_eq!(run(&["-o", s(dir.path()), "fit", s(&input), "--strict"]), 0);
    let prior = read_prior(&dir.path().join("prior.json")).unwrap();
    assert_eq!(prior.n_scale, 2.0);
    assert_eq!(prior.prior.len(), 2);
    assert!((prior.prior.atoms()[1] - 1.5936242600400401).abs() < 0.06);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fit_report.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], true);
}

#[test]
fn fit_point_mass_example() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "c.csv", "symbol,count\na,1\nb,0\nc,1\nd,1\ne,0\n");
    assert_eq!(run(&["-o", s(dir.path()), "fit", "--header", s(&input)]), 0);
    let prior = read_prior(&dir.path().join("prior.json")).unwrap();
    assert_eq!(prior.prior.len(), 1);
    assert!((prior.prior.atoms()[0] - 0.6).abs() <= 1.0 / 9.0);
}

#[test]
fn estimate_writes_symbol_count_prob() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "c.csv", "x,3\ny,1\nz,0\n");
    assert_eq!(run(&["-o", s(dir.path()), "estimate", s(&input), "-e", "empirical"]), 0);
    let rows = read_estimate(&dir.path().join("estimate.csv"));
    assert_eq!(rows, vec![("x".into(), 3, 0.75), ("y".into(), 1, 0.25), ("z".into(), 0, 0.0)]);

    assert_eq!(run(&["-o", s(dir.path()), "estimate", s(&input)]), 0);
    let rows = read_estimate(&dir.path().join("estimate.csv"));
    assert!((rows.iter().map(|r| r.2).sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(rows.iter().all(|r| r.2 > 0.0));
}

#[test]
fn estimate_on_text_input() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "t.txt", "To be, or not to BE.");
    assert_eq!(run(&["-o", s(dir.path()), "estimate", "--format", "text", s(&input), "-e", "empirical"]), 0);
    let rows = read_estimate(&dir.path().join("estimate.csv"));
    let be = rows.iter().find(|r| r.0 == "be").unwrap();
    assert_eq!((be.1, be.2), (2, 1.0 / 3.0));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = s(dir.path());
    let gt = write(&dir, "gt.csv", "a,0\nb,0\nc,0\nd,4\n");
    assert_eq!(run(&["-o", out, "estimate", s(&gt), "-e", "gt"]), 3);

    let empty = write(&dir, "empty.csv", "");
    assert_eq!(run(&["-o", out, "fit", s(&empty)]), 4);
    assert_eq!(run(&["-o", out, "fit", s(&dir.path().join("missing.csv"))]), 4);
    let negative = write(&dir, "neg.csv", "a,1\nb,-2\n");
    assert_eq!(run(&["-o", out, "fit", s(&negative)]), 4);
    let dup = write(&dir, "dup.csv", "a,1\na,2\n");
    assert_eq!(run(&["-o", out, "fit", s(&dup)]), 4);

    let ok = write(&dir, "ok.csv", "a,1\nb,2\n");
    assert_eq!(run(&["-o", out, "estimate", s(&ok), "-e", "bogus"]), 4);
    assert_eq!(run(&["-o", out, "estimate", s(&ok), "-e", "add-c:c=-1"]), 4);
    assert_eq!(run(&["fit"]), 4);
    assert_eq!(run(&["--help"]), 0);

    let bad = write(&dir, "bad.toml", "distribution = \"uniform\"\nk = 10\nn_grid = [10]\ntrials = 0\nestimators = [\"npmle\"]\n");
    assert_eq!(run(&["-o", out, "benchmark", s(&bad)]), 4);
}

#[test]
fn strict_fit_reports_missing_certificate() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "c.csv", "a,0\nb,3\nc,9\nd,27\ne,40\nf,1\n");
    assert_eq!(run(&["-o", s(dir.path()), "fit", s(&input), "--strict", "--max-fw-iters", "1"]), 2);
    assert_eq!(run(&["-o", s(dir.path()), "fit", s(&input), "--max-fw-iters", "1"]), 0);
}

#[test]
fn pretrained_prior_reproduces_npmle() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "c.csv", "a,0\nb,3\nc,9\nd,1\ne,0\nf,5\ng,2\n");
    let prior_dir = dir.path().join("prior");
    let a_dir = dir.path().join("a");
    let b_dir = dir.path().join("b");
    for d in [&prior_dir, &a_dir, &b_dir] {
        fs::create_dir(d).unwrap();
    }
    assert_eq!(run(&["-o", s(&prior_dir), "export-prior", s(&input)]), 0);
    let prior = prior_dir.join("prior.json");
    assert_eq!(run(&["-o", s(&a_dir), "estimate", s(&input)]), 0);
    assert_eq!(run(&["-o", s(&b_dir), "estimate", s(&input), "-e", "pretrained", "--prior", s(&prior)]), 0);
    let a = read_estimate(&a_dir.join("estimate.csv"));
    let b = read_estimate(&b_dir.join("estimate.csv"));
    for (x, y) in a.iter().zip(&b) {
        assert!((x.2 - y.2).abs() < 1e-12, "{x:?} vs {y:?}");
    }
}

#[test]
fn benchmark_writes_both_tables() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["-o", s(dir.path()), "--seed", "5", "benchmark", "uniform_small", "--trials", "3"]), 0);
    let trials = npmle::bench::read_trials(fs::File::open(dir.path().join("uniform_small_trials.csv")).unwrap()).unwrap();
    let agg = npmle::bench::read_aggregate(fs::File::open(dir.path().join("uniform_small_aggregate.csv")).unwrap()).unwrap();
    assert_eq!(trials.len(), 5 * 8 * 3);
    assert_eq!(agg.len(), 5 * 8);
    for r in trials.iter().filter(|r| r.estimator == "separable-oracle") {
        assert_eq!(r.regret, 0.0);
    }
}

#[test]
fn corpus_on_bundled_excerpt() {
    let dir = TempDir::new().unwrap();
    let text = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/hamlet_excerpt.txt");
    let args = [
        "-o", s(dir.path()), "--seed", "1", "corpus", "--format", "text", s(&text), "--ratio", "0.2", "--trials", "4",
        "-e", "npmle", "-e", "mgt-profile", "-e", "separable",
    ];
    assert_eq!(run(&args), 0);
    let agg = npmle::bench::read_aggregate(fs::File::open(dir.path().join("hamlet_excerpt_corpus_aggregate.csv")).unwrap()).unwrap();
    let labels: Vec<&str> = agg.iter().map(|r| r.estimator.as_str()).collect();
    assert_eq!(labels, ["npmle", "mgt-profile", "separable-oracle"]);
    assert!(agg.iter().all(|r| r.mean_risk.is_finite() && r.mean_risk >= 0.0));

    let consecutive = ["-o", s(dir.path()), "corpus", "--format", "text", s(&text), "--ratio", "0.2", "--mode", "consecutive", "--trials", "1"];
    assert_eq!(run(&consecutive), 0);
    assert_eq!(run(&["-o", s(dir.path()), "corpus", "--format", "text", s(&text), "--ratio", "1.5"]), 4);
}
