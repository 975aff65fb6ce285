use std::fs;
use std::path::Path;

use bilevel_contracts::bench::{self, format_row, parse_row, BenchConfig, TRACE_HEADER};
use bilevel_contracts::{EnvId, EnvSpec, Error};
use proptest::prelude::*;

const GOLDEN_CONFIG: &str = include_str!("golden/hm_sampled.toml");
const GOLDEN_TRACE: &str = include_str!("golden/hm_sampled_trace.csv");

fn golden_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden"))
}

#[test]
fn golden_config_reproduces_golden_trace() {
    let cfg = BenchConfig::parse(GOLDEN_CONFIG).unwrap();
    let dir = tempfile::tempdir().unwrap();
    bench::run(&cfg, dir.path()).unwrap();
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace, GOLDEN_TRACE);
}

/// Regenerates the golden trace. Run only when the output format or the
/// solver changes on purpose.
#[test]
#[ignore]
fn regenerate_golden_trace() {
    let cfg = BenchConfig::parse(GOLDEN_CONFIG).unwrap();
    let dir = tempfile::tempdir().unwrap();
    bench::run(&cfg, dir.path()).unwrap();
    fs::copy(dir.path().join("trace.csv"), golden_dir().join("hm_sampled_trace.csv")).unwrap();
}

#[test]
fn summary_matches_last_trace_row() {
    let cfg = BenchConfig::parse(GOLDEN_CONFIG).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = bench::run(&cfg, dir.path()).unwrap();
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let last = trace.lines().last().unwrap();
    assert_eq!(summary, format!("{TRACE_HEADER}\n{last}\n"));
    assert_eq!(report.outcome.summary, *report.outcome.trace.rows.last().unwrap());
    assert!(report.outcome.summary.metrics.is_some());
}

#[test]
fn zero_steps_give_header_only_trace_and_initial_summary() {
    let cfg = BenchConfig::parse("[env]\nid = \"hm\"\n[solver]\nt_out = 0\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = bench::run(&cfg, dir.path()).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("trace.csv")).unwrap(), format!("{TRACE_HEADER}\n"));
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let row = parse_row(summary.lines().nth(1).unwrap()).unwrap();
    assert_eq!(row.step, 0);
    assert_eq!(row.hgrad_norm, None);
    assert_eq!(row, report.outcome.summary);
}

#[test]
fn missing_truth_leaves_metric_fields_empty() {
    let cfg = BenchConfig::parse("[env]\nid = \"hm\"\n[solver]\nt_out = 10\nlog_every = 5\n[run]\ntruth = \"none\"\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    bench::run(&cfg, dir.path()).unwrap();
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    for line in trace.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert!(fields[3..7].iter().all(|f| f.is_empty()), "{line}");
    }
}

#[test]
fn r_sweep_has_one_row_per_value() {
    let text = "[env]\nid = \"hm\"\n[solver]\nt_out = 20\nlog_every = 10\n\
                [sweep]\nparam = \"r\"\nvalues = [1e-3, 1e-2, 1e-1, 1, 10, 100]\n";
    let cfg = BenchConfig::parse(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let reports = bench::sweep(&cfg, dir.path()).unwrap();
    assert_eq!(reports.len(), 6);
    let table = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], bench::SWEEP_HEADER);
    assert_eq!(lines.len(), 7);
    for (line, v) in lines[1..].iter().zip([1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0]) {
        let value: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(value, v);
    }
    for i in 0..6 {
        assert!(dir.path().join(format!("trace_r_{i}.csv")).exists());
    }
}

#[test]
fn sigma_sweep_has_seven_rows() {
    let text = "[env]\nid = \"hm\"\n[solver]\nt_out = 5\nlog_every = 5\n\
                [sweep]\nparam = \"sigma\"\nvalues = [0.01, 0.1, 0.2, 0.4, 0.6, 0.8, 1]\n";
    let dir = tempfile::tempdir().unwrap();
    bench::sweep(&BenchConfig::parse(text).unwrap(), dir.path()).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("sweep.csv")).unwrap().lines().count(), 8);
}

#[test]
fn empty_sweep_is_header_only() {
    let text = "[env]\nid = \"hm\"\n[sweep]\nparam = \"r\"\nvalues = []\n";
    let dir = tempfile::tempdir().unwrap();
    bench::sweep(&BenchConfig::parse(text).unwrap(), dir.path()).unwrap();
    assert_eq!(
        fs::read_to_string(dir.path().join("sweep.csv")).unwrap(),
        format!("{}\n", bench::SWEEP_HEADER)
    );
}

#[test]
fn run_rejects_a_sweep_file() {
    let text = "[env]\nid = \"hm\"\n[sweep]\nparam = \"r\"\nvalues = [1]\n";
    let dir = tempfile::tempdir().unwrap();
    let err = bench::run(&BenchConfig::parse(text).unwrap(), dir.path()).unwrap_err();
    assert!(matches!(err, Error::ConfigKey { ref key, .. } if key == "sweep"));
}

#[test]
fn oracle_on_linear_slope_line_and_cache() {
    let text = "[env]\nid = \"hm\"\n[oracle]\ncontract_box = [[0, 2]]\naction_box = [0, 2]\n\
                contract_resolution = 401\naction_resolution = 401\neval_batch_size = 16\n";
    let cfg = BenchConfig::parse(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let truth = bench::oracle(&cfg, dir.path()).unwrap();
    let b_star = 1.0 / 1.01;
    assert!((truth.t_star[0] - b_star).abs() <= 5e-3);
    let csv = fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    assert!(csv.starts_with(bench::ORACLE_HEADER));
    assert!(dir.path().join("oracle_cache.tsv").exists());
    assert_eq!(bench::oracle(&cfg, dir.path()).unwrap(), truth);
}

#[test]
fn linear_oracle_needs_boxes() {
    let cfg = BenchConfig::parse("[env]\nid = \"two_signals\"\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = bench::oracle(&cfg, dir.path()).unwrap_err();
    assert!(matches!(err, Error::ConfigKey { ref key, .. } if key == "oracle.contract_box"));
}

#[test]
fn every_environment_parses_from_its_name() {
    for id in EnvId::ALL {
        let cfg = BenchConfig::parse(&format!("[env]\nid = \"{id}\"\n")).unwrap();
        assert_eq!(cfg.env, EnvSpec::new(id));
    }
}

fn opt_float() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![Just(None), any::<f64>().prop_filter("finite", |x| x.is_finite()).prop_map(Some)]
}

proptest! {
    #[test]
    fn trace_rows_round_trip(
        step in any::<u64>(),
        u1 in -1e300f64..1e300,
        u2 in any::<f64>().prop_filter("finite", |x| x.is_finite()),
        m in proptest::option::of(prop::array::uniform4(0.0f64..1e6)),
        hgrad in opt_float(),
        inner in 0usize..1000,
        cg in 0usize..1000,
        conv in proptest::option::of(any::<bool>()),
    ) {
        let row = bilevel_contracts::solver::TraceRow {
            step, u1, u2,
            metrics: m.map(|[err_a, err_t, gap_u1, gap_u2]| bilevel_contracts::Metrics { err_a, err_t, gap_u1, gap_u2 }),
            hgrad_norm: hgrad,
            inner_iters: inner,
            cg_iters: cg,
            cg_converged: conv,
        };
        let line = format_row(&row);
        prop_assert_eq!(line.split(',').count(), TRACE_HEADER.split(',').count());
        prop_assert_eq!(parse_row(&line).unwrap(), row);
    }
}
