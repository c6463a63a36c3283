use std::fs;
use std::process::{Command, Output};

fn xxz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xxz"))
        .args(args)
        .env_remove("XXZ_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

#[test]
fn solve_reports_dressed_quantities() {
    let out = xxz(&["solve", "--zeta", "0.1065pi", "--q", "0.2", "--J", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["density"].as_f64().unwrap() - 0.4187).abs() < 5e-4);
    for key in ["q", "h", "p_fermi", "v_fermi", "v_inf", "z_q"] {
        assert!(v[key].as_f64().unwrap().is_finite(), "{key}");
    }
}

#[test]
fn reals_carry_seventeen_significant_digits() {
    let out = xxz(&["solve", "--zeta", "0.3pi", "--q", "0.5", "--order", "32", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "zeta,J,order,q,h,p_F,v_F,v_inf,Z_q,D,m");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 11);
    let mantissa = row[4].split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{}", row[4]);
}

#[test]
fn strings_catalogue_as_csv() {
    let out = xxz(&["strings", "--zeta", "0.45pi", "--rmax", "8", "--order", "32", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "r,exists,sigma,sgn_p_prime,regime");
    assert_eq!(rows.len(), 9);
    assert!(rows[2].starts_with("2,1,0,1,"));
    assert!(rows[4].starts_with("4,0,,,"));
}

#[test]
fn conflicting_field_and_endpoint_is_a_usage_error() {
    let out = xxz(&["solve", "--zeta", "0.3pi", "--q", "0.5", "--h", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");
}

#[test]
fn unknown_flag_and_missing_input_exit_two() {
    assert_eq!(xxz(&["solve", "--nope"]).status.code(), Some(2));
    let out = xxz(&["solve", "--q", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["exit_code"], 2);
}

#[test]
fn velocity_in_guard_band_exits_two() {
    let solved = json(&xxz(&["solve", "--zeta", "0.3pi", "--q", "0.5", "--order", "32"]));
    let v_inf = solved["v_inf"].as_f64().unwrap().to_string();
    let out = xxz(&["saddles", "--zeta", "0.3pi", "--q", "0.5", "--order", "32", "--v", &v_inf]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "near-critical");
}

#[test]
fn numerical_failure_exits_three() {
    // Two nodes cannot resolve the zone: the density cross-check fails.
    let out = xxz(&["solve", "--zeta", "0.3pi", "--q", "0.5", "--order", "2"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "consistency-failure");
}

#[test]
fn negative_values_are_parsed_and_validated() {
    let out = xxz(&["solve", "--zeta", "0.3pi", "--h", "-5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "invalid-argument");
}

#[test]
fn saddles_and_exponents() {
    let out = xxz(&["saddles", "--zeta", "0.3pi", "--q", "0.5", "--order", "48", "--v", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert!(report["lines"].as_array().unwrap().len() >= 2);
    let out = xxz(&["exponents", "--zeta", "0.3pi", "--q", "0.5", "--order", "48", "--v", "0.5", "--bound", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let terms = json(&out);
    let terms = terms.as_array().unwrap();
    assert_eq!(terms[0]["total_exponent"].as_f64().unwrap(), 0.0);
    let exps: Vec<f64> = terms.iter().map(|t| t["total_exponent"].as_f64().unwrap()).collect();
    assert!(exps.windows(2).all(|w| w[0] <= w[1] + 1e-10));
}

#[test]
fn velocities_emit_curves() {
    let out = xxz(&["velocities", "--zeta", "0.3pi", "--q", "0.5", "--order", "32", "--rmax", "3", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("species,r,offset,lambda,velocity\n"));
    assert!(text.lines().count() > 200);
}

#[test]
fn quick_verification_passes() {
    let out = xxz(&["verify", "--suite", "quick"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let records = json(&out);
    let records = records.as_array().unwrap();
    assert!(records.iter().all(|r| r["pass"] == true));
    assert!(records.iter().any(|r| r["identity"] == "contour_n2"));
}

#[test]
fn config_file_with_flag_override_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    fs::write(&config, "# experiment\nzeta = 0.3pi\nq = 0.9\norder = 32\n").unwrap();
    let cache = dir.path().join("cache");
    let cache = cache.to_str().unwrap();
    let config = config.to_str().unwrap();
    let args = ["solve", "--config", config, "--q", "0.5", "--cache-dir", cache];
    let first = xxz(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(json(&first)["q"].as_f64().unwrap(), 0.5);
    assert_eq!(json(&first)["order"].as_u64().unwrap(), 32);
    let second = xxz(&args);
    assert_eq!(first.stdout, second.stdout, "cached rerun is byte-identical");

    let listed = xxz(&["cache", "list", "--cache-dir", cache]);
    assert_eq!(listed.status.code(), Some(0));
    assert!(!json(&listed).as_array().unwrap().is_empty());
    let cleared = xxz(&["cache", "clear", "--cache-dir", cache]);
    assert!(json(&cleared)["removed"].as_u64().unwrap() > 0);
    let listed = xxz(&["cache", "list", "--cache-dir", cache]);
    assert!(json(&listed).as_array().unwrap().is_empty());
}

#[test]
fn output_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("solve.json");
    let args = ["solve", "--zeta", "0.6pi", "--q", "0.4", "--order", "32"];
    let stdout = xxz(&args).stdout;
    let mut with_out = args.to_vec();
    let p = path.to_str().unwrap();
    with_out.extend(["--out", p]);
    assert_eq!(xxz(&with_out).status.code(), Some(0));
    assert_eq!(fs::read(&path).unwrap(), stdout);
}
