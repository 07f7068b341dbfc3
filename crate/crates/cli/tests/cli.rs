use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use pcc::dist::block_rng;
use pcc::estimate::ranks_to_pseudo_obs;
use pcc::family::{CopulaFamily, TailLink};
use pcc::garch::{simulate_ar_garch, GarchParams};
use pcc::pcc::PccModel;
use pcc::risk::mdi_count;
use rand_distr::{Distribution, StandardNormal};

fn pcc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcc")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let o = pcc(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_numbers(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect::<Vec<_>>();
    let skip = usize::from(header[0] == "date");
    let rows = lines.map(|l| l.split(',').skip(skip).map(|c| c.parse().unwrap()).collect()).collect();
    (header, rows)
}

/// Five correlated GARCH return series with weekly dates.
fn write_returns(dir: &Path, n: usize) -> PathBuf {
    let d = 5;
    let rho = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.5 });
    let spec = CopulaFamily::Td.spec(d, &[6.0], TailLink::Equal).unwrap();
    let u = PccModel::new(&rho, spec, None).unwrap().simulate(n, 3);
    let g = GarchParams { delta: 0.05, phi: 0.03, omega: 0.2, alpha: 0.1, beta: 0.85 };
    let mut out = String::from("date,A,B,C,D,E\n");
    let start = chrono::NaiveDate::from_ymd_opt(1998, 1, 2).unwrap();
    let mut s2 = vec![g.omega / (1.0 - g.alpha - g.beta); d];
    let mut e = vec![0.0f64; d];
    for t in 0..n {
        out.push_str(&(start + chrono::Days::new(7 * t as u64)).format("%Y-%m-%d").to_string());
        for j in 0..d {
            s2[j] = g.omega + g.alpha * e[j] * e[j] + g.beta * s2[j];
            e[j] = s2[j].sqrt() * pcc::special::norm_ppf(u.u[t * d + j]);
            out.push_str(&format!(",{:?}", g.delta + e[j]));
        }
        out.push('\n');
    }
    let p = dir.join("returns.csv");
    std::fs::write(&p, out).unwrap();
    p
}

#[test]
fn filter_fit_simulate_risk_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let returns = write_returns(out, 600);
    ok(&["filter", s(&returns), "--out-dir", s(out)]);
    let (header, resid) = read_numbers(&out.join("residuals.csv"));
    assert_eq!(header, ["date", "A", "B", "C", "D", "E"]);
    assert_eq!(resid.len(), 599);
    let params: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("garch_params.json")).unwrap()).unwrap();
    assert_eq!(params.as_array().unwrap().len(), 5);
    assert!(params[0]["params"]["beta"].as_f64().unwrap() > 0.5);

    let residuals = out.join("residuals.csv");
    for fam in ["gauss", "t"] {
        let fd = out.join(fam);
        ok(&["fit", s(&residuals), "--family", fam, "--out-dir", s(&fd)]);
        let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(fd.join("fit_report.json")).unwrap()).unwrap();
        assert!(rep["loglik"].as_f64().unwrap() > 0.0);
    }
    let t_model = out.join("t/model.json");
    let first = std::fs::read(&t_model).unwrap();
    ok(&["fit", s(&residuals), "--family", "t", "--out-dir", s(&out.join("t"))]);
    assert_eq!(first, std::fs::read(&t_model).unwrap(), "refit must be byte-identical");

    ok(&["simulate", s(&t_model), "-n", "2000", "--seed", "5", "--out-dir", s(out)]);
    let (sh, sample) = read_numbers(&out.join("sample.csv"));
    assert_eq!(sh, ["u1", "u2", "u3", "u4", "u5"]);
    let model = PccModel::from_json(&String::from_utf8(first).unwrap()).unwrap();
    let direct = model.simulate(2000, 5);
    let parsed: Vec<f64> = sample.concat();
    assert_eq!(parsed, direct.u, "sample.csv must round-trip exactly");

    let gauss_model = out.join("gauss/model.json");
    ok(&["risk", s(&residuals), "--model", s(&gauss_model), "--model", &format!("student={}", s(&t_model)), "--out-dir", s(out)]);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("distress_report.json")).unwrap()).unwrap();
    let cells = report["cells"].as_array().unwrap();
    assert!(cells.iter().any(|c| c["model"] == "gauss") && cells.iter().any(|c| c["model"] == "student"));
    let rt: Vec<f64> = resid.concat();
    let u = ranks_to_pseudo_obs(&rt, 599, 5).unwrap();
    let want = mdi_count(&u, 0.2, 5, &[0, 1, 2, 3, 4]).unwrap();
    let cell = cells.iter().find(|c| c["model"] == "empirical" && c["axis"] == "test" && c["q"] == 0.2 && c["k"] == 5).unwrap();
    assert_eq!(cell["count"].as_u64().unwrap() as usize, want);
    let csv = std::fs::read_to_string(out.join("distress_report.csv")).unwrap();
    assert!(csv.starts_with("model,axis,q,k,d,mdf,count,p_value,band_lo,band_hi"));
    assert!(std::fs::read_to_string(out.join("cpjqe.csv")).unwrap().starts_with("source,i,j,q,eta"));

    let o = ok(&["report", s(&out.join("gauss/fit_report.json")), s(&out.join("t/fit_report.json")), "--out-dir", s(out)]);
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("Gauss") && table.contains("t_d"));
    assert!(std::fs::read_to_string(out.join("criteria.csv")).unwrap().lines().count() == 3);
}

#[test]
fn simulate_is_uniform_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let rho = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.4 });
    let spec = CopulaFamily::SkewT1Td1.spec(3, &[8.0, -1.0], TailLink::Equal).unwrap();
    let m = dir.path().join("m.json");
    std::fs::write(&m, PccModel::new(&rho, spec, None).unwrap().to_json().unwrap()).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["simulate", s(&m), "-n", "100000", "--seed", "9", "--out-dir", s(&a)]);
    ok(&["simulate", s(&m), "-n", "100000", "--seed", "9", "--out-dir", s(&b)]);
    let bytes = std::fs::read(a.join("sample.csv")).unwrap();
    assert_eq!(bytes, std::fs::read(b.join("sample.csv")).unwrap());
    let (_, rows) = read_numbers(&a.join("sample.csv"));
    for j in 0..3 {
        let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        col.sort_by(f64::total_cmp);
        let n = col.len() as f64;
        let ks = col.iter().enumerate().map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs())).fold(0.0, f64::max);
        assert!(ks < 0.01, "column {j} KS {ks}");
        assert!(col[0] > 0.0 && col[col.len() - 1] < 1.0);
    }
}

#[test]
fn filtering_white_noise_is_nearly_identity() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = block_rng(4, 0);
    let n = 2000;
    let mut text = String::from("date,X\n");
    let mut xs = Vec::new();
    let start = chrono::NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
    for t in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        xs.push(z);
        text.push_str(&format!("{},{z:?}\n", (start + chrono::Days::new(t)).format("%Y-%m-%d")));
    }
    let input = dir.path().join("wn.csv");
    std::fs::write(&input, text).unwrap();
    ok(&["filter", s(&input), "--out-dir", s(dir.path())]);
    let (_, rows) = read_numbers(&dir.path().join("residuals.csv"));
    let mad = rows.iter().zip(&xs[1..]).map(|(r, x)| (r[0] - x).abs()).sum::<f64>() / rows.len() as f64;
    assert!(mad < 0.05, "mean |change| {mad}");
}

#[test]
fn hb_n_pair_tail_report() {
    let dir = tempfile::tempdir().unwrap();
    let rho = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
    let spec = CopulaFamily::HbN.spec(2, &[2.0, -1.0], TailLink::Equal).unwrap();
    let m = dir.path().join("hb.json");
    std::fs::write(&m, PccModel::new(&rho, spec, None).unwrap().to_json().unwrap()).unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[cpjqe]\nn_sim = 20000\nq_grid = [0.05, 0.1, 0.2]\n").unwrap();
    ok(&["tail", s(&m), "--config", s(&cfg), "--out-dir", s(dir.path())]);
    let t: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("tail.json")).unwrap()).unwrap();
    let (a, num) = (t["analytic"].as_f64().unwrap(), t["numeric_limit"].as_f64().unwrap());
    assert!((a - num).abs() < 0.02, "{a} vs {num}");
    let curve = std::fs::read_to_string(dir.path().join("cpjqe.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let returns = write_returns(p, 300);

    let o = pcc(&["fit", s(&returns), "--family", "nonsense", "--out-dir", s(p)]);
    assert_eq!(o.status.code(), Some(2));

    let bad_cfg = p.join("bad.toml");
    std::fs::write(&bad_cfg, "seeed = 3\n").unwrap();
    assert_eq!(pcc(&["filter", s(&returns), "--config", s(&bad_cfg)]).status.code(), Some(2));

    let text = std::fs::read_to_string(&returns).unwrap();
    let broken: String = text
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 7 { l.replacen(',', ",x", 1) } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    let bad = p.join("bad.csv");
    std::fs::write(&bad, broken).unwrap();
    let o = pcc(&["filter", s(&bad), "--out-dir", s(p)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 8"));

    let constant: String = text
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 0 { l.to_string() } else { format!("{},1.5", l.rsplit_once(',').unwrap().0) })
        .collect::<Vec<_>>()
        .join("\n");
    let cp = p.join("const.csv");
    std::fs::write(&cp, constant).unwrap();
    let o = pcc(&["filter", s(&cp), "--out-dir", s(p)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degenerate"));

    let corrupt = p.join("model.json");
    std::fs::write(&corrupt, "{\"version\": 1, \"d\": 2}").unwrap();
    assert_eq!(pcc(&["simulate", s(&corrupt), "--out-dir", s(p)]).status.code(), Some(3));

    // a one-evaluation budget cannot converge
    let tight = p.join("tight.toml");
    std::fs::write(&tight, "[fit]\nmax_iterations = 1\nmax_evals = 3\nrestarts = 0\npolish_steps = 0\n").unwrap();
    let o = pcc(&["fit", s(&returns), "--family", "skew-t1-td-1", "--config", s(&tight), "--out-dir", s(p)]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    // the unconverged model must not replace what is already there
    assert_eq!(std::fs::read_to_string(&corrupt).unwrap(), "{\"version\": 1, \"d\": 2}");
    ok(&["fit", s(&returns), "--family", "skew-t1-td-1", "--config", s(&tight), "--allow-nonconverged", "--out-dir", s(&p.join("kept"))]);
    assert!(p.join("kept/model.json").exists());
}

#[test]
fn garch_filter_recovers_simulated_returns() {
    let dir = tempfile::tempdir().unwrap();
    let g = GarchParams { delta: 0.0, phi: -0.05, omega: 0.01, alpha: 0.1, beta: 0.8 };
    let r = simulate_ar_garch(&g, 3000, 8).unwrap();
    let mut text = String::from("date,R\n");
    let start = chrono::NaiveDate::from_ymd_opt(2000, 1, 7).unwrap();
    for (t, v) in r.iter().enumerate() {
        text.push_str(&format!("{},{v:?}\n", (start + chrono::Days::new(7 * t as u64)).format("%Y-%m-%d")));
    }
    let input = dir.path().join("r.csv");
    std::fs::write(&input, text).unwrap();
    ok(&["filter", s(&input), "--out-dir", s(dir.path())]);
    let params: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("garch_params.json")).unwrap()).unwrap();
    let p = &params[0]["params"];
    assert!((p["alpha"].as_f64().unwrap() - 0.1).abs() < 0.05);
    assert!((p["beta"].as_f64().unwrap() - 0.8).abs() < 0.1);
}
