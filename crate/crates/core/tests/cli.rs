use std::fs;
use std::path::Path;
use std::process::Command;

use bct::io;
use bct::sim::ProbitDesign;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const INPUT: &str = include_str!("fixtures/BCT_input.txt");

fn bct() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bct"))
}

/// Writes an input file for a 3-outcome model without covariates and a
/// matching data file of `n` rows.
fn write_inputs(dir: &Path, n: usize, header: bool) {
    let mut config = io::parse_input_file(INPUT).unwrap();
    config.covariates = 0;
    config.n_total = n;
    config.header = header;
    config.prior_draws = 20_000;
    config.posterior_draws = 2000;
    fs::write(dir.join(io::INPUT_FILE), config.to_input_text()).unwrap();

    let design = ProbitDesign {
        intercepts: vec![0.0; 3],
        sigma: vec![1.5],
        correlation: DMatrix::from_row_slice(3, 3, &[1.0, 0.6, 0.2, 0.6, 1.0, 0.1, 0.2, 0.1, 1.0]),
        thresholds: vec![vec![-0.5, 0.5], vec![0.0]],
    };
    let (_, data) = design.generate(n, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let g = &data.groups()[0];
    let mut text = if header { "v u1 u2 group\n".to_string() } else { String::new() };
    for i in 0..n {
        text.push_str(&format!("{:.4} {} {} 1\n", g.continuous[(i, 0)], g.ordinal[0][i], g.ordinal[1][i]));
    }
    fs::write(dir.join(io::DATA_FILE), text).unwrap();
}

#[test]
fn valid_run_writes_four_files() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), 80, true);
    let out = bct()
        .current_dir(dir.path())
        .args(["--burn-in", "300", "--quiet"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in [io::OUTPUT_FILE, io::REL_COMP_FILE, io::REL_FIT_FILE, io::ESTIMATES_FILE] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let probs = io::read_probabilities(&fs::read_to_string(dir.path().join(io::OUTPUT_FILE)).unwrap()).unwrap();
    assert_eq!(probs.len(), 3);
    let total: f64 = probs.iter().map(|p| p.1).sum();
    assert!((total - 1.0).abs() < 2e-4);
    let comp = io::read_triples(&fs::read_to_string(dir.path().join(io::REL_COMP_FILE)).unwrap()).unwrap();
    for (_, [rc, e, i]) in &comp {
        assert!((rc - e * i).abs() < 1e-5);
    }
}

#[test]
fn paths_and_chains_flags() {
    let inputs = tempfile::tempdir().unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    write_inputs(inputs.path(), 60, false);
    let out = bct()
        .arg("--input")
        .arg(inputs.path().join(io::INPUT_FILE))
        .arg("--data")
        .arg(inputs.path().join(io::DATA_FILE))
        .arg("--outdir")
        .arg(out_dir.path())
        .args(["--chains", "2", "--burn-in", "200", "--crlf"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("chain 2:"), "{stderr}");
    let text = fs::read_to_string(out_dir.path().join(io::ESTIMATES_FILE)).unwrap();
    assert!(text.starts_with("Estimates were obtained under the unconstrained model\r\n"));
    assert!(!inputs.path().join(io::OUTPUT_FILE).exists());
}

#[test]
fn missing_data_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), 60, false);
    let missing = dir.path().join("nope.txt");
    let out = bct().current_dir(dir.path()).arg("--data").arg(&missing).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nope.txt"), "{stderr}");
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
}

#[test]
fn malformed_input_exits_1_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), 60, false);
    let input = fs::read_to_string(dir.path().join(io::INPUT_FILE)).unwrap();
    fs::write(dir.path().join(io::INPUT_FILE), input.replace("0 1 1\n", "0 1 q\n")).unwrap();
    let out = bct().current_dir(dir.path()).arg("--quiet").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("BCT_input.txt:6:"), "{stderr}");
}

#[test]
fn sim_binary_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("grid.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_bct-sim"))
        .args(["--rho", "-0.3,0.3", "--n", "100", "--replications", "1", "--burn-in", "200"])
        .args(["--draws", "1000", "--prior-draws", "20000", "--quiet", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rho,n,replication,p_H1,p_H2,p_H3");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("-0.3,100,1,"));
    for line in &lines[1..] {
        let p: f64 = line.split(',').skip(3).map(|x| x.parse::<f64>().unwrap()).sum();
        assert!((p - 1.0).abs() < 1e-5);
    }
}
