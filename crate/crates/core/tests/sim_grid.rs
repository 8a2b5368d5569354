use bct::sim::{self, SimDesign};

#[test]
fn true_hypothesis_probability_grows_with_n() {
    let design = SimDesign {
        rho_grid: vec![0.6, -0.6],
        sample_sizes: vec![30, 100, 500],
        replications: 10,
        seed: 3,
        ..SimDesign::default()
    };
    let rows = sim::run_consistency_grid(&design, &|_| {}).unwrap();
    for r in &rows {
        assert!((r.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
    for (rho, truth) in [(0.6, 1usize), (-0.6, 2)] {
        let mut previous: Option<(f64, f64)> = None;
        for &n in &design.sample_sizes {
            let p: Vec<f64> = rows
                .iter()
                .filter(|r| r.rho == rho && r.n == n)
                .map(|r| r.probabilities[truth])
                .collect();
            let k = p.len() as f64;
            let mean = p.iter().sum::<f64>() / k;
            let se = (p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt();
            if let Some((m0, se0)) = previous {
                let allowance = 2.0 * (se * se + se0 * se0).sqrt();
                assert!(mean >= m0 - allowance, "rho {rho}, n {n}: {mean:.3} after {m0:.3} (allowance {allowance:.3})");
            }
            previous = Some((mean, se));
        }
    }
}
