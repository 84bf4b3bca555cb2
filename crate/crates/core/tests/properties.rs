use nalgebra::{DMatrix, DVector};
use rand::Rng;

use netab::balance::compute_covariates;
use netab::estimation::Estimator;
use netab::harness::{aggregate, r_squared_pseudo, run_experiment, ExperimentConfig, NetworkSource, SchemeSpec};
use netab::ingest::{label_propagation, DEFAULT_MAX_ITERS};
use netab::outcome::{simulate_pseudo_responses, ResponseParams};
use netab::randomization::crc;
use netab::rng::seeded;
use netab::synth::{assemble_network, SynthConfig};
use netab::Graph;

/// Residuals of `v` after projecting out the columns of `basis`, via SVD.
fn residualize(basis: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let coef = basis.clone().svd(true, true).solve(v, 1e-12).unwrap();
    v - basis * coef
}

#[test]
fn r_squared_matches_partial_correlation_oracle() {
    let net = assemble_network(
        &SynthConfig {
            clusters: 300,
            reconnect_rate: 0.5,
            ..Default::default()
        },
        &mut seeded(1),
    )
    .unwrap();
    let x = compute_covariates(&net.graph, &net.partition).unwrap();
    let params = ResponseParams {
        beta: vec![1.0; 4],
        sigma_eps: 2.0,
        ..Default::default()
    };
    for seed in 0..5 {
        let mut rng = seeded(10 + seed);
        let t = crc(x.num_clusters(), &mut rng).unwrap();
        let y = simulate_pseudo_responses(&x, &t, &params, &mut rng).unwrap();
        let got = r_squared_pseudo(&x, &t, &y).unwrap();

        // Frisch-Waugh: regress the (1, T)-residuals of Y* on the
        // (1, T)-residuals of X; R² of that regression is the answer.
        let m = x.num_clusters();
        let base = DMatrix::from_fn(m, 2, |j, k| if k == 0 { 1.0 } else { f64::from(u8::from(t[j])) });
        let ry = residualize(&base, &DVector::from_column_slice(&y));
        let rx = DMatrix::from_columns(
            &(0..4)
                .map(|k| residualize(&base, &DVector::from_fn(m, |j, _| x.row(j)[k])))
                .collect::<Vec<_>>(),
        );
        let fit = &rx * rx.clone().svd(true, true).solve(&ry, 1e-12).unwrap();
        let expected = fit.norm_squared() / ry.norm_squared();
        assert!((got - expected).abs() < 1e-8, "seed {seed}: {got} vs {expected}");
    }
}

#[test]
fn standard_deviation_falls_with_more_balanced_covariates() {
    let params = ResponseParams {
        beta: vec![1.0; 4],
        sigma_eps: 2.0,
        ..Default::default()
    }
    .with_alpha(1.0);
    let cfg = ExperimentConfig {
        schemes: vec![SchemeSpec::Crc, SchemeSpec::Car(2), SchemeSpec::Car(4)],
        estimators: vec![Estimator::Cae],
        replications: 400,
        master_seed: 17,
        ..ExperimentConfig::new(
            NetworkSource::Synthetic(SynthConfig {
                clusters: 200,
                reconnect_rate: 0.5,
                ..Default::default()
            }),
            params,
        )
    };
    let s = aggregate(cfg.params.tau(), &run_experiment(&cfg, None).unwrap());
    let sd = |scheme| s.cell(scheme, Estimator::Cae).unwrap().sd.unwrap();
    // s.e. of a sample s.d. is about sd / sqrt(2 (R - 1)).
    let se = |v: f64| v / (2.0 * (cfg.replications as f64 - 1.0)).sqrt();
    let (crc, car2, car4) = (sd(SchemeSpec::Crc), sd(SchemeSpec::Car(2)), sd(SchemeSpec::Car(4)));
    assert!(car2 - car4 > 3.0 * se(car2).hypot(se(car4)), "{car4} vs {car2}");
    assert!(crc - car2 > 3.0 * se(crc).hypot(se(car2)), "{car2} vs {crc}");
}

#[test]
fn label_propagation_keeps_isolated_vertices_alone() {
    let mut rng = seeded(4);
    let n = 60;
    let edges: Vec<(usize, usize)> = (0..80)
        .map(|_| (rng.random_range(0..40), rng.random_range(0..40)))
        .collect();
    // Vertices 40..60 have no edges.
    let g = Graph::new(n, edges).unwrap();
    let lp = label_propagation(&g, &mut seeded(0), DEFAULT_MAX_ITERS).unwrap();
    for i in 40..n {
        assert_eq!(lp.partition.members(lp.partition.label(i)), &[i]);
    }
    // Every cluster induces a connected subgraph.
    for j in 0..lp.partition.num_clusters() {
        let members = lp.partition.members(j);
        let mut seen = vec![members[0]];
        let mut k = 0;
        while k < seen.len() {
            let v = seen[k];
            for &w in g.neighbors(v) {
                if lp.partition.label(w) == j && !seen.contains(&w) {
                    seen.push(w);
                }
            }
            k += 1;
        }
        assert_eq!(seen.len(), members.len(), "cluster {j}");
    }
}

#[test]
fn no_interference_no_noise_every_estimator_is_exact() {
    let params = ResponseParams {
        beta: vec![0.0; 4],
        sigma_eps: 0.0,
        ..Default::default()
    };
    let cfg = ExperimentConfig {
        replications: 10,
        ..ExperimentConfig::new(
            NetworkSource::Synthetic(SynthConfig {
                clusters: 30,
                ..Default::default()
            }),
            params,
        )
    };
    for r in run_experiment(&cfg, None).unwrap() {
        assert_eq!(r.tau_hat, Some(1.0), "{r:?}");
    }
}
