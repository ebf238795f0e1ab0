use gwpva::datasets;
use gwpva::inference::{posterior_mean_matrix, posterior_update, prior_noninformative};
use gwpva::io::{parse_life_table, parse_prior_config, write_life_table, PosteriorDocument};
use gwpva::model::{abundances_from_table, PopulationState};
use gwpva::montecarlo::{McConfig, PosteriorSample};
use gwpva::sampling::{simulate, SeedSpec};
use gwpva::spectral::perron_triple;

#[test]
fn csv_prior_and_document_agree_with_library_path() {
    let csv = write_life_table(&datasets::synthetic_learning_table());
    let table = parse_life_table(&csv, None).unwrap();
    let prior = parse_prior_config(
        r#"{"format_version":1,"types":1,"pairs":[{"from":1,"to":1,"kind":"categorical","kappa":4,"rule":"flat"}]}"#,
    )
    .unwrap();
    let post = posterior_update(&prior.hyper, &table).unwrap();
    let direct = posterior_update(
        &prior_noninformative(&datasets::synthetic_cap()),
        &datasets::synthetic_learning_table(),
    )
    .unwrap();
    assert_eq!(post, direct);
    let text = PosteriorDocument::new(&post).to_json().unwrap();
    assert_eq!(PosteriorDocument::from_json(&text).unwrap().posterior().unwrap(), post);
}

#[test]
fn learning_table_abundances() {
    let totals: Vec<u64> = abundances_from_table(&datasets::synthetic_learning_table())
        .unwrap()
        .iter()
        .map(PopulationState::total)
        .collect();
    assert_eq!(totals, vec![100, 75, 59, 43, 33, 22]);
}

#[test]
fn bear_growth_rate_solves_characteristic_polynomial() {
    let post = posterior_update(
        &prior_noninformative(&datasets::bear_cap()),
        &datasets::bear_aggregate_table(),
    )
    .unwrap();
    let m = posterior_mean_matrix(&post);
    let lambda = perron_triple(&m).unwrap().lambda;
    let survival: f64 = (0..4).map(|i| m.at(i, i + 1)).product();
    let poly = -lambda.powi(5) + lambda.powi(4) * m.at(4, 4) + m.at(4, 0) * survival;
    assert!(poly.abs() <= 1e-9, "{poly}");
    assert!(lambda > 1.0);
}

#[test]
fn simulated_table_feeds_back_into_inference() {
    let truth = datasets::synthetic_true_draw();
    let traj = simulate(&truth, &PopulationState::at_zero(vec![100]), 5, &SeedSpec::new(5, 0)).unwrap();
    let text = write_life_table(&traj.transitions);
    let table = parse_life_table(&text, Some(1)).unwrap();
    assert_eq!(table, traj.transitions);
    let post = posterior_update(&prior_noninformative(&datasets::synthetic_cap()), &table).unwrap();
    let e = PosteriorSample::draw(&post, McConfig::new(500, 1)).unwrap().viability();
    assert!(e.value < 0.5);
    assert_eq!((e.n_prec, e.master_seed), (500, 1));
}

#[test]
fn growth_rate_matches_dense_eigensolver() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    for _ in 0..300 {
        let k = rng.random_range(2..=6);
        let data: Vec<f64> = (0..k * k)
            .map(|_| if rng.random_bool(0.6) { rng.random_range(0.0..2.0) } else { 0.0 })
            .collect();
        let rows: Vec<Vec<f64>> = data.chunks(k).map(<[f64]>::to_vec).collect();
        let m = gwpva::matrix::Matrix::from_rows(&rows).unwrap();
        if m.is_zero() {
            continue;
        }
        let triple = perron_triple(&m).unwrap();
        let spectral_radius = nalgebra::DMatrix::from_row_slice(k, k, &data)
            .complex_eigenvalues()
            .iter()
            .fold(0.0f64, |a, z| a.max(z.norm()));
        assert!(
            (triple.lambda - spectral_radius).abs() <= 1e-8 * spectral_radius.max(1.0),
            "{} vs {spectral_radius}",
            triple.lambda
        );
    }
}
