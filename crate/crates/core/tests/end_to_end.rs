use mpc_query::fixtures;
use mpc_query::orchestrator::{verify, VerifyOptions};

fn check(text: &str, trials: usize) {
    let dag = fixtures::load(text);
    let opts = VerifyOptions { trials, seed: 7, max_rows: 30, large_rows: 200 };
    let report = verify(&dag, opts).unwrap();
    for t in &report.trials {
        assert!(t.failure.is_none(), "trial {}: {}", t.trial, t.failure.as_ref().unwrap());
    }
}

#[test]
fn credit_scores_matches_oracle() {
    check(fixtures::CREDIT_SCORES, 10);
}

#[test]
fn market_concentration_matches_oracle() {
    check(fixtures::MARKET_CONCENTRATION, 10);
}

#[test]
fn aspirin_count_matches_oracle() {
    check(fixtures::ASPIRIN_COUNT, 10);
}

#[test]
fn comorbidity_matches_oracle() {
    check(fixtures::COMORBIDITY, 10);
}

#[test]
fn cost_model_matches_engine_counters() {
    use mpc_query::orchestrator::{gen, run};
    use mpc_query::plan::estimate_cost;
    use mpc_query::rewrite::{compile, CompileOptions};
    use rand::SeedableRng;

    for (name, text) in fixtures::ALL {
        for rewrites in [true, false] {
            let dag = fixtures::load(text);
            let compiled = compile(&dag, CompileOptions { rewrites }).unwrap().dag;
            for per_party in [0, 1, 5, 40] {
                let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(per_party as u64);
                let rows = gen::rows_per_input(&dag, per_party, &mut rng);
                let inputs = gen::generate_inputs(&dag, &rows, &mut rng);
                let result = run(&compiled, &inputs, 3).unwrap();
                let est = estimate_cost(&compiled, &result.rows);
                assert_eq!(est.per_node, result.per_node, "{name} rewrites={rewrites} rows={per_party}");
                assert_eq!(est.total, result.counters, "{name} rewrites={rewrites} rows={per_party}");
            }
        }
    }
}
