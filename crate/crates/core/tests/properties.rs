use polyagraph::dynamics::{jacobian, lyapunov, lyapunov_gradient, vector_field, SimplexPoint};
use polyagraph::urn::{simulate, CheckpointSchedule, RngSpec};
use polyagraph::{Family, Graph, Model, UrnState};
use proptest::prelude::*;

fn families() -> impl Strategy<Value = Family> {
    prop_oneof![
        (2usize..7).prop_map(Family::Complete),
        (3usize..8).prop_map(Family::Cycle),
        (2usize..7).prop_map(Family::Path),
        (3usize..7).prop_map(Family::Star),
        (1usize..4, 1usize..4).prop_map(|(a, b)| Family::CompleteBipartite(a, b)),
    ]
}

fn model_and_point() -> impl Strategy<Value = (Model, Vec<f64>)> {
    (families(), 0.2f64..3.0).prop_flat_map(|(f, alpha)| {
        let m = f.vertex_count();
        (
            Just(Model::uniform(Graph::generate(&f).unwrap(), alpha).unwrap()),
            prop::collection::vec(0.05f64..1.0, m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_is_tangent_and_matches_gradient((model, raw) in model_and_point()) {
        let x = SimplexPoint::normalized(raw).unwrap().into_coords();
        let f = vector_field(&model, &x).unwrap();
        let g = lyapunov_gradient(&model, &x).unwrap();
        prop_assert!(f.iter().sum::<f64>().abs() < 1e-12);
        for i in 0..x.len() {
            prop_assert!((f[i] - x[i] * g[i]).abs() < 1e-12);
        }
        // F increases L: dL/dt = sum x_i g_i^2 >= 0.
        let rate: f64 = g.iter().zip(&f).map(|(a, b)| a * b).sum();
        prop_assert!(rate >= -1e-12);
    }

    #[test]
    fn gradient_consistent_with_lyapunov((model, raw) in model_and_point()) {
        let x = SimplexPoint::normalized(raw).unwrap().into_coords();
        let g = lyapunov_gradient(&model, &x).unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let mut up = x.clone();
            up[i] += h;
            let mut down = x.clone();
            down[i] -= h;
            let fd = (lyapunov(&model, &up).unwrap() - lyapunov(&model, &down).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() < 1e-6 * g[i].abs().max(1.0));
        }
    }

    #[test]
    fn jacobian_columns_sum_to_minus_one((model, raw) in model_and_point()) {
        // Win shares of each competition sum to 1 everywhere, so sum_i F_i = 1 - sum_i x_i
        // and every column of the Jacobian sums to -1.
        let x = SimplexPoint::normalized(raw).unwrap().into_coords();
        let j = jacobian(&model, &x).unwrap();
        for c in 0..x.len() {
            let s: f64 = (0..x.len()).map(|r| j[(r, c)]).sum();
            prop_assert!((s + 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn simulation_is_deterministic(f in families(), seed in any::<u64>(), trial in 0u64..100) {
        let model = Model::uniform(Graph::generate(&f).unwrap(), 1.5).unwrap();
        let run = || {
            let mut rng = RngSpec::new(seed, trial).rng();
            simulate(&model, UrnState::ones(&model), 300, &mut rng, &CheckpointSchedule::default())
                .unwrap()
        };
        let (a, b) = (run(), run());
        prop_assert_eq!(&a.final_state, &b.final_state);
        let added = a.final_state.total() - a.final_state.initial_total;
        prop_assert_eq!(added, 300 * model.competition_count() as u64);
    }
}
