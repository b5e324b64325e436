use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;

use qsd_core::bath::{DiscreteBathSpec, KernelHandle};
use qsd_core::jc::solve_lambda_volterra;
use qsd_core::linalg::eigh_complex;
use qsd_core::oracle::{
    propagate_total, propagate_total_unchecked, reduced_density, single_excitation_propagate, FockTruncation,
    DEFAULT_LEAK_TOL,
};
use qsd_core::unravel::{mc_reduced_state, ModelKind, SystemModel};
use qsd_core::TimeGrid;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn jc() -> SystemModel {
    SystemModel::jaynes_cummings(0.0).unwrap()
}

fn analytic(lam: Complex64, phi: &[Complex64; 2]) -> Array2<Complex64> {
    let ee = lam.norm_sqr() * phi[0].norm_sqr();
    let eg = lam * phi[0] * phi[1].conj();
    ndarray::array![[c(ee, 0.0), eg], [eg.conj(), c(1.0 - ee, 0.0)]]
}

#[test]
fn three_way_agreement_for_one_to_three_modes() {
    let specs = [
        DiscreteBathSpec::from_real(&[0.0], &[1.0]).unwrap(),
        DiscreteBathSpec::from_real(&[0.5, -0.4], &[0.7, 0.5]).unwrap(),
        DiscreteBathSpec::new(vec![0.3, 1.0, -0.9], vec![c(0.5, 0.2), c(0.4, 0.0), c(0.3, -0.3)], 0.1).unwrap(),
    ];
    let phi = [c(0.8, 0.0), c(0.36, 0.48)];
    for (m, spec) in specs.iter().enumerate() {
        let grid = TimeGrid::new(3.0, 4001).unwrap();
        let lam = solve_lambda_volterra(&KernelHandle::Discrete(spec.clone()), &grid).unwrap();
        let kind = ModelKind::JcNonMarkov {
            spec: spec.clone(),
            lambda: lam.clone(),
        };
        let series = mc_reduced_state(&kind, &phi, 10_000, 40 + m as u64, &grid).unwrap();
        let trunc = FockTruncation::new(1, spec.mode_count(), 2).unwrap();
        let evo = propagate_total(&jc(), spec, &trunc, &phi, &grid, DEFAULT_LEAK_TOL).unwrap();
        for n in 0..grid.n_points() {
            let oracle = reduced_density(&evo.states[n], &trunc).unwrap();
            let exact = analytic(lam.values[n], &phi);
            for i in 0..2 {
                for j in 0..2 {
                    let se = series.combined_stderr(n, i, j).hypot(1e-7);
                    let mc = series.matrices[n][(i, j)];
                    assert!(
                        (mc - oracle[(i, j)]).norm() <= 5.0 * se,
                        "modes {} n {n} ({i},{j}) mc {mc} oracle {} exact {} se {se}",
                        m + 1,
                        oracle[(i, j)],
                        exact[(i, j)]
                    );
                    assert!((mc - exact[(i, j)]).norm() <= 5.0 * se);
                    assert!((oracle[(i, j)] - exact[(i, j)]).norm() < 1e-6);
                }
            }
        }
    }
}

#[test]
fn mc_density_matrices_are_hermitian_and_nearly_positive() {
    let spec = DiscreteBathSpec::from_real(&[0.2, -0.6], &[0.8, 0.6]).unwrap();
    let grid = TimeGrid::new(4.0, 801).unwrap();
    let lam = solve_lambda_volterra(&KernelHandle::Discrete(spec.clone()), &grid).unwrap();
    let phi = [c(0.6, 0.0), c(0.0, 0.8)];
    let series = mc_reduced_state(&ModelKind::JcNonMarkov { spec, lambda: lam }, &phi, 2_000, 9, &grid).unwrap();
    for n in 0..grid.n_points() {
        let rho = &series.matrices[n];
        assert!((rho[(0, 1)] - rho[(1, 0)].conj()).norm() < 1e-14);
        let eig = eigh_complex(rho).unwrap();
        let se = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| series.combined_stderr(n, i, j))
            .fold(0.0, f64::max);
        assert!(eig.values[0] >= -5.0 * se - 1e-12, "n {n}: {} vs {se}", eig.values[0]);
    }
}

#[test]
fn mc_series_is_bit_identical_across_pools() {
    let spec = DiscreteBathSpec::from_real(&[0.2, -0.6], &[0.8, 0.6]).unwrap();
    let grid = TimeGrid::new(2.0, 201).unwrap();
    let lam = solve_lambda_volterra(&KernelHandle::Discrete(spec.clone()), &grid).unwrap();
    let kind = ModelKind::JcNonMarkov { spec, lambda: lam };
    let phi = [ONE, ZERO];
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| mc_reduced_state(&kind, &phi, 3_001, 5, &grid).unwrap())
    };
    let a = run(1);
    let b = run(3);
    let c = run(8);
    for n in 0..grid.n_points() {
        assert_eq!(a.matrices[n], b.matrices[n]);
        assert_eq!(a.matrices[n], c.matrices[n]);
        assert_eq!(a.stderr[n], c.stderr[n]);
    }
    assert_eq!(a.norm_mean, c.norm_mean);
}

fn spec_strategy() -> impl Strategy<Value = DiscreteBathSpec> {
    (1usize..4).prop_flat_map(|m| {
        (
            prop::collection::vec(-1.5f64..1.5, m),
            prop::collection::vec((0.1f64..0.9, -0.5f64..0.5), m),
            -0.5f64..0.5,
        )
            .prop_filter_map("distinct frequencies", |(w, g, d)| {
                DiscreteBathSpec::new(w, g.into_iter().map(|(a, b)| c(a, b)).collect(), d).ok()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sector_matches_total_space(spec in spec_strategy()) {
        let grid = TimeGrid::new(2.0, 801).unwrap();
        let sector = single_excitation_propagate(&spec, &grid).unwrap();
        let trunc = FockTruncation::new(1, spec.mode_count(), 2).unwrap();
        let evo = propagate_total(&jc(), &spec, &trunc, &[ONE, ZERO], &grid, DEFAULT_LEAK_TOL).unwrap();
        let bd = trunc.bath_dim();
        for n in 0..grid.n_points() {
            prop_assert!((sector.excited[n] - evo.states[n][0]).norm() < 1e-8);
            for k in 0..spec.mode_count() {
                let mut occ = vec![0; spec.mode_count()];
                occ[k] = 1;
                prop_assert!((sector.modes[n][k] - evo.states[n][bd + trunc.bath_index(&occ)]).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn leakage_monotone_in_cutoff(g in 0.2f64..0.9, w in -1.0f64..1.0, fx in -1.0f64..1.0) {
        let h = ndarray::array![[c(0.5, 0.0), c(0.1, 0.0)], [c(0.1, 0.0), c(-0.5, 0.0)]];
        let l = ndarray::array![[ZERO, c(1.0, 0.0)], [c(fx, 0.0), ZERO]];
        let model = SystemModel::new(h, l, 0.0).unwrap();
        let spec = DiscreteBathSpec::from_real(&[w], &[g]).unwrap();
        let grid = TimeGrid::new(1.5, 301).unwrap();
        let mut prev = f64::INFINITY;
        for n_max in 1..=5 {
            let trunc = FockTruncation::new(n_max, 1, 2).unwrap();
            let leak = propagate_total_unchecked(&model, &spec, &trunc, &[ONE, ZERO], &grid).unwrap().max_leakage();
            prop_assert!(leak <= prev * (1.0 + 1e-9) + 1e-15, "n_max {n_max}: {leak} > {prev}");
            prev = leak;
        }
    }
}
