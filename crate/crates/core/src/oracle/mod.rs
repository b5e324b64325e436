//! Reference solver for the microscopic system-bath model in a truncated
//! Fock space, plus the exact single-excitation sector and numerical checks
//! of the operator identities satisfied by the input and output processes.

mod fock;
mod identities;

pub use fock::{
    bargmann_project, build_interaction_generator, exponential_vector, propagate_total, propagate_total_unchecked,
    propagate_unitary, reduced_density, single_excitation_propagate, z_matrix, FockTruncation, InteractionGenerator,
    SectorSolution, TotalEvolution, DEFAULT_LEAK_TOL, MAX_TOTAL_DIM,
};
pub use identities::{ccr_residual, resolution_of_identity_mc, two_point_vacuum, OperatorHistory};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{DiscreteBathSpec, KernelHandle};
    use crate::error::Error;
    use crate::grid::TimeGrid;
    use crate::jc::{jc_state, solve_lambda_volterra};
    use crate::rng::{complex_normal_at, Domain};
    use crate::sampler::TrajectoryMap;
    use crate::unravel::SystemModel;
    use ndarray::Array2;
    use num_complex::Complex64;

    const ONE: Complex64 = Complex64::new(1.0, 0.0);
    const ZERO: Complex64 = Complex64::new(0.0, 0.0);

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn jc() -> SystemModel {
        SystemModel::jaynes_cummings(0.0).unwrap()
    }

    fn excited_population(n: usize, e: &TotalEvolution) -> f64 {
        reduced_density(&e.states[n], &e.trunc).unwrap()[(0, 0)].re
    }

    #[test]
    fn decoupled_generator_is_system_hamiltonian() {
        let h = ndarray::array![[c(0.5, 0.0), c(0.1, 0.2)], [c(0.1, -0.2), c(-0.3, 0.0)]];
        let model = SystemModel::new(h.clone(), Array2::zeros((2, 2)), 0.0).unwrap();
        let spec = DiscreteBathSpec::from_real(&[0.3, 1.0], &[0.8, 0.2]).unwrap();
        let trunc = FockTruncation::new(2, 2, 2).unwrap();
        let gen = build_interaction_generator(&model, &spec, &trunc).unwrap();
        let a = gen.to_dense(0.7);
        let bd = trunc.bath_dim();
        for s in 0..2 {
            for r in 0..2 {
                for b in 0..bd {
                    for bb in 0..bd {
                        let expect = if b == bb { -Complex64::i() * h[(s, r)] } else { ZERO };
                        assert_eq!(a[(s * bd + b, r * bd + bb)], expect);
                    }
                }
            }
        }
    }

    #[test]
    fn two_point_functions_and_ccr() {
        let spec = DiscreteBathSpec::new(vec![0.4, -1.3], vec![c(0.6, 0.3), c(-0.2, 0.9)], 0.1).unwrap();
        let trunc = FockTruncation::new(3, 2, 1).unwrap();
        for j in 0..20 {
            let t = 3.0 * complex_normal_at(2, Domain::Aux, j, 0).re;
            let s = 3.0 * complex_normal_at(2, Domain::Aux, j, 1).re;
            let v = two_point_vacuum(&spec, &trunc, t, s).unwrap();
            assert!((v[0] - spec.kernel(t, s)).norm() < 1e-12);
            assert!(v[1..].iter().all(|z| z.norm() < 1e-12));
            assert!(ccr_residual(&spec, &trunc, t, s).unwrap() < 1e-12);
        }
    }

    #[test]
    fn zero_coupling_keeps_vacuum() {
        let h = ndarray::array![[c(1.0, 0.0), c(0.0, 0.5)], [c(0.0, -0.5), c(-1.0, 0.0)]];
        let coupling = ndarray::array![[ZERO, ZERO], [ONE, ZERO]];
        let model = SystemModel::new(h, coupling, 0.0).unwrap();
        let spec = DiscreteBathSpec::from_real(&[0.5], &[0.0]).unwrap();
        let trunc = FockTruncation::new(2, 1, 2).unwrap();
        let grid = TimeGrid::new(2.0, 401).unwrap();
        let phi = [c(0.6, 0.0), c(0.0, 0.8)];
        let evo = propagate_total(&model, &spec, &trunc, &phi, &grid, DEFAULT_LEAK_TOL).unwrap();
        // e^{-iHt} with H = sqrt(1.25) n.sigma
        let t = 2.0;
        let w = 1.25f64.sqrt();
        let (cs, sn) = ((w * t).cos(), (w * t).sin() / w);
        let u = ndarray::array![[c(cs, -sn), c(0.5 * sn, 0.0)], [c(-0.5 * sn, 0.0), c(cs, sn)]];
        let last = &evo.states[400];
        for s in 0..2 {
            let expect = u[(s, 0)] * phi[0] + u[(s, 1)] * phi[1];
            assert!((last[s * 3] - expect).norm() < 1e-8);
            assert!(last[s * 3 + 1].norm() == 0.0 && last[s * 3 + 2].norm() == 0.0);
        }
    }

    #[test]
    fn jc_total_matches_volterra_and_conserves_norm() {
        let spec = DiscreteBathSpec::from_real(&[0.7], &[1.0]).unwrap().with_detuning(0.2);
        let trunc = FockTruncation::new(1, 1, 2).unwrap();
        let grid = TimeGrid::new(4.0, 4001).unwrap();
        let evo = propagate_total(&jc(), &spec, &trunc, &[ONE, ZERO], &grid, DEFAULT_LEAK_TOL).unwrap();
        let lam = solve_lambda_volterra(&KernelHandle::Discrete(spec.clone()), &grid).unwrap();
        for n in (0..4001).step_by(100) {
            assert!(
                (evo.states[n][0] - lam.values[n]).norm() < 1e-6,
                "{n} {} {}",
                evo.states[n][0],
                lam.values[n]
            );
            let norm: f64 = evo.states[n].iter().map(|z| z.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-10);
        }
        assert!(evo.max_leakage() < 1e-10);
    }

    #[test]
    fn sector_solution() {
        let spec = DiscreteBathSpec::from_real(&[0.0], &[1.0]).unwrap();
        let grid = TimeGrid::new(6.0, 3001).unwrap();
        let sec = single_excitation_propagate(&spec, &grid).unwrap();
        for (n, t) in grid.points().iter().enumerate() {
            assert!((sec.excited[n] - t.cos()).norm() < 1e-8);
        }
        let spec = DiscreteBathSpec::from_real(&[0.5, -0.9, 1.6], &[0.6, 0.4, 0.7])
            .unwrap()
            .with_detuning(0.1);
        let grid = TimeGrid::new(5.0, 2501).unwrap();
        let sec = single_excitation_propagate(&spec, &grid).unwrap();
        let lam = solve_lambda_volterra(&KernelHandle::Discrete(spec.clone()), &grid).unwrap();
        let trunc = FockTruncation::new(1, 3, 2).unwrap();
        let evo = propagate_total(&jc(), &spec, &trunc, &[ONE, ZERO], &grid, DEFAULT_LEAK_TOL).unwrap();
        let bd = trunc.bath_dim();
        for n in 0..grid.n_points() {
            let norm = sec.excited[n].norm_sqr() + sec.modes[n].iter().map(|z| z.norm_sqr()).sum::<f64>();
            assert!((norm - 1.0).abs() < 1e-10);
            assert!((sec.excited[n] - lam.values[n]).norm() < 1e-6);
            assert!((sec.excited[n] - evo.states[n][0]).norm() < 1e-8);
            for k in 0..3 {
                let mut occ = [0; 3];
                occ[k] = 1;
                let b = trunc.bath_index(&occ);
                assert!((sec.modes[n][k] - evo.states[n][bd + b]).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn reduced_density_properties() {
        let spec = DiscreteBathSpec::from_real(&[0.0], &[1.0]).unwrap();
        let trunc = FockTruncation::new(2, 1, 2).unwrap();
        let grid = TimeGrid::new(3.0, 1501).unwrap();
        let phi = [c(0.6, 0.0), c(0.0, 0.8)];
        let evo = propagate_total(&jc(), &spec, &trunc, &phi, &grid, DEFAULT_LEAK_TOL).unwrap();
        let rho0 = reduced_density(&evo.states[0], &trunc).unwrap();
        for s in 0..2 {
            for r in 0..2 {
                assert!((rho0[(s, r)] - phi[s] * phi[r].conj()).norm() < 1e-15);
            }
        }
        let lam = solve_lambda_volterra(&KernelHandle::Discrete(spec), &grid).unwrap();
        for n in (0..1501).step_by(100) {
            let rho = reduced_density(&evo.states[n], &trunc).unwrap();
            assert!((rho[(0, 0)].re - lam.values[n].norm_sqr() * 0.36).abs() < 1e-6);
            assert!((rho[(0, 1)] - lam.values[n] * phi[0] * phi[1].conj()).norm() < 1e-6);
            let purity = rho.dot(&rho).diag().sum().re;
            assert!(purity <= 1.0 + 1e-10);
            assert!((rho[(0, 0)].re - excited_population(n, &evo)).abs() < 1e-15);
        }
    }

    #[test]
    fn bargmann_projection_reproduces_trajectory_state() {
        let spec = DiscreteBathSpec::from_real(&[0.8], &[1.0]).unwrap().with_detuning(0.3);
        let trunc = FockTruncation::new(3, 1, 2).unwrap();
        let grid = TimeGrid::new(3.0, 3001).unwrap();
        let phi = [c(0.8, 0.1), c(0.2, -0.55)];
        let evo = propagate_total(&jc(), &spec, &trunc, &phi, &grid, DEFAULT_LEAK_TOL).unwrap();
        let lam = solve_lambda_volterra(&KernelHandle::Discrete(spec.clone()), &grid).unwrap();
        let map = TrajectoryMap::new(&spec, &grid);
        assert_eq!(
            bargmann_project(&evo.states[0], &[c(0.3, 0.4)], &trunc).unwrap(),
            phi.to_vec()
        );
        let vac = bargmann_project(&evo.states[1200], &[ZERO], &trunc).unwrap();
        assert_eq!(vac, vec![evo.states[1200][0], evo.states[1200][4]]);
        for j in 0..5 {
            let f = vec![0.5 * complex_normal_at(6, Domain::Aux, j, 0)];
            let zeta = map.trajectory(&f).unwrap();
            for n in [500, 1700, 3000] {
                let proj = bargmann_project(&evo.states[n], &f, &trunc).unwrap();
                let exact = jc_state(phi, &lam, &zeta, n).unwrap();
                assert!((proj[0] - exact[0]).norm() < 1e-6 && (proj[1] - exact[1]).norm() < 1e-6);
            }
        }
        assert!(matches!(
            bargmann_project(&evo.states[0], &[c(1.0, 0.0)], &trunc),
            Err(Error::AmplitudeTooLarge { .. })
        ));
    }

    #[test]
    fn operator_identities_jc() {
        let spec = DiscreteBathSpec::from_real(&[0.0], &[1.0]).unwrap();
        let trunc = FockTruncation::new(3, 1, 2).unwrap();
        let grid = TimeGrid::new(0.5, 501).unwrap();
        let hist = OperatorHistory::new(&jc(), &spec, &trunc, &grid).unwrap();
        assert!(hist.io_residual(0).unwrap() < 1e-14);
        assert!(hist.io_residual(500).unwrap() < 1e-5);
        let x = ndarray::array![[c(0.3, 0.0), c(0.2, -0.7)], [c(0.2, 0.7), c(-1.1, 0.0)]];
        assert!(hist.equal_time_commutator(500, &x).unwrap() < 1e-6);
        let ee = ndarray::array![[ONE, ZERO], [ZERO, ZERO]];
        let res = hist.ehrenfest_residual(&ee, &[ONE, ZERO]).unwrap();
        assert!(res.iter().all(|r| *r < 1e-5));
        let id = Array2::eye(2).mapv(|v: f64| c(v, 0.0));
        let res = hist.ehrenfest_residual(&id, &[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        assert!(res.iter().all(|r| *r < 1e-10));
    }

    #[test]
    fn ehrenfest_closed_system() {
        let h = ndarray::array![[c(0.4, 0.0), c(0.3, 0.1)], [c(0.3, -0.1), c(-0.2, 0.0)]];
        let model = SystemModel::new(h, ndarray::array![[ZERO, ZERO], [ONE, ZERO]], 0.0).unwrap();
        let spec = DiscreteBathSpec::from_real(&[0.0], &[0.0]).unwrap();
        let trunc = FockTruncation::new(2, 1, 2).unwrap();
        let grid = TimeGrid::new(0.2, 2001).unwrap();
        let hist = OperatorHistory::new(&model, &spec, &trunc, &grid).unwrap();
        let x = ndarray::array![[ONE, ZERO], [ZERO, -ONE]];
        let res = hist.ehrenfest_residual(&x, &[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        assert!(res.iter().all(|r| *r < 1e-8));
    }

    #[test]
    fn leakage_does_not_grow_with_n_max() {
        let h = ndarray::array![[c(0.5, 0.0), ZERO], [ZERO, c(-0.5, 0.0)]];
        let l = ndarray::array![[ZERO, ONE], [ONE, ZERO]];
        let model = SystemModel::new(h, l, 0.0).unwrap();
        let spec = DiscreteBathSpec::from_real(&[0.2], &[0.8]).unwrap();
        let grid = TimeGrid::new(2.0, 401).unwrap();
        let mut prev = f64::INFINITY;
        for n_max in 1..=6 {
            let trunc = FockTruncation::new(n_max, 1, 2).unwrap();
            let evo = propagate_total_unchecked(&model, &spec, &trunc, &[ONE, ZERO], &grid).unwrap();
            let leak = evo.max_leakage();
            assert!(leak <= prev, "n_max={n_max}: {leak} > {prev}");
            prev = leak;
        }
        let trunc = FockTruncation::new(1, 1, 2).unwrap();
        assert!(matches!(
            propagate_total(&model, &spec, &trunc, &[ONE, ZERO], &grid, DEFAULT_LEAK_TOL),
            Err(Error::Leakage(_))
        ));
    }

    #[test]
    fn resolution_of_identity() {
        let trunc = FockTruncation::new(3, 1, 1).unwrap();
        let phi = [c(0.5, 0.1), c(-0.3, 0.4), c(0.2, 0.0), c(0.1, -0.6)];
        let psi = [c(0.1, 0.7), c(0.4, 0.0), c(-0.5, 0.2), c(0.3, 0.3)];
        let (mean, se) = resolution_of_identity_mc(&phi, &psi, &trunc, 100_000, 17).unwrap();
        let exact: Complex64 = phi.iter().zip(&psi).map(|(a, b)| a.conj() * b).sum();
        assert!((mean.re - exact.re).abs() < 5.0 * se.re);
        assert!((mean.im - exact.im).abs() < 5.0 * se.im);
    }

    #[test]
    fn truncation_guard() {
        assert!(matches!(
            FockTruncation::new(9, 5, 2),
            Err(Error::TruncationTooLarge(_))
        ));
        let t = FockTruncation::new(2, 3, 2).unwrap();
        assert_eq!(t.total_dim(), 54);
        assert_eq!(t.bath_index(&[1, 0, 2]), 11);
        assert_eq!(
            (t.occupation(11, 0), t.occupation(11, 1), t.occupation(11, 2)),
            (1, 0, 2)
        );
    }
}
