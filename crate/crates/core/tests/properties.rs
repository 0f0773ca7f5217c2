//! Property tests across modules: config round-trips, operator symmetries,
//! noise determinism and Tikhonov optimality.

use faer::Mat;
use num_complex::Complex64;
use proptest::prelude::*;

use holin_core::config::ExperimentConfig;
use holin_core::fourier_op::{assemble_e, build_pixel_grid, FourierData, Rect};
use holin_core::harmonics::{make_frequency_point, Sign};
use holin_core::invert::{tikhonov_solve, RegularizerStack};
use holin_core::measure::{add_noise, DataPath, MeasurementSweep, NoiseModel};
use holin_core::potentials::{fourier_oracle, PotentialField};

fn xi_strategy() -> impl Strategy<Value = [f64; 2]> {
    (0.0f64..10.0, 0.0f64..std::f64::consts::TAU).prop_map(|(r, t)| [r * t.cos(), r * t.sin()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn config_round_trips(res in 4usize..200, degree in 1usize..5, seed in any::<u64>(), rho in 0.0f64..0.1,
                          lambda in 1e-14f64..1.0, half in any::<bool>(), r_max in 0.5f64..10.0) {
        let mut cfg = ExperimentConfig::default();
        cfg.mesh.radial_resolution = res;
        cfg.mesh.degree = degree;
        cfg.noise.seed = seed;
        cfg.noise.rho = rho;
        cfg.inversion.lambda = lambda;
        cfg.frequency.half_plane = half;
        cfg.frequency.r_max = r_max;
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml(), text);
        prop_assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn opposite_frequency_rows_are_conjugate(xi in xi_strategy()) {
        let pg = build_pixel_grid(12, 12, Rect::unit_square()).unwrap();
        let op = assemble_e(&pg, &[xi, [-xi[0], -xi[1]]]);
        for i in 0..pg.len() {
            prop_assert!((op.entry(1, i) - op.entry(0, i).conj()).norm() <= 1e-15);
        }
    }

    #[test]
    fn translated_grid_multiplies_rows_by_phase(xi in xi_strategy(), dx in -0.5f64..0.5, dy in -0.5f64..0.5) {
        let pg = build_pixel_grid(3, 3, Rect { x_min: -1.2, y_min: -1.2, x_max: 1.2, y_max: 1.2 }).unwrap();
        let moved = pg.translated([dx, dy]);
        let a = assemble_e(&pg, &[xi]);
        let b = assemble_e(&moved, &[xi]);
        let phase = Complex64::from_polar(1.0, -(xi[0] * dx + xi[1] * dy));
        for i in 0..pg.len() {
            prop_assert!((b.entry(0, i) - phase * a.entry(0, i)).norm() <= 1e-12 * pg.h * pg.h);
        }
    }

    #[test]
    fn oracle_is_hermitian_for_real_potentials(xi in xi_strategy()) {
        for q in [PotentialField::Bump { x0: 0.2, y0: 0.4, d: 0.4 }, PotentialField::Ring { r_in: 0.3, r_out: 0.5 }] {
            let a = fourier_oracle(&q, xi, 16).value;
            let b = fourier_oracle(&q, [-xi[0], -xi[1]], 16).value;
            prop_assert!((b - a.conj()).norm() <= 1e-12 * a.norm().max(1.0));
        }
    }

    #[test]
    fn noise_is_reproducible_and_scaled(seed in any::<u64>(), stream in 0u64..1000, rho in 0.0f64..0.1) {
        let eps: Vec<f64> = (0..16).map(|k| -1.0 + k as f64 * 2.0 / 15.0).collect();
        let clean: Vec<Option<Complex64>> = eps.iter().map(|e| Some(Complex64::new(e * e, 0.3 * e))).collect();
        let sweep = MeasurementSweep {
            frequency: make_frequency_point([1.0, 0.0]).unwrap(),
            sign: Sign::Plus,
            eps: eps.clone(),
            noisy: clean.clone(),
            clean: clean.clone(),
            data_path: DataPath::DomainIntegral,
            newton_iterations: vec![1; 16],
        };
        let noise = NoiseModel { rho, seed, stream };
        let a = add_noise(&sweep, &noise);
        prop_assert_eq!(&a, &add_noise(&sweep, &noise));
        prop_assert_eq!(&a.clean, &clean);
        if rho == 0.0 {
            prop_assert_eq!(&a.noisy, &clean);
        }
    }

    #[test]
    fn tikhonov_solution_zeroes_the_gradient(seed in 0u64..1000, log_lambda in -10.0f64..-2.0) {
        let pg = build_pixel_grid(10, 10, Rect::unit_square()).unwrap();
        let xis: Vec<[f64; 2]> = (0..24).map(|k| {
            let t = k as f64 * 0.7 + seed as f64;
            [4.0 * t.sin() * (k as f64 / 24.0), 4.0 * t.cos() * (k as f64 / 24.0)]
        }).collect();
        let op = assemble_e(&pg, &xis);
        let values: Vec<Complex64> = (0..xis.len())
            .map(|k| Complex64::new(((k as u64 * 31 + seed) % 17) as f64 / 17.0 - 0.5, ((k as u64 * 7 + seed) % 13) as f64 / 13.0 - 0.5) * 0.05)
            .collect();
        let f = FourierData { xis: xis.clone(), values };
        let lambda = 10f64.powf(log_lambda);
        let stack = RegularizerStack::new(&pg);
        let rec = tikhonov_solve(&op, &f, lambda, &stack).unwrap();
        let gradient = |q: &[f64]| -> Vec<f64> {
            let eq = op.apply_real(q).unwrap();
            let r: Vec<Complex64> = eq.values.iter().zip(&f.values).map(|(a, b)| a - b).collect();
            let fit = op.adjoint(&r).unwrap();
            let gamma = stack.to_sparse();
            let gq = stack.apply(q);
            let gtg = gamma.as_ref().transpose() * Mat::<f64>::from_fn(gq.len(), 1, |i, _| gq[i]);
            (0..q.len()).map(|i| 2.0 * fit[i].re + 2.0 * lambda * gtg[(i, 0)]).collect()
        };
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let g0 = norm(&gradient(&vec![0.0; pg.len()]));
        let g = norm(&gradient(&rec.q_pixels));
        prop_assert!(g <= 1e-8 * g0, "gradient {g:e} vs {g0:e}");
    }
}
