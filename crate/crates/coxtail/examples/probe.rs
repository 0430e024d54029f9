use coxtail::cox::{fit_beta, DEFAULT_MAX_ITER, DEFAULT_TOL};
use coxtail::data::SurvivalSample;
use coxtail::select::{calibrate_d, calibrate_d_pareto, SelectionParams};
use coxtail::sim::{
    censoring_rate_above, simulate_cox_sample, CovariateLaw, HeavyTailLaw, M0Rule,
    SelectionSettings, SimConfig,
};
use coxtail::tail::{hill_theta, kl_pareto};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    match which.as_str() {
        "calib" => calib(),
        "beta" => beta_recovery(),
        "consistency" => consistency(),
        "qf" => qf(),
        "simcauch" => simcauch(),
        "sweep" => sweep(),
        _ => println!("usage: probe [calib|beta|consistency|qf|simcauch|sweep]"),
    }
}

fn calib() {
    let tuning = SelectionParams::new(100, 0.25, 0.05, f64::MAX).unwrap();
    for n in [100usize, 500] {
        let t0 = std::time::Instant::now();
        let d1 = calibrate_d(n, &tuning, 0.99, 2000, 20260809).unwrap();
        println!("n={n} D(theta=1, none)      = {d1:.6}   [{:?}]", t0.elapsed());
        let d3 = calibrate_d_pareto(n, &tuning, 0.99, 2000, 20260809, 3.0, None).unwrap();
        println!("n={n} D(theta=3, none)      = {d3:.6}  rel diff {:.4}", (d3 - d1).abs() / d1);
        let dc_half = calibrate_d_pareto(n, &tuning, 0.99, 2000, 20260809, 1.0, Some(0.5)).unwrap();
        println!("n={n} D(theta=1, cens 0.5)  = {dc_half:.6}  rel diff {:.4}", (dc_half - d1).abs() / d1);
        let dc_two = calibrate_d_pareto(n, &tuning, 0.99, 2000, 20260809, 1.0, Some(2.0)).unwrap();
        println!("n={n} D(theta=1, cens 2)    = {dc_two:.6}  rel diff {:.4}", (dc_two - d1).abs() / d1);
    }
}

fn beta_recovery() {
    for seed in 0..6u64 {
        let config = SimConfig {
            n: 500,
            n_mc: 200,
            beta: vec![-0.5],
            covariate_law: CovariateLaw::Uniform { low: -1.0, high: 1.0 },
            failure_baseline: HeavyTailLaw::TruncatedCauchy { x0: 0.0, gamma: 1.0 },
            censoring_law: None,
            eval_points: vec![1.0],
            seed,
            m: 10,
            m0: M0Rule::MinAdmissible,
            selection: SelectionSettings { critical_value: Some(10.0), ..Default::default() },
            estimate_beta: false,
            fixed_taus: vec![],
        };
        let mut ok = 0;
        for rep in 0..200 {
            let s = simulate_cox_sample(&config, rep).unwrap();
            let fit = fit_beta(&s, &[0.0], DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            if (fit.beta[0] + 0.5).abs() < 0.15 {
                ok += 1;
            }
        }
        println!("seed={seed}: |beta+0.5|<0.15 in {ok}/200");
    }
}

fn consistency() {
    for n in [500usize, 2000] {
        let mut kls = Vec::new();
        for rep in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            rng.set_stream(rep);
            let times: Vec<f64> = (0..n)
                .map(|_| {
                    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    u.powf(-1.0)
                })
                .collect();
            let sample = SurvivalSample::new(times.clone(), vec![true; n], vec![], 0).unwrap();
            let mut sorted = times;
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let tau = sorted[(0.9 * n as f64) as usize];
            let fit = hill_theta(&sample, &[], tau).unwrap();
            kls.push(kl_pareto(fit.theta, 1.0).unwrap());
        }
        kls.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!("n={n}: median KL = {:.6}", kls[100]);
    }
}

fn qf() {
    for seed in 0..6u64 {
        for (theta, theta_c, limit) in [(1.0, 1.0, 0.5), (1.0, 2.0, 1.0 / 3.0)] {
            let n = 5000;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut times = Vec::with_capacity(n);
            let mut status = Vec::with_capacity(n);
            for _ in 0..n {
                let x = rng.gen_range(f64::MIN_POSITIVE..1.0f64).powf(-theta);
                let c = rng.gen_range(f64::MIN_POSITIVE..1.0f64).powf(-theta_c);
                times.push(x.min(c));
                status.push(x <= c);
            }
            let sample = SurvivalSample::new(times.clone(), status, vec![], 0).unwrap();
            let mut sorted = times;
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let tau = sorted[(0.95 * n as f64) as usize];
            let rate = censoring_rate_above(&sample, tau).unwrap();
            print!("  seed={seed} ({theta},{theta_c}): {rate:.4} vs {limit:.4} diff {:.4}", (rate - limit).abs());
        }
        println!();
    }
}

fn simcauch() {
    let t0 = std::time::Instant::now();
    let tuning = SelectionParams::new(100, 0.25, 0.05, f64::MAX).unwrap();
    let d = calibrate_d(100, &tuning, 0.99, 2000, 1).unwrap();
    println!("D(n=100) = {d:.4} [{:?}]", t0.elapsed());
    let mut config = SimConfig {
        n: 100,
        n_mc: 200,
        beta: vec![-0.5],
        covariate_law: CovariateLaw::Uniform { low: -1.0, high: 1.0 },
        failure_baseline: HeavyTailLaw::TruncatedCauchy { x0: 0.0, gamma: 1.0 },
        censoring_law: Some(HeavyTailLaw::TruncatedCauchy { x0: 0.0, gamma: 2.0 }),
        eval_points: vec![100.0, 200.0, 300.0, 400.0, 500.0],
        seed: 5,
        m: 10,
        m0: M0Rule::Fraction { fraction: 0.06 },
        selection: SelectionSettings { critical_value: Some(d), ..Default::default() },
        estimate_beta: false,
        fixed_taus: vec![],
    };
    for seed in [5u64, 6, 7, 8, 9] {
        config.seed = seed;
        let report = coxtail::sim::run_monte_carlo(&config).unwrap();
        let na = report.estimator("nelson_aalen").unwrap();
        let ad = report.estimator("adaptive").unwrap();
        let simple = report.estimator("aggregate_simple").unwrap();
        let agg = report.estimator("aggregate_adaptive").unwrap();
        let ratio = na.points[4].rel_mse / ad.points[4].rel_mse;
        let simple_beats = (0..5).all(|j| simple.points[j].rel_mse < na.points[j].rel_mse);
        let agg_beats = (0..5).all(|j| agg.points[j].rel_mse < na.points[j].rel_mse);
        let worst_simple = (0..5)
            .map(|j| simple.points[j].rel_mse / na.points[j].rel_mse)
            .fold(0.0f64, f64::max);
        println!(
            "seed={seed}: censor={:.3} ratio500={ratio:.3} simple_beats={simple_beats} (worst frac {worst_simple:.3}) agg_beats={agg_beats}",
            report.mean_censoring_rate
        );
        if seed == 5 {
            for est in &report.estimators {
                let points: Vec<String> =
                    est.points.iter().map(|p| format!("{:.3}", p.rel_mse)).collect();
                println!("  {}: arelmse={:.4} failed={} points={:?}", est.name, est.arelmse, est.failed_replications, points);
            }
        }
    }

    // log-gamma censoring-rate check
    let lg = SimConfig {
        failure_baseline: HeavyTailLaw::LogGamma { shape: 2.0, rate: 2.0 },
        censoring_law: Some(HeavyTailLaw::LogGamma { shape: 5.0, rate: 3.5 }),
        eval_points: vec![100.0, 500.0],
        n: 500,
        n_mc: 50,
        ..config.clone()
    };
    let mut total = 0.0;
    for rep in 0..50 {
        let s = simulate_cox_sample(&lg, rep).unwrap();
        total += s.diagnostics().unwrap().censoring_rate;
    }
    println!("log-gamma mean censoring = {:.4}", total / 50.0);

    // SimCauch2 censoring
    let c2 = SimConfig {
        censoring_law: Some(HeavyTailLaw::TruncatedCauchy { x0: 10.0, gamma: 0.1 }),
        n: 500,
        n_mc: 50,
        ..config
    };
    let mut total = 0.0;
    for rep in 0..50 {
        let s = simulate_cox_sample(&c2, rep).unwrap();
        total += s.diagnostics().unwrap().censoring_rate;
    }
    println!("simcauch2 mean censoring = {:.4}", total / 50.0);
}

fn sweep() {
    let tuning = SelectionParams::new(100, 0.25, 0.05, f64::MAX).unwrap();
    let taus: Vec<f64> = (0..50).map(|j| 0.1 + j as f64 * (20.0 - 0.1) / 49.0).collect();
    for n in [100usize, 500] {
        let d = calibrate_d(n, &tuning, 0.99, 2000, 1).unwrap();
        for seed in [5u64, 6, 7, 8] {
            let t0 = std::time::Instant::now();
            let config = SimConfig {
                n,
                n_mc: 200,
                beta: vec![-0.5],
                covariate_law: CovariateLaw::Uniform { low: -1.0, high: 1.0 },
                failure_baseline: HeavyTailLaw::TruncatedCauchy { x0: 0.0, gamma: 1.0 },
                censoring_law: Some(HeavyTailLaw::TruncatedCauchy { x0: 0.0, gamma: 2.0 }),
                eval_points: coxtail::sim::geometric_grid(0.1, 100.0, 100),
                seed,
                m: 10,
                m0: M0Rule::Fraction { fraction: 0.06 },
                selection: SelectionSettings { critical_value: Some(d), ..Default::default() },
                estimate_beta: false,
                fixed_taus: taus.clone(),
            };
            let report = coxtail::sim::run_monte_carlo(&config).unwrap();
            let adaptive = report.estimator("adaptive").unwrap().arelmse;
            let agg = report.estimator("aggregate_adaptive").unwrap().arelmse;
            let mut best = f64::MAX;
            for est in &report.estimators {
                if est.name.starts_with("fixed:") && est.arelmse < best {
                    best = est.arelmse;
                }
            }
            println!(
                "n={n} seed={seed}: adaptive={adaptive:.4} agg_adaptive={agg:.4} best_fixed={best:.4} ratio={:.3} agg_ratio={:.3} [{:?}]",
                adaptive / best,
                agg / best,
                t0.elapsed()
            );
        }
    }
}
