//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use oucl::experiments::{cantor_overlap, default_r_values, lemma23_rows, overlap_check_for};
use oucl::{run_experiment, ExperimentConfig, RunOptions};
use ou_coupling::coupling::mineka_pair;
use ou_coupling::estimate::gradient_sup_norm;
use ou_coupling::levy::{truncate, Atom, Density, IntervalUnion, LevyMeasure, PiecewiseDensity};
use ou_coupling::rng::RngStream;
use ou_coupling::stats::{chi_square, ks_one_sample, normal_pdf};
use ou_coupling::symbol::{
    characteristic_exponent, density_via_fourier, ou_pushforward_triplet, phi_inverse, time_integrated_exponent,
    Horizon, Lattice, LevyTriplet, OUModel,
};
use serde_json::Value;

type Outcome = Result<String, String>;

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs().join(name)).expect("bundled config parses")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn run_in(cfg: &ExperimentConfig, dir: &Path, workers: usize) -> Result<oucl::Manifest, String> {
    run_experiment(
        cfg,
        &RunOptions {
            out: Some(dir.to_path_buf()),
            workers,
            ..RunOptions::default()
        },
    )
    .map_err(|e| e.to_string())
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

fn scalar(a: f64, nu: LevyMeasure) -> OUModel {
    OUModel::scalar(a, 1.0, LevyTriplet::jumps(nu).unwrap()).unwrap()
}

fn tv_decay() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for name in ["tv_decay_uniform.json", "tv_decay_cantor.json"] {
        let dir = tempfile::tempdir().unwrap();
        run_in(&load(name), dir.path(), 0)?;
        let s = summary(dir.path());
        let slope = s["fit"]["slope"].as_f64().unwrap_or(f64::NAN);
        let r2 = s["fit"]["r_squared"].as_f64().unwrap_or(f64::NAN);
        let rows = csv_rows(&dir.path().join("tv_curve.csv"));
        let c_hat = rows[0][1] * rows[0][0].sqrt();
        let envelope = rows.iter().all(|r| r[1] <= c_hat / r[0].sqrt() * (1.0 + 1e-12));
        let good = slope <= -0.40 && r2 >= 0.9 && envelope;
        ok &= good;
        notes.push(format!("{name}: slope {slope:.3}, r2 {r2:.3}, envelope {envelope}"));
    }
    let text = notes.join("; ");
    if ok {
        Ok(text)
    } else {
        Err(text)
    }
}

fn coupling_tail() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    run_in(&load("coupling_tail.json"), dir.path(), 0)?;
    let s = summary(dir.path());
    let rows = csv_rows(&dir.path().join("tail.csv"));
    let checked: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] != 4.0).collect();
    let within = checked.len() == 5 && checked.iter().all(|r| r[1] <= r[2]);
    let slope = s["tail_slope"].as_f64().unwrap_or(f64::NAN);
    let text = format!(
        "gamma {:.4}, c_clt {:.4}, tail at 128 {:.4} vs envelope {:.4}, slope {slope:.3}",
        s["gamma"].as_f64().unwrap_or(f64::NAN),
        s["c_clt"].as_f64().unwrap_or(f64::NAN),
        rows.last().unwrap()[1],
        rows.last().unwrap()[2],
    );
    if within && (-0.65..=-0.40).contains(&slope) {
        Ok(text)
    } else {
        Err(text)
    }
}

fn reflection_sweep() -> Outcome {
    let start = Instant::now();
    let (_, s) = lemma23_rows(12, &default_r_values()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let text = format!("{} cases, {} violations, {secs:.2}s", s.cases, s.violations);
    if s.violations == 0 && secs <= 10.0 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn symbol_closed_forms() -> Outcome {
    let mut worst: f64 = 0.0;
    for alpha in [0.5, 1.0, 1.5] {
        let m = scalar(-1.0, LevyMeasure::stable(alpha, 1.0, 1).unwrap());
        for t in [0.1, 1.0, 10.0] {
            let numeric = phi_inverse(&m, Horizon::Finite(t), 1.0).map_err(|e| e.to_string())?;
            let exact: f64 = (alpha / (1.0 - (-alpha * t).exp())).powf(1.0 / alpha);
            worst = worst.max((numeric - exact).abs() / exact);
        }
    }
    let text = format!("max relative error {worst:.2e}");
    if worst <= 1e-6 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn pushforward_oracle() -> Outcome {
    let atoms = LevyMeasure::atomic(vec![Atom::new(vec![0.7], 1.5), Atom::new(vec![-1.3], 0.5)]).unwrap();
    let atomic = scalar(-1.0, atoms);
    let stable = scalar(-0.5, LevyMeasure::stable(1.5, 1.0, 1).unwrap());
    let planar_atoms = LevyMeasure::atomic(vec![Atom::new(vec![1.0, 0.5], 1.0), Atom::new(vec![-0.4, 0.9], 2.0)]).unwrap();
    let mixed = OUModel::new(
        DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -2.0]),
        DMatrix::identity(2, 2),
        LevyTriplet::new(DMatrix::zeros(2, 2), DVector::from_vec(vec![0.3, -0.2]), planar_atoms).unwrap(),
    )
    .unwrap();
    let t = 1.3;
    let mut worst: f64 = 0.0;
    for model in [&atomic, &stable, &mixed] {
        let triplet = ou_pushforward_triplet(model, t).map_err(|e| e.to_string())?;
        for j in 0..20 {
            let s = -4.0 + 8.0 * j as f64 / 19.0;
            let xi = if model.n() == 1 {
                DVector::from_element(1, s)
            } else {
                DVector::from_vec(vec![s, 0.5 * s - 1.0])
            };
            let lhs = time_integrated_exponent(model, t, &xi).map_err(|e| e.to_string())?;
            let rhs = characteristic_exponent(&triplet, &xi).map_err(|e| e.to_string())?;
            worst = worst.max((lhs - rhs).norm() / (1.0 + lhs.norm()));
        }
    }
    let text = format!("max scaled discrepancy {worst:.2e} over 60 points");
    if worst <= 1e-6 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn fourier_golden() -> Outcome {
    let lattice = Lattice::new(1, 0.02, 1000).unwrap();
    let gaussian = OUModel::scalar(0.0, 1.0, LevyTriplet::gaussian(DMatrix::identity(1, 1)).unwrap()).unwrap();
    let cauchy = scalar(0.0, LevyMeasure::stable(1.0, 1.0, 1).unwrap());
    let g = density_via_fourier(&gaussian, 1.0, &lattice).map_err(|e| e.to_string())?;
    let c = density_via_fourier(&cauchy, 1.0, &lattice).map_err(|e| e.to_string())?;
    let axis = lattice.axis();
    let err_g = axis
        .iter()
        .zip(&g.values)
        .map(|(z, v)| (v - normal_pdf(*z)).abs())
        .fold(0.0, f64::max);
    let err_c = axis
        .iter()
        .zip(&c.values)
        .map(|(z, v)| (v - 1.0 / (PI * (1.0 + z * z))).abs())
        .fold(0.0, f64::max);
    let mass_g = g.period_mass;
    let mass_c = c.period_mass;
    let text = format!(
        "gaussian err {err_g:.1e}, cauchy err {err_c:.1e}, masses {mass_g:.6} and {mass_c:.6}"
    );
    if err_g <= 1e-6 && err_c <= 1e-6 && (mass_g - 1.0).abs() <= 1e-4 && (mass_c - 1.0).abs() <= 1e-4 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn mineka_marginals() -> Outcome {
    let n = 100_000;
    let uniform = truncate(
        &LevyMeasure::density(PiecewiseDensity::uniform(0.0, 1.0, 1.0).unwrap()).unwrap(),
        1e-3,
    )
    .unwrap()
    .normalized()
    .unwrap();
    // The truncated uniform lives on [1e-3, 1].
    let cdf = |z: f64| ((z - 1e-3) / (1.0 - 1e-3)).clamp(0.0, 1.0);
    let a = DVector::from_element(1, 0.3);
    let mut rng = RngStream::new(77, 0);
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        let d = mineka_pair(&uniform, &a, &mut rng).map_err(|e| e.to_string())?;
        u.push(d.u[0]);
        v.push(d.u[0] + d.delta_u[0]);
    }
    let p_u = ks_one_sample(&u, cdf).p_value;
    let p_v = ks_one_sample(&v, cdf).p_value;

    let atoms = LevyMeasure::atomic(vec![
        Atom::new(vec![1.0], 0.5),
        Atom::new(vec![2.0], 0.3),
        Atom::new(vec![3.0], 0.2),
    ])
    .unwrap();
    let nu_bar = truncate(&atoms, 0.5).unwrap();
    let cells = [(1.0, 1), (2.0, 1), (2.0, -1), (3.0, -1), (1.0, 0), (2.0, 0), (3.0, 0)];
    let probs = [0.15, 0.10, 0.15, 0.10, 0.35, 0.05, 0.10];
    let mut counts = [0u64; 7];
    let shift = DVector::from_element(1, 1.0);
    for _ in 0..n {
        let d = mineka_pair(&nu_bar, &shift, &mut rng).map_err(|e| e.to_string())?;
        let i = cells
            .iter()
            .position(|c| c.0 == d.u[0] && c.1 == d.sign)
            .ok_or("draw outside the table")?;
        counts[i] += 1;
    }
    let worst_sigma = counts
        .iter()
        .zip(&probs)
        .map(|(&c, &p)| (c as f64 - n as f64 * p).abs() / (n as f64 * p * (1.0 - p)).sqrt())
        .fold(0.0, f64::max);
    let chi = chi_square(&counts, &probs);
    let text = format!(
        "KS p-values {p_u:.3} and {p_v:.3}; atomic table max deviation {worst_sigma:.2} sigma, chi-square p {:.3}",
        chi.p_value
    );
    if p_u >= 1e-3 && p_v >= 1e-3 && worst_sigma <= 4.0 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn cantor_overlap_exact() -> Outcome {
    let r = cantor_overlap(10, 0.25, 0.1, 201).map_err(|e| e.to_string())?;
    let text = format!("exact minimum {} ({:.6}) over 201 shifts", r.min_exact, r.min_exact_value);
    if r.passed {
        Ok(text)
    } else {
        Err(text)
    }
}

fn region_construction() -> Outcome {
    let rho = PiecewiseDensity::new(
        IntervalUnion::single(1.0, 2.0).unwrap(),
        Density::Power {
            center: 1.5,
            exponent: -0.5,
            coef: 1.0,
        },
    );
    let r = overlap_check_for(&rho, 1.5, 0.5, 201).map_err(|e| e.to_string())?;
    let text = format!(
        "K {:.6}, lower bound {:.6} vs K/8 {:.6}, brute-force minimum {:.6} at delta {}",
        r.k_mass, r.lower_bound, r.k_over_8, r.brute_min, r.delta
    );
    if r.passed {
        Ok(text)
    } else {
        Err(text)
    }
}

fn negative_control() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    run_in(&load("negative_control.json"), dir.path(), 0)?;
    let rows = csv_rows(&dir.path().join("tv_curve.csv"));
    let min = rows.iter().map(|r| r[1]).fold(f64::INFINITY, f64::min);
    let text = format!("min tv_hat {min:.4} over t in {{1, 2, 4, 8}}");
    if rows.len() == 4 && min >= 0.5 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn gradient_rate() -> Outcome {
    let m = scalar(0.0, LevyMeasure::stable(1.0, 1.0, 1).unwrap());
    let probes = Lattice::new(1, 0.002, 50).unwrap();
    let f = |z: &[f64]| if z[0] >= 0.0 { 1.0 } else { 0.0 };
    let g = |t: f64| gradient_sup_norm(&m, t, f, &probes).map(|r| r.sup_norm).map_err(|e| e.to_string());
    let (g1, g2, g3) = (g(0.5)?, g(0.25)?, g(0.125)?);
    let (q1, q2) = (g2 / g1, g3 / g2);
    let text = format!("ratios {q1:.4} (0.5 to 0.25) and {q2:.4} (0.25 to 0.125)");
    if (q1 / 2.0 - 1.0).abs() <= 0.15 && (q2 / 2.0 - 1.0).abs() <= 0.15 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn determinism() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut tv = load("tv_decay_cantor.json");
    tv.sample_count = Some(5000);
    tv.params.bootstrap_replicates = Some(20);
    let mut tail = load("coupling_tail.json");
    tail.sample_count = Some(1000);
    for cfg in [tv, tail] {
        let dir = tempfile::tempdir().unwrap();
        let one = run_in(&cfg, dir.path(), 1)?;
        let again = run_in(&cfg, dir.path(), 1)?;
        let many = run_in(&cfg, dir.path(), 4)?;
        let csvs: Vec<_> = one.files.iter().filter(|f| f.file.ends_with(".csv")).collect();
        let same = one == again && one == many && !csvs.is_empty();
        ok &= same;
        notes.push(format!("{}: {} files identical {same}", one.experiment, one.files.len()));
    }
    let text = notes.join("; ");
    if ok {
        Ok(text)
    } else {
        Err(text)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("TV decay rate", tv_decay),
        ("coupling-time tail", coupling_tail),
        ("reflection inequalities", reflection_sweep),
        ("symbol closed forms", symbol_closed_forms),
        ("pushforward oracle", pushforward_oracle),
        ("Fourier densities", fourier_golden),
        ("Mineka marginals", mineka_marginals),
        ("Cantor overlap", cantor_overlap_exact),
        ("overlap region", region_construction),
        ("negative control", negative_control),
        ("gradient rate", gradient_rate),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {:>2} {name}: PASS ({msg}) [{secs:.1}s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({msg}) [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
