//! Acceptance checks, one per criterion. Runs without the libtest harness so
//! every criterion prints a PASS/FAIL line; exits nonzero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use skycast::dense::{gpr, gpr_mll_gradient, krr, krr_objective, mt_gpr_mll, mt_gpr_mll_gradient};
use skycast::flow::{
    cloud_dynamics, helmholtz_decompose, reconstruct, reproject_pixels, sun_weight_map, trace_streamline,
    traversal_times, wave_probability, HorizonMoments, Reprojection, VectorField,
};
use skycast::kernels::{gram, CorrelationMatrix, KernelSpec, MaternNu};
use skycast::multitask::{
    fit_chain, fit_independent, fit_joint, predict_multitask, BaseParams, Coupling, FamilyParams,
};
use skycast::pipeline::run::{self, Layout};
use skycast::pipeline::{PipelineConfig, Predictions};
use skycast::sparse::{fit_rvm, fit_svr, RvmOptions};
use skycast::Error;

const BUNDLED: &str = include_str!("../../../configs/bundled.toml");
const SMALL: &str = include_str!("../../../configs/small.toml");

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn uniform_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(lo..hi))
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

// ---------------------------------------------------------------------------
// 1. closed-form KRR against a primal ridge solved by accelerated gradient
// descent on an explicit feature map

fn feature_map(spec: &KernelSpec, x: &[f64]) -> Vec<f64> {
    match *spec {
        KernelSpec::Linear { gamma } => x.iter().map(|v| gamma.sqrt() * v).collect(),
        KernelSpec::Polynomial { gamma, beta } => {
            let mut f = vec![beta];
            f.extend(x.iter().map(|v| (2.0 * beta * gamma).sqrt() * v));
            for a in x {
                f.extend(x.iter().map(|b| gamma * a * b));
            }
            f
        }
        _ => unreachable!("only kernels with finite feature maps"),
    }
}

fn primal_ridge(phi: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> f64 {
    let objective = |w: &DVector<f64>| (y - phi * w).norm_squared() + lambda * w.norm_squared();
    let mut h = phi.transpose() * phi;
    for i in 0..h.nrows() {
        h[(i, i)] += lambda;
    }
    let b = phi.transpose() * y;
    let step = 1.0 / (2.0 * h.clone().symmetric_eigenvalues().max());
    // gradient 2(Hw − b); restart on objective increase
    let p = phi.ncols();
    let (mut w, mut z) = (DVector::zeros(p), DVector::zeros(p));
    let mut t = 1.0f64;
    let mut prev = f64::INFINITY;
    let tol = 1e-11 * (1.0 + b.norm());
    let mut stalled = 0;
    for _ in 0..2_000_000 {
        let g = 2.0 * (&h * &z - &b);
        let next = &z - step * &g;
        let f = objective(&next);
        if f > prev {
            t = 1.0;
            z = w.clone();
            stalled += 1;
            if stalled == 50 {
                break;
            }
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + ((t - 1.0) / t_next) * (&next - &w);
        w = next;
        t = t_next;
        stalled = if prev - f <= 1e-15 * f { stalled + 1 } else { 0 };
        prev = f;
        if stalled == 50 || (2.0 * (&h * &w - &b)).norm() < tol {
            break;
        }
    }
    objective(&w)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for p in 0..20 {
        let n = 50;
        let d = 3;
        let x = normal_matrix(&mut rng, n, d);
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let spec = if p % 2 == 0 {
            KernelSpec::Linear { gamma: rng.random_range(0.2..2.0) }
        } else {
            KernelSpec::Polynomial { gamma: rng.random_range(0.2..1.0), beta: rng.random_range(0.5..2.0) }
        };
        let ridge = rng.random_range(0.5..5.0);
        let lambda = ridge / n as f64;
        let dual = krr(spec, &x, &y, ridge, 0.0).unwrap();
        let k = gram(&spec, &x, 0.0).unwrap();
        let closed = krr_objective(k.matrix(), &y, lambda, &dual.alpha);
        let feats = rows(&x).iter().map(|r| feature_map(&spec, r)).collect::<Vec<_>>();
        let phi = DMatrix::from_fn(n, feats[0].len(), |i, j| feats[i][j]);
        let oracle = primal_ridge(&phi, &y, lambda);
        worst = worst.max((closed - oracle).abs() / oracle.abs().max(1.0));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-8 && secs < 10.0, format!("max objective gap {worst:.2e}, {secs:.2} s"))
}

// ---------------------------------------------------------------------------
// 2. equivalences

fn base(kernel: KernelSpec, family: FamilyParams) -> BaseParams {
    BaseParams { kernel, family, coupling: Coupling::Identity, jitter: 1e-10 }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (n, c) = (24, 3);
    let x = uniform_matrix(&mut rng, n, 2, -1.5, 1.5);
    let q = uniform_matrix(&mut rng, 10, 2, -1.5, 1.5);
    let y = DMatrix::from_fn(n, c, |i, t| {
        (x[(i, 0)] * (1.0 + t as f64)).sin() + 0.5 * x[(i, 1)] + 0.05 * rng.sample::<f64, _>(StandardNormal)
    });
    let kernel = KernelSpec::Rbf { gamma: 0.7 };

    let y0 = y.column(0).into_owned();
    let ridge = 0.4;
    let k = krr(kernel, &x, &y0, ridge, 1e-10).unwrap();
    let g = gpr(kernel, &x, &y0, ridge / n as f64, 1e-10).unwrap();
    let mut gpr_krr = 0.0f64;
    for r in rows(&q) {
        gpr_krr = gpr_krr.max((k.predict(&r).unwrap()[0] - g.predict(&r).unwrap().mean[0]).abs());
    }

    // joint λ = γ/(CN) against independent γ/N needs γ scaled by C; RVM
    // shares one noise across tasks, so it gets identical columns
    let dup = DMatrix::from_fn(n, c, |i, _| y[(i, 0)]);
    let cases: [(&str, FamilyParams, FamilyParams, &DMatrix<f64>); 4] = [
        ("krr", FamilyParams::Krr { ridge: ridge * c as f64 }, FamilyParams::Krr { ridge }, &y),
        ("gpr", FamilyParams::Gpr { noise: 0.05 }, FamilyParams::Gpr { noise: 0.05 }, &y),
        ("svr", FamilyParams::Svr { c: 2.0, epsilon: 0.05 }, FamilyParams::Svr { c: 2.0, epsilon: 0.05 }, &y),
        (
            "rvm",
            FamilyParams::Rvm { options: RvmOptions::default() },
            FamilyParams::Rvm { options: RvmOptions::default() },
            &dup,
        ),
    ];
    let mut joint_gaps = Vec::new();
    for (name, jp, ip, targets) in cases {
        let joint = fit_joint(&base(kernel, jp), &x, targets).unwrap();
        let indep = fit_independent(&vec![base(kernel, ip); c], &x, targets).unwrap();
        let mut gap = 0.0f64;
        for r in rows(&q) {
            let a = predict_multitask(&joint, &r).unwrap();
            let b = predict_multitask(&indep, &r).unwrap();
            for t in 0..c {
                gap = gap.max((a.mean[t] - b.mean[t]).abs());
            }
        }
        joint_gaps.push((name, gap));
    }

    let mut matern = 0.0f64;
    for _ in 0..200 {
        let a: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let gamma = rng.random_range(0.05..3.0);
        let m = KernelSpec::Matern { gamma, nu: MaternNu::Half }.eval(&a, &b);
        let r = KernelSpec::Rbf { gamma }.eval(&a, &b);
        matern = matern.max((m - r).abs());
    }

    let joint_ok = joint_gaps.iter().all(|(_, g)| *g <= 1e-6);
    let detail = format!(
        "GPR-KRR {gpr_krr:.1e}; joint vs independent {}; Matérn-RBF {matern:.1e}",
        joint_gaps.iter().map(|(n, g)| format!("{n} {g:.1e}")).collect::<Vec<_>>().join(", ")
    );
    outcome(gpr_krr <= 1e-10 && joint_ok && matern <= 1e-12, detail)
}

// ---------------------------------------------------------------------------
// 3. SVR against FISTA on the box-and-hyperplane constrained dual

// Euclidean projection onto {a ∈ [0, C]^2N : Σ s a = 0} by bisection on the
// multiplier of the hyperplane.
fn project(v: &DVector<f64>, s: &DVector<f64>, c: f64) -> DVector<f64> {
    let at = |tau: f64| DVector::from_fn(v.len(), |i, _| (v[i] - tau * s[i]).clamp(0.0, c));
    let g = |tau: f64| at(tau).dot(s);
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) < 0.0 {
        lo *= 2.0;
    }
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + lo.abs()) {
            break;
        }
    }
    at(0.5 * (lo + hi))
}

/// Minimum of `½ βᵀKβ + ε Σ(α + α*) − yᵀβ` with `β = α − α*`.
fn svr_dual_oracle(k: &DMatrix<f64>, y: &DVector<f64>, c: f64, eps: f64) -> f64 {
    let n = y.len();
    let s = DVector::from_fn(2 * n, |i, _| if i < n { 1.0 } else { -1.0 });
    let beta = |a: &DVector<f64>| DVector::from_fn(n, |i, _| a[i] - a[n + i]);
    let objective = |a: &DVector<f64>| {
        let b = beta(a);
        0.5 * b.dot(&(k * &b)) + eps * a.sum() - y.dot(&b)
    };
    let grad = |a: &DVector<f64>| {
        let kb = k * beta(a);
        DVector::from_fn(2 * n, |i, _| if i < n { kb[i] - y[i] + eps } else { -kb[i - n] + y[i - n] + eps })
    };
    let step = 1.0 / (2.0 * k.clone().symmetric_eigenvalues().max());
    let mut a = DVector::zeros(2 * n);
    let mut z = a.clone();
    let mut t = 1.0f64;
    let mut f = objective(&a);
    let mut stalled = 0;
    for _ in 0..200_000 {
        let next = project(&(&z - step * grad(&z)), &s, c);
        let fn_ = objective(&next);
        if fn_ > f {
            t = 1.0;
            z = a.clone();
            stalled += 1;
            if stalled == 50 {
                break;
            }
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + ((t - 1.0) / t_next) * (&next - &a);
        a = next;
        t = t_next;
        stalled = if f - fn_ <= 1e-15 * fn_.abs() { stalled + 1 } else { 0 };
        f = fn_;
        if stalled == 50 {
            break;
        }
    }
    f
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut solver = std::time::Duration::ZERO;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut gap, mut feas, mut oracle_gap) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.random_range(8..=30);
        let x = uniform_matrix(&mut rng, n, 2, -2.0, 2.0);
        let y = DVector::from_fn(n, |i, _| {
            (1.3 * x[(i, 0)]).sin() + 0.3 * x[(i, 1)] + 0.1 * rng.sample::<f64, _>(StandardNormal)
        });
        let spec = KernelSpec::Rbf { gamma: rng.random_range(0.2..2.0) };
        let c = rng.random_range(0.5..5.0);
        let eps = rng.random_range(0.01..0.3);
        let k = gram(&spec, &x, 0.0).unwrap();
        let t0 = Instant::now();
        let d = fit_svr(&k, &y, c, eps).unwrap();
        solver += t0.elapsed();
        let beta = d.beta();
        let kb = k.matrix() * &beta;
        let w2 = beta.dot(&kb);
        let dual = -0.5 * w2 - eps * (d.alpha.sum() + d.alpha_star.sum()) + y.dot(&beta);
        let hinge: f64 = (0..n).map(|i| ((y[i] - kb[i] - d.bias[0]).abs() - eps).max(0.0)).sum();
        let primal = 0.5 * w2 + c * hinge;
        gap = gap.max(primal - dual);
        for i in 0..n {
            for a in [d.alpha[i], d.alpha_star[i]] {
                feas = feas.max(-a).max(a - c);
            }
            feas = feas.max(d.alpha[i] * d.alpha_star[i]);
        }
        feas = feas.max(beta.sum().abs());
        let oracle = -svr_dual_oracle(k.matrix(), &y, c, eps);
        oracle_gap = oracle_gap.max((oracle - d.dual_objective).abs()).max((dual - d.dual_objective).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        gap <= 1e-6 && feas <= 1e-8 && oracle_gap <= 1e-6 && secs < 30.0,
        format!("max gap {gap:.1e}, feasibility {feas:.1e}, oracle {oracle_gap:.1e}; {secs:.2} s total, {:.3} s in the solver", solver.as_secs_f64()),
    )
}

// ---------------------------------------------------------------------------
// 4. RVM recovery and sparsity

fn criterion_4() -> Outcome {
    let n = 40;
    let mut recovered = 0;
    let mut fractions = Vec::new();
    let mut degenerate = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let x = uniform_matrix(&mut rng, n, 2, -2.0, 2.0);
        let k = gram(&KernelSpec::Rbf { gamma: 1.0 }, &x, 1e-10).unwrap();
        let j = rng.random_range(0..n);
        let y = DVector::from_fn(n, |i, _| k.matrix()[(i, j)] + 1e-3 * rng.sample::<f64, _>(StandardNormal));
        if fit_rvm(&k, &y, &RvmOptions::default()).is_ok_and(|f| f.active.contains(&j)) {
            recovered += 1;
        }
        let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        match fit_rvm(&k, &noise, &RvmOptions::default()) {
            Ok(f) => fractions.push(f.active.len() as f64 / n as f64),
            Err(Error::Degenerate(_)) => {
                degenerate += 1;
                fractions.push(0.0);
            }
            Err(e) => panic!("noise fit failed: {e}"),
        }
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    let max = fractions.iter().fold(0.0f64, |a, &b| a.max(b));
    outcome(
        recovered >= 95 && mean <= 0.2,
        format!(
            "planted column kept in {recovered}/100; noise active fraction mean {:.1}% (max {:.1}%, {degenerate} fully pruned)",
            100.0 * mean,
            100.0 * max
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. flow math

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut linear = 0.0f64;
    for _ in 0..10 {
        let c: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v = VectorField::from_fn(13, 17, |i, j| {
            let (x, y) = (j as f64, i as f64);
            (c[0] + c[1] * x + c[2] * y, c[3] + c[4] * x + c[5] * y)
        })
        .unwrap();
        let (_, div, curl) = cloud_dynamics(&v).unwrap();
        for i in 1..12 {
            for j in 1..16 {
                linear = linear.max((div.get(i, j) - (c[1] + c[5])).abs());
                linear = linear.max((curl.get(i, j) - (c[4] - c[2])).abs());
            }
        }
    }

    let mut residual = 0.0f64;
    for _ in 0..5 {
        let (m, n) = (rng.random_range(16..40), rng.random_range(16..40));
        let modes: Vec<[f64; 6]> = (0..4)
            .map(|_| std::array::from_fn(|k| if k < 4 { rng.random_range(-3.0..3.0) } else { rng.random_range(-1.0..1.0) }))
            .collect();
        let v = VectorField::from_fn(m, n, |i, j| {
            let (x, y) = (j as f64 / n as f64, i as f64 / m as f64);
            modes.iter().fold((0.5, -0.3), |(u, w), p| {
                let phase = p[0] * x + p[1] * y;
                (u + p[4] * phase.sin(), w + p[5] * (p[2] * x + p[3] * y).cos())
            })
        })
        .unwrap();
        let r = reconstruct(&helmholtz_decompose(&v).unwrap()).unwrap();
        let scale = v.u.iter().chain(v.v.iter()).fold(0.0f64, |a, b| a.max(b.abs()));
        let err = (&r.u - &v.u).iter().chain((&r.v - &v.v).iter()).fold(0.0f64, |a, b| a.max(b.abs()));
        residual = residual.max(err / scale);
    }

    let mut rays = true;
    for (m, n, sun, u) in [(11, 15, (5, 7), 1.5), (21, 21, (10, 10), 0.3), (9, 31, (4, 12), -2.0)] {
        let v = VectorField::from_fn(m, n, |_, _| (u, 0.0)).unwrap();
        let s = trace_streamline(&helmholtz_decompose(&v).unwrap(), sun).unwrap();
        let expected: Vec<(usize, usize)> = if u > 0.0 {
            (sun.1..n).map(|j| (sun.0, j)).collect()
        } else {
            (0..=sun.1).rev().map(|j| (sun.0, j)).collect()
        };
        rays &= s.pixels == expected && s.axis.iter().all(|a| *a == [true, false]);
    }
    outcome(
        linear <= 1e-12 && residual <= 1e-3 && rays,
        format!("linear-field error {linear:.1e}; Helmholtz residual {residual:.1e}; horizontal rays {rays}"),
    )
}

// ---------------------------------------------------------------------------
// 6. probability machinery

fn mc_cumulative(cells: &[f64], velocities: &[(f64, f64)], e: f64, samples: usize, seed: u64) -> Vec<f64> {
    let noise = Normal::new(0.0, e).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = vec![0.0; cells.len()];
    for _ in 0..samples {
        let mut t = 0.0;
        for (l, (&d, &(u, v))) in cells.iter().zip(velocities).enumerate() {
            t += d / (u + noise.sample(&mut rng)).hypot(v + noise.sample(&mut rng));
            sums[l] += t;
        }
    }
    sums.iter().map(|s| s / samples as f64).collect()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut wave_err = 0.0f64;
    for _ in 0..10 {
        let (m, n) = (rng.random_range(9..30), rng.random_range(9..30));
        let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let v = VectorField::from_fn(m, n, |i, j| {
            let (x, y) = (j as f64 / n as f64, i as f64 / m as f64);
            (a[0] + (a[1] * y).sin(), a[2] + (a[3] * x).cos())
        })
        .unwrap();
        let p = helmholtz_decompose(&v).unwrap();
        let w = wave_probability(&p, (rng.random_range(0..m), rng.random_range(0..n))).unwrap();
        wave_err = wave_err.max((w.sum() - 1.0).abs());
    }

    // streamline of a uniform flow on the reprojected plane; the shared
    // cumulative rate assumes equal per-pixel rates, which holds for a
    // constant speed. A drifting speed breaks it and is only reported.
    let (m, n) = (41, 41);
    let geo = reproject_pixels(m, n, 55.0, 150.0, 2000.0, 40.0).unwrap();
    let flow = VectorField::from_fn(m, n, |_, _| (1.0, 0.0)).unwrap();
    let line = trace_streamline(&helmholtz_decompose(&flow).unwrap(), (20, 20)).unwrap().with_geometry(&geo);
    let cells: Vec<f64> = line
        .cells
        .iter()
        .zip(&line.axis)
        .map(|(c, a)| (if a[0] { c[0] * c[0] } else { 0.0 } + if a[1] { c[1] * c[1] } else { 0.0 }).sqrt())
        .collect();
    let cumulative_error = |drift: f64, seed: u64| {
        let velocities: Vec<(f64, f64)> =
            (0..line.len()).map(|l| (8.0 * (1.0 + drift * l as f64 / line.len() as f64), 0.5)).collect();
        let t = traversal_times(&line, &velocities, 1.0, 1.0, 20_000, seed).unwrap();
        let oracle = mc_cumulative(&cells, &velocities, 1.0, 100_000, seed + 1);
        oracle.iter().enumerate().fold(0.0f64, |e, (l, o)| e.max((t.cumulative_mean(l) - o).abs() / o))
    };
    let cumulative = cumulative_error(0.0, 60);
    let drifting = cumulative_error(0.2, 70);

    let unit = Reprojection {
        x: Array2::from_shape_fn((m, n), |(_, j)| j as f64 - 20.0),
        y: Array2::from_shape_fn((m, n), |(i, _)| i as f64 - 20.0),
        dx: Array2::ones((m, n)),
        dy: Array2::ones((m, n)),
    };
    let wave = Array2::from_elem((m, n), 1.0 / (m * n) as f64);
    let mut mass = 0.0f64;
    for _ in 0..20 {
        let sx = rng.random_range(1.0..3.0);
        let sy = rng.random_range(1.0..3.0);
        let rho = rng.random_range(-0.5..0.5);
        let h = HorizonMoments {
            horizon: 60.0,
            weights: vec![],
            mean: [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)],
            covariance: [[sx * sx, rho * sx * sy], [rho * sx * sy, sy * sy]],
            displacement: rng.random_range(0.0..1.0),
        };
        let z = sun_weight_map(&[h], &wave, &unit).unwrap();
        mass = mass.max((z.maps[0].sum() / wave[[0, 0]] - 1.0).abs());
    }
    outcome(
        wave_err <= 1e-9 && cumulative <= 0.02 && mass <= 0.05,
        format!(
            "wave sum error {wave_err:.1e}; cumulative mean error {:.2}% (speed drifting 20%: {:.1}%); map mass error {:.2}%",
            100.0 * cumulative,
            100.0 * drifting,
            100.0 * mass
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. MLL gradients against central differences

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-5 * analytic.abs().max(numeric.abs()).max(1e-3)
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 20;
    let x = uniform_matrix(&mut rng, n, 2, -1.0, 1.0);
    let y = DMatrix::from_fn(n, 2, |i, c| (x[(i, 0)] * (2.0 + c as f64)).sin() + 0.2 * x[(i, 1)]);
    let y0 = y.column(0).into_owned();
    // the squared-distance Matérn 3/2 and 5/2 Grams are indefinite, so they
    // get noise large enough to keep the covariance positive definite
    let kernels = [
        (KernelSpec::Linear { gamma: 0.8 }, 1.0),
        (KernelSpec::Polynomial { gamma: 0.6, beta: 1.2 }, 1.0),
        (KernelSpec::Rbf { gamma: 1.3 }, 1.0),
        (KernelSpec::RationalQuadratic { gamma: 0.9, alpha: 1.7 }, 1.0),
        (KernelSpec::Matern { gamma: 0.7, nu: MaternNu::Half }, 1.0),
        (KernelSpec::Matern { gamma: 0.7, nu: MaternNu::ThreeHalves }, 8.0),
        (KernelSpec::Matern { gamma: 0.7, nu: MaternNu::FiveHalves }, 8.0),
    ];
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    let fd = |f: &dyn Fn(f64) -> f64, t: f64| {
        let h = 1e-5 * t.abs().max(1e-3);
        (f(t + h) - f(t - h)) / (2.0 * h)
    };
    for (spec, scale) in kernels {
        let noise = 0.3 * scale;
        let theta = spec.hyperparameters();
        let (_, g) = gpr_mll_gradient(&spec, &x, &y0, noise, 0.0).unwrap();
        let single = CorrelationMatrix::identity(1).unwrap();
        let mll = |s: &KernelSpec, nz: f64| {
            let yy = DMatrix::from_column_slice(n, 1, y0.as_slice());
            mt_gpr_mll(s, &x, &yy, &single, &[nz], 0.0).unwrap()
        };
        let mut numeric: Vec<f64> = (0..theta.len())
            .map(|p| {
                fd(
                    &|v| {
                        let mut t = theta.clone();
                        t[p] = v;
                        mll(&spec.with_hyperparameters(&t).unwrap(), noise)
                    },
                    theta[p],
                )
            })
            .collect();
        numeric.push(fd(&|v| mll(&spec, v), noise));

        let corr = |l: f64| CorrelationMatrix::from_length_scale(2, l).unwrap();
        let (ell, noises) = (1.5, [0.2 * scale, 0.35 * scale]);
        let (_, mg) = mt_gpr_mll_gradient(&spec, &x, &y, &corr(ell), &noises, 0.0).unwrap();
        let mt = |s: &KernelSpec, l: f64, nz: [f64; 2]| mt_gpr_mll(s, &x, &y, &corr(l), &nz, 0.0).unwrap();
        let mut mt_numeric: Vec<f64> = (0..theta.len())
            .map(|p| {
                fd(
                    &|v| {
                        let mut t = theta.clone();
                        t[p] = v;
                        mt(&spec.with_hyperparameters(&t).unwrap(), ell, noises)
                    },
                    theta[p],
                )
            })
            .collect();
        mt_numeric.push(fd(&|v| mt(&spec, v, noises), ell));
        mt_numeric.push(fd(&|v| mt(&spec, ell, [v, noises[1]]), noises[0]));
        mt_numeric.push(fd(&|v| mt(&spec, ell, [noises[0], v]), noises[1]));

        for (a, b) in g.iter().zip(&numeric).chain(mg.iter().zip(&mt_numeric)) {
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1e-3));
            if !close(*a, *b) {
                bad.push(format!("{} {a:.6e} vs {b:.6e}", spec.name()));
            }
        }
        if g.len() != numeric.len() || mg.len() != mt_numeric.len() {
            bad.push(format!("{}: gradient length", spec.name()));
        }
    }
    let detail = if bad.is_empty() {
        format!("max relative deviation {worst:.1e} over 7 kernels")
    } else {
        format!("max relative deviation {worst:.1e}; mismatches: {}", bad.join("; "))
    };
    outcome(bad.is_empty(), detail)
}

// ---------------------------------------------------------------------------
// 8. end-to-end synthetic forecast and the chain advantage

fn chain_beats_independent() -> (f64, f64) {
    // y₁ is quadratic in x and y₂ = y₁², so a degree-2 kernel represents
    // horizon 2 exactly from (x, y₁) but not from x alone
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let make = |rng: &mut ChaCha8Rng, n: usize| {
        let x = uniform_matrix(rng, n, 2, -1.0, 1.0);
        let y = DMatrix::from_fn(n, 2, |i, c| {
            let y1 = x[(i, 0)] * x[(i, 1)] + 0.5 * x[(i, 0)] * x[(i, 0)] - x[(i, 1)];
            if c == 0 { y1 } else { y1 * y1 }
        });
        (x, y)
    };
    let (xt, yt) = make(&mut rng, 120);
    let (xs, ys) = make(&mut rng, 200);
    let p = base(KernelSpec::Polynomial { gamma: 1.0, beta: 1.0 }, FamilyParams::Krr { ridge: 1e-4 });
    let chain = fit_chain(&[p; 2], &xt, &yt).unwrap();
    let indep = fit_independent(&[p; 2], &xt, &yt).unwrap();
    let err = |m| {
        rows(&xs).iter().enumerate().map(|(i, r)| (predict_multitask(m, r).unwrap().mean[1] - ys[(i, 1)]).powi(2)).sum::<f64>()
            / xs.nrows() as f64
    };
    (err(&chain).sqrt(), err(&indep).sqrt())
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = Layout::new(dir.path());
    let cfg = PipelineConfig::from_toml(BUNDLED).unwrap();
    let start = Instant::now();
    run::synth(&cfg, cfg.seed, &out).unwrap();
    run::features(&cfg, cfg.seed, &out).unwrap();
    run::fit(&cfg, cfg.seed, &out).unwrap();
    let eval = run::evaluate_models(&cfg, &out).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut best: Option<(String, f64, Vec<f64>)> = None;
    for (name, r) in &eval.models {
        let fs: Vec<f64> = r.horizons.iter().map(|h| h.fs.unwrap_or(f64::NEG_INFINITY)).collect();
        let worst = fs.iter().copied().fold(f64::INFINITY, f64::min);
        if best.as_ref().is_none_or(|b| worst > b.1) {
            best = Some((name.clone(), worst, fs));
        }
    }
    let (name, worst, fs) = best.unwrap();
    let (chain, indep) = chain_beats_independent();
    let fs_text: Vec<String> = fs.iter().map(|v| format!("{v:.1}")).collect();
    outcome(
        worst > 0.0 && chain < indep && secs < 300.0,
        format!(
            "{name} FS [{}] %; chain horizon-2 RMSE {chain:.2e} vs independent {indep:.2e}; pipeline {secs:.0} s",
            fs_text.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. determinism

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn full_run(cfg: &PipelineConfig, root: &Path) -> Vec<(String, Vec<Vec<f64>>)> {
    let out = Layout::new(root);
    run::synth(cfg, cfg.seed, &out).unwrap();
    run::features(cfg, cfg.seed, &out).unwrap();
    run::select(cfg, &out).unwrap();
    run::cv(cfg, cfg.seed, &out).unwrap();
    let models = run::fit(cfg, cfg.seed, &out).unwrap();
    let preds = run::predict(cfg, &out).unwrap();
    run::evaluate_models(cfg, &out).unwrap();
    run::report(&out).unwrap();
    assert_eq!(models.len(), preds.len());
    preds.into_iter().map(|(n, p): (String, Predictions)| (n, p.predicted)).collect()
}

fn criterion_9() -> Outcome {
    let cfg = PipelineConfig::from_toml(SMALL).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = full_run(&cfg, a.path());
    full_run(&cfg, b.path());
    let (fa, fb) = (files(a.path()), files(b.path()));
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();

    // reload every saved model and compare predictions bit for bit
    let out = Layout::new(a.path());
    let (_, test) = run::train_test(&cfg, &out).unwrap();
    let reloaded = run::load_models(&cfg, &out).unwrap();
    let mut roundtrip = reloaded.len() == first.len();
    for (m, (name, before)) in reloaded.iter().zip(&first) {
        let after = m.predict_dataset(&test).unwrap();
        let same = after.iter().flatten().zip(before.iter().flatten()).all(|(x, y)| x.to_bits() == y.to_bits());
        roundtrip &= m.name() == *name && same;
    }
    outcome(
        differing.is_empty() && roundtrip,
        format!(
            "{} files compared, {} differ{}; model round trip identical: {roundtrip}",
            fa.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(" ({})", differing.join(", ")) }
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("solver cross-validation", criterion_1),
        ("model equivalences", criterion_2),
        ("SVR correctness", criterion_3),
        ("RVM sparsity and recovery", criterion_4),
        ("flow math", criterion_5),
        ("probability machinery", criterion_6),
        ("MLL gradients", criterion_7),
        ("end-to-end synthetic forecast", criterion_8),
        ("determinism", criterion_9),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} [{tag}] {name}: {} ({:.1} s)", i + 1, o.detail, start.elapsed().as_secs_f64());
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
