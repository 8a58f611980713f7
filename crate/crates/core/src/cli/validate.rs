//! Self-checks run by the `validate` command.

use rand::Rng;
use serde::Serialize;

use crate::channel::{
    cascaded_csi, draw_with_rng, effective_channel, effective_channel_cascaded, Dims, Formulation,
    LinkGains,
};
use crate::config::SystemConfig;
use crate::estimator::{
    reconstruct_q, run_benchmark, run_proposed, BenchmarkSlots, EstimatorOptions, LsStep,
};
use crate::numerics::{reference, scale_columns};
use crate::scalar::{rel_err, rel_err_vec, unit_root};
use crate::seeding::{stream_rng, Stream};
use crate::training::{overhead_benchmark, overhead_proposed, PhaseSlots, TrainingPlan};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Observed value against its limit, human readable.
    pub detail: String,
}

fn exact(name: &str, got: usize, want: usize) -> Check {
    Check {
        name: name.into(),
        passed: got == want,
        detail: format!("{got} (expected {want})"),
    }
}

fn within(name: &str, err: f64, tol: f64) -> Check {
    let margin = if err > 0.0 {
        format!("{:.1e}x", tol / err)
    } else {
        "exact".into()
    };
    Check {
        name: name.into(),
        passed: err <= tol,
        detail: format!("max error {err:.3e} <= {tol:.0e}, margin {margin}"),
    }
}

fn failed(name: &str, why: String) -> Check {
    Check {
        name: name.into(),
        passed: false,
        detail: why,
    }
}

fn overhead_checks(dims: Dims) -> Vec<Check> {
    let Dims { m1, m2, k, .. } = dims;
    let mut out = vec![
        exact(
            "overhead proposed N=20 M=20 K=1",
            overhead_proposed(20, 20, 20, 1),
            60,
        ),
        exact(
            "overhead proposed N=8 M=20 K=4",
            overhead_proposed(8, 20, 20, 4),
            106,
        ),
        exact(
            "overhead benchmark M=20 K=4",
            overhead_benchmark(20, 20, 4),
            1760,
        ),
    ];
    let series: Vec<usize> = (1..=2 * m1.max(m2) + 8)
        .map(|n| overhead_proposed(n, m1, m2, k))
        .collect();
    let non_increasing = series.windows(2).all(|w| w[1] <= w[0]);
    out.push(Check {
        name: format!("overhead proposed non-increasing in N (M1={m1} M2={m2} K={k})"),
        passed: non_increasing,
        detail: format!(
            "N=1: {}, N={}: {}",
            series[0],
            series.len(),
            series[series.len() - 1]
        ),
    });
    out.push(exact(
        "overhead proposed plateau for N >= max(M1, M2)",
        overhead_proposed(m1.max(m2), m1, m2, k),
        2 * m1 + m2 + 2 * (k - 1),
    ));
    out
}

fn random_reflection<R: Rng>(rng: &mut R, m: usize) -> Vec<num_complex::Complex<f64>> {
    (0..m)
        .map(|_| {
            if rng.random_bool(0.2) {
                num_complex::Complex::new(0.0, 0.0)
            } else {
                unit_root(rng.random_range(0..360), 360)
            }
        })
        .collect()
}

fn formulation_check(cfg: &SystemConfig, gains: &LinkGains) -> Check {
    let name = "effective channel formulations agree (100 tuples)";
    let dims = Dims::from(cfg);
    let mut worst = 0.0_f64;
    for t in 0..100 {
        let mut rng = stream_rng(cfg.seed, Stream::Validation, t, 0);
        let real = match draw_with_rng::<f64, _>(dims, gains, &mut rng) {
            Ok(r) => r,
            Err(e) => return failed(name, e.to_string()),
        };
        let Ok(csi) = cascaded_csi(&real) else {
            return failed(name, "degenerate reference user".into());
        };
        let th1 = random_reflection(&mut rng, dims.m1);
        let th2 = random_reflection(&mut rng, dims.m2);
        let k = rng.random_range(0..dims.k);
        let physical = effective_channel(&real, &th1, &th2, k).expect("valid reflections");
        let mut forms = vec![Formulation::Cascaded, Formulation::UserScaled];
        if k == 0 {
            forms.push(Formulation::ReferenceScaled);
        }
        for f in forms {
            let h = effective_channel_cascaded(&csi, &th1, &th2, k, f).expect("valid reflections");
            worst = worst.max(rel_err_vec(&h, &physical));
        }
    }
    within(name, worst, 1e-12)
}

fn regimes(dims: Dims) -> [Dims; 2] {
    let wide = dims.m1.max(dims.m2);
    let alt = if dims.n < wide {
        wide
    } else {
        dims.m1.min(dims.m2).div_ceil(2)
    };
    [dims, Dims { n: alt, ..dims }]
}

fn estimation_checks(cfg: &SystemConfig, gains: &LinkGains) -> Vec<Check> {
    let trials = cfg.trials.min(5) as u64;
    let mut out = Vec::new();
    for dims in regimes(Dims::from(cfg)) {
        let tag = format!("N={} M1={} M2={} K={}", dims.n, dims.m1, dims.m2, dims.k);
        let plan = TrainingPlan::<f64>::minimal(dims);
        let opts = EstimatorOptions {
            record_steps: true,
            ..EstimatorOptions::new(cfg.rank_tol)
        };
        let (mut exact_err, mut bench_err, mut oracle_err) = (0.0_f64, 0.0_f64, 0.0_f64);
        let mut identities = true;
        let mut bench_slots = 0;
        let mut error = None;
        for t in 0..trials {
            let mut rng = stream_rng(cfg.seed, Stream::Validation, t, 1 + dims.n as u64);
            let run = draw_with_rng::<f64, _>(dims, gains, &mut rng)
                .map_err(|e| e.to_string())
                .and_then(|real| {
                    let csi = cascaded_csi(&real).map_err(|e| e.to_string())?;
                    let est = run_proposed(&real, &plan, 0.0, &mut rng, &opts)
                        .map_err(|e| e.to_string())?;
                    let bench = run_benchmark(
                        &real,
                        BenchmarkSlots::minimal(dims.m1, dims.m2),
                        0.0,
                        &mut rng,
                        &opts,
                    )
                    .map_err(|e| e.to_string())?;
                    Ok((csi, est, bench))
                });
            let (csi, est, bench) = match run {
                Ok(v) => v,
                Err(e) => {
                    error = Some(e);
                    break;
                }
            };
            for (res, acc) in [(&est, &mut exact_err), (&bench, &mut bench_err)] {
                for k in 0..dims.k {
                    *acc = acc.max(rel_err(&res.r_hat[k], &csi.r[k]));
                    *acc = acc.max(rel_err(&res.r_tilde_hat[k], &csi.r_tilde[k]));
                    for (q_hat, q) in res.q_hat[k].iter().zip(&csi.q[k]) {
                        *acc = acc.max(rel_err(q_hat, q));
                    }
                }
            }
            for step in &est.ls_steps {
                let (got, oracle) = match step {
                    LsStep::Right {
                        y, theta, solution, ..
                    } => (solution, reference::solve_right(y, theta)),
                    LsStep::Left { a, y, solution, .. } => (solution, reference::solve_left(a, y)),
                };
                oracle_err = oracle_err.max(oracle.map_or(f64::INFINITY, |o| rel_err(got, &o)));
            }
            let s = est
                .scaling
                .as_ref()
                .expect("proposed scheme reports scalings");
            identities &= reconstruct_q(&est.r_tilde_hat[0], &s.a_hat) == est.q_hat[0];
            for k in 1..dims.k {
                identities &= est.r_hat[k] == scale_columns(&est.r_hat[0], s.b_hat[k].as_slice());
                identities &= est.r_tilde_hat[k]
                    == scale_columns(&est.r_tilde_hat[0], s.b_tilde_hat[k].as_slice());
            }
            bench_slots = bench.slots.total();
        }
        if let Some(e) = error {
            out.push(failed(&format!("noiseless estimation ({tag})"), e));
            continue;
        }
        out.push(within(
            &format!("proposed noiseless exactness ({tag}, {trials} trials)"),
            exact_err,
            1e-9,
        ));
        out.push(within(
            &format!("benchmark noiseless exactness ({tag}, {trials} trials)"),
            bench_err,
            1e-9,
        ));
        out.push(within(
            &format!("LS steps match QR oracle ({tag})"),
            oracle_err,
            1e-10,
        ));
        out.push(Check {
            name: format!("reconstruction identities ({tag})"),
            passed: identities,
            detail: if identities {
                "bit-exact".into()
            } else {
                "mismatch".into()
            },
        });
        out.push(exact(
            &format!("proposed plan slots ({tag})"),
            plan.slots().total(),
            overhead_proposed(dims.n, dims.m1, dims.m2, dims.k),
        ));
        out.push(exact(
            &format!("benchmark slots ({tag})"),
            bench_slots,
            overhead_benchmark(dims.m1, dims.m2, dims.k),
        ));
    }
    let dims = Dims::from(cfg);
    out.push(exact(
        "equal-overhead padding matches benchmark",
        PhaseSlots::minimum(dims)
            .padded_to(overhead_benchmark(dims.m1, dims.m2, dims.k))
            .total(),
        overhead_benchmark(dims.m1, dims.m2, dims.k),
    ));
    out
}

pub fn run_checks(cfg: &SystemConfig) -> Vec<Check> {
    let mut out = overhead_checks(Dims::from(cfg));
    match LinkGains::from_config(cfg) {
        Ok(gains) => {
            out.push(formulation_check(cfg, &gains));
            out.extend(estimation_checks(cfg, &gains));
        }
        Err(e) => out.push(failed("scenario geometry", e.to_string())),
    }
    out
}

pub fn report(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        s.push_str(&format!(
            "[{}] {}: {}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        ));
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    s.push_str(&format!("{} checks, {} failed\n", checks.len(), failed));
    s
}
