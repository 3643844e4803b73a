//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::path::Path as FsPath;
use std::process::Command;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use roughvar::isometry::{chain_rule_check, invariance_check, isometry_check, IntegrandPower, SmoothMap};
use roughvar::roughness::{monotonicity_violations, Prober};
use roughvar::schauder::{schauder_eval, takagi_coefficients, SignSource};
use roughvar::variation::abs_pow;
use roughvar::{
    classical_scaled_qv, critical_index_search, dyadic_partition, fbm_path, limit_diagnostics,
    pth_variation, scaled_qv, smooth_perturbation, Classification, PVarSource, Path,
    RoughnessConfig, Smooth, SourceMode, Thresholds,
};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn roughvar(args: &[&str]) -> Result<(String, Duration), String> {
    let t0 = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_roughvar"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    if !out.status.success() {
        return Err(format!(
            "`roughvar {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok((String::from_utf8_lossy(&out.stdout).into_owned(), elapsed))
}

fn read_json(path: &FsPath) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .map(|a| a.iter().filter_map(Value::as_f64).collect())
        .unwrap_or_default()
}

fn takagi(h: f64, l: u32) -> Path {
    schauder_eval(&takagi_coefficients(h, SignSource::AllPlus, l).unwrap(), l).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Counterexample path values at the level-`level` dyadic points, summed tent
/// by tent: only `θ_{m,k}` with `k = ⌊t 2^m⌋` is nonzero at `t` per level.
fn counterexample_oracle(n_max: u32, level: u32) -> Vec<f64> {
    let levels: Vec<(u32, f64)> = (1..=n_max)
        .map(|n| {
            let nf = n as f64;
            let m = n * (n + 1) / 2 - 1;
            (m, (2.0 * nf - (nf - 1.0) / 2f64.powi(n as i32 - 1)).sqrt())
        })
        .collect();
    let npts = 1usize << level;
    (0..=npts)
        .map(|j| {
            let t = j as f64 / npts as f64;
            levels
                .iter()
                .map(|&(m, theta)| {
                    let scale = 2f64.powi(m as i32);
                    let k = (t * scale).floor().min(scale - 1.0);
                    let u = t * scale - k;
                    theta * 2f64.powf(-(m as f64) / 2.0) * u.min(1.0 - u).max(0.0)
                })
                .sum()
        })
        .collect()
}

fn naive_qv(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum()
}

fn criterion_1(dir: &FsPath) -> Outcome {
    let out = dir.join("c1");
    let (_, elapsed) = roughvar(&["counterexample", "--nmax", "5", "--level", "15", "--out", out.to_str().unwrap()])?;
    let ce = read_json(&out.join("counterexample.json"))?;
    let s_n = floats(&ce["values_s_n"]);
    let s_n_1 = floats(&ce["values_s_n_minus_1"]);
    ensure(s_n.len() == 5 && s_n_1.len() == 5, || "expected five levels each".into())?;
    let mut worst = 0f64;
    for n in 1..=5u32 {
        let i = (n - 1) as usize;
        let err = (s_n[i] - n as f64).abs();
        worst = worst.max(err);
        ensure(err < 1e-9, || format!("level S_{n}: {} vs {n}", s_n[i]))?;
        let level = n * (n + 1) / 2 - 1;
        let oracle = naive_qv(&counterexample_oracle(5, level));
        ensure((s_n_1[i] - oracle).abs() < 1e-9, || {
            format!("level S_{n}-1: {} vs oracle {oracle}", s_n_1[i])
        })?;
        let closed = (n as f64 - 1.0) * 2f64.powi(1 - n as i32);
        ensure((oracle - closed).abs() < 1e-9, || {
            format!("oracle {oracle} vs (n-1)2^(1-n) = {closed} at n = {n}")
        })?;
    }
    let class = ce["interleaved_report"]["classification"].as_str().unwrap_or("");
    ensure(class == "oscillating", || format!("interleaved sequence classified {class}"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("runtime {elapsed:?}"))?;
    Ok(format!(
        "max |[X]_S_n - n| = {worst:.1e}; S_n - 1 values match oracle (n-1)2^(1-n); interleaved oscillating; {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn criterion_2(dir: &FsPath) -> Outcome {
    let x = dir.join("c2_takagi.csv");
    roughvar(&["gen", "--kind", "takagi", "--H", "0.5", "--level", "14", "--out", x.to_str().unwrap()])?;
    let out = dir.join("c2");
    let (_, elapsed) = roughvar(&[
        "sqv", "--in", x.to_str().unwrap(), "--p", "2", "--levels", "2:14", "--window", "4", "--out",
        out.to_str().unwrap(),
    ])?;
    let report = read_json(&out.join("limit_report.json"))?;
    let values = floats(&report["terminal_values"]);
    let mut worst = 0f64;
    for (i, n) in (2..=14).enumerate() {
        let err = (values[i] - (1.0 - 2f64.powi(-n))).abs();
        worst = worst.max(err);
        ensure(err <= 1e-12, || format!("level {n}: {} (err {err:e})", values[i]))?;
    }
    let class = report["classification"].as_str().unwrap_or("");
    ensure(class == "finite_positive", || format!("classified {class}"))?;
    let (sup, inf) = (report["limsup_est"].as_f64().unwrap(), report["liminf_est"].as_f64().unwrap());
    ensure((0.999..=1.0).contains(&sup) && (0.999..=1.0).contains(&inf), || {
        format!("limsup {sup}, liminf {inf}")
    })?;
    ensure(elapsed < Duration::from_secs(2), || format!("runtime {elapsed:?}"))?;
    Ok(format!(
        "max err {worst:.1e}; finite_positive, liminf {inf:.6}, limsup {sup:.6}; {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn criterion_3() -> Outcome {
    let t0 = Instant::now();
    let l = 16;
    let mut notes = Vec::new();
    for h in [0.25, 0.4] {
        let p = 1.0 / h;
        let x = takagi(h, l);
        let c: f64 = x.samples().windows(2).map(|w| (w[1] - w[0]).abs().powf(p)).sum();
        let src = PVarSource::linear(c).map_err(|e| e.to_string())?;
        let top = l - 2;
        let got = scaled_qv(&x, &dyadic_partition(top, l).unwrap(), p, &src)
            .map_err(|e| e.to_string())?
            .terminal();
        let target = c.powf(1.0 - 2.0 * h) / (2f64.powf(2.0 - 2.0 * h) - 1.0);
        let rel = (got - target).abs() / target;
        ensure(rel < 0.05, || format!("H = {h}: {got} vs {target} (rel {rel:.3})"))?;
        notes.push(format!("H={h}: rel {rel:.2e}"));
    }
    let elapsed = t0.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("runtime {elapsed:?}"))?;
    Ok(format!("{}; {:.2}s", notes.join(", "), elapsed.as_secs_f64()))
}

fn criterion_4() -> Outcome {
    let x = takagi(0.5, 14);
    let prober = Prober::new(&x, RoughnessConfig::new((6..=12).collect())).map_err(|e| e.to_string())?;
    let hi = prober.probe(3.0).map_err(|e| e.to_string())?;
    let lo = prober.probe(1.5).map_err(|e| e.to_string())?;
    ensure(hi.classification == Classification::Vanishing, || {
        format!("q = 3 classified {}", hi.classification)
    })?;
    ensure(lo.classification == Classification::Diverging, || {
        format!("q = 1.5 classified {}", lo.classification)
    })?;
    let qs: Vec<f64> = (0..9).map(|i| 1.2 + 2.8 * i as f64 / 8.0).collect();
    let sweep = prober.sweep(&qs).map_err(|e| e.to_string())?;
    let violations = monotonicity_violations(&sweep);
    ensure(violations.is_empty(), || format!("violations {violations:?}"))?;
    let classes: Vec<String> = sweep.iter().map(|p| p.classification.to_string()).collect();
    Ok(format!("q=3 vanishing, q=1.5 diverging; sweep {}", classes.join(" ")))
}

fn criterion_5() -> Outcome {
    let x = takagi(0.5, 14);
    let r = critical_index_search(&x, (1.2, 4.0), 12, RoughnessConfig::for_search((6..=12).collect()))
        .map_err(|e| e.to_string())?;
    ensure((r.p_bar_est - 2.0).abs() <= 0.01, || format!("Takagi p_bar {}", r.p_bar_est))?;
    let mut notes = vec![format!("Takagi p_bar {:.4}", r.p_bar_est)];
    for h in [0.3, 0.5, 0.7] {
        let t0 = Instant::now();
        let mut ests = Vec::new();
        for seed in 1..=5u64 {
            let x = fbm_path(h, 18, seed).map_err(|e| e.to_string())?;
            let r = critical_index_search(&x, (1.1, 8.0), 12, RoughnessConfig::for_search((8..=16).collect()))
                .map_err(|e| format!("H = {h}, seed {seed}: {e}"))?;
            ests.push(r.hurst_est);
        }
        let elapsed = t0.elapsed();
        let med = median(ests);
        ensure((med - h).abs() <= 0.05, || format!("H = {h}: median {med}"))?;
        ensure(elapsed < Duration::from_secs(60), || format!("H = {h}: runtime {elapsed:?}"))?;
        notes.push(format!("H={h}: median {med:.4} ({:.1}s)", elapsed.as_secs_f64()));
    }
    Ok(notes.join(", "))
}

fn criterion_6() -> Outcome {
    let cases: Vec<(String, Path, f64)> = vec![
        ("Takagi 0.25".into(), takagi(0.25, 16), 0.25),
        ("Takagi 0.5".into(), takagi(0.5, 16), 0.5),
        ("fBM 0.3".into(), fbm_path(0.3, 18, 1).unwrap(), 0.3),
        ("fBM 0.7".into(), fbm_path(0.7, 18, 1).unwrap(), 0.7),
    ];
    let mut compared = 0;
    for (name, x, h) in &cases {
        let p = 1.0 / h;
        let l = x.grid_level();
        let levels: Vec<u32> = (6..=l - 2).collect();
        let c = pth_variation(x, &dyadic_partition(l, l).unwrap(), p).unwrap().terminal();
        let src = PVarSource::linear(c).unwrap();
        let mut scaled = Vec::new();
        let mut classical = Vec::new();
        for &n in &levels {
            let part = dyadic_partition(n, l).unwrap();
            scaled.push(scaled_qv(x, &part, p, &src).unwrap().terminal());
            classical.push(classical_scaled_qv(x, &part, 1.0 - 2.0 * h).unwrap().terminal());
        }
        let t = Thresholds::default();
        for window in 3..=levels.len() {
            let a = limit_diagnostics(&levels, &scaled, window, &t).unwrap().classification;
            let b = limit_diagnostics(&levels, &classical, window, &t).unwrap().classification;
            ensure(a == b, || format!("{name}, window {window}: scaled {a} vs classical {b}"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} (path, window) pairs agree"))
}

fn criterion_7() -> Outcome {
    let paths = [
        ("Takagi 0.5", takagi(0.5, 14), 2.0),
        ("fBM 0.4", fbm_path(0.4, 16, 1).unwrap(), 2.5),
    ];
    let levels: Vec<u32> = (6..=12).collect();
    let maps = || {
        vec![
            SmoothMap::identity(),
            SmoothMap::affine(2.0, 1.0),
            SmoothMap::square_plus_one(),
            SmoothMap::sin(),
        ]
    };
    let mut notes = Vec::new();
    for (name, x, p) in &paths {
        for f in maps() {
            let r = isometry_check(x, &f, *p, &levels, SourceMode::FinestLevel, IntegrandPower::P)
                .map_err(|e| e.to_string())?;
            let cr = chain_rule_check(x, &f, *p, &levels).map_err(|e| e.to_string())?;
            if f.id == "identity" {
                ensure(r.abs_err.iter().all(|e| *e == 0.0), || format!("{name}: identity errors {:?}", r.abs_err))?;
                ensure(cr.abs_err.iter().all(|e| *e == 0.0), || {
                    format!("{name}: identity chain-rule errors {:?}", cr.abs_err)
                })?;
                continue;
            }
            let top = *r.rel_err.last().unwrap();
            ensure(top < 0.05, || format!("{name}, {}: top rel_err {top}", f.id))?;
            ensure(r.err_trend_slope.is_some_and(|s| s < 0.0), || {
                format!("{name}, {}: error trend {:?}", f.id, r.err_trend_slope)
            })?;
            ensure(cr.err_trend_slope.is_some_and(|s| s < 0.0), || {
                format!("{name}, {}: chain-rule trend {:?}", f.id, cr.err_trend_slope)
            })?;
            notes.push(format!("{name}/{} {top:.1e}", f.id));
        }
    }
    Ok(format!("identity exact; top rel_err {}", notes.join(", ")))
}

fn criterion_8() -> Outcome {
    let levels: Vec<u32> = (6..=12).collect();
    let mut notes = Vec::new();
    for (name, x, p) in [
        ("Takagi 0.5", takagi(0.5, 14), 2.0),
        ("fBM 0.4", fbm_path(0.4, 16, 1).unwrap(), 2.5),
    ] {
        let a = smooth_perturbation(&Smooth::Sine { amplitude: 0.5, freq: 1.0 }, x.grid_level()).unwrap();
        let r = invariance_check(&x, &a, p, &levels, SourceMode::FinestLevel).map_err(|e| e.to_string())?;
        let last = *r.rel_diff.last().unwrap();
        ensure(last < 0.02, || format!("{name}: rel diff {last} at level 12"))?;
        ensure(r.trend_slope.is_some_and(|s| s < 0.0) && last < r.rel_diff[0], || {
            format!("{name}: not decreasing {:?}", r.rel_diff)
        })?;
        notes.push(format!("{name}: {last:.1e} (trend {:.2})", r.trend_slope.unwrap()));
    }
    Ok(notes.join(", "))
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn prefix(terms: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut acc = 0.0;
    for t in terms {
        acc += t;
        out.push(acc);
    }
    out
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0f64;
    let mut check = |what: &str, got: &[f64], want: &[f64]| -> Result<(), String> {
        ensure(got.len() == want.len(), || format!("{what}: length"))?;
        for (g, w) in got.iter().zip(want) {
            let r = rel(*g, *w);
            worst = worst.max(r);
            ensure(r <= 1e-14, || format!("{what}: {g} vs {w} (rel {r:e})"))?;
        }
        Ok(())
    };
    for case in 0..200 {
        let l = rng.random_range(3..=5u32);
        let samples: Vec<f64> = (0..=(1usize << l)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Path::new(l, samples.clone(), "random").unwrap();
        let n = rng.random_range(0..=l);
        let p = rng.random_range(0.5..4.0);
        let gamma = rng.random_range(-1.0..1.0);
        let part = dyadic_partition(n, l).unwrap();
        let idx = part.indices();
        let dx: Vec<f64> = idx.windows(2).map(|w| samples[w[1]] - samples[w[0]]).collect();
        let dt = (-(n as f64)).exp2();
        let what = |k: &str| format!("case {case} ({k}, L={l}, n={n}, p={p:.3})");

        let pth = pth_variation(&x, &part, p).unwrap();
        check(&what("pth"), &pth.values, &prefix(&dx.iter().map(|d| d.abs().powf(p)).collect::<Vec<_>>()))?;

        let cl = classical_scaled_qv(&x, &part, gamma).unwrap();
        check(&what("classical"), &cl.values, &prefix(&dx.iter().map(|d| dt.powf(gamma) * d * d).collect::<Vec<_>>()))?;

        let g = (p - 2.0) / p;
        let slope = rng.random_range(0.1..3.0);
        let lin = scaled_qv(&x, &part, p, &PVarSource::linear(slope).unwrap()).unwrap();
        check(&what("analytic"), &lin.values, &prefix(&dx.iter().map(|d| (slope * dt).powf(g) * d * d).collect::<Vec<_>>()))?;

        // finest-level weight: the grid p-th variation accumulated over each block
        let fine = prefix(&samples.windows(2).map(|w| (w[1] - w[0]).abs().powf(p)).collect::<Vec<_>>());
        let w: Vec<f64> = idx.windows(2).map(|b| fine[b[1]] - fine[b[0]]).collect();
        let finest = scaled_qv(&x, &part, p, &PVarSource::finest(&x, p).unwrap()).unwrap();
        check(
            &what("finest"),
            &finest.values,
            &prefix(&w.iter().zip(&dx).map(|(w, d)| w.powf(g) * d * d).collect::<Vec<_>>()),
        )?;

        let selfl = scaled_qv(&x, &part, p, &PVarSource::SelfLevel).unwrap();
        check(&what("self-level identity"), &selfl.values, &pth.values)?;

        let two = scaled_qv(&x, &part, 2.0, &PVarSource::finest(&x, 2.0).unwrap()).unwrap();
        let qv = pth_variation(&x, &part, 2.0).unwrap();
        ensure(two.values == qv.values, || format!("case {case}: gamma = 0 collapse not exact"))?;
    }
    Ok(format!("200 paths, max rel diff {worst:.1e}; gamma=0 collapse bitwise, self-level identity holds"))
}

/// `v` as an exact integer multiple of 2^-1074.
fn exact(v: f64) -> BigInt {
    assert!(v.is_finite() && v >= 0.0);
    let bits = v.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, shift) = if exp == 0 { (frac, 0) } else { (frac | (1u64 << 52), exp - 1) };
    BigInt::from(mant) << shift as usize
}

fn criterion_10(dir: &FsPath) -> Outcome {
    let mut notes = Vec::new();
    for (cmd, extra) in [("pvar", ["--H", "0.5", "--p", "2"]), ("sqv", ["--H", "0.4", "--p", "2.5"])] {
        let out = dir.join(format!("c10_{cmd}"));
        let mut args = vec![cmd, "--kind", "takagi", "--level", "22", "--levels", "22", "--out"];
        args.push(out.to_str().unwrap());
        args.extend(extra);
        let (_, elapsed) = roughvar(&args)?;
        ensure(elapsed < Duration::from_secs(2), || format!("{cmd} at grid level 22: {elapsed:?}"))?;
        notes.push(format!("{cmd} L=22 {:.2}s", elapsed.as_secs_f64()));
    }

    let x = fbm_path(0.3, 18, 7).unwrap();
    let part = dyadic_partition(18, 18).unwrap();
    let s = x.samples();
    let mut worst = f64::NEG_INFINITY;
    for p in [2.0, 3.3] {
        let prof = pth_variation(&x, &part, p).unwrap();
        let terms: Vec<f64> = s.windows(2).map(|w| abs_pow(w[1] - w[0], p)).collect();
        let mut sum = BigInt::from(0);
        for (j, t) in terms.iter().enumerate() {
            sum += exact(*t);
            if (j + 1) % 65536 == 0 || j + 1 == terms.len() {
                let got = exact(prof.values[j + 1]);
                let diff = if got > sum { &got - &sum } else { &sum - &got };
                // diff / sum < 1e-12  <=>  diff * 10^12 < sum
                ensure(&diff * BigInt::from(10u64.pow(12)) < sum, || {
                    format!("p = {p}: prefix {} disagrees with exact sum", j + 1)
                })?;
                // log2 upper bound of diff / sum
                let r = diff.bits() as f64 - (sum.bits() as f64 - 1.0);
                worst = worst.max(r);
            }
        }
    }
    notes.push(format!("compensated prefix sums at L=18 within rel 2^{worst:.0} of exact"));
    Ok(notes.join(", "))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("counterexample oscillation", Box::new(|| criterion_1(dir.path()))),
        ("Takagi H=1/2 quadratic variation", Box::new(|| criterion_2(dir.path()))),
        ("Takagi scaled QV constant", Box::new(criterion_3)),
        ("switching behaviour", Box::new(criterion_4)),
        ("critical index search", Box::new(criterion_5)),
        ("scaled vs classical equivalence", Box::new(criterion_6)),
        ("pathwise isometry and chain rule", Box::new(criterion_7)),
        ("smooth perturbation invariance", Box::new(criterion_8)),
        ("oracle equivalence of kernels", Box::new(criterion_9)),
        ("performance and summation accuracy", Box::new(|| criterion_10(dir.path()))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg} [{secs:.2}s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {msg} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
