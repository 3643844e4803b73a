use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use roughvar::io::{save_path, save_profile, write_coefficients};
use roughvar::isometry::{chain_rule_check, invariance_check, isometry_check, SmoothMap};
use roughvar::pathgen::GENERATOR_VERSION;
use roughvar::roughness::{default_levels, monotonicity_violations, Probe, Prober};
use roughvar::schauder::{counterexample_coefficients, schauder_eval, triangular};
use roughvar::variation::{over_levels, terminals};
use roughvar::{
    classical_scaled_qv, critical_index_search, limit_diagnostics, pth_variation, scaled_qv,
    smooth_perturbation, LimitReport, PVarSource, Path, RoughnessConfig, Smooth, SourceMode,
    Thresholds, VariationProfile,
};

use crate::args::*;
use crate::run::*;

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Gen(a) => gen(cli, a),
        Command::Pvar(a) => profiles(
            cli,
            "pvar",
            &a.path,
            &a.levels,
            &a.thresholds,
            &a.out,
            Kernel::Pth(a.p),
        ),
        Command::Sqv(a) => profiles(
            cli,
            "sqv",
            &a.path,
            &a.levels,
            &a.thresholds,
            &a.out,
            Kernel::Scaled(a.p, a.src.into(), a.slope),
        ),
        Command::Classical(a) => profiles(
            cli,
            "classical",
            &a.path,
            &a.levels,
            &a.thresholds,
            &a.out,
            Kernel::Classical(a.gamma),
        ),
        Command::Roughness(a) => roughness(cli, a),
        Command::Isometry(a) => isometry(cli, a),
        Command::Chainrule(a) => chainrule(cli, a),
        Command::Invariance(a) => invariance(cli, a),
        Command::Counterexample(a) => counterexample(cli, a),
        Command::Report(a) => report(cli, a),
    }
}

fn emit<T: Serialize>(cli: &Cli, report: &T, summary: &str) -> CliResult<()> {
    if cli.json {
        let text = serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.to_string()))?;
        println!("{text}");
    } else {
        print!("{summary}");
    }
    Ok(())
}

fn fmt_values(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(", ")
}

fn check_window(thr: &ThresholdArgs, n_levels: usize) -> CliResult<()> {
    if let Some(w) = thr.window {
        if w < 2 || w > n_levels {
            return invalid(format!("--window {w} must lie in 2..={n_levels}"));
        }
    }
    Ok(())
}

fn check_thresholds(t: &Thresholds) -> CliResult<()> {
    if !(t.vanish_level > 0.0 && t.vanish_level < t.diverge_level && t.diverge_level.is_finite()) {
        return invalid("thresholds need 0 < --vanish-level < --diverge-level < inf");
    }
    let slope_ok = t.slope_tol >= 0.0 && t.slope_tol.is_finite();
    if !slope_ok || t.oscillation_ratio.is_nan() || t.oscillation_ratio <= 1.0 {
        return invalid("thresholds need --slope-tol >= 0 and --osc-ratio > 1");
    }
    Ok(())
}

fn terminals_csv(levels: &[u32], values: &[f64]) -> String {
    let mut s = String::from("level,terminal\n");
    for (n, v) in levels.iter().zip(values) {
        let _ = writeln!(s, "{n},{v:?}");
    }
    s
}

fn gen(cli: &Cli, a: &GenArgs) -> CliResult<()> {
    let mut run = Run::new("gen");
    if a.path.input.is_some() {
        return invalid("gen takes generator flags (--kind ...), not --in");
    }
    check_out_file(&a.out)?;
    let input = path_input(&a.path, &mut run)?;
    let x = materialise(&input, &mut run)?;
    let spec = run.generator.clone().expect("generator input");

    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_path(&x, &a.out)?;
    run.created(a.out.clone());
    let meta = json!({
        "spec": spec,
        "seed": spec.seed,
        "generator_version": GENERATOR_VERSION,
        "label": x.label(),
        "samples": x.samples().len(),
    });
    run.json(&meta, sibling(&a.out, "meta.json"))?;
    run.finish(cli, sibling(&a.out, "manifest.json"), 0)?;
    let summary = format!(
        "generated {} ({} samples, grid level {}) -> {}\n",
        x.label(),
        x.samples().len(),
        x.grid_level(),
        a.out.display()
    );
    emit(cli, &meta, &summary)
}

/// `dir/stem.suffix` for an output file `dir/stem.ext`.
fn sibling(file: &FsPath, suffix: &str) -> PathBuf {
    let stem = file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    file.with_file_name(format!("{stem}.{suffix}"))
}

enum Kernel {
    Pth(f64),
    Scaled(f64, SourceMode, Option<f64>),
    Classical(f64),
}

#[derive(Serialize)]
struct ProfilesOutput {
    kind: String,
    levels: Vec<u32>,
    terminal_values: Vec<f64>,
    divergent_levels: Vec<u32>,
    clamped_weights: usize,
    source_mode: Option<SourceMode>,
    limit_report: Option<LimitReport>,
}

fn profiles(
    cli: &Cli,
    command: &'static str,
    pa: &PathArgs,
    levels: &str,
    thr: &ThresholdArgs,
    out: &FsPath,
    kernel: Kernel,
) -> CliResult<()> {
    let mut run = Run::new(command);
    let levels = parse_levels(levels)?;
    match kernel {
        Kernel::Pth(p) => check_positive("p", p)?,
        Kernel::Scaled(p, mode, slope) => {
            check_positive("p", p)?;
            if let Some(c) = slope {
                if mode != SourceMode::Analytic {
                    return invalid("--slope needs --src analytic");
                }
                check_positive("slope", c)?;
            }
        }
        Kernel::Classical(g) => {
            if !g.is_finite() {
                return invalid("--gamma must be finite");
            }
        }
    }
    let thresholds = thr.apply(Thresholds::default());
    check_thresholds(&thresholds)?;
    if levels.len() >= 3 {
        check_window(thr, levels.len())?;
    }
    check_out_dir(out)?;
    let input = path_input(pa, &mut run)?;
    let x = materialise(&input, &mut run)?;
    check_levels(&levels, x.grid_level())?;

    let (src, src_mode) = match kernel {
        Kernel::Scaled(p, mode, slope) => {
            let src = run.time("source", || match slope {
                Some(c) => PVarSource::linear(c),
                None => PVarSource::for_mode(mode, &x, p),
            })?;
            (Some(src), Some(mode))
        }
        _ => (None, None),
    };
    let profiles: Vec<VariationProfile> = run.time("kernel", || {
        over_levels(&x, &levels, |x, part| match kernel {
            Kernel::Pth(p) => pth_variation(x, part, p),
            Kernel::Scaled(p, _, _) => scaled_qv(x, part, p, src.as_ref().expect("source")),
            Kernel::Classical(g) => classical_scaled_qv(x, part, g),
        })
    })?;
    let values = terminals(&profiles);
    let limit_report = if levels.len() >= 3 {
        let window = thr.window.unwrap_or(levels.len());
        Some(limit_diagnostics(&levels, &values, window, &thresholds)?)
    } else {
        None
    };

    create_dir(out)?;
    for prof in &profiles {
        let stem = format!("level_{:02}", prof.level);
        save_profile(prof, src_mode, out, &stem)?;
        run.created(out.join(format!("{stem}.csv")));
        run.created(out.join(format!("{stem}.json")));
    }
    run.text(&terminals_csv(&levels, &values), out.join("terminals.csv"))?;
    if let Some(r) = &limit_report {
        run.json(r, out.join("limit_report.json"))?;
    }
    let output = ProfilesOutput {
        kind: profiles[0].kind.to_string(),
        divergent_levels: profiles.iter().filter(|p| p.divergent).map(|p| p.level).collect(),
        clamped_weights: profiles.iter().map(|p| p.clamped).sum(),
        levels,
        terminal_values: values,
        source_mode: src_mode,
        limit_report,
    };
    run.finish(cli, out.join("manifest.json"), 0)?;

    let mut summary = String::new();
    let _ = writeln!(summary, "{command} on {} (grid level {})", x.label(), x.grid_level());
    for (n, v) in output.levels.iter().zip(&output.terminal_values) {
        let _ = writeln!(summary, "  level {n:>2}: {v:.12e}");
    }
    if let Some(r) = &output.limit_report {
        let _ = writeln!(
            summary,
            "  classification: {} (liminf {:.6e}, limsup {:.6e}, trend {:?})",
            r.classification, r.liminf_est, r.limsup_est, r.trend_slope
        );
    }
    if !output.divergent_levels.is_empty() {
        let _ = writeln!(summary, "  divergent at levels {:?}", output.divergent_levels);
    }
    let _ = writeln!(summary, "  outputs in {}", out.display());
    emit(cli, &output, &summary)
}

fn probes_csv(rows: &[(&str, &Probe)], levels: &[u32]) -> String {
    let mut s = String::from("phase,q,level,value,classification\n");
    for (phase, p) in rows {
        for (n, v) in levels.iter().zip(&p.terminal_values) {
            let _ = writeln!(s, "{phase},{:?},{n},{v:?},{}", p.q, p.classification);
        }
    }
    s
}

fn roughness(cli: &Cli, a: &RoughnessArgs) -> CliResult<()> {
    let mut run = Run::new("roughness");
    let (p_min, p_max) = match a.range.as_slice() {
        [lo, hi] => (*lo, *hi),
        _ => return invalid("--range takes two values p_min,p_max"),
    };
    if !(p_min > 0.0 && p_min < p_max && p_max.is_finite()) {
        return invalid(format!("--range needs 0 < p_min < p_max, got {p_min},{p_max}"));
    }
    if a.iters == 0 || a.iters > 60 {
        return invalid("--iters must lie in 1..=60");
    }
    for &q in a.sweep.iter().flatten() {
        check_positive("sweep", q)?;
    }
    let explicit = a.levels.as_deref().map(parse_levels).transpose()?;
    let mut search_cfg = RoughnessConfig::for_search(Vec::new());
    search_cfg.thresholds = a.thresholds.apply(search_cfg.thresholds);
    check_thresholds(&search_cfg.thresholds)?;
    check_out_dir(&a.out)?;
    let input = path_input(&a.path, &mut run)?;
    let x = materialise(&input, &mut run)?;
    let levels = explicit.unwrap_or_else(|| default_levels(x.grid_level()));
    if levels.len() < 3 {
        return invalid(format!(
            "the search needs at least 3 levels, got {levels:?}; pass --levels or a finer path"
        ));
    }
    check_levels(&levels, x.grid_level())?;
    check_window(&a.thresholds, levels.len())?;
    search_cfg.levels = levels.clone();
    search_cfg.window = a.thresholds.window;
    search_cfg.src_mode = a.src.into();

    let mut sweep_cfg = RoughnessConfig::new(levels.clone());
    sweep_cfg.thresholds = a.thresholds.apply(sweep_cfg.thresholds);
    sweep_cfg.window = a.thresholds.window;
    sweep_cfg.src_mode = a.src.into();

    let result = run.time("search", || critical_index_search(&x, (p_min, p_max), a.iters, search_cfg));
    let sweep = match &a.sweep {
        Some(qs) => {
            let prober = Prober::new(&x, sweep_cfg)?;
            Some(run.time("sweep", || prober.sweep(qs))?)
        }
        None => None,
    };

    create_dir(&a.out)?;
    let mut rows: Vec<(&str, &Probe)> = Vec::new();
    match &result {
        Ok(r) => {
            rows.extend(r.per_q.iter().map(|p| ("search", p)));
            run.json(r, a.out.join("roughness_report.json"))?;
        }
        Err(e) => {
            let evidence: &[Probe] = match e {
                roughvar::Error::Inconclusive { evidence, .. } => evidence,
                _ => &[],
            };
            rows.extend(evidence.iter().map(|p| ("search", p)));
            run.json(
                &json!({ "error": e.to_string(), "evidence": evidence }),
                a.out.join("roughness_failure.json"),
            )?;
        }
    }
    if let Some(s) = &sweep {
        rows.extend(s.iter().map(|p| ("sweep", p)));
        let violations = monotonicity_violations(s);
        run.json(
            &json!({ "probes": s, "monotonicity_violations": violations }),
            a.out.join("sweep.json"),
        )?;
    }
    run.text(&probes_csv(&rows, &levels), a.out.join("per_q.csv"))?;

    match result {
        Ok(r) => {
            run.finish(cli, a.out.join("manifest.json"), 0)?;
            let summary = format!(
                "critical index {:.6} (bracket [{:.6}, {:.6}]), Hurst estimate {:.6}\n  levels {:?}, {} probes, outputs in {}\n",
                r.p_bar_est,
                r.bracket.0,
                r.bracket.1,
                r.hurst_est,
                r.levels_used,
                r.per_q.len(),
                a.out.display()
            );
            emit(cli, &r, &summary)
        }
        Err(e) => {
            let err = CliError::from(e);
            run.finish(cli, a.out.join("manifest.json"), err.code())?;
            Err(err)
        }
    }
}

fn read_map_table(file: &FsPath, run: &mut Run) -> CliResult<SmoothMap> {
    let bytes = fs::read(file).map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
    run.input(file, &bytes);
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(&bytes[..]);
    let bad = |e: csv::Error| CliError::Validation(format!("{}: {e}", file.display()));
    let headers = rdr.headers().map_err(bad)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["u", "f", "f1", "f2"] {
        return invalid(format!("{}: expected header `u,f,f1,f2`", file.display()));
    }
    let rows = rdr
        .deserialize::<[f64; 4]>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(bad)?;
    let id = file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "table".into());
    Ok(SmoothMap::tabulated(id, rows)?)
}

fn smooth_map(map: &Option<String>, table: &Option<PathBuf>, run: &mut Run) -> CliResult<SmoothMap> {
    match (map, table) {
        (Some(name), None) => Ok(SmoothMap::from_catalog(name)?),
        (None, Some(file)) => read_map_table(file, run),
        _ => invalid("pass exactly one of --map NAME or --map-table FILE"),
    }
}

fn path_range(x: &Path) -> (f64, f64) {
    let lo = x.samples().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.samples().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

fn error_csv(levels: &[u32], cols: &[(&str, &[f64])]) -> String {
    let mut s = String::from("level");
    for (name, _) in cols {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for (i, n) in levels.iter().enumerate() {
        let _ = write!(s, "{n}");
        for (_, col) in cols {
            let _ = write!(s, ",{:?}", col[i]);
        }
        s.push('\n');
    }
    s
}

fn isometry(cli: &Cli, a: &IsometryArgs) -> CliResult<()> {
    let mut run = Run::new("isometry");
    let levels = parse_levels(&a.levels)?;
    check_positive("p", a.p)?;
    check_out_dir(&a.out)?;
    let f = smooth_map(&a.map, &a.map_table, &mut run)?;
    let input = path_input(&a.path, &mut run)?;
    let x = materialise(&input, &mut run)?;
    check_levels(&levels, x.grid_level())?;

    let (lo, hi) = path_range(&x);
    let deriv = f.derivative_check(lo, hi, 1e-4 * (hi - lo), 257);
    let r = run.time("check", || isometry_check(&x, &f, a.p, &levels, a.src.into(), a.power.into()))?;

    create_dir(&a.out)?;
    let out = json!({ "report": r, "derivative_check": deriv });
    run.json(&out, a.out.join("isometry_report.json"))?;
    run.text(
        &error_csv(
            &levels,
            &[
                ("lhs", &r.lhs_terminal),
                ("rhs", &r.rhs_terminal),
                ("rhs_square", &r.rhs_square_terminal),
                ("abs_err", &r.abs_err),
                ("rel_err", &r.rel_err),
            ],
        ),
        a.out.join("isometry.csv"),
    )?;
    run.finish(cli, a.out.join("manifest.json"), 0)?;

    let mut summary = format!("isometry {} on {} with p = {}\n", r.map, x.label(), r.p);
    for (i, n) in r.levels.iter().enumerate() {
        let _ = writeln!(
            summary,
            "  level {n:>2}: lhs {:.9e}  rhs {:.9e}  rel_err {:.3e}",
            r.lhs_terminal[i], r.rhs_terminal[i], r.rel_err[i]
        );
    }
    let _ = writeln!(summary, "  error trend {:?}, success {}", r.err_trend_slope, r.success);
    for w in &r.warnings {
        let _ = writeln!(summary, "  warning: {w}");
    }
    emit(cli, &out, &summary)
}

fn chainrule(cli: &Cli, a: &ChainruleArgs) -> CliResult<()> {
    let mut run = Run::new("chainrule");
    let levels = parse_levels(&a.levels)?;
    check_positive("p", a.p)?;
    check_out_dir(&a.out)?;
    let f = smooth_map(&a.map, &a.map_table, &mut run)?;
    let input = path_input(&a.path, &mut run)?;
    let x = materialise(&input, &mut run)?;
    check_levels(&levels, x.grid_level())?;

    let r = run.time("check", || chain_rule_check(&x, &f, a.p, &levels))?;

    create_dir(&a.out)?;
    run.json(&r, a.out.join("chain_rule_report.json"))?;
    run.text(
        &error_csv(
            &levels,
            &[
                ("lhs", &r.lhs_terminal),
                ("rhs", &r.rhs_terminal),
                ("abs_err", &r.abs_err),
                ("rel_err", &r.rel_err),
            ],
        ),
        a.out.join("chain_rule.csv"),
    )?;
    run.finish(cli, a.out.join("manifest.json"), 0)?;

    let mut summary = format!("chain rule {} on {} with p = {}\n", r.map, x.label(), r.p);
    for (i, n) in r.levels.iter().enumerate() {
        let _ = writeln!(summary, "  level {n:>2}: rel_err {:.3e}", r.rel_err[i]);
    }
    let _ = writeln!(summary, "  error trend {:?}, success {}", r.err_trend_slope, r.success);
    emit(cli, &r, &summary)
}

fn parse_numbers(s: &str, what: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Validation(format!("bad number `{t}` in {what}")))
        })
        .collect()
}

enum Perturbation {
    Shape(Smooth),
    File(PathBuf),
}

fn parse_perturbation(s: &str) -> CliResult<Perturbation> {
    if let Some(rest) = s.strip_prefix("sine:") {
        return match parse_numbers(rest, "--perturb")?.as_slice() {
            [amplitude, freq] => Ok(Perturbation::Shape(Smooth::Sine {
                amplitude: *amplitude,
                freq: *freq,
            })),
            _ => invalid("--perturb sine:AMPLITUDE,FREQ"),
        };
    }
    if let Some(rest) = s.strip_prefix("poly:") {
        return Ok(Perturbation::Shape(Smooth::Poly {
            amplitude: 1.0,
            coeffs: parse_numbers(rest, "--perturb")?,
        }));
    }
    Ok(Perturbation::File(PathBuf::from(s)))
}

fn invariance(cli: &Cli, a: &InvarianceArgs) -> CliResult<()> {
    let mut run = Run::new("invariance");
    let levels = parse_levels(&a.levels)?;
    check_positive("p", a.p)?;
    let perturbation = parse_perturbation(&a.perturb)?;
    check_out_dir(&a.out)?;
    let input = path_input(&a.path, &mut run)?;
    let pert_input = match &perturbation {
        Perturbation::File(f) => Some(path_input(
            &PathArgs {
                input: Some(f.clone()),
                ..a.path.clone()
            },
            &mut run,
        )?),
        Perturbation::Shape(_) => None,
    };
    let x = materialise(&input, &mut run)?;
    check_levels(&levels, x.grid_level())?;
    let pert = match (&perturbation, &pert_input) {
        (Perturbation::Shape(s), _) => smooth_perturbation(s, x.grid_level())?,
        (Perturbation::File(_), Some(inp)) => materialise(inp, &mut run)?,
        _ => unreachable!(),
    };
    if pert.grid_level() != x.grid_level() {
        return invalid(format!(
            "perturbation grid level {} differs from the path's {}",
            pert.grid_level(),
            x.grid_level()
        ));
    }

    let r = run.time("check", || invariance_check(&x, &pert, a.p, &levels, a.src.into()))?;

    create_dir(&a.out)?;
    run.json(&r, a.out.join("invariance_report.json"))?;
    run.text(
        &error_csv(
            &levels,
            &[
                ("base", &r.base_terminal),
                ("perturbed", &r.perturbed_terminal),
                ("perturbation_pvar", &r.perturbation_pvar),
                ("rel_diff", &r.rel_diff),
            ],
        ),
        a.out.join("invariance.csv"),
    )?;
    run.finish(cli, a.out.join("manifest.json"), 0)?;

    let mut summary = format!("invariance of {} under {} with p = {}\n", x.label(), pert.label(), r.p);
    for (i, n) in r.levels.iter().enumerate() {
        let _ = writeln!(summary, "  level {n:>2}: rel_diff {:.3e}", r.rel_diff[i]);
    }
    let _ = writeln!(summary, "  trend {:?}, success {}", r.trend_slope, r.success);
    for w in &r.warnings {
        let _ = writeln!(summary, "  warning: {w}");
    }
    emit(cli, &r, &summary)
}

#[derive(Serialize)]
struct CounterexampleOutput {
    nmax: u32,
    grid_level: u32,
    /// `S_n = n(n+1)/2`.
    levels_s_n: Vec<u32>,
    values_s_n: Vec<f64>,
    levels_s_n_minus_1: Vec<u32>,
    values_s_n_minus_1: Vec<f64>,
    /// Closed form `(n-1) 2^(1-n)` at level `S_n - 1`.
    expected_s_n_minus_1: Vec<f64>,
    limit_report: LimitReport,
    interleaved_report: LimitReport,
}

fn counterexample(cli: &Cli, a: &CounterexampleArgs) -> CliResult<()> {
    let mut run = Run::new("counterexample");
    if a.nmax < 3 {
        return invalid("--nmax must be at least 3 so that the level sequence has 3 entries");
    }
    let needed = triangular(a.nmax);
    let grid_level = a.level.unwrap_or(needed);
    if needed > roughvar::grid::MAX_GRID_LEVEL {
        return invalid(format!(
            "--nmax {} needs grid level {needed}, above the maximum {}",
            a.nmax,
            roughvar::grid::MAX_GRID_LEVEL
        ));
    }
    if grid_level < needed || grid_level > roughvar::grid::MAX_GRID_LEVEL {
        return invalid(format!(
            "--level must lie in {needed}..={}",
            roughvar::grid::MAX_GRID_LEVEL
        ));
    }
    let thresholds = a.thresholds.apply(Thresholds::default());
    check_thresholds(&thresholds)?;
    check_window(&a.thresholds, a.nmax as usize)?;
    check_out_dir(&a.out)?;

    let c = counterexample_coefficients(a.nmax)?;
    let x = run.time("generate", || schauder_eval(&c, grid_level))?;
    let ns: Vec<u32> = (1..=a.nmax).collect();
    let levels_s_n: Vec<u32> = ns.iter().map(|&n| triangular(n)).collect();
    let levels_s_n_minus_1: Vec<u32> = levels_s_n.iter().map(|&s| s - 1).collect();
    let interleaved: Vec<u32> = levels_s_n_minus_1
        .iter()
        .zip(&levels_s_n)
        .flat_map(|(&a, &b)| [a, b])
        .collect();
    let profiles = run.time("kernel", || over_levels(&x, &interleaved, |x, part| pth_variation(x, part, 2.0)))?;
    let values = terminals(&profiles);
    let values_s_n: Vec<f64> = values.iter().skip(1).step_by(2).copied().collect();
    let values_s_n_minus_1: Vec<f64> = values.iter().step_by(2).copied().collect();
    let expected = ns.iter().map(|&n| (n as f64 - 1.0) * (1.0 - n as f64).exp2()).collect();
    let window = a.thresholds.window.unwrap_or(ns.len());
    let limit_report = limit_diagnostics(&levels_s_n, &values_s_n, window, &thresholds)?;
    let interleaved_report = limit_diagnostics(
        &interleaved,
        &values,
        a.thresholds.window.map_or(interleaved.len(), |w| w.min(interleaved.len())),
        &thresholds,
    )?;

    create_dir(&a.out)?;
    let path_file = a.out.join("path.csv");
    save_path(&x, &path_file)?;
    run.created(path_file);
    let mut coeff_bytes = Vec::new();
    write_coefficients(&c, &mut coeff_bytes)?;
    coeff_bytes.push(b'\n');
    fs::write(a.out.join("coefficients.json"), &coeff_bytes)?;
    run.created(a.out.join("coefficients.json"));
    run.json(&limit_report, a.out.join("limit_report.json"))?;
    run.json(&interleaved_report, a.out.join("limit_report_interleaved.json"))?;
    run.text(&terminals_csv(&interleaved, &values), a.out.join("terminals.csv"))?;
    let output = CounterexampleOutput {
        nmax: a.nmax,
        grid_level,
        levels_s_n,
        values_s_n,
        levels_s_n_minus_1,
        values_s_n_minus_1,
        expected_s_n_minus_1: expected,
        limit_report,
        interleaved_report,
    };
    run.json(&output, a.out.join("counterexample.json"))?;
    run.finish(cli, a.out.join("manifest.json"), 0)?;

    let mut summary = format!("counterexample nmax = {} on grid level {grid_level}\n", a.nmax);
    let _ = writeln!(summary, "  levels S_n     {:?}: {}", output.levels_s_n, fmt_values(&output.values_s_n));
    let _ = writeln!(
        summary,
        "  levels S_n - 1 {:?}: {}",
        output.levels_s_n_minus_1,
        fmt_values(&output.values_s_n_minus_1)
    );
    let _ = writeln!(
        summary,
        "  interleaved sequence: {}",
        output.interleaved_report.classification
    );
    emit(cli, &output, &summary)
}

const REPORT_KEYS: &[&str] = &[
    "classification",
    "p_bar_est",
    "hurst_est",
    "bracket",
    "success",
    "err_trend_slope",
    "trend_slope",
    "limsup_est",
    "liminf_est",
    "error",
];

fn summarise_value(v: &Value) -> Value {
    let obj = match v.get("report") {
        Some(inner) if inner.is_object() => inner,
        _ => v,
    };
    let mut out = serde_json::Map::new();
    if let Some(map) = obj.as_object() {
        for key in REPORT_KEYS {
            if let Some(x) = map.get(*key) {
                out.insert((*key).into(), x.clone());
            }
        }
    }
    Value::Object(out)
}

fn collect_json(dir: &FsPath, acc: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_json(&p, acc)?;
        } else if p.extension().is_some_and(|e| e == "json") {
            acc.push(p);
        }
    }
    Ok(())
}

#[derive(Default, Serialize)]
struct RunSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    command: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exit_code: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    total_ms: Option<Value>,
    reports: BTreeMap<String, Value>,
}

fn report(cli: &Cli, a: &ReportArgs) -> CliResult<()> {
    let mut run = Run::new("report");
    if !a.input.is_dir() {
        return invalid(format!("--in {} is not a directory", a.input.display()));
    }
    let out = a.out.clone().unwrap_or_else(|| a.input.join("summary.json"));
    check_out_file(&out)?;
    let manifest_out = sibling(&out, "manifest.json");

    let mut files = Vec::new();
    collect_json(&a.input, &mut files)?;
    let mut runs: BTreeMap<String, RunSummary> = BTreeMap::new();
    let mut skipped = Vec::new();
    for file in files {
        if file == out || file == manifest_out {
            continue;
        }
        let bytes = fs::read(&file)?;
        let rel_dir = file
            .parent()
            .and_then(|p| p.strip_prefix(&a.input).ok())
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let rel_dir = if rel_dir.is_empty() { ".".to_string() } else { rel_dir };
        let name = file
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let Ok(v) = serde_json::from_slice::<Value>(&bytes) else {
            skipped.push(file.display().to_string());
            continue;
        };
        run.input(&file, &bytes);
        let entry = runs.entry(rel_dir).or_default();
        if name == "manifest.json" || name.ends_with(".manifest.json") {
            entry.command = v.get("command").cloned();
            entry.exit_code = v.get("exit_code").cloned();
            entry.total_ms = v.pointer("/timings_ms/total").cloned();
        } else {
            let s = summarise_value(&v);
            if s.as_object().is_some_and(|m| !m.is_empty()) {
                entry.reports.insert(name, s);
            }
        }
    }
    runs.retain(|_, r| r.command.is_some() || !r.reports.is_empty());
    let summary = json!({ "runs": runs, "unreadable": skipped });

    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    run.json(&summary, out.clone())?;
    run.finish(cli, manifest_out, 0)?;

    let mut text = format!("{} run directories under {}\n", runs.len(), a.input.display());
    for (dir, r) in &runs {
        let cmd = r.command.as_ref().and_then(Value::as_str).unwrap_or("?");
        let code = r.exit_code.as_ref().map_or("?".to_string(), |c| c.to_string());
        let _ = writeln!(text, "  {dir}: {cmd} (exit {code})");
        for (name, s) in &r.reports {
            let _ = writeln!(text, "    {name}: {s}");
        }
    }
    emit(cli, &summary, &text)
}
