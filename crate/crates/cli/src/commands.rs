use std::path::Path;
use std::time::Instant;

use parametrix::coprime::{factorize, verify_bezout, BezoutReport, DoublyCoprimeFactors, FactorMode, VERIFY_TOL};
use parametrix::lti::StateSpacePlant;
use parametrix::param_maps::{
    controller_gap, iop_k_at, iop_to_slp, iop_to_youla, slp_k_at, slp_to_iop, slp_to_youla, verify_iop_subspace,
    verify_slp_subspace, youla_k_at, youla_to_iop, youla_to_slp, IopReport, SlpReport, DEFAULT_POINTS,
};
use parametrix::synthesis::{
    chain_adjacency, default_factors, example1_plant, example1_plant_with_a, plant_pattern, qi_test, solve_example1,
    synthesize, synthesize_si, synthesize_structured, Parameters, Route, SparsityPattern, SynthesisResult,
};
use serde_json::{json, Value};

use crate::doc::{
    controller_value, factors_value, fir_to_value, iop_value, matrix_to_value, pattern_to_value, read_factors,
    read_iop, read_pattern, read_slp, read_youla, slp_value, youla_value, PlantDocument, ResultDocument,
};
use crate::exit::{CliError, PRECONDITION, QI_VIOLATION};
use crate::{Command, Common, KindArg, ModeArg, ParamArg};

/// Points for Bezout checks run as part of a factorization.
const BEZOUT_POINTS: usize = 64;

/// Verification tolerance, `PARAMETRIX_TOL` when set.
pub fn tolerance() -> Result<f64, CliError> {
    match std::env::var("PARAMETRIX_TOL") {
        Ok(s) => match s.trim().parse::<f64>() {
            Ok(t) if t > 0.0 && t.is_finite() => Ok(t),
            _ => Err(CliError::usage(format!("PARAMETRIX_TOL must be a positive number, got {s:?}"))),
        },
        Err(_) => Ok(VERIFY_TOL),
    }
}

pub fn dispatch(cmd: &Command, common: &Common, tol: f64) -> Result<ResultDocument, CliError> {
    let start = Instant::now();
    let mut doc = match cmd {
        Command::Factorize { plant, mode, horizon } => cmd_factorize(plant, *mode, *horizon, tol)?,
        Command::Map { plant, params, from, to, horizon, factors, mode } => {
            cmd_map(plant, params, *from, *to, *horizon, factors.as_deref(), *mode, tol)?
        }
        Command::Synthesize { plant, param, horizon, structure, si, factors } => {
            cmd_synthesize(plant, *param, *horizon, structure.as_deref(), *si, factors.as_deref(), tol)?
        }
        Command::QiCheck { plant, pattern } => cmd_qi_check(plant, pattern)?,
        Command::Verify { plant, params, kind, points } => cmd_verify(plant, params, *kind, *points, tol)?,
        Command::Example1 { n, graph, horizon } => cmd_example1(*n, graph.as_deref(), *horizon)?,
    };
    doc.arg("tolerance", tol);
    if common.timing {
        doc.metric("wall_time_ms", start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(doc)
}

/// One stderr line per document.
pub fn summary(doc: &ResultDocument) -> String {
    let verb = doc.command.get("verb").and_then(Value::as_str).unwrap_or("?");
    let mut parts = vec![format!("{verb}: {}", if doc.pass { "pass" } else { "FAIL" })];
    for key in ["h2_cost", "max_residual", "spectral_radius", "controller_gap"] {
        if let Some(v) = doc.metrics.get(key).and_then(Value::as_f64) {
            parts.push(format!("{key} {v:.3e}"));
        }
    }
    parts.join(", ")
}

fn plant(path: &Path) -> Result<StateSpacePlant, CliError> {
    PlantDocument::read(path)?.plant()
}

fn factor_mode(m: ModeArg) -> FactorMode {
    match m {
        ModeArg::Deadbeat => FactorMode::Deadbeat,
        ModeArg::Riccati => FactorMode::Riccati,
        ModeArg::Stable => FactorMode::Stable,
        ModeArg::Statefb => FactorMode::StateFeedback,
    }
}

fn mode_name(m: ModeArg) -> &'static str {
    match m {
        ModeArg::Deadbeat => "deadbeat",
        ModeArg::Riccati => "riccati",
        ModeArg::Stable => "stable",
        ModeArg::Statefb => "statefb",
    }
}

fn route(p: ParamArg) -> Route {
    match p {
        ParamArg::Youla => Route::Youla,
        ParamArg::Slp => Route::Slp,
        ParamArg::Iop => Route::Iop,
    }
}

fn bezout_value(r: &BezoutReport, tol: f64) -> Value {
    json!({
        "bezout_residual": r.bezout_residual,
        "factor_residual": r.factor_residual,
        "max_residual": r.max_residual,
        "skipped": r.skipped,
        "npoints": r.npoints,
        "pass": r.max_residual <= tol,
    })
}

fn iop_report_value(r: &IopReport, tol: f64) -> Value {
    json!({
        "left_residual": r.left_residual,
        "right_residual": r.right_residual,
        "max_residual": r.max_residual,
        "skipped": r.skipped,
        "npoints": r.npoints,
        "pass": r.max_residual <= tol,
    })
}

fn slp_report_value(r: &SlpReport, tol: f64) -> Value {
    let proper = r.r_strictly_proper && r.m_strictly_proper && r.n_strictly_proper;
    json!({
        "left_residual": r.left_residual,
        "right_residual": r.right_residual,
        "r_strictly_proper": r.r_strictly_proper,
        "m_strictly_proper": r.m_strictly_proper,
        "n_strictly_proper": r.n_strictly_proper,
        "max_residual": r.max_residual,
        "pass": proper && r.max_residual <= tol,
    })
}

fn cmd_factorize(path: &Path, mode: ModeArg, horizon: Option<usize>, tol: f64) -> Result<ResultDocument, CliError> {
    let p = plant(path)?;
    let mut doc = ResultDocument::new("factorize");
    doc.arg("plant", path.display().to_string()).arg("mode", mode_name(mode)).arg("horizon", horizon);
    let f = factorize(&p, factor_mode(mode), horizon)?;
    let report = verify_bezout(&f, &p, BEZOUT_POINTS)?;
    doc.output("factors", factors_value(&f))
        .metric("horizon", f.horizon())
        .metric("max_residual", report.max_residual)
        .report("bezout", bezout_value(&report, tol));
    doc.pass = report.max_residual <= tol;
    Ok(doc)
}

fn load_factors(
    p: &StateSpacePlant,
    file: Option<&Path>,
    mode: Option<ModeArg>,
) -> Result<DoublyCoprimeFactors, CliError> {
    match (file, mode) {
        (Some(path), _) => read_factors(path),
        (None, Some(m)) => Ok(factorize(p, factor_mode(m), None)?),
        (None, None) => Ok(default_factors(p)?),
    }
}

fn params_value(x: &Parameters) -> Value {
    match x {
        Parameters::Youla(q) => youla_value(q),
        Parameters::Slp(s) => slp_value(s),
        Parameters::Iop(i) => iop_value(i),
    }
}

/// Subspace report of a parameter set: Bezout for Youla (any FIR `Q` is
/// admissible once the factors are), the affine identities otherwise.
fn param_report(
    p: &StateSpacePlant,
    f: Option<&DoublyCoprimeFactors>,
    x: &Parameters,
    tol: f64,
) -> Result<(Value, bool), CliError> {
    Ok(match x {
        Parameters::Youla(q) => {
            let f = f.expect("Youla parameters come with factors");
            f.check_shapes(q.q.rows(), q.q.cols())?;
            let r = verify_bezout(f, p, BEZOUT_POINTS)?;
            (bezout_value(&r, tol), r.max_residual <= tol)
        }
        Parameters::Slp(s) => {
            let r = verify_slp_subspace(p, s)?;
            let v = slp_report_value(&r, tol);
            let pass = v["pass"].as_bool().unwrap_or(false);
            (v, pass)
        }
        Parameters::Iop(i) => {
            let r = verify_iop_subspace(p, i, DEFAULT_POINTS)?;
            (iop_report_value(&r, tol), r.max_residual <= tol)
        }
    })
}

fn k_gap(f: Option<&DoublyCoprimeFactors>, a: &Parameters, b: &Parameters) -> Result<f64, CliError> {
    let eval = |x: &Parameters, z| match x {
        Parameters::Youla(q) => youla_k_at(f.expect("factors"), q, z),
        Parameters::Slp(s) => slp_k_at(s, z),
        Parameters::Iop(i) => iop_k_at(i, z),
    };
    Ok(controller_gap(|z| eval(a, z), |z| eval(b, z), DEFAULT_POINTS)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_map(
    plant_path: &Path,
    params: &Path,
    from: ParamArg,
    to: ParamArg,
    horizon: usize,
    factors: Option<&Path>,
    mode: Option<ModeArg>,
    tol: f64,
) -> Result<ResultDocument, CliError> {
    let p = plant(plant_path)?;
    let mut doc = ResultDocument::new("map");
    doc.arg("plant", plant_path.display().to_string())
        .arg("params", params.display().to_string())
        .arg("from", route(from).name())
        .arg("to", route(to).name())
        .arg("horizon", horizon)
        .arg("factors", factors.map(|f| f.display().to_string()))
        .arg("mode", mode.map(mode_name));
    let needs_factors = from == ParamArg::Youla || to == ParamArg::Youla;
    let f = if needs_factors { Some(load_factors(&p, factors, mode)?) } else { None };
    let source = match from {
        ParamArg::Youla => Parameters::Youla(read_youla(params)?),
        ParamArg::Slp => Parameters::Slp(read_slp(params)?),
        ParamArg::Iop => Parameters::Iop(read_iop(params)?),
    };
    let (src_report, src_pass) = param_report(&p, f.as_ref(), &source, tol)?;
    doc.report("source", src_report);
    if !src_pass {
        doc.pass = false;
        return Ok(doc);
    }
    let ff = || f.as_ref().expect("factors loaded for Youla maps");
    let target = match (&source, to) {
        (x, t) if route(t) == route_of(x) => x.clone(),
        (Parameters::Youla(q), ParamArg::Iop) => Parameters::Iop(youla_to_iop(ff(), q, horizon)?),
        (Parameters::Youla(q), ParamArg::Slp) => Parameters::Slp(youla_to_slp(&p, ff(), q, horizon)?),
        (Parameters::Iop(x), ParamArg::Youla) => Parameters::Youla(iop_to_youla(ff(), x, horizon)?),
        (Parameters::Iop(x), ParamArg::Slp) => Parameters::Slp(iop_to_slp(&p, x, horizon)?),
        (Parameters::Slp(s), ParamArg::Iop) => Parameters::Iop(slp_to_iop(&p, s)?),
        (Parameters::Slp(s), ParamArg::Youla) => Parameters::Youla(slp_to_youla(&p, ff(), s, horizon)?),
        _ => unreachable!("same-route maps handled above"),
    };
    let (dst_report, dst_pass) = param_report(&p, f.as_ref(), &target, tol)?;
    let gap = k_gap(f.as_ref(), &source, &target)?;
    doc.output("params", params_value(&target))
        .report("target", dst_report)
        .metric("controller_gap", gap)
        .metric("npoints", DEFAULT_POINTS);
    if let Some(f) = &f {
        doc.output("factors", factors_value(f));
    }
    doc.pass = dst_pass && gap <= tol;
    Ok(doc)
}

fn route_of(x: &Parameters) -> Route {
    match x {
        Parameters::Youla(_) => Route::Youla,
        Parameters::Slp(_) => Route::Slp,
        Parameters::Iop(_) => Route::Iop,
    }
}

fn result_into(doc: &mut ResultDocument, r: &SynthesisResult, tol: f64) {
    doc.output("K", fir_to_value(&r.controller))
        .output("controller", controller_value(&r.realization))
        .output("params", params_value(&r.params))
        .metric("h2_cost", r.h2_cost())
        .metric("cost_sq", r.cost_sq)
        .metric("max_residual", r.max_residual())
        .metric("equality_residual", r.equality_residual)
        .metric("subspace_residual", r.subspace_residual)
        .metric("structure_residual", r.structure_residual)
        .metric("spectral_radius", r.spectral_radius)
        .metric("free_dims", r.free_dims)
        .report("stability", json!({ "internally_stable": r.stable, "spectral_radius": r.spectral_radius }))
        .report("inner_approximation", json!(r.inner_approx));
    doc.pass = r.stable && r.max_residual() <= tol && r.structure_residual <= tol;
}

fn cmd_synthesize(
    plant_path: &Path,
    param: ParamArg,
    horizon: usize,
    structure: Option<&Path>,
    si: bool,
    factors: Option<&Path>,
    tol: f64,
) -> Result<ResultDocument, CliError> {
    let p = plant(plant_path)?;
    let mut doc = ResultDocument::new("synthesize");
    doc.arg("plant", plant_path.display().to_string())
        .arg("param", route(param).name())
        .arg("horizon", horizon)
        .arg("structure", structure.map(|s| s.display().to_string()))
        .arg("si", si)
        .arg("factors", factors.map(|f| f.display().to_string()));
    let f = factors.map(read_factors).transpose()?;
    if f.is_some() && (param != ParamArg::Youla || si) {
        return Err(CliError::usage("--factors applies to --param youla without --si"));
    }
    let lpat = structure.map(read_pattern).transpose()?;
    let r = if si {
        let lpat = match lpat {
            Some(l) => l,
            None => {
                if p.nu() != p.ny() || p.ny() != p.n() {
                    return Err(CliError::new(
                        PRECONDITION,
                        "--si without --structure needs a state-feedback plant with nu = n",
                    ));
                }
                SparsityPattern::support(p.a(), 0.0).union(&SparsityPattern::diagonal(p.n()))?
            }
        };
        doc.output("pattern", pattern_to_value(&lpat));
        synthesize_si(&p, horizon, &lpat, route(param))?
    } else if let Some(lpat) = lpat {
        synthesize_structured(&p, horizon, &lpat, route(param), f.as_ref())?
    } else {
        synthesize(&p, route(param), horizon, f.as_ref())?
    };
    result_into(&mut doc, &r, tol);
    Ok(doc)
}

fn cmd_qi_check(plant_path: &Path, pattern: &Path) -> Result<ResultDocument, CliError> {
    let p = plant(plant_path)?;
    let lpat = read_pattern(pattern)?;
    let mut doc = ResultDocument::new("qi-check");
    doc.arg("plant", plant_path.display().to_string()).arg("pattern", pattern.display().to_string());
    let ppat = plant_pattern(&p);
    let qi = qi_test(&lpat, &ppat)?;
    doc.output("plant_pattern", pattern_to_value(&ppat)).metric("quadratically_invariant", qi);
    doc.pass = qi;
    doc.fail_code = QI_VIOLATION;
    Ok(doc)
}

fn cmd_verify(
    plant_path: &Path,
    params: &Path,
    kind: KindArg,
    points: usize,
    tol: f64,
) -> Result<ResultDocument, CliError> {
    let p = plant(plant_path)?;
    let mut doc = ResultDocument::new("verify");
    doc.arg("plant", plant_path.display().to_string())
        .arg("params", params.display().to_string())
        .arg("points", points);
    let (name, report, max) = match kind {
        KindArg::Bezout => {
            let f = read_factors(params)?;
            let r = verify_bezout(&f, &p, points)?;
            ("bezout", bezout_value(&r, tol), r.max_residual)
        }
        KindArg::Iop => {
            let x = read_iop(params)?;
            let r = verify_iop_subspace(&p, &x, points)?;
            ("iop", iop_report_value(&r, tol), r.max_residual)
        }
        KindArg::Slp => {
            let s = read_slp(params)?;
            let r = verify_slp_subspace(&p, &s)?;
            ("slp", slp_report_value(&r, tol), r.max_residual)
        }
    };
    doc.arg("kind", name);
    doc.pass = report["pass"].as_bool().unwrap_or(false);
    doc.report(name, report).metric("max_residual", max);
    Ok(doc)
}

fn cmd_example1(n: Option<usize>, graph: Option<&Path>, horizon: usize) -> Result<ResultDocument, CliError> {
    let mut doc = ResultDocument::new("example1");
    doc.arg("n", n).arg("graph", graph.map(|g| g.display().to_string())).arg("horizon", horizon);
    let p = match (n, graph) {
        (Some(0), _) => return Err(CliError::usage("--n must be at least 1")),
        (Some(n), _) => example1_plant(&chain_adjacency(n))?,
        (None, Some(path)) => {
            let d = PlantDocument::read(path)?;
            match (d.graph()?, &d.a) {
                (Some(g), _) => example1_plant(&g)?,
                (None, Some(_)) => example1_plant_with_a(&d.plant()?.a().clone())?,
                (None, None) => return Err(CliError::usage("graph file needs a `graph` or an `A` entry")),
            }
        }
        (None, None) => return Err(CliError::usage("one of --n or --graph is required")),
    };
    let rep = solve_example1(&p, horizon)?;
    let mut routes = serde_json::Map::new();
    let mut worst_gain: f64 = 0.0;
    for r in &rep.routes {
        worst_gain = worst_gain.max(r.gain_error);
        routes.insert(
            r.result.route.name().to_string(),
            json!({
                "K": fir_to_value(&r.result.controller),
                "cost_sq": r.result.cost_sq,
                "h2_cost": r.result.h2_cost(),
                "gain_error": r.gain_error,
                "cost_error": r.cost_error,
                "max_residual": r.result.max_residual(),
                "spectral_radius": r.result.spectral_radius,
                "stable": r.result.stable,
                "pass": r.pass,
            }),
        );
    }
    doc.output("A", matrix_to_value(&rep.a))
        .output("pattern", pattern_to_value(&rep.pattern))
        .output("routes", serde_json::Value::Object(routes))
        .metric("max_gain_error", worst_gain);
    doc.pass = rep.pass;
    Ok(doc)
}
