//! Command implementations. Each command returns the rendered report plus a
//! pass flag; output files are written under `--out` when given.

use std::path::{Path, PathBuf};

use ccgeo::curve::{horizontality_check, SampledCurve};
use ccgeo::error::{GeoError, Result};
use ccgeo::flow::{integrate_projected_field, FlowConfig};
use ccgeo::homogeneity::{
    chain_transport, check_family_hypotheses, distortion_modulus, push_forward_distribution,
    DiffeoFamily, SamplingConfig, Thresholds,
};
use ccgeo::metric::{cc_distance, compare_metrics, MetricOracle};
use ccgeo::smoothing::{smooth_horizontal_approximation, SmoothingCertificate, SmoothingConfig};
use ccgeo::zigzag::{tangent_convergence_check, zigzag_curve, ZigzagSpec};
use ccgeo::{fixtures, io, Distribution};
use nalgebra::DMatrix;

use crate::report::Report;
use crate::scenario::Scenario;

pub struct CmdResult {
    pub report: String,
    pub pass: bool,
}

fn write_file(out: &Option<PathBuf>, name: &str, content: &str) -> Result<()> {
    let Some(dir) = out else { return Ok(()) };
    std::fs::create_dir_all(dir)
        .map_err(|e| GeoError::InvalidInput(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| GeoError::InvalidInput(format!("cannot write {}: {e}", path.display())))
}

/// Internal invariant violations surface as this error so the front end can
/// exit with the dedicated code.
pub fn invariant_violation(msg: String) -> GeoError {
    GeoError::InvalidInput(format!("internal invariant violation: {msg}"))
}

pub fn is_invariant_violation(e: &GeoError) -> bool {
    matches!(e, GeoError::InvalidInput(m) if m.starts_with("internal invariant violation"))
}

pub fn cmd_ccdist(s: &Scenario, seed: Option<u64>, out: &Option<PathBuf>) -> Result<CmdResult> {
    let distribution = s.distribution()?;
    let norm = s.norm()?;
    let p = s.require_point("p")?;
    let q = s.require_point("q")?;
    let seed = s.seed(seed)?;
    let cfg = s.solver_config(seed)?;

    let interval = cc_distance(&p, &q, &distribution, &norm, &cfg)?;
    if interval.lower > interval.upper + 1e-9 {
        return Err(invariant_violation(format!(
            "bracket inverted: lower={} > upper={}",
            interval.lower, interval.upper
        )));
    }
    let hrep = horizontality_check(&interval.path, &distribution, 1e-5)?;
    if interval.upper > 0.0 && !hrep.passed() {
        return Err(invariant_violation(format!(
            "solver path is not horizontal: max deviation {}",
            hrep.max_deviation
        )));
    }

    let mut r = Report::new("ccdist");
    r.push("distribution", distribution.name());
    r.push("norm", norm.name());
    r.push_vec("p", p.as_slice());
    r.push_vec("q", q.as_slice());
    r.push("seed", seed);
    r.push("lower", interval.lower);
    r.push("upper", interval.upper);
    r.push("endpoint_gap", interval.endpoint_gap);
    r.push("path_samples", interval.path.len());
    write_file(out, "ccdist_path.csv", &io::curve_to_csv(&interval.path))?;
    Ok(CmdResult {
        report: r.render(),
        pass: true,
    })
}

pub fn cmd_flow(s: &Scenario, seed: Option<u64>, out: &Option<PathBuf>) -> Result<CmdResult> {
    let _ = seed; // deterministic command; seed accepted for interface symmetry
    let distribution = s.distribution()?;
    let p = s.require_point("p")?;
    let v = s.require_point("v")?;
    let duration = s
        .f64("duration")?
        .ok_or_else(|| GeoError::InvalidInput("scenario is missing 'duration'".into()))?;
    let mut flow_cfg = FlowConfig::new(
        s.f64("flow.step")?.unwrap_or(1e-3),
        s.f64("flow.max_duration")?.unwrap_or(duration.max(1.0)),
    )?;
    if s.get("domain").is_some() {
        flow_cfg = flow_cfg.with_domain(s.domain()?);
    }
    let result = integrate_projected_field(&p, &v, duration, &distribution, &flow_cfg)?;

    let mut r = Report::new("flow");
    r.push("distribution", distribution.name());
    r.push_vec("p", p.as_slice());
    r.push_vec("v", v.as_slice());
    r.push("duration", duration);
    r.push("step", flow_cfg.step_size);
    r.push("samples", result.curve.len());
    r.push_vec("end", result.curve.end().as_slice());
    match result.domain_exit {
        Some(t) => r.push("domain_exit", t),
        None => r.push("domain_exit", "none"),
    }
    write_file(out, "flow_path.csv", &io::curve_to_csv(&result.curve))?;
    Ok(CmdResult {
        report: r.render(),
        pass: true,
    })
}

fn load_curve(s: &Scenario) -> Result<SampledCurve> {
    let spec = s.require("curve")?;
    if let Some(rest) = spec.strip_prefix("circle-lift:") {
        let args = Scenario::parse(&rest.replace(',', "\n"))?;
        return Ok(fixtures::heisenberg_circle_lift(
            args.f64("radius")?.unwrap_or(0.5),
            args.f64("turns")?.unwrap_or(1.0),
            args.usize("samples")?.unwrap_or(4001),
        ));
    }
    if let Some(rest) = spec.strip_prefix("x-axis:") {
        let args = Scenario::parse(&rest.replace(',', "\n"))?;
        return Ok(fixtures::heisenberg_x_axis(
            args.f64("duration")?.unwrap_or(1.0),
            args.usize("samples")?.unwrap_or(1001),
        ));
    }
    let text = std::fs::read_to_string(spec)
        .map_err(|e| GeoError::InvalidInput(format!("cannot read curve '{spec}': {e}")))?;
    io::curve_from_csv(&text)
}

fn push_certificate(r: &mut Report, prefix: &str, cert: &SmoothingCertificate) {
    r.push(&format!("{prefix}epsilon"), cert.epsilon);
    r.push(&format!("{prefix}n_windows"), cert.n_windows);
    r.push(&format!("{prefix}endpoint_error"), cert.endpoint_error);
    r.push(&format!("{prefix}length_input"), cert.length_input);
    r.push(&format!("{prefix}length_output"), cert.length_output);
    r.push(&format!("{prefix}delta"), cert.delta);
    r.push(&format!("{prefix}alpha"), cert.alpha);
    r.push(&format!("{prefix}beta"), cert.beta);
    r.push(
        &format!("{prefix}predicted_error_bound"),
        cert.predicted_error_bound,
    );
    r.push(&format!("{prefix}speed_cap"), cert.speed_cap);
    r.push(
        &format!("{prefix}error_within_bound"),
        cert.error_within_bound,
    );
}

pub fn cmd_smooth(
    s: &Scenario,
    seed: Option<u64>,
    out: &Option<PathBuf>,
    eps_flag: &Option<Vec<f64>>,
) -> Result<CmdResult> {
    let _ = seed;
    let distribution = {
        let d = s.distribution()?;
        match s.f64("lipschitz")? {
            Some(c) => d.with_lipschitz(c),
            None => d,
        }
    };
    let eta = load_curve(s)?;
    let mut cfg = SmoothingConfig::new(s.f64("eps")?.unwrap_or(0.01));
    cfg.flow = FlowConfig::new(
        s.f64("flow.step")?.unwrap_or(1e-3),
        s.f64("flow.max_duration")?.unwrap_or(100.0),
    )?;
    if s.get("domain").is_some() {
        cfg.flow.domain = Some(s.domain()?);
    }
    if let Some(tol) = s.f64("horizontality_tol")? {
        cfg.horizontality_tol = tol;
    }

    let eps_sweep = match eps_flag {
        Some(list) => Some(list.clone()),
        None => s.f64_list("eps_list")?,
    };

    let mut r = Report::new("smooth");
    r.push("distribution", distribution.name());
    r.push("curve_samples", eta.len());
    let mut pass = true;

    let final_sigma;
    match eps_sweep {
        Some(list) if !list.is_empty() => {
            let mut last = None;
            for (i, eps) in list.iter().enumerate() {
                let mut run_cfg = cfg.clone();
                run_cfg.epsilon = *eps;
                let (sigma, cert) = smooth_horizontal_approximation(&eta, &distribution, &run_cfg)?;
                push_certificate(&mut r, &format!("sweep.{i}."), &cert);
                pass &= cert.error_within_bound;
                last = Some(sigma);
            }
            final_sigma = last.unwrap();
        }
        _ => {
            let (sigma, cert) = smooth_horizontal_approximation(&eta, &distribution, &cfg)?;
            push_certificate(&mut r, "", &cert);
            pass &= cert.error_within_bound;
            final_sigma = sigma;
        }
    }

    // The output must itself be horizontal; a violation is an internal bug.
    let hrep = horizontality_check(&final_sigma, &distribution, 1e-6)?;
    if !hrep.passed() {
        return Err(invariant_violation(format!(
            "smoothing output not horizontal: max deviation {}",
            hrep.max_deviation
        )));
    }
    write_file(out, "smooth_sigma.csv", &io::curve_to_csv(&final_sigma))?;
    Ok(CmdResult {
        report: r.render(),
        pass,
    })
}

pub fn cmd_zigzag(
    s: &Scenario,
    seed: Option<u64>,
    out: &Option<PathBuf>,
    eps_flag: &Option<Vec<f64>>,
) -> Result<CmdResult> {
    let _ = seed;
    let distribution = s.distribution()?;
    let spec = ZigzagSpec {
        base_point: s.require_point("base")?,
        generators: s
            .point_list("generators")?
            .ok_or_else(|| GeoError::InvalidInput("scenario is missing 'generators'".into()))?,
        coefficients: s
            .f64_list("coeffs")?
            .ok_or_else(|| GeoError::InvalidInput("scenario is missing 'coeffs'".into()))?,
        switch_period: s.f64("eps")?.unwrap_or(0.05),
        total_duration: s.f64("duration")?.unwrap_or(1.0),
    };
    let flow_cfg = FlowConfig::new(
        s.f64("flow.step")?.unwrap_or(1e-3),
        s.f64("flow.max_duration")?.unwrap_or(100.0),
    )?;
    let curve = zigzag_curve(&spec, &distribution, &flow_cfg)?;

    let mut r = Report::new("zigzag");
    r.push("distribution", distribution.name());
    r.push("generators", spec.generators.len());
    r.push("eps", spec.switch_period);
    r.push("duration", spec.total_duration);
    r.push_vec("mixed_velocity", spec.mixed_velocity().as_slice());
    r.push_vec("end", curve.end().as_slice());
    let mut pass = true;

    let eps_sweep = match eps_flag {
        Some(list) => Some(list.clone()),
        None => s.f64_list("eps_list")?,
    };
    if let Some(list) = eps_sweep {
        let check = tangent_convergence_check(&spec, &distribution, &list, &flow_cfg)?;
        for (i, (eps, dev)) in check.deviations.iter().enumerate() {
            r.push(&format!("convergence.{i}.eps"), *eps);
            r.push(&format!("convergence.{i}.deviation"), *dev);
        }
        r.push("convergence_pass", check.pass);
        pass &= check.pass;
    }

    write_file(out, "zigzag_path.csv", &io::curve_to_csv(&curve))?;
    Ok(CmdResult {
        report: r.render(),
        pass,
    })
}

fn sampling_config(s: &Scenario, seed: u64) -> Result<SamplingConfig> {
    let mut cfg = SamplingConfig {
        seed,
        ..SamplingConfig::default()
    };
    if let Some(v) = s.usize("sampling.base_points")? {
        cfg.base_points = v;
    }
    if let Some(v) = s.usize("sampling.pairs")? {
        cfg.pairs = v;
    }
    if let Some(v) = s.f64_list("sampling.radii")? {
        cfg.radii = v;
    }
    if let Some(v) = s.usize("sampling.directions")? {
        cfg.directions = v;
    }
    cfg.thresholds = Thresholds {
        k_max: s.f64("thresholds.k_max")?,
        df0_gap_max: s.f64("thresholds.df0_gap_max")?,
        omega_ratio_max: s.f64("thresholds.omega_ratio_max")?,
    };
    Ok(cfg)
}

pub fn cmd_verify(s: &Scenario, seed: Option<u64>, out: &Option<PathBuf>) -> Result<CmdResult> {
    let family = DiffeoFamily::parse(s.require("family")?)?;
    let dom = s.domain()?;
    let seed = s.seed(seed)?;
    let sampling = sampling_config(s, seed)?;
    let solver = s.solver_config(seed)?;
    let metric = match s.get("metric") {
        Some(spec) => MetricOracle::parse(spec, &solver)?,
        None => MetricOracle::euclidean(),
    };

    let mut r = Report::new("verify");
    r.push("family", family.name());
    r.push("metric", metric.name());
    r.push("seed", seed);
    let mut pass = true;

    let hypo = check_family_hypotheses(&family, &metric, &dom, &sampling)?;
    r.push("k_emp", hypo.k_emp);
    r.push("eta_samples", hypo.eta_samples.len());
    let eta_max = hypo.eta_samples.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    r.push("eta_max", eta_max);
    let df0_max = hypo.df0_continuity.iter().map(|(_, g)| *g).fold(0.0, f64::max);
    r.push("df0_gap_max_observed", df0_max);
    r.push("skipped", hypo.skipped);
    match hypo.jacobian_step {
        Some(h) => r.push("jacobian_fd_step", h),
        None => r.push("jacobian_fd_step", "analytic"),
    }
    for j in &hypo.judgments {
        r.push(&format!("judgment.{}.observed", j.name), j.observed);
        r.push(&format!("judgment.{}.threshold", j.name), j.threshold);
        r.push(&format!("judgment.{}.pass", j.name), j.pass);
        pass &= j.pass;
    }

    let omega = distortion_modulus(&family, &dom, &sampling)?;
    for (i, (radius, dev)) in omega.envelope.iter().enumerate() {
        r.push(&format!("omega.{i}.radius"), *radius);
        r.push(&format!("omega.{i}.deviation"), *dev);
    }
    r.push("omega_ratio_decreasing", omega.ratio_decreasing);

    // Push-forward of a supplied frame, optionally compared to a built-in.
    if let Some(columns) = s.point_list("delta0")? {
        let n = family.dim();
        if columns.iter().any(|c| c.len() != n) {
            return Err(GeoError::InvalidInput("delta0 columns of wrong dimension".into()));
        }
        let delta0 = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        let pushed = push_forward_distribution(&family, &delta0)?;
        r.push("pushforward", pushed.name());
        if let Some(reference) = s.get("pushforward.compare") {
            let reference = Distribution::parse(reference)?;
            let tol = s.f64("pushforward.tol")?.unwrap_or(1e-6);
            let mut worst = 0.0f64;
            for idx in dom.grid_indices().iter().step_by(7) {
                let p = dom.grid_point(idx);
                let gap =
                    ccgeo::subspace_distance(&pushed.frame(&p), &reference.frame(&p))?;
                worst = worst.max(gap);
            }
            r.push("pushforward.max_subspace_distance", worst);
            r.push("pushforward.tol", tol);
            let ok = worst <= tol;
            r.push("pushforward.pass", ok);
            pass &= ok;
        }
    }

    // Empirical biLipschitz comparison of two oracles.
    if let (Some(d1), Some(d2)) = (s.get("compare.d1"), s.get("compare.d2")) {
        let d1 = MetricOracle::parse(d1, &solver)?;
        let d2 = MetricOracle::parse(d2, &solver)?;
        let pairs = s.usize("compare.pairs")?.unwrap_or(30);
        let min_sep = s.f64("compare.min_sep")?.unwrap_or(0.3);
        let bilip = compare_metrics(&d1, &d2, &dom, pairs, min_sep, seed)?;
        r.push("bilip.d1", d1.name());
        r.push("bilip.d2", d2.name());
        r.push("bilip.pairs", bilip.pairs.len());
        r.push("bilip.skipped", bilip.skipped);
        r.push("bilip.l_emp", bilip.l_emp);
        r.push("bilip.min_separation", bilip.min_separation);
        if let Some(l_max) = s.f64("compare.l_max")? {
            let ok = bilip.l_emp <= l_max;
            r.push("bilip.l_max", l_max);
            r.push("bilip.pass", ok);
            pass &= ok;
        }
    }

    // Chain transport, using the empirical k from the hypothesis check.
    if let Some(p) = s.point("chain.p")? {
        let radius = s.f64("chain.radius")?.unwrap_or(1.0);
        let chain = chain_transport(&family, &p, radius, &metric, hypo.k_emp.max(1.0))?;
        r.push("chain.n_segments", chain.n_segments);
        r.push("chain.segment_budget", chain.segment_budget);
        r.push("chain.d_length_bound", chain.d_length_bound);
        r.push("chain.pass", chain.pass);
        pass &= chain.pass;
    }

    r.push("overall", if pass { "PASS" } else { "FAIL" });
    let rendered = r.render();
    write_file(out, "verify_report.txt", &rendered)?;
    Ok(CmdResult {
        report: rendered,
        pass,
    })
}

pub fn cmd_fixtures_regenerate(out: &Path) -> Result<CmdResult> {
    std::fs::create_dir_all(out)
        .map_err(|e| GeoError::InvalidInput(format!("cannot create {}: {e}", out.display())))?;
    let write = |name: &str, content: &str| -> Result<()> {
        std::fs::write(out.join(name), content).map_err(|e| {
            GeoError::InvalidInput(format!("cannot write {}: {e}", out.join(name).display()))
        })
    };

    write(
        "circle_lift_r05.csv",
        &io::curve_to_csv(&fixtures::heisenberg_circle_lift(0.5, 1.0, 4001)),
    )?;
    write(
        "x_axis.csv",
        &io::curve_to_csv(&fixtures::heisenberg_x_axis(1.0, 1001)),
    )?;
    write(
        "ccdist_heisenberg_vertical.scn",
        "# CC distance across the vertical gap\n\
         distribution = heisenberg\n\
         norm = euclidean\n\
         domain = -1:1, -1:1, -1:1\n\
         p = 0, 0, 0\n\
         q = 0, 0, 0.25\n\
         seed = 42\n",
    )?;
    write(
        "smooth_circle_lift.scn",
        "# Smooth the circle lift at several window widths\n\
         distribution = heisenberg\n\
         domain = -1:1, -1:1, -1:1\n\
         curve = circle-lift:radius=0.5,turns=1,samples=4001\n\
         eps = 0.01\n\
         eps_list = 0.08, 0.04, 0.02, 0.01\n\
         horizontality_tol = 1e-4\n\
         seed = 1\n",
    )?;
    write(
        "zigzag_heisenberg.scn",
        "# Zig-zag toward the diagonal mix of the horizontal frame\n\
         distribution = heisenberg\n\
         base = 0, 0, 0\n\
         generators = 1,0,0; 0,1,0\n\
         coeffs = 0.5, 0.5\n\
         eps = 0.05\n\
         eps_list = 0.2, 0.1, 0.05, 0.025\n\
         duration = 1\n\
         seed = 1\n",
    )?;
    write(
        "verify_heisenberg_left.scn",
        "# Hypothesis checks for the Heisenberg left-translation family\n\
         family = heisenberg-left\n\
         domain = -1:1, -1:1, -1:1\n\
         thresholds.k_max = 2.0\n\
         delta0 = 1,0,0; 0,1,0\n\
         pushforward.compare = heisenberg\n\
         chain.p = 0.05, 0, 0\n\
         chain.radius = 0.8\n\
         seed = 7\n",
    )?;

    let mut r = Report::new("fixtures");
    r.push("action", "regenerate");
    r.push("out", out.display());
    r.push("files", 6);
    Ok(CmdResult {
        report: r.render(),
        pass: true,
    })
}
