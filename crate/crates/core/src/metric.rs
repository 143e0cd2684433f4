//! The Carnot-Caratheodory distance as a numerical estimator.
//!
//! The true distance is an infimum over horizontal curves; this module
//! brackets it between the chord lower bound (any curve is at least as long
//! as its chord) and an upper bound found by direct transcription: piecewise
//! constant controls in frame coordinates, trajectories from the fixed-step
//! integrator, length plus an escalating endpoint penalty minimized by
//! derivative-free compass search with random restarts.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::curve::{curve_length, SampledCurve};
use crate::distribution::Distribution;
use crate::domain::Domain;
use crate::error::{GeoError, Result};
use crate::flow::rk4_step;
use crate::norm::FinslerNorm;

/// Stretch factor on the residual endpoint gap that is added to the reported
/// upper value, keeping it an honest upper bound under tolerance.
pub const GAP_STRETCH: f64 = 3.0;

/// Settings for the direct-transcription upper-bound solver.
#[derive(Debug, Clone)]
pub struct CCSolverConfig {
    /// Number of piecewise-constant control windows.
    pub segments: usize,
    /// Random restarts (the first restart is a deterministic chord guess).
    pub restarts: usize,
    /// Compass-search sweeps allowed per penalty stage.
    pub max_sweeps: usize,
    /// Endpoint penalty escalation schedule.
    pub penalties: Vec<f64>,
    /// Master seed; per-restart seeds derive from it by index.
    pub seed: u64,
    /// Accepted endpoint mismatch.
    pub endpoint_tolerance: f64,
    /// RK4 substeps per control window during optimization.
    pub substeps: usize,
    /// RK4 substeps per window when re-simulating the winning trajectory.
    pub output_substeps: usize,
    /// Initial compass step, relative to the control scale.
    pub initial_step: f64,
}

impl Default for CCSolverConfig {
    fn default() -> Self {
        CCSolverConfig {
            segments: 12,
            restarts: 12,
            max_sweeps: 70,
            penalties: vec![30.0, 300.0, 3000.0],
            seed: 0,
            endpoint_tolerance: 1e-3,
            substeps: 5,
            output_substeps: 32,
            initial_step: 0.3,
        }
    }
}

impl CCSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segments < 2 {
            return Err(GeoError::InvalidInput("segments must be >= 2".into()));
        }
        if self.restarts < 1 {
            return Err(GeoError::InvalidInput("restarts must be >= 1".into()));
        }
        if self.penalties.is_empty() || self.penalties.iter().any(|p| !(*p > 0.0)) {
            return Err(GeoError::InvalidInput("penalty schedule must be positive".into()));
        }
        if self.substeps == 0 || self.output_substeps == 0 {
            return Err(GeoError::InvalidInput("substeps must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Chord lower bound for the CC distance: the norm of `q - p`, evaluated at
/// the chord midpoint. Every horizontal curve from `p` to `q` is at least
/// this long.
pub fn cc_chord_lower(p: &DVector<f64>, q: &DVector<f64>, norm: &FinslerNorm) -> f64 {
    norm.eval(&((p + q) * 0.5), &(q - p))
}

/// A two-sided bracket of the CC distance together with the witnessing path.
#[derive(Debug, Clone)]
pub struct DistanceInterval {
    pub lower: f64,
    pub upper: f64,
    pub path: SampledCurve,
    /// Residual endpoint mismatch of the witness path.
    pub endpoint_gap: f64,
}

struct Transcription<'a> {
    distribution: &'a Distribution,
    norm: &'a FinslerNorm,
    p: DVector<f64>,
    q: DVector<f64>,
    segments: usize,
    substeps: usize,
}

impl Transcription<'_> {
    /// Integrates the control matrix (k x M, flattened column-per-window) and
    /// returns the dense trajectory.
    fn simulate(&self, controls: &[f64], substeps: usize) -> Result<SampledCurve> {
        let k = self.distribution.rank();
        let h = 1.0 / (self.segments * substeps) as f64;
        let mut x = self.p.clone();
        let mut times = Vec::with_capacity(self.segments * substeps + 1);
        let mut points = Vec::with_capacity(self.segments * substeps + 1);
        times.push(0.0);
        points.push(x.clone());
        for w in 0..self.segments {
            let u = DVector::from_column_slice(&controls[w * k..(w + 1) * k]);
            let mut field =
                |y: &DVector<f64>| -> Result<DVector<f64>> { Ok(self.distribution.frame(y) * &u) };
            for s in 0..substeps {
                x = rk4_step(&x, h, &mut field)?;
                times.push((w * substeps + s + 1) as f64 * h);
                points.push(x.clone());
            }
        }
        SampledCurve::new(times, points)
    }

    fn objective(&self, controls: &[f64], penalty: f64) -> Result<(f64, f64, f64)> {
        let curve = self.simulate(controls, self.substeps)?;
        let length = curve_length(&curve, self.norm)?;
        let end = curve.end();
        let gap = (end - &self.q).norm();
        Ok((length + penalty * gap, length, gap))
    }

    /// Deterministic chord guess: per-window least-squares controls that pull
    /// toward `q` along the straight segment.
    fn chord_controls(&self) -> Vec<f64> {
        let k = self.distribution.rank();
        let chord = &self.q - &self.p;
        let mut controls = vec![0.0; k * self.segments];
        for w in 0..self.segments {
            let mid = &self.p + &chord * ((w as f64 + 0.5) / self.segments as f64);
            let frame = self.distribution.frame(&mid);
            if let Ok(pinv) = frame.pseudo_inverse(1e-10) {
                let u = &pinv * &chord;
                controls[w * k..(w + 1) * k].copy_from_slice(u.as_slice());
            }
        }
        controls
    }
}

/// Per-coordinate descent with parabolic refinement, plus a Hooke-Jeeves
/// pattern move after each improving sweep (coordinated drifts such as
/// rotating or rescaling a whole control polygon would otherwise crawl).
/// Returns the improved controls and final objective value.
fn compass_search<F>(
    mut x: Vec<f64>,
    mut value: f64,
    mut step: f64,
    max_sweeps: usize,
    min_step: f64,
    mut f: F,
) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    for _ in 0..max_sweeps {
        let before = x.clone();
        let mut grad = vec![0.0; n];
        let mut improved = false;
        for i in 0..n {
            let old = x[i];
            let f0 = value;
            x[i] = old + step;
            let f_plus = f(&x);
            x[i] = old - step;
            let f_minus = f(&x);
            grad[i] = (f_plus - f_minus) / (2.0 * step);
            // Parabola through (-s, f_minus), (0, f0), (+s, f_plus).
            let denom = f_plus - 2.0 * f0 + f_minus;
            let mut best = (f0, old);
            if f_plus < best.0 {
                best = (f_plus, old + step);
            }
            if f_minus < best.0 {
                best = (f_minus, old - step);
            }
            if denom > 1e-300 {
                let vertex = old + 0.5 * step * (f_minus - f_plus) / denom;
                let vertex = vertex.clamp(old - 4.0 * step, old + 4.0 * step);
                x[i] = vertex;
                let f_vertex = f(&x);
                if f_vertex < best.0 {
                    best = (f_vertex, vertex);
                }
            }
            x[i] = best.1;
            if best.0 < value - 1e-15 {
                value = best.0;
                improved = true;
            }
        }
        // Expanding line search along the (stale) probe gradient; coordinated
        // descent directions are invisible to single-coordinate moves.
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm > 0.0 {
            let mut t = step;
            loop {
                let trial: Vec<f64> = x
                    .iter()
                    .zip(&grad)
                    .map(|(xi, gi)| xi - t * gi / gnorm)
                    .collect();
                let v = f(&trial);
                if v < value - 1e-15 {
                    x = trial;
                    value = v;
                    improved = true;
                    t *= 2.0;
                } else {
                    break;
                }
            }
        }
        if improved {
            // Pattern move: keep doubling the whole sweep displacement.
            loop {
                let pattern: Vec<f64> = x
                    .iter()
                    .zip(&before)
                    .map(|(now, was)| now + (now - was))
                    .collect();
                let v = f(&pattern);
                if v < value - 1e-15 {
                    x = pattern;
                    value = v;
                } else {
                    break;
                }
            }
        } else {
            step *= 0.25;
            if step < min_step {
                break;
            }
        }
    }
    (x, value)
}

fn fd_gradient<F>(x: &[f64], h: f64, f: &mut F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let old = probe[i];
        probe[i] = old + h;
        let fp = f(&probe);
        probe[i] = old - h;
        let fm = f(&probe);
        probe[i] = old;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Limited-memory BFGS on central-difference gradients with an Armijo
/// backtracking line search. The pattern search above finds the basin; this
/// finishes the convergence that coordinate moves crawl through.
fn lbfgs_refine<F>(
    mut x: Vec<f64>,
    mut value: f64,
    iters: usize,
    fd_step: f64,
    mut f: F,
) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    const MEM: usize = 8;
    let n = x.len();
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho: Vec<f64> = Vec::new();
    let mut g = fd_gradient(&x, fd_step, &mut f);

    for _ in 0..iters {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-10 {
            break;
        }
        // Two-loop recursion.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = vec![0.0; s_hist.len()];
        for j in (0..s_hist.len()).rev() {
            let a = rho[j] * dot(&s_hist[j], &d);
            alphas[j] = a;
            for i in 0..n {
                d[i] -= a * y_hist[j][i];
            }
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y).max(1e-300);
            for v in d.iter_mut() {
                *v *= gamma;
            }
        }
        for j in 0..s_hist.len() {
            let b = rho[j] * dot(&y_hist[j], &d);
            for i in 0..n {
                d[i] += (alphas[j] - b) * s_hist[j][i];
            }
        }
        let slope = dot(&g, &d);
        let d = if slope < 0.0 {
            d
        } else {
            g.iter().map(|v| -v).collect()
        };
        let slope = dot(&g, &d).min(-1e-300);

        // Armijo backtracking from a unit step.
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let v = f(&trial);
            if v <= value + 1e-4 * t * slope {
                accepted = Some((trial, v));
                break;
            }
            t *= 0.5;
        }
        let Some((new_x, new_value)) = accepted else {
            break;
        };
        let new_g = fd_gradient(&new_x, fd_step, &mut f);
        let s: Vec<f64> = new_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new_g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            s_hist.push(s);
            y_hist.push(y);
            rho.push(1.0 / sy);
            if s_hist.len() > MEM {
                s_hist.remove(0);
                y_hist.remove(0);
                rho.remove(0);
            }
        }
        if value - new_value < 1e-14 * value.abs().max(1.0) {
            x = new_x;
            value = new_value;
            break;
        }
        x = new_x;
        value = new_value;
        g = new_g;
    }
    (x, value)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn restart_seed(master: u64, restart: usize) -> u64 {
    master ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Restart seeding. Restart 0 keeps the plain chord guess; the next eight
/// restarts superimpose a deterministic ladder of rotating control patterns
/// (arcs and loops of both orientations at several amplitudes, random phase
/// only), and any further restarts add uniform noise. Curved optima live in
/// basins that straight-seeded coordinate descent reaches only erratically,
/// so both orientations and several turning rates are always proposed.
/// Turning angle of the circular arc with chord `c` that encloses area `a`
/// against its chord, from `(theta - sin theta) / (8 sin^2(theta/2)) = a/c^2`
/// (solved by bisection). Capped at three quarters of a turn: beyond that
/// the arc-length stretch `(theta/2)/sin(theta/2)` blows up and the closed
/// loop seeds are the appropriate family anyway.
fn arc_turning_angle(chord: f64, area: f64) -> f64 {
    if !(chord > 0.0) || !(area > 0.0) {
        return 0.0;
    }
    let target = area / (chord * chord);
    let ratio = |theta: f64| {
        let s = (theta / 2.0).sin();
        (theta - theta.sin()) / (8.0 * s * s)
    };
    let (mut lo, mut hi) = (1e-9, 0.75 * std::f64::consts::TAU);
    if ratio(hi) <= target {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn seed_restart(
    controls: &mut [f64],
    restart: usize,
    k: usize,
    segments: usize,
    arc_theta: f64,
    arc_scale: f64,
    noise_scale: f64,
    rng: &mut ChaCha8Rng,
) {
    if restart == 0 {
        return;
    }
    // Closed loops of both orientations first (they generate the area that
    // straight motion cannot), then rotated-chord arcs at the
    // geometry-derived turning angle, then noise.
    const ARCS: [(f64, f64); 6] = [
        (1.0, 1.0),
        (-1.0, 1.0),
        (1.0, 0.55),
        (-1.0, 0.55),
        (1.0, 1.6),
        (-1.0, 1.6),
    ];
    match restart {
        1 | 2 if k >= 2 && arc_scale > 1e-12 => {
            let orientation = if restart == 1 { 1.0 } else { -1.0 };
            add_arc_seed(controls, k, segments, arc_scale, 1.0, orientation, rng);
        }
        3..=8 if k >= 2 && arc_theta > 1e-9 => {
            let (orientation, factor) = ARCS[restart - 3];
            rotate_chord_seed(controls, k, segments, orientation * factor * arc_theta, rng);
        }
        _ => {
            for c in controls.iter_mut() {
                *c += rng.random_range(-1.5 * noise_scale..1.5 * noise_scale);
            }
        }
    }
}

/// Progressively rotates the window controls by a total angle `theta` in a
/// 2-plane of control space (centered so the middle window keeps its
/// direction), scaling speeds by the arc/chord length ratio. Seeds the
/// circular-arc trajectory family.
fn rotate_chord_seed(
    controls: &mut [f64],
    k: usize,
    segments: usize,
    theta: f64,
    rng: &mut ChaCha8Rng,
) {
    let plane: Option<(DVector<f64>, DVector<f64>)> = if k == 2 {
        Some((
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        ))
    } else {
        let mean = {
            let mut m = DVector::zeros(k);
            for w in 0..segments {
                m += DVector::from_column_slice(&controls[w * k..(w + 1) * k]);
            }
            m / segments as f64
        };
        if mean.norm() < 1e-12 {
            None
        } else {
            let a = &mean / mean.norm();
            let mut b = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0f64));
            b -= &a * a.dot(&b);
            if b.norm() < 1e-9 {
                None
            } else {
                b /= b.norm();
                Some((a.clone(), b))
            }
        }
    };
    let Some((a, b)) = plane else { return };
    let theta = theta.clamp(-0.75 * std::f64::consts::TAU, 0.75 * std::f64::consts::TAU);
    let stretch = if theta.abs() > 1e-12 {
        ((theta.abs() / 2.0) / (theta.abs() / 2.0).sin()).clamp(1.0, 3.0)
    } else {
        1.0
    };
    for w in 0..segments {
        let angle = theta * ((w as f64 + 0.5) / segments as f64 - 0.5);
        let u = DVector::from_column_slice(&controls[w * k..(w + 1) * k]);
        let ua = a.dot(&u);
        let ub = b.dot(&u);
        let rest = &u - &a * ua - &b * ub;
        let (c, s) = (angle.cos(), angle.sin());
        let rotated = &a * (c * ua - s * ub) + &b * (s * ua + c * ub) + rest;
        let seeded = rotated * stretch;
        controls[w * k..(w + 1) * k].copy_from_slice(seeded.as_slice());
    }
}

/// Superimposes a rotating sinusoidal control pattern on `controls`: `turns`
/// revolutions in a 2-plane of control space (random for rank > 2), with
/// random phase. Integer turns sum to zero over the windows and so preserve
/// the endpoint pull of the underlying chord guess; partial turns seed
/// arc-shaped trajectories.
fn add_arc_seed(
    controls: &mut [f64],
    k: usize,
    segments: usize,
    amplitude: f64,
    turns: f64,
    orientation: f64,
    rng: &mut ChaCha8Rng,
) {
    let (a, b) = if k == 2 {
        (
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        )
    } else {
        let mut a = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        if a.norm() < 1e-9 {
            a = DVector::from_fn(k, |i, _| if i == 0 { 1.0 } else { 0.0 });
        }
        a /= a.norm();
        let mut b = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        b -= &a * a.dot(&b);
        if b.norm() < 1e-9 {
            b = DVector::from_fn(k, |i, _| if i == 1 { 1.0 } else { 0.0 });
            b -= &a * a.dot(&b);
        }
        b /= b.norm();
        (a, b)
    };
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    for w in 0..segments {
        let angle = orientation * turns * std::f64::consts::TAU * (w as f64 + 0.5)
            / segments as f64
            + phase;
        for j in 0..k {
            controls[w * k + j] += amplitude * (angle.cos() * a[j] + angle.sin() * b[j]);
        }
    }
}

#[derive(Clone)]
struct Candidate {
    restart: usize,
    gap: f64,
    length: f64,
    controls: Vec<f64>,
}

/// Explores the transcription problem with seeded restarts and returns the
/// best converged candidate (or the closest one when none converges).
fn solve_exploration(trans: &Transcription<'_>, cfg: &CCSolverConfig) -> Result<Candidate> {
    let chord = (&trans.q - &trans.p).norm();
    // Control scales. Straight-reachable displacement costs about the chord;
    // the part the chord guess cannot reach must be generated by curved
    // motion, whose cost behaves like the isoperimetric value
    // 2 sqrt(pi * deficit).
    let k = trans.distribution.rank();
    let chord_guess = trans.chord_controls();
    let deficit = match trans.simulate(&chord_guess, trans.substeps) {
        Ok(curve) => (&trans.q - curve.end()).norm(),
        Err(_) => chord,
    };
    let arc_scale = 2.0 * (std::f64::consts::PI * deficit).sqrt();
    let scale = chord.max(arc_scale);
    let arc_theta = arc_turning_angle(chord, deficit);

    let candidates: Vec<Candidate> = (0..cfg.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(cfg.seed, restart));
            let mut controls = chord_guess.clone();
            seed_restart(
                &mut controls,
                restart,
                k,
                cfg.segments,
                arc_theta,
                arc_scale,
                scale,
                &mut rng,
            );
            descend_stages(trans, cfg, controls, scale, restart)
        })
        .collect();

    // Among converged restarts pick the shortest; otherwise keep the closest.
    let best = candidates
        .iter()
        .filter(|c| c.gap <= cfg.endpoint_tolerance)
        .min_by(|a, b| {
            (a.length, a.restart)
                .partial_cmp(&(b.length, b.restart))
                .unwrap()
        });
    match best {
        Some(c) => Ok(c.clone()),
        None => {
            let closest = candidates
                .into_iter()
                .min_by(|a, b| (a.gap, a.restart).partial_cmp(&(b.gap, b.restart)).unwrap())
                .expect("restarts >= 1");
            Err(GeoError::UnreachableWithinBudget {
                best_gap: closest.gap,
                best_value: closest.length + GAP_STRETCH * closest.gap,
                tol: cfg.endpoint_tolerance,
            })
        }
    }
}

/// One full penalty-escalation descent from given controls.
fn descend_stages(
    trans: &Transcription<'_>,
    cfg: &CCSolverConfig,
    mut controls: Vec<f64>,
    scale: f64,
    restart: usize,
) -> Candidate {
    for (stage, &penalty) in cfg.penalties.iter().enumerate() {
        let eval = |u: &[f64]| -> f64 {
            trans
                .objective(u, penalty)
                .map(|(v, _, _)| v)
                .unwrap_or(f64::INFINITY)
        };
        let value = eval(&controls);
        let step = cfg.initial_step * scale / (1 << stage.min(8)) as f64;
        let (better, v) = compass_search(controls, value, step, cfg.max_sweeps, 1e-6 * scale, eval);
        let (refined, _) = lbfgs_refine(better, v, 50, 1e-6 * scale, eval);
        controls = refined;
        // Converged restarts skip the remaining escalation stages.
        if let Ok((_, _, gap)) = trans.objective(&controls, penalty) {
            if gap <= cfg.endpoint_tolerance * 0.1 {
                break;
            }
        }
    }
    let (_, length, gap) = trans
        .objective(&controls, *cfg.penalties.last().unwrap())
        .unwrap_or((f64::INFINITY, f64::INFINITY, f64::INFINITY));
    Candidate {
        restart,
        gap,
        length,
        controls,
    }
}

/// Polishes controls at a stiffened penalty and renders the final value and
/// dense path.
fn finish(
    trans: &Transcription<'_>,
    cfg: &CCSolverConfig,
    best: &Candidate,
) -> Result<(f64, SampledCurve)> {
    let chord = (&trans.q - &trans.p).norm();
    let scale = chord.max(1e-6);
    let polish_penalty = cfg.penalties.last().unwrap() * 10.0;
    let polish_eval = |u: &[f64]| -> f64 {
        trans
            .objective(u, polish_penalty)
            .map(|(v, _, _)| v)
            .unwrap_or(f64::INFINITY)
    };
    let (polished, _) = lbfgs_refine(
        best.controls.clone(),
        polish_eval(&best.controls),
        120,
        1e-6 * scale,
        polish_eval,
    );
    let (_, pol_length, pol_gap) = trans.objective(&polished, polish_penalty)?;
    let controls = if pol_gap <= cfg.endpoint_tolerance && pol_length <= best.length {
        polished
    } else {
        best.controls.clone()
    };

    let path = trans.simulate(&controls, cfg.output_substeps)?;
    let length = curve_length(&path, trans.norm)?;
    let gap_vec = &trans.q - path.end();
    let gap_norm = trans.norm.eval(&((path.end() + &trans.q) * 0.5), &gap_vec);
    Ok((length + GAP_STRETCH * gap_norm, path))
}

/// Time-reversal of a control grid: reversed window order, negated signs.
/// The reversed controls retrace the trajectory backward.
fn reverse_controls(controls: &[f64], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(controls.len());
    for window in controls.chunks(k).rev() {
        out.extend(window.iter().map(|u| -u));
    }
    out
}

fn lex_less_eq(p: &DVector<f64>, q: &DVector<f64>) -> bool {
    for (a, b) in p.iter().zip(q.iter()) {
        if a < b {
            return true;
        }
        if a > b {
            return false;
        }
    }
    true
}

/// Upper bound for the CC distance: the length of a found near-connecting
/// horizontal trajectory, plus [`GAP_STRETCH`] times the residual endpoint
/// gap. Errors with the best gap when no restart reaches `q` within the
/// configured tolerance.
///
/// The metric is symmetric under time reversal, so the expensive restart
/// exploration always runs on the lexicographically-smaller orientation of
/// the pair; for the opposite orientation the winning controls are reversed
/// and re-descended. Upper values for `(p, q)` and `(q, p)` therefore come
/// from the same basin.
pub fn cc_distance_upper(
    p: &DVector<f64>,
    q: &DVector<f64>,
    distribution: &Distribution,
    norm: &FinslerNorm,
    cfg: &CCSolverConfig,
) -> Result<(f64, SampledCurve)> {
    cfg.validate()?;
    if p.len() != distribution.dim() || q.len() != distribution.dim() {
        return Err(GeoError::InvalidInput(format!(
            "points of dimension {}/{} vs distribution dimension {}",
            p.len(),
            q.len(),
            distribution.dim()
        )));
    }
    let chord = (q - p).norm();
    if chord == 0.0 {
        let path = SampledCurve::new(vec![0.0, 1.0], vec![p.clone(), p.clone()])?;
        return Ok((0.0, path));
    }

    let trans = Transcription {
        distribution,
        norm,
        p: p.clone(),
        q: q.clone(),
        segments: cfg.segments,
        substeps: cfg.substeps,
    };

    if lex_less_eq(p, q) {
        let best = solve_exploration(&trans, cfg)?;
        return finish(&trans, cfg, &best);
    }

    // Non-canonical orientation: explore q -> p, then retrace.
    let canonical = Transcription {
        distribution,
        norm,
        p: q.clone(),
        q: p.clone(),
        segments: cfg.segments,
        substeps: cfg.substeps,
    };
    let best = solve_exploration(&canonical, cfg)?;
    let reversed = reverse_controls(&best.controls, distribution.rank());
    let candidate = descend_stages(&trans, cfg, reversed, chord.max(chord.sqrt()), 0);
    if candidate.gap <= cfg.endpoint_tolerance {
        return finish(&trans, cfg, &candidate);
    }
    // The retraced basin failed to close the endpoint; fall back to a full
    // exploration of the requested orientation.
    let fallback = solve_exploration(&trans, cfg)?;
    finish(&trans, cfg, &fallback)
}

/// Brackets the CC distance between [`cc_chord_lower`] and
/// [`cc_distance_upper`].
pub fn cc_distance(
    p: &DVector<f64>,
    q: &DVector<f64>,
    distribution: &Distribution,
    norm: &FinslerNorm,
    cfg: &CCSolverConfig,
) -> Result<DistanceInterval> {
    let lower = cc_chord_lower(p, q, norm);
    let (upper, path) = cc_distance_upper(p, q, distribution, norm, cfg)?;
    debug_assert!(lower <= upper + 1e-9);
    let endpoint_gap = (q - path.end()).norm();
    Ok(DistanceInterval {
        lower,
        upper,
        path,
        endpoint_gap,
    })
}

type OracleFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<f64> + Send + Sync;

/// A pluggable distance evaluator on pairs of chart points.
#[derive(Clone)]
pub struct MetricOracle {
    name: String,
    eval: Arc<OracleFn>,
}

impl MetricOracle {
    pub fn euclidean() -> Self {
        MetricOracle {
            name: "euclidean".into(),
            eval: Arc::new(|p, q| Ok((q - p).norm())),
        }
    }

    pub fn custom<F>(name: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> Result<f64> + Send + Sync + 'static,
    {
        MetricOracle {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn scaled(factor: f64, inner: MetricOracle) -> Self {
        let name = format!("scaled:{factor}:{}", inner.name);
        MetricOracle {
            name,
            eval: Arc::new(move |p, q| Ok(factor * (inner.eval)(p, q)?)),
        }
    }

    /// CC upper-value oracle for a distribution. Each evaluation derives its
    /// seed from the master seed and the coordinate bits, so oracle values
    /// are reproducible regardless of evaluation order.
    pub fn cc(distribution: Distribution, norm: FinslerNorm, cfg: CCSolverConfig) -> Self {
        let name = format!("cc:{}", distribution.name());
        MetricOracle {
            name,
            eval: Arc::new(move |p, q| {
                let mut call_cfg = cfg.clone();
                call_cfg.seed = mix_seed(cfg.seed, p, q);
                let (value, _) = cc_distance_upper(p, q, &distribution, &norm, &call_cfg)?;
                Ok(value)
            }),
        }
    }

    /// Resolves `euclidean`, `cc:<distribution>` and `scaled:<factor>:<oracle>`.
    pub fn parse(spec: &str, cfg: &CCSolverConfig) -> Result<Self> {
        let spec = spec.trim();
        if spec == "euclidean" {
            return Ok(MetricOracle::euclidean());
        }
        if let Some(dist) = spec.strip_prefix("cc:") {
            let d = Distribution::parse(dist)?;
            return Ok(MetricOracle::cc(d, FinslerNorm::euclidean(), cfg.clone()));
        }
        if let Some(rest) = spec.strip_prefix("scaled:") {
            let (factor, inner) = rest.split_once(':').ok_or_else(|| {
                GeoError::InvalidInput(format!("expected scaled:<factor>:<oracle>, got '{spec}'"))
            })?;
            let factor: f64 = factor
                .parse()
                .map_err(|_| GeoError::InvalidInput(format!("bad factor in '{spec}'")))?;
            return Ok(MetricOracle::scaled(factor, MetricOracle::parse(inner, cfg)?));
        }
        Err(GeoError::InvalidInput(format!("unknown metric oracle '{spec}'")))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, p: &DVector<f64>, q: &DVector<f64>) -> Result<f64> {
        (self.eval)(p, q).map_err(|e| GeoError::OracleFailure {
            name: self.name.clone(),
            reason: e.to_string(),
        })
    }
}

impl std::fmt::Debug for MetricOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MetricOracle({})", self.name)
    }
}

fn mix_seed(master: u64, p: &DVector<f64>, q: &DVector<f64>) -> u64 {
    let mut h = master ^ 0x51_7C_C1_B7_27_22_0A_95;
    let mut mix = |bits: u64| {
        h ^= bits;
        h = h.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        h ^= h >> 29;
    };
    for c in p.iter().chain(q.iter()) {
        mix(c.to_bits());
    }
    h
}

/// One sampled pair in a metric comparison.
#[derive(Debug, Clone)]
pub struct PairSample {
    pub p: DVector<f64>,
    pub q: DVector<f64>,
    pub d1: f64,
    pub d2: f64,
    /// `d1 / d2`.
    pub ratio: f64,
}

/// Empirical two-sided comparison of two metric oracles.
#[derive(Debug, Clone)]
pub struct BiLipReport {
    pub pairs: Vec<PairSample>,
    /// `max(max ratio, max inverse ratio)` over the sampled pairs.
    pub l_emp: f64,
    pub min_separation: f64,
    pub skipped: usize,
}

/// Samples `n_pairs` point pairs in `dom` with Euclidean separation in
/// `[min_sep, 2 min_sep]` (random base point, random direction) and reports
/// the empirical biLipschitz constant between the two oracles at that scale.
/// Pairs on which an oracle fails (or returns a vanishing value) are skipped
/// and counted; more than 20% skipped aborts the comparison.
pub fn compare_metrics(
    d1: &MetricOracle,
    d2: &MetricOracle,
    dom: &Domain,
    n_pairs: usize,
    min_sep: f64,
    seed: u64,
) -> Result<BiLipReport> {
    if n_pairs == 0 {
        return Err(GeoError::InvalidInput("n_pairs must be >= 1".into()));
    }
    if !(min_sep > 0.0) {
        return Err(GeoError::InvalidInput("min_sep must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut attempts = 0usize;
    while pairs.len() < n_pairs {
        attempts += 1;
        if attempts > 10_000 * n_pairs {
            return Err(GeoError::InvalidInput(format!(
                "could not sample {n_pairs} pairs with separation {min_sep}"
            )));
        }
        let p = dom.sample_uniform(&mut rng);
        let mut dir = DVector::from_fn(dom.dimension(), |_, _| rng.random_range(-1.0..1.0f64));
        if dir.norm() < 1e-9 {
            continue;
        }
        dir *= rng.random_range(min_sep..=2.0 * min_sep) / dir.norm();
        let q = &p + dir;
        if dom.contains(&q) {
            pairs.push((p, q));
        }
    }

    let evaluated: Vec<Option<PairSample>> = pairs
        .par_iter()
        .map(|(p, q)| {
            let v1 = d1.eval(p, q).ok()?;
            let v2 = d2.eval(p, q).ok()?;
            if v1 <= 1e-12 || v2 <= 1e-12 {
                return None;
            }
            Some(PairSample {
                p: p.clone(),
                q: q.clone(),
                d1: v1,
                d2: v2,
                ratio: v1 / v2,
            })
        })
        .collect();

    let skipped = evaluated.iter().filter(|s| s.is_none()).count();
    if skipped * 5 > n_pairs {
        return Err(GeoError::TooManySkippedPairs {
            skipped,
            total: n_pairs,
        });
    }
    let samples: Vec<PairSample> = evaluated.into_iter().flatten().collect();
    let l_emp = samples
        .iter()
        .map(|s| s.ratio.max(1.0 / s.ratio))
        .fold(1.0, f64::max);
    let min_separation = samples
        .iter()
        .map(|s| (&s.q - &s.p).norm())
        .fold(f64::INFINITY, f64::min);
    Ok(BiLipReport {
        pairs: samples,
        l_emp,
        min_separation,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::horizontality_check;

    fn v2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    fn v3(x: f64, y: f64, z: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y, z])
    }

    fn quick_cfg() -> CCSolverConfig {
        CCSolverConfig {
            segments: 8,
            restarts: 2,
            max_sweeps: 40,
            seed: 7,
            ..CCSolverConfig::default()
        }
    }

    #[test]
    fn chord_lower_bound_basics() {
        let n = FinslerNorm::euclidean();
        assert_eq!(cc_chord_lower(&v2(0.0, 0.0), &v2(3.0, 4.0), &n), 5.0);
        assert_eq!(cc_chord_lower(&v2(1.0, 1.0), &v2(1.0, 1.0), &n), 0.0);
        assert_eq!(
            cc_chord_lower(&v3(0.0, 0.0, 0.0), &v3(0.0, 0.0, 1.0), &n),
            1.0
        );
    }

    #[test]
    fn euclidean_distance_is_the_chord() {
        let d = Distribution::euclidean(2);
        let n = FinslerNorm::euclidean();
        let interval =
            cc_distance(&v2(0.0, 0.0), &v2(3.0, 4.0), &d, &n, &quick_cfg()).unwrap();
        assert!((interval.upper - 5.0).abs() / 5.0 < 1e-3, "{interval:?}");
        assert!(interval.lower <= interval.upper + 1e-9);
        assert!(interval.upper / interval.lower < 1.001);
    }

    #[test]
    fn coincident_points_have_zero_interval() {
        let d = Distribution::euclidean(2);
        let n = FinslerNorm::euclidean();
        let interval = cc_distance(&v2(0.3, 0.3), &v2(0.3, 0.3), &d, &n, &quick_cfg()).unwrap();
        assert_eq!((interval.lower, interval.upper), (0.0, 0.0));
    }

    #[test]
    fn heisenberg_chord_case_attains_the_lower_bound() {
        let d = Distribution::heisenberg();
        let n = FinslerNorm::euclidean();
        let (upper, path) =
            cc_distance_upper(&v3(0.0, 0.0, 0.0), &v3(1.0, 0.0, 0.0), &d, &n, &quick_cfg())
                .unwrap();
        assert!((upper - 1.0).abs() < 0.01, "upper {upper}");
        let report = horizontality_check(&path, &d, 1e-5).unwrap();
        assert!(report.max_deviation <= 1e-5);
        assert!((path.start() - v3(0.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn plane_distribution_cannot_reach_off_plane_targets() {
        let d = Distribution::coordinate_plane(2, 3).unwrap();
        let n = FinslerNorm::euclidean();
        let err = cc_distance_upper(
            &v3(0.0, 0.0, 0.0),
            &v3(0.0, 0.0, 0.5),
            &d,
            &n,
            &quick_cfg(),
        )
        .unwrap_err();
        match err {
            GeoError::UnreachableWithinBudget { best_gap, .. } => {
                assert!(best_gap > 0.3, "gap {best_gap}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn oracle_parsing_resolves_built_ins() {
        let cfg = quick_cfg();
        assert_eq!(MetricOracle::parse("euclidean", &cfg).unwrap().name(), "euclidean");
        assert_eq!(
            MetricOracle::parse("cc:heisenberg", &cfg).unwrap().name(),
            "cc:heisenberg"
        );
        let scaled = MetricOracle::parse("scaled:2:euclidean", &cfg).unwrap();
        let v = scaled.eval(&v2(0.0, 0.0), &v2(3.0, 4.0)).unwrap();
        assert_eq!(v, 10.0);
        assert!(MetricOracle::parse("taxicab", &cfg).is_err());
    }

    #[test]
    fn identical_oracles_compare_at_one() {
        let dom = Domain::symmetric(2, 1.0, 4).unwrap();
        let e = MetricOracle::euclidean();
        let report = compare_metrics(&e, &e.clone(), &dom, 25, 0.1, 11).unwrap();
        assert!((report.l_emp - 1.0).abs() < 1e-9);
        assert_eq!(report.skipped, 0);
        assert!(report.min_separation >= 0.1);
    }

    #[test]
    fn scaled_oracle_compares_at_the_factor() {
        let dom = Domain::symmetric(3, 1.0, 4).unwrap();
        let e = MetricOracle::euclidean();
        let doubled = MetricOracle::scaled(2.0, MetricOracle::euclidean());
        let report = compare_metrics(&doubled, &e, &dom, 25, 0.1, 11).unwrap();
        assert!((report.l_emp - 2.0).abs() < 1e-9);
    }

    #[test]
    fn failing_oracle_aborts_with_skip_count() {
        let dom = Domain::symmetric(2, 1.0, 4).unwrap();
        let e = MetricOracle::euclidean();
        let broken = MetricOracle::custom("broken", |_p, _q| {
            Err(GeoError::InvalidInput("nope".into()))
        });
        match compare_metrics(&broken, &e, &dom, 10, 0.1, 3).unwrap_err() {
            GeoError::TooManySkippedPairs { skipped, total } => {
                assert_eq!((skipped, total), (10, 10))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cc_oracle_is_deterministic_per_pair() {
        let d = Distribution::heisenberg();
        let oracle = MetricOracle::cc(d, FinslerNorm::euclidean(), quick_cfg());
        let p = v3(0.1, -0.2, 0.0);
        let q = v3(0.6, 0.4, 0.05);
        let a = oracle.eval(&p, &q).unwrap();
        let b = oracle.eval(&p, &q).unwrap();
        assert_eq!(a, b);
    }
}
