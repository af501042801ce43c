//! Nelder–Mead search over (exposure time, gain).
//!
//! The search maintains a 3-vertex simplex in parameter space. The initial
//! simplex is sized from the mean intensity of the current frame — dark
//! frames get a large expanding step, bright frames a contracting one — and
//! the simplex is then updated with the standard reflection / expansion /
//! contraction / shrink operations until a stopping rule fires. Every
//! candidate is clamped to the configured parameter bounds before scoring.

use std::collections::HashMap;
use std::io::Write;

use thiserror::Error;

use crate::camera::CameraError;

/// Mean intensity assumed when a frame source cannot report one (for example
/// a score-only surface camera).
pub const DEFAULT_MEAN_INTENSITY: f64 = 128.0;

/// Default threshold below which a parameter component is perturbed
/// additively when building the initial simplex.
pub const DEFAULT_KAPPA: f64 = 0.5;

/// Exposure time and sensor gain, the controller's decision variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureParams {
    pub exposure_ms: f64,
    pub gain_db: f64,
}

impl ExposureParams {
    pub fn new(exposure_ms: f64, gain_db: f64) -> Self {
        Self {
            exposure_ms,
            gain_db,
        }
    }

    fn component(&self, dim: usize) -> f64 {
        match dim {
            0 => self.exposure_ms,
            _ => self.gain_db,
        }
    }

    fn with_component(mut self, dim: usize, value: f64) -> Self {
        match dim {
            0 => self.exposure_ms = value,
            _ => self.gain_db = value,
        }
        self
    }
}

/// Inclusive parameter box the controller must stay inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBounds {
    pub exposure_ms: (f64, f64),
    pub gain_db: (f64, f64),
}

impl ParamBounds {
    pub fn new(exposure_ms: (f64, f64), gain_db: (f64, f64)) -> Self {
        assert!(
            exposure_ms.0 > 0.0 && exposure_ms.0 < exposure_ms.1 && gain_db.0 < gain_db.1,
            "bounds must satisfy 0 < min < max"
        );
        Self {
            exposure_ms,
            gain_db,
        }
    }

    /// Outdoor sweep profile: 0.1–7.45 ms, 0–20 dB.
    pub fn outdoor() -> Self {
        Self::new((0.1, 7.45), (0.0, 20.0))
    }

    /// Indoor sweep profile: 4–67 ms, 0–24 dB.
    pub fn indoor() -> Self {
        Self::new((4.0, 67.0), (0.0, 24.0))
    }

    pub fn clamp(&self, p: ExposureParams) -> ExposureParams {
        ExposureParams {
            exposure_ms: p.exposure_ms.clamp(self.exposure_ms.0, self.exposure_ms.1),
            gain_db: p.gain_db.clamp(self.gain_db.0, self.gain_db.1),
        }
    }

    pub fn contains(&self, p: ExposureParams) -> bool {
        (self.exposure_ms.0..=self.exposure_ms.1).contains(&p.exposure_ms)
            && (self.gain_db.0..=self.gain_db.1).contains(&p.gain_db)
    }

    fn range(&self, dim: usize) -> f64 {
        match dim {
            0 => self.exposure_ms.1 - self.exposure_ms.0,
            _ => self.gain_db.1 - self.gain_db.0,
        }
    }
}

/// Standard Nelder–Mead coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmCoefficients {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for NmCoefficients {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

/// Termination rules; any satisfied rule stops the search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    /// Maximum pairwise vertex distance, per-dimension normalized by the
    /// bounds range.
    pub diameter_tol: f64,
    /// Best-score improvement considered stagnant.
    pub improvement_tol: f64,
    /// Number of consecutive stagnant iterations before stopping.
    pub patience: usize,
    /// Hard cap on Nelder–Mead iterations.
    pub max_iterations: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            diameter_tol: 0.01,
            improvement_tol: 1e-3,
            patience: 5,
            max_iterations: 50,
        }
    }
}

/// Knobs for [`run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerOptions {
    /// Scaling factor for the initial step size.
    pub epsilon: f64,
    /// Additive-fallback threshold for near-zero components.
    pub kappa: f64,
    pub nm: NmCoefficients,
    pub stop: StoppingRule,
}

impl Default for ControllerOptions {
    fn default() -> Self {
        Self {
            epsilon: 1.7,
            kappa: DEFAULT_KAPPA,
            nm: NmCoefficients::default(),
            stop: StoppingRule::default(),
        }
    }
}

/// A scored simplex vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub params: ExposureParams,
    pub score: f64,
}

/// Three scored vertices, kept ordered best → worst.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    vertices: [Vertex; 3],
}

impl Simplex {
    pub fn new(mut vertices: [Vertex; 3]) -> Self {
        vertices.sort_by(|a, b| b.score.total_cmp(&a.score));
        Self { vertices }
    }

    pub fn best(&self) -> &Vertex {
        &self.vertices[0]
    }

    pub fn second(&self) -> &Vertex {
        &self.vertices[1]
    }

    pub fn worst(&self) -> &Vertex {
        &self.vertices[2]
    }

    pub fn vertices(&self) -> &[Vertex; 3] {
        &self.vertices
    }

    fn replace_worst(&mut self, v: Vertex) {
        self.vertices[2] = v;
        self.vertices.sort_by(|a, b| b.score.total_cmp(&a.score));
    }

    /// Maximum pairwise distance with each dimension normalized by its
    /// bounds range.
    pub fn normalized_diameter(&self, bounds: &ParamBounds) -> f64 {
        let mut max = 0.0f64;
        for a in 0..3 {
            for b in a + 1..3 {
                let de = (self.vertices[a].params.exposure_ms
                    - self.vertices[b].params.exposure_ms)
                    / bounds.range(0);
                let dg = (self.vertices[a].params.gain_db - self.vertices[b].params.gain_db)
                    / bounds.range(1);
                max = max.max((de * de + dg * dg).sqrt());
            }
        }
        max
    }
}

/// Simplex update applied in one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplexOp {
    Init,
    Reflect,
    Expand,
    Contract,
    Shrink,
}

impl SimplexOp {
    pub fn as_str(&self) -> &'static str {
        match self {
            SimplexOp::Init => "init",
            SimplexOp::Reflect => "reflect",
            SimplexOp::Expand => "expand",
            SimplexOp::Contract => "contract",
            SimplexOp::Shrink => "shrink",
        }
    }
}

/// One per-iteration trace entry: the operation, the ordered simplex after
/// it, and how many frames the iteration requested.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub op: SimplexOp,
    pub simplex: Simplex,
    pub frames: usize,
}

/// Append-only control loop history.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControlTrace {
    records: Vec<TraceRecord>,
}

impl ControlTrace {
    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    /// Number of Nelder–Mead update steps (excludes the initial simplex).
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn total_frames(&self) -> usize {
        self.records.iter().map(|r| r.frames).sum()
    }

    fn push(&mut self, op: SimplexOp, simplex: Simplex, frames: usize) {
        let iteration = self.records.len();
        self.records.push(TraceRecord {
            iteration,
            op,
            simplex,
            frames,
        });
    }

    /// Writes the trace as CSV: `iteration,op` followed by
    /// `(exposure_ms, gain_db, score)` for the three ordered vertices.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "iteration,op,exposure_ms_1,gain_db_1,score_1,exposure_ms_2,gain_db_2,score_2,exposure_ms_3,gain_db_3,score_3"
        )?;
        for r in &self.records {
            write!(w, "{},{}", r.iteration, r.op.as_str())?;
            for v in r.simplex.vertices() {
                write!(
                    w,
                    ",{},{},{}",
                    v.params.exposure_ms, v.params.gain_db, v.score
                )?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Anything the controller can ask for a score at given parameters: a real
/// camera paired with the metric, or a precomputed score surface.
pub trait Objective {
    fn sample(&mut self, params: ExposureParams) -> Result<Sample, CameraError>;

    /// Minimal distinguishable parameter step, when the source is quantized
    /// (for example a replay camera over a sweep grid).
    fn quantization(&self) -> Option<[f64; 2]> {
        None
    }
}

/// A scored observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub score: f64,
    /// Mean intensity of the observed frame, when one exists; drives the
    /// initial simplex size.
    pub mean_intensity: Option<f64>,
}

/// Search failure: the frame source failed mid-run. Carries the partial
/// trace accumulated so far.
#[derive(Debug, Error)]
#[error("exposure control aborted: {source}")]
pub struct ControlError {
    pub source: CameraError,
    pub trace: ControlTrace,
}

/// Search outcome: converged parameters, their score, and the full trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlResult {
    pub params: ExposureParams,
    pub score: f64,
    pub trace: ControlTrace,
}

/// Initial step size from the mean intensity `J` of the current frame:
/// bright frames (`J ≥ 128`) get a negative, contracting step
/// `−ε⁻¹·(J/255)`; dark frames an expanding one `ε·(1 − J/255)`.
pub fn initial_step(mean_intensity: f64, epsilon: f64) -> f64 {
    debug_assert!((0.0..=255.0).contains(&mean_intensity));
    debug_assert!(epsilon > 0.0);
    if mean_intensity >= 128.0 {
        -(mean_intensity / 255.0) / epsilon
    } else {
        epsilon * (1.0 - mean_intensity / 255.0)
    }
}

/// Builds the unscored initial simplex around `x0`.
///
/// Each off-vertex scales one component by `(1 + h)`; components with
/// magnitude below `kappa` are instead perturbed additively by `h·kappa`
/// (a zero gain cannot be moved multiplicatively). Vertices are clamped to
/// the bounds, and any vertex that collapses onto `x0` is re-separated by
/// `min_sep` in its own dimension.
pub fn initial_simplex(
    x0: ExposureParams,
    mean_intensity: f64,
    epsilon: f64,
    kappa: f64,
    bounds: &ParamBounds,
    min_sep: [f64; 2],
) -> [ExposureParams; 3] {
    initial_simplex_with_step(
        x0,
        initial_step(mean_intensity, epsilon),
        kappa,
        bounds,
        min_sep,
    )
}

/// [`initial_simplex`] with the step size given directly.
pub fn initial_simplex_with_step(
    x0: ExposureParams,
    h: f64,
    kappa: f64,
    bounds: &ParamBounds,
    min_sep: [f64; 2],
) -> [ExposureParams; 3] {
    let x0 = bounds.clamp(x0);
    let mut verts = [x0; 3];
    for dim in 0..2 {
        let base = x0.component(dim);
        let moved = if base.abs() < kappa {
            base + h * kappa
        } else {
            base * (1.0 + h)
        };
        let mut v = bounds.clamp(x0.with_component(dim, moved));
        if v == x0 {
            // Clamping collapsed the vertex; nudge it one quantization step,
            // flipping direction if that runs into the same bound.
            let sign = h.signum();
            let nudged = bounds.clamp(x0.with_component(dim, base + sign * min_sep[dim]));
            v = if nudged == x0 {
                bounds.clamp(x0.with_component(dim, base - sign * min_sep[dim]))
            } else {
                nudged
            };
        }
        verts[dim + 1] = v;
    }
    verts
}

/// True when any stopping rule fires: the normalized simplex diameter is
/// below tolerance, the best score has stagnated for `patience` consecutive
/// iterations, or the iteration cap is reached.
pub fn should_stop(
    simplex: &Simplex,
    trace: &ControlTrace,
    stop: &StoppingRule,
    bounds: &ParamBounds,
) -> bool {
    if simplex.normalized_diameter(bounds) < stop.diameter_tol {
        return true;
    }
    if trace.iterations() >= stop.max_iterations {
        return true;
    }
    let records = trace.records();
    if records.len() > stop.patience {
        let stagnant =
            records.windows(2).rev().take(stop.patience).all(|w| {
                w[1].simplex.best().score - w[0].simplex.best().score < stop.improvement_tol
            });
        if stagnant {
            return true;
        }
    }
    false
}

struct Evaluator<'a> {
    objective: &'a mut dyn Objective,
    cache: Option<HashMap<(u64, u64), f64>>,
    frames_this_iteration: usize,
}

impl<'a> Evaluator<'a> {
    fn new(objective: &'a mut dyn Objective) -> Self {
        // Frame caching is only sound on quantized sources, where identical
        // requested parameters are guaranteed to produce identical frames.
        let cache = objective.quantization().map(|_| HashMap::new());
        Self {
            objective,
            cache,
            frames_this_iteration: 0,
        }
    }

    fn score(&mut self, params: ExposureParams) -> Result<(f64, Option<f64>), CameraError> {
        let key = (params.exposure_ms.to_bits(), params.gain_db.to_bits());
        if let Some(cache) = &self.cache {
            if let Some(&score) = cache.get(&key) {
                return Ok((score, None));
            }
        }
        let sample = self.objective.sample(params)?;
        self.frames_this_iteration += 1;
        // A non-finite score can never win an ordering comparison.
        let score = if sample.score.is_finite() {
            sample.score
        } else {
            f64::NEG_INFINITY
        };
        if let Some(cache) = &mut self.cache {
            cache.insert(key, score);
        }
        Ok((score, sample.mean_intensity))
    }

    fn take_frames(&mut self) -> usize {
        std::mem::take(&mut self.frames_this_iteration)
    }
}

/// Runs the exposure search from `start`, maximizing the objective's score.
///
/// Each vertex evaluation captures one frame (exact repeats are reused on
/// quantized sources). On a camera failure the partial trace is returned
/// inside the error.
pub fn run(
    objective: &mut dyn Objective,
    start: ExposureParams,
    bounds: &ParamBounds,
    opts: &ControllerOptions,
) -> Result<ControlResult, ControlError> {
    let mut eval = Evaluator::new(objective);
    let mut trace = ControlTrace::default();
    let fail = |source: CameraError, trace: &ControlTrace| ControlError {
        source,
        trace: trace.clone(),
    };

    let start = bounds.clamp(start);
    let (f0, mean) = eval.score(start).map_err(|e| fail(e, &trace))?;
    let mean_intensity = mean.unwrap_or(DEFAULT_MEAN_INTENSITY);

    let min_sep = eval
        .objective
        .quantization()
        .unwrap_or([bounds.range(0) * 1e-6, bounds.range(1) * 1e-6]);
    let verts = initial_simplex(
        start,
        mean_intensity,
        opts.epsilon,
        opts.kappa,
        bounds,
        min_sep,
    );

    let mut scored = [Vertex {
        params: verts[0],
        score: f0,
    }; 3];
    for i in 1..3 {
        let (s, _) = eval.score(verts[i]).map_err(|e| fail(e, &trace))?;
        scored[i] = Vertex {
            params: verts[i],
            score: s,
        };
    }
    let mut simplex = Simplex::new(scored);
    trace.push(SimplexOp::Init, simplex.clone(), eval.take_frames());

    let nm = opts.nm;
    while !should_stop(&simplex, &trace, &opts.stop, bounds) {
        let best = *simplex.best();
        let second = *simplex.second();
        let worst = *simplex.worst();
        let centroid = ExposureParams {
            exposure_ms: (best.params.exposure_ms + second.params.exposure_ms) / 2.0,
            gain_db: (best.params.gain_db + second.params.gain_db) / 2.0,
        };
        let towards = |coef: f64| {
            bounds.clamp(ExposureParams {
                exposure_ms: centroid.exposure_ms
                    + coef * (centroid.exposure_ms - worst.params.exposure_ms),
                gain_db: centroid.gain_db + coef * (centroid.gain_db - worst.params.gain_db),
            })
        };

        let reflected = towards(nm.reflection);
        let (fr, _) = eval.score(reflected).map_err(|e| fail(e, &trace))?;

        let op;
        if fr > best.score {
            // Greedy expansion: keep the better of the two.
            let expanded = towards(nm.reflection * nm.expansion);
            let (fe, _) = eval.score(expanded).map_err(|e| fail(e, &trace))?;
            if fe > fr {
                simplex.replace_worst(Vertex {
                    params: expanded,
                    score: fe,
                });
                op = SimplexOp::Expand;
            } else {
                simplex.replace_worst(Vertex {
                    params: reflected,
                    score: fr,
                });
                op = SimplexOp::Reflect;
            }
        } else if fr > second.score {
            simplex.replace_worst(Vertex {
                params: reflected,
                score: fr,
            });
            op = SimplexOp::Reflect;
        } else {
            let (contracted, fc) = if fr > worst.score {
                // Outside contraction, between centroid and reflection.
                let c = towards(nm.reflection * nm.contraction);
                let (fc, _) = eval.score(c).map_err(|e| fail(e, &trace))?;
                (c, if fc >= fr { Some(fc) } else { None })
            } else {
                // Inside contraction, between centroid and worst.
                let c = towards(-nm.contraction);
                let (fc, _) = eval.score(c).map_err(|e| fail(e, &trace))?;
                (c, if fc > worst.score { Some(fc) } else { None })
            };
            if let Some(fc) = fc {
                simplex.replace_worst(Vertex {
                    params: contracted,
                    score: fc,
                });
                op = SimplexOp::Contract;
            } else {
                // Shrink everything toward the best vertex and rescore.
                let mut shrunk = [best; 3];
                for (i, v) in [second, worst].into_iter().enumerate() {
                    let params = bounds.clamp(ExposureParams {
                        exposure_ms: best.params.exposure_ms
                            + nm.shrink * (v.params.exposure_ms - best.params.exposure_ms),
                        gain_db: best.params.gain_db
                            + nm.shrink * (v.params.gain_db - best.params.gain_db),
                    });
                    let (s, _) = eval.score(params).map_err(|e| fail(e, &trace))?;
                    shrunk[i + 1] = Vertex { params, score: s };
                }
                simplex = Simplex::new(shrunk);
                op = SimplexOp::Shrink;
            }
        }
        trace.push(op, simplex.clone(), eval.take_frames());
    }

    let best = *simplex.best();
    Ok(ControlResult {
        params: best.params,
        score: best.score,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Analytic stand-in for a camera: a concave quadratic peaked at `peak`.
    struct Quadratic {
        peak: (f64, f64),
        calls: Vec<ExposureParams>,
    }

    impl Quadratic {
        fn new(peak: (f64, f64)) -> Self {
            Self {
                peak,
                calls: Vec::new(),
            }
        }
    }

    impl Objective for Quadratic {
        fn sample(&mut self, params: ExposureParams) -> Result<Sample, CameraError> {
            self.calls.push(params);
            let de = params.exposure_ms - self.peak.0;
            let dg = params.gain_db - self.peak.1;
            Ok(Sample {
                score: -(de * de + dg * dg),
                mean_intensity: None,
            })
        }
    }

    #[test]
    fn initial_step_examples() {
        assert_relative_eq!(initial_step(0.0, 1.7), 1.7, max_relative = 1e-12);
        assert_relative_eq!(
            initial_step(255.0, 1.7),
            -0.5882352941176471,
            max_relative = 1e-12
        );
        // The boundary belongs to the bright branch.
        assert_relative_eq!(
            initial_step(128.0, 1.7),
            -0.2952710495963091,
            max_relative = 1e-12
        );
    }

    #[test]
    fn initial_simplex_multiplicative() {
        let bounds = ParamBounds::new((0.1, 100.0), (0.0, 30.0));
        let v = initial_simplex_with_step(
            ExposureParams::new(10.0, 10.0),
            0.5,
            0.5,
            &bounds,
            [0.01, 0.01],
        );
        assert_relative_eq!(v[1].exposure_ms, 15.0, epsilon = 1e-9);
        assert_relative_eq!(v[1].gain_db, 10.0, epsilon = 1e-9);
        assert_relative_eq!(v[2].exposure_ms, 10.0, epsilon = 1e-9);
        assert_relative_eq!(v[2].gain_db, 15.0, epsilon = 1e-9);
        // The same simplex via the mean-intensity route: eps*(1 - 0/255) = h.
        let via_j = initial_simplex(
            ExposureParams::new(10.0, 10.0),
            0.0,
            0.5,
            0.5,
            &bounds,
            [0.01, 0.01],
        );
        assert_eq!(via_j, v);
    }

    #[test]
    fn initial_simplex_additive_fallback_at_zero_gain() {
        let bounds = ParamBounds::new((0.1, 100.0), (0.0, 30.0));
        let v = initial_simplex_with_step(
            ExposureParams::new(10.0, 0.0),
            0.5,
            0.5,
            &bounds,
            [0.01, 0.01],
        );
        // Multiplying zero gain would leave the vertex degenerate.
        assert_relative_eq!(v[2].gain_db, 0.25, epsilon = 1e-9);
        assert_relative_eq!(v[2].exposure_ms, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn initial_simplex_clamped_vertex_is_nudged_apart() {
        let bounds = ParamBounds::outdoor();
        // Dark frame, h > 0, starting at the exposure upper bound.
        let v = initial_simplex(
            ExposureParams::new(7.45, 10.0),
            0.0,
            1.7,
            0.5,
            &bounds,
            [0.15, 2.0],
        );
        assert_relative_eq!(v[1].exposure_ms, 7.45 - 0.15, epsilon = 1e-9);
        assert!(v.iter().all(|p| bounds.contains(*p)));
        assert!(v[1] != v[0] && v[2] != v[0]);
    }

    #[test]
    fn stop_on_coincident_vertices() {
        let bounds = ParamBounds::outdoor();
        let v = Vertex {
            params: ExposureParams::new(1.0, 1.0),
            score: 0.5,
        };
        let simplex = Simplex::new([v; 3]);
        assert!(should_stop(
            &simplex,
            &ControlTrace::default(),
            &StoppingRule::default(),
            &bounds
        ));
    }

    #[test]
    fn stop_on_iteration_cap() {
        let bounds = ParamBounds::outdoor();
        let far = Simplex::new([
            Vertex {
                params: ExposureParams::new(0.1, 0.0),
                score: 3.0,
            },
            Vertex {
                params: ExposureParams::new(7.0, 0.0),
                score: 2.0,
            },
            Vertex {
                params: ExposureParams::new(0.1, 19.0),
                score: 1.0,
            },
        ]);
        let mut trace = ControlTrace::default();
        for i in 0..51 {
            let mut s = far.clone();
            s.vertices[0].score = i as f64; // keep improving so patience never fires
            trace.push(
                if i == 0 {
                    SimplexOp::Init
                } else {
                    SimplexOp::Reflect
                },
                s,
                1,
            );
        }
        assert!(trace.iterations() >= 50);
        assert!(should_stop(&far, &trace, &StoppingRule::default(), &bounds));
    }

    #[test]
    fn no_stop_while_improving_with_wide_simplex() {
        let bounds = ParamBounds::outdoor();
        let far = Simplex::new([
            Vertex {
                params: ExposureParams::new(0.1, 0.0),
                score: 3.0,
            },
            Vertex {
                params: ExposureParams::new(5.0, 0.0),
                score: 2.0,
            },
            Vertex {
                params: ExposureParams::new(0.1, 10.0),
                score: 1.0,
            },
        ]);
        let mut trace = ControlTrace::default();
        for i in 0..3 {
            let mut s = far.clone();
            s.vertices[0].score = i as f64;
            trace.push(
                if i == 0 {
                    SimplexOp::Init
                } else {
                    SimplexOp::Reflect
                },
                s,
                1,
            );
        }
        assert!(!should_stop(
            &far,
            &trace,
            &StoppingRule::default(),
            &bounds
        ));
    }

    #[test]
    fn converges_on_concave_quadratic() {
        let mut obj = Quadratic::new((6.0, 6.0));
        let bounds = ParamBounds::new((0.1, 12.0), (0.0, 12.0));
        let result = run(
            &mut obj,
            ExposureParams::new(2.0, 1.0),
            &bounds,
            &ControllerOptions::default(),
        )
        .unwrap();
        assert!(
            result.trace.iterations() <= 60,
            "took {} iterations",
            result.trace.iterations()
        );
        assert!(
            (result.params.exposure_ms - 6.0).abs() <= 0.06,
            "exposure {} not within 1% of peak",
            result.params.exposure_ms
        );
        assert!(
            (result.params.gain_db - 6.0).abs() <= 0.06,
            "gain {} not within 1% of peak",
            result.params.gain_db
        );
    }

    #[test]
    fn best_score_never_decreases() {
        let mut obj = Quadratic::new((4.5, 9.0));
        let bounds = ParamBounds::new((0.1, 12.0), (0.0, 12.0));
        let result = run(
            &mut obj,
            ExposureParams::new(1.0, 2.0),
            &bounds,
            &ControllerOptions::default(),
        )
        .unwrap();
        let bests: Vec<f64> = result
            .trace
            .records()
            .iter()
            .map(|r| r.simplex.best().score)
            .collect();
        assert!(
            bests.windows(2).all(|w| w[1] >= w[0]),
            "best degraded: {bests:?}"
        );
    }

    #[test]
    fn identical_runs_produce_identical_traces() {
        let bounds = ParamBounds::new((0.1, 12.0), (0.0, 12.0));
        let run_once = || {
            let mut obj = Quadratic::new((6.0, 3.0));
            run(
                &mut obj,
                ExposureParams::new(2.0, 8.0),
                &bounds,
                &ControllerOptions::default(),
            )
            .unwrap()
        };
        let (a, b) = (run_once(), run_once());
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn camera_failure_aborts_with_partial_trace() {
        struct Flaky {
            remaining: usize,
        }
        impl Objective for Flaky {
            fn sample(&mut self, params: ExposureParams) -> Result<Sample, CameraError> {
                if self.remaining == 0 {
                    return Err(CameraError::Capture {
                        reason: "sensor timeout".into(),
                    });
                }
                self.remaining -= 1;
                Ok(Sample {
                    score: -params.exposure_ms.abs(),
                    mean_intensity: Some(100.0),
                })
            }
        }
        let bounds = ParamBounds::new((0.1, 12.0), (0.0, 12.0));
        let err = run(
            &mut Flaky { remaining: 7 },
            ExposureParams::new(5.0, 5.0),
            &bounds,
            &ControllerOptions::default(),
        )
        .unwrap_err();
        assert!(!err.trace.records().is_empty());
    }

    #[test]
    fn trace_csv_has_expected_shape() {
        let mut obj = Quadratic::new((6.0, 6.0));
        let bounds = ParamBounds::new((0.1, 12.0), (0.0, 12.0));
        let result = run(
            &mut obj,
            ExposureParams::new(2.0, 1.0),
            &bounds,
            &ControllerOptions::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        result.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), 11);
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,init,"));
        assert_eq!(text.lines().count(), result.trace.records().len() + 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn all_sampled_params_stay_in_bounds(
            e_min in 0.1f64..5.0,
            e_span in 0.5f64..20.0,
            g_min in 0.0f64..5.0,
            g_span in 0.5f64..20.0,
            start_e in 0.0f64..1.0,
            start_g in 0.0f64..1.0,
            peak_e in 0.0f64..1.0,
            peak_g in 0.0f64..1.0,
        ) {
            let bounds = ParamBounds::new((e_min, e_min + e_span), (g_min, g_min + g_span));
            let peak = (e_min + peak_e * e_span, g_min + peak_g * g_span);
            let start = ExposureParams::new(e_min + start_e * e_span, g_min + start_g * g_span);
            let mut obj = Quadratic::new(peak);
            run(&mut obj, start, &bounds, &ControllerOptions::default()).unwrap();
            prop_assert!(obj.calls.iter().all(|p| bounds.contains(*p)));
        }
    }
}
