//! Scenario files: a JSON description of an immersion and a list of
//! operations and assertions, executed in order against a current immersion.
//!
//! ```json
//! {
//!   "schema": "spherelab/scenario-v1",
//!   "name": "clifford-J",
//!   "immersion": { "family": "clifford", "a": 1, "b": 1 },
//!   "operations": [
//!     { "op": "analyze" },
//!     { "op": "assert-j", "lo": "0.25pi", "hi": "0.75pi", "tol": 1e-6 }
//!   ]
//! }
//! ```
//!
//! Angles are numbers (radians) or strings with a `pi` suffix such as
//! `"0.25pi"` or `"-pi"`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};

use crate::curvature::{classify_samples, spectra, CircleInterval, CurvatureSample};
use crate::error::Error;
use crate::homotopy::{self, uniform_grid, Track};
use crate::immersion::{DomainDiffeo, Expr, Immersion, Profile};
use crate::operators::{self, DEFAULT_MARGIN};
use crate::rigidity::{self, DeckGroup, IntersectionParams};
use crate::sphere::Rotation;

pub const SCHEMA: &str = "spherelab/scenario-v1";

/// Process exit codes of a scenario run.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// An angle in radians, written as a number or as `"<k>pi"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Angle(pub f64);

/// Parses `"0.25pi"`, `"-pi"`, `"pi"` or a plain number.
pub fn parse_angle(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    if let Some(k) = t.strip_suffix("pi") {
        let k = k.trim().trim_end_matches('*').trim();
        let factor = match k {
            "" | "+" => 1.0,
            "-" => -1.0,
            _ => k.parse::<f64>().map_err(|e| format!("bad angle {s:?}: {e}"))?,
        };
        Ok(factor * std::f64::consts::PI)
    } else {
        t.parse::<f64>().map_err(|e| format!("bad angle {s:?}: {e}"))
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Angle(x)),
            Raw::Text(s) => parse_angle(&s).map(Angle).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RotationSpec {
    /// Row-major matrix.
    Rows(Vec<Vec<f64>>),
    /// `"random"`, drawn from the scenario seed.
    Named(String),
}

fn two() -> usize {
    2
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    Round {
        #[serde(default = "two")]
        n: usize,
        r: Angle,
        #[serde(default)]
        rotation: Option<RotationSpec>,
        /// Stretch factor of a squeeze diffeomorphism precomposed on the domain.
        #[serde(default)]
        squeeze: Option<f64>,
    },
    Clifford {
        #[serde(default = "one")]
        a: u32,
        #[serde(default = "one")]
        b: u32,
    },
    RadialGraph {
        #[serde(default = "two")]
        n: usize,
        r0: Angle,
        eps: f64,
        #[serde(default)]
        profile: Profile,
    },
    Expr {
        expr: Expr,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_delta")]
    pub delta_hops: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_eps() -> f64 {
    IntersectionParams::default().eps
}

fn default_delta() -> f64 {
    IntersectionParams::default().delta_hops
}

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps: default_eps(),
            delta_hops: default_delta(),
            margin: default_margin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "default_report")]
    pub report: PathBuf,
    #[serde(default = "default_samples")]
    pub samples: PathBuf,
    #[serde(default = "default_track")]
    pub track: PathBuf,
}

fn default_report() -> PathBuf {
    "report.json".into()
}

fn default_samples() -> PathBuf {
    "samples.csv".into()
}

fn default_track() -> PathBuf {
    "track.jsonl".into()
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            report: default_report(),
            samples: default_samples(),
            track: default_track(),
        }
    }
}

fn default_tol() -> f64 {
    1e-6
}

fn default_steps() -> usize {
    homotopy::DEFAULT_STEPS
}

fn default_s_min() -> f64 {
    0.2
}

fn default_s_step() -> f64 {
    0.05
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Operation {
    /// Curvature, `J` and hypotheses of the current immersion; fills samples.csv.
    Analyze {},
    /// Replaces the current immersion by its normal translate.
    Translate { r: Angle },
    /// Replaces the current immersion by its dual.
    Dual {},
    TranslateTrack {
        to: Angle,
        #[serde(default = "default_steps")]
        steps: usize,
    },
    MoebiusFlow {
        #[serde(default = "default_s_min")]
        s_min: f64,
        #[serde(default = "default_s_step")]
        step: f64,
        #[serde(default)]
        embedding: bool,
    },
    ZetaFlow {
        #[serde(default = "default_steps")]
        steps: usize,
    },
    Deform {},
    CheckEmbedding {},
    Quotient { deck: String },
    MultiplicityBound { deck: String },
    Factor {},
    AssertJ {
        lo: Angle,
        hi: Angle,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    AssertKappa {
        #[serde(default)]
        values: Option<Vec<f64>>,
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    AssertEmbedded {
        #[serde(default = "yes")]
        embedded: bool,
        #[serde(default)]
        m: Option<usize>,
    },
    AssertQuotient {
        deck: String,
        #[serde(default)]
        k: Option<usize>,
    },
}

impl Operation {
    pub fn name(&self) -> &'static str {
        match self {
            Operation::Analyze {} => "analyze",
            Operation::Translate { .. } => "translate",
            Operation::Dual {} => "dual",
            Operation::TranslateTrack { .. } => "translate-track",
            Operation::MoebiusFlow { .. } => "moebius-flow",
            Operation::ZetaFlow { .. } => "zeta-flow",
            Operation::Deform {} => "deform",
            Operation::CheckEmbedding {} => "check-embedding",
            Operation::Quotient { .. } => "quotient",
            Operation::MultiplicityBound { .. } => "multiplicity-bound",
            Operation::Factor {} => "factor",
            Operation::AssertJ { .. } => "assert-j",
            Operation::AssertKappa { .. } => "assert-kappa",
            Operation::AssertEmbedded { .. } => "assert-embedded",
            Operation::AssertQuotient { .. } => "assert-quotient",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    pub name: String,
    pub immersion: FamilySpec,
    #[serde(default)]
    pub operations: Vec<Operation>,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_resolution() -> usize {
    crate::DEFAULT_RESOLUTION
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Scenario {
    pub fn from_json(text: &str) -> std::result::Result<Scenario, ScenarioError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Schema(e.to_string()))?;
        if s.schema != SCHEMA {
            return Err(ScenarioError::Schema(format!(
                "unsupported schema {:?} (expected {SCHEMA:?})",
                s.schema
            )));
        }
        if s.resolution < 2 {
            return Err(ScenarioError::Schema("resolution must be at least 2".into()));
        }
        Ok(s)
    }

    pub fn from_path(path: &Path) -> std::result::Result<Scenario, ScenarioError> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }

    /// A scenario with defaults for everything but the immersion and operations.
    pub fn new(name: &str, immersion: FamilySpec, operations: Vec<Operation>) -> Scenario {
        Scenario {
            schema: SCHEMA.into(),
            name: name.into(),
            immersion,
            operations,
            outputs: Outputs::default(),
            tolerances: Tolerances::default(),
            seed: 0,
            resolution: crate::DEFAULT_RESOLUTION,
        }
    }
}

/// Rotation of ℝ^{dim} from a product of plane rotations with seeded angles.
pub fn random_rotation(dim: usize, seed: u64) -> Rotation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Rotation::identity(dim);
    for i in 0..dim {
        for j in i + 1..dim {
            let a = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            q = q.compose(&Rotation::plane(dim, i, j, a));
        }
    }
    q
}

/// Builds the immersion of a family spec.
pub fn build_immersion(spec: &FamilySpec, resolution: usize, seed: u64) -> crate::Result<Immersion> {
    let f = match spec {
        FamilySpec::Round {
            n,
            r,
            rotation,
            squeeze,
        } => {
            let q = match rotation {
                None => Rotation::identity(n + 2),
                Some(RotationSpec::Named(s)) if s == "random" => random_rotation(n + 2, seed),
                Some(RotationSpec::Named(s)) => {
                    return Err(Error::Domain(format!("unknown rotation {s:?}")));
                }
                Some(RotationSpec::Rows(rows)) => {
                    let m = rows.len();
                    if rows.iter().any(|r| r.len() != m) {
                        return Err(Error::Domain("rotation must be square".into()));
                    }
                    Rotation::from_matrix(nalgebra::DMatrix::from_row_slice(m, m, &rows.concat()))?
                }
            };
            let g = match squeeze {
                Some(l) => DomainDiffeo::squeeze(*n, *l)?,
                None => DomainDiffeo::Identity,
            };
            Immersion::round(*n, r.0, q, g)?
        }
        FamilySpec::Clifford { a, b } => Immersion::clifford(*a, *b)?,
        FamilySpec::RadialGraph { n, r0, eps, profile } => Immersion::radial_graph(*n, r0.0, *eps, *profile)?,
        FamilySpec::Expr { expr } => Immersion::new(expr.clone())?,
    };
    Ok(f.with_resolution(resolution))
}

/// Parses `trivial`, `antipodal` or `lens:p,q` for rotations of ℝ^{dim}.
pub fn parse_deck(spec: &str, dim: usize) -> crate::Result<DeckGroup> {
    let s = spec.trim();
    if s == "trivial" {
        return Ok(DeckGroup::trivial(dim));
    }
    if s == "antipodal" {
        return DeckGroup::antipodal(dim);
    }
    if let Some(rest) = s.strip_prefix("lens:") {
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        let nums: Option<Vec<u32>> = parts.iter().map(|p| p.parse().ok()).collect();
        return match nums.as_deref() {
            Some([p, q]) if dim == 4 => DeckGroup::lens(*p, *q),
            Some([_, _]) => Err(Error::Domain(format!("lens spaces need dimension 4, got {dim}"))),
            _ => Err(Error::Domain(format!("bad lens spec {spec:?} (expected lens:p,q)"))),
        };
    }
    Err(Error::Domain(format!(
        "unknown deck group {spec:?} (expected trivial, antipodal or lens:p,q)"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpResult {
    pub index: usize,
    pub op: String,
    pub ok: bool,
    pub data: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: String,
    pub op_index: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub name: String,
    pub resolution: usize,
    pub seed: u64,
    pub status: String,
    pub exit_code: i32,
    pub results: Vec<OpResult>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub samples_csv: String,
    pub track_jsonl: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serializes")
    }

    /// Writes the three artifacts below `dir`, creating it if needed.
    pub fn write(&self, dir: &Path, outputs: &Outputs) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(&outputs.report), self.report_json() + "\n")?;
        std::fs::write(dir.join(&outputs.samples), &self.samples_csv)?;
        std::fs::write(dir.join(&outputs.track), &self.track_jsonl)?;
        Ok(())
    }
}

/// Header of samples.csv.
pub fn samples_header(n: usize) -> String {
    let mut h = String::from("op,sample,chart,x0,x1,x2");
    for i in 0..n {
        let _ = write!(h, ",kappa{i}");
    }
    for i in 0..n {
        let _ = write!(h, ",radius{i}");
    }
    h.push_str(",l\n");
    h
}

/// Rows of samples.csv for one analysis.
pub fn samples_rows(op: usize, samples: &[CurvatureSample]) -> String {
    let mut out = String::new();
    for (i, s) in samples.iter().enumerate() {
        let _ = write!(
            out,
            "{op},{i},{},{},{},{}",
            s.chart.chart, s.chart.x[0], s.chart.x[1], s.chart.x[2]
        );
        for k in &s.kappas {
            let _ = write!(out, ",{k}");
        }
        for r in &s.radii {
            let _ = write!(out, ",{r}");
        }
        let _ = writeln!(out, ",{}", s.l_count);
    }
    out
}

fn interval_json(j: &CircleInterval) -> Value {
    json!({
        "lo": j.lo(),
        "hi": j.hi(),
        "mid": j.mid,
        "width": j.width(),
        "non_unique": j.non_unique,
    })
}

struct State {
    current: Immersion,
    spectra: Option<Vec<CurvatureSample>>,
    last: BTreeMap<&'static str, Value>,
}

impl State {
    fn spectra(&mut self) -> crate::Result<&[CurvatureSample]> {
        if self.spectra.is_none() {
            self.spectra = Some(spectra(&self.current)?);
        }
        Ok(self.spectra.as_deref().expect("filled"))
    }

    fn replace(&mut self, f: Immersion) {
        self.current = f;
        self.spectra = None;
        self.last.clear();
    }
}

enum Step {
    Done(Value),
    Assertion(Value, String),
}

fn track_summary(track: &Track) -> Value {
    json!({
        "completed": track.completed(),
        "steps": track.entries().count(),
        "failure": track.failure,
        "min_kappa": track.entries().map(|e| e.min_k).fold(f64::INFINITY, f64::min),
        "all_embedded": track.entries().all(|e| e.embedded != Some(false)),
    })
}

fn execute(
    op: &Operation,
    index: usize,
    state: &mut State,
    scenario: &Scenario,
    csv: &mut String,
    jsonl: &mut String,
) -> crate::Result<Step> {
    let params = IntersectionParams {
        eps: scenario.tolerances.eps,
        delta_hops: scenario.tolerances.delta_hops,
        ..IntersectionParams::default()
    };
    let margin = scenario.tolerances.margin;
    let step = match op {
        Operation::Analyze {} => {
            let samples = state.spectra()?.to_vec();
            let hyp = classify_samples(&samples, margin);
            if csv.is_empty() {
                csv.push_str(&samples_header(state.current.dim()));
            }
            csv.push_str(&samples_rows(index, &samples));
            Step::Done(json!({
                "samples": samples.len(),
                "J": interval_json(&hyp.interval),
                "min_kappa": hyp.min_kappa,
                "max_kappa": hyp.max_kappa,
                "locally_convex": hyp.locally_convex,
                "width_lt_half_pi": hyp.width_lt_half_pi,
                "contains_zero": hyp.contains_zero,
                "l_constant": hyp.l_constant,
                "l_count": hyp.l_count,
            }))
        }
        Operation::Translate { r } => {
            let g = operators::normal_translate_with_margin(&state.current, r.0, margin)?;
            state.replace(g);
            Step::Done(json!({ "r": r.0 }))
        }
        Operation::Dual {} => {
            let g = operators::dual_with_margin(&state.current, margin)?;
            state.replace(g);
            Step::Done(json!({}))
        }
        Operation::TranslateTrack { to, steps } => {
            let t = homotopy::track_normal_translate(&state.current, &uniform_grid(0.0, to.0, *steps))?;
            jsonl.push_str(&t.to_jsonl());
            Step::Done(track_summary(&t))
        }
        Operation::MoebiusFlow {
            s_min,
            step,
            embedding,
        } => {
            let grid = operators::s_grid(*s_min, *step);
            let rep = operators::moebius_flow_monitor(&state.current, &grid, *embedding)?;
            serde_json::to_value(&rep).map(Step::Done).expect("report serializes")
        }
        Operation::ZetaFlow { steps } => {
            let t = homotopy::track_zeta(&state.current, &uniform_grid(0.0, 1.0, *steps))?;
            jsonl.push_str(&t.to_jsonl());
            let mut v = track_summary(&t);
            if let Some(end) = t.endpoint().filter(|_| t.completed()) {
                let class = operators::phi_hemi(&state.current)?;
                let target = operators::psi(&class.rotation, &class.diffeo, std::f64::consts::FRAC_PI_2)?;
                v["endpoint_distance"] = json!(operators::pointwise_distance(end, &target)?);
            }
            Step::Done(v)
        }
        Operation::Deform {} => {
            let t = homotopy::deform_to_round(&state.current)?;
            jsonl.push_str(&t.to_jsonl());
            let mut v = track_summary(&t);
            if let Some(target) = &t.target {
                v["endpoint_distance"] = json!(target.endpoint_distance);
                v["r"] = json!(target.r);
            }
            Step::Done(v)
        }
        Operation::CheckEmbedding {} => {
            let rep = rigidity::self_intersections(&state.current, &params)?;
            let v = serde_json::to_value(&rep).expect("report serializes");
            state.last.insert("check-embedding", v.clone());
            Step::Done(v)
        }
        Operation::Quotient { deck } => {
            let g = parse_deck(deck, state.current.target_dim())?;
            let rep = rigidity::preimage_components(&state.current, &g, None)?;
            let v = serde_json::to_value(&rep).expect("report serializes");
            if rep.identity_holds {
                Step::Done(v)
            } else {
                Step::Assertion(v, format!("k * |G_C| = {} differs from |Gamma| = {}", rep.k * rep.gc_order, rep.gamma_order))
            }
        }
        Operation::MultiplicityBound { deck } => {
            let g = parse_deck(deck, state.current.target_dim())?;
            let rep = rigidity::multiplicity_bound_check(&state.current, &g)?;
            let v = serde_json::to_value(&rep).expect("report serializes");
            if rep.bound_holds {
                Step::Done(v)
            } else {
                Step::Assertion(v, format!("m * symmetry order exceeds |Gamma| = {}", rep.gamma_order))
            }
        }
        Operation::Factor {} => {
            let rep = rigidity::irreducible_factor(&state.current)?;
            Step::Done(serde_json::to_value(&rep).expect("report serializes"))
        }
        Operation::AssertJ { lo, hi, tol } => {
            let samples = state.spectra()?;
            let j = crate::curvature::interval_of_samples(samples);
            let want = CircleInterval::from_bounds(lo.0, hi.0);
            let v = json!({ "J": interval_json(&j), "expected": interval_json(&want) });
            if j.approx_eq(&want, *tol) {
                Step::Done(v)
            } else {
                Step::Assertion(v, format!("J = [{:.9}, {:.9}] differs from [{:.9}, {:.9}]", j.lo(), j.hi(), want.lo(), want.hi()))
            }
        }
        Operation::AssertKappa { values, min, max, tol } => {
            let samples = state.spectra()?;
            let mut worst: f64 = 0.0;
            for s in samples {
                for &k in &s.kappas {
                    if let Some(vals) = values {
                        let d = vals.iter().map(|v| (k - v).abs()).fold(f64::INFINITY, f64::min);
                        worst = worst.max(d);
                    }
                    if let Some(m) = min {
                        worst = worst.max(m - k);
                    }
                    if let Some(m) = max {
                        worst = worst.max(k - m);
                    }
                }
            }
            let v = json!({ "deviation": worst });
            if worst <= *tol {
                Step::Done(v)
            } else {
                Step::Assertion(v, format!("principal curvatures deviate by {worst:.3e} (tolerance {tol:.1e})"))
            }
        }
        Operation::AssertEmbedded { embedded, m } => {
            let v = match state.last.get("check-embedding") {
                Some(v) => v.clone(),
                None => {
                    let rep = rigidity::self_intersections(&state.current, &params)?;
                    let v = serde_json::to_value(&rep).expect("report serializes");
                    state.last.insert("check-embedding", v.clone());
                    v
                }
            };
            let got_e = v["embedded"].as_bool().unwrap_or(false);
            let got_m = v["m"].as_u64().unwrap_or(0) as usize;
            if got_e != *embedded {
                Step::Assertion(v, format!("embedded = {got_e}, expected {embedded}"))
            } else if m.is_some_and(|m| m != got_m) {
                Step::Assertion(v, format!("m = {got_m}, expected {}", m.unwrap_or(0)))
            } else {
                Step::Done(v)
            }
        }
        Operation::AssertQuotient { deck, k } => {
            let g = parse_deck(deck, state.current.target_dim())?;
            let rep = rigidity::preimage_components(&state.current, &g, None)?;
            let v = serde_json::to_value(&rep).expect("report serializes");
            if !rep.identity_holds {
                Step::Assertion(v, "k * |G_C| != |Gamma|".into())
            } else if k.is_some_and(|k| k != rep.k) {
                Step::Assertion(v, format!("k = {}, expected {}", rep.k, k.unwrap_or(0)))
            } else {
                Step::Done(v)
            }
        }
    };
    Ok(step)
}

/// Runs a scenario. Numeric failures stop the run; assertion failures are
/// recorded and the run continues.
pub fn run(scenario: &Scenario) -> Outcome {
    let mut results = Vec::new();
    let mut diagnostics = Vec::new();
    let mut csv = String::new();
    let mut jsonl = String::new();
    let mut exit = EXIT_OK;
    let fail = |kind: &str, idx: Option<usize>, e: &dyn std::fmt::Display, diags: &mut Vec<Diagnostic>| {
        diags.push(Diagnostic {
            kind: kind.into(),
            op_index: idx,
            message: e.to_string(),
        });
    };
    match build_immersion(&scenario.immersion, scenario.resolution, scenario.seed) {
        Err(e) => {
            fail("numeric", None, &e, &mut diagnostics);
            exit = EXIT_NUMERIC;
        }
        Ok(f) => {
            let mut state = State {
                current: f,
                spectra: None,
                last: BTreeMap::new(),
            };
            for (i, op) in scenario.operations.iter().enumerate() {
                match execute(op, i, &mut state, scenario, &mut csv, &mut jsonl) {
                    Ok(Step::Done(data)) => results.push(OpResult {
                        index: i,
                        op: op.name().into(),
                        ok: true,
                        data,
                        message: None,
                    }),
                    Ok(Step::Assertion(data, msg)) => {
                        fail("assertion", Some(i), &msg, &mut diagnostics);
                        results.push(OpResult {
                            index: i,
                            op: op.name().into(),
                            ok: false,
                            data,
                            message: Some(msg),
                        });
                        exit = EXIT_ASSERTION;
                    }
                    Err(e) => {
                        fail("numeric", Some(i), &e, &mut diagnostics);
                        results.push(OpResult {
                            index: i,
                            op: op.name().into(),
                            ok: false,
                            data: Value::Null,
                            message: Some(e.to_string()),
                        });
                        exit = EXIT_NUMERIC;
                        break;
                    }
                }
            }
        }
    }
    let status = match exit {
        EXIT_OK => "ok",
        EXIT_ASSERTION => "assertion-failed",
        _ => "numeric-failure",
    };
    Outcome {
        report: Report {
            schema: SCHEMA.into(),
            name: scenario.name.clone(),
            resolution: scenario.resolution,
            seed: scenario.seed,
            status: status.into(),
            exit_code: exit,
            results,
            diagnostics,
        },
        samples_csv: csv,
        track_jsonl: jsonl,
    }
}

/// Report for a file that does not parse as a scenario.
pub fn schema_failure(message: &str) -> Report {
    Report {
        schema: SCHEMA.into(),
        name: String::new(),
        resolution: 0,
        seed: 0,
        status: "schema-error".into(),
        exit_code: EXIT_SCHEMA,
        results: Vec::new(),
        diagnostics: vec![Diagnostic {
            kind: "schema".into(),
            op_index: None,
            message: message.into(),
        }],
    }
}

/// Caps worker threads from `SPHERELAB_THREADS`; returns the cap if one was set.
pub fn configure_threads() -> Option<usize> {
    let n = std::env::var("SPHERELAB_THREADS").ok()?.trim().parse::<usize>().ok()?;
    let n = n.max(1);
    #[cfg(feature = "parallel")]
    {
        // a pool configured earlier in the process keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Some(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles_parse() {
        let pi = std::f64::consts::PI;
        assert_eq!(parse_angle("0.25pi").unwrap(), 0.25 * pi);
        assert_eq!(parse_angle("-pi").unwrap(), -pi);
        assert_eq!(parse_angle("pi").unwrap(), pi);
        assert_eq!(parse_angle("0.5").unwrap(), 0.5);
        assert!(parse_angle("quarter").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = r#"{"schema":"spherelab/scenario-v1","name":"x","immersion":{"family":"clifford"},"extra":1}"#;
        assert!(matches!(Scenario::from_json(bad), Err(ScenarioError::Schema(_))));
        let bad_op = r#"{"schema":"spherelab/scenario-v1","name":"x","immersion":{"family":"clifford"},
            "operations":[{"op":"analyze","bogus":true}]}"#;
        assert!(Scenario::from_json(bad_op).is_err());
        let bad_version = r#"{"schema":"spherelab/scenario-v0","name":"x","immersion":{"family":"clifford"}}"#;
        assert!(Scenario::from_json(bad_version).is_err());
    }

    #[test]
    fn empty_operations() {
        let s = Scenario::from_json(r#"{"schema":"spherelab/scenario-v1","name":"e","immersion":{"family":"clifford"}}"#)
            .unwrap();
        let out = run(&s);
        assert_eq!(out.exit_code(), EXIT_OK);
        assert!(out.report.results.is_empty());
    }

    #[test]
    fn clifford_j_scenario() {
        let text = r#"{"schema":"spherelab/scenario-v1","name":"clifford-J","resolution":8,
            "immersion":{"family":"clifford","a":1,"b":1},
            "operations":[{"op":"analyze"},{"op":"assert-j","lo":"0.25pi","hi":"0.75pi","tol":1e-6}]}"#;
        let out = run(&Scenario::from_json(text).unwrap());
        assert_eq!(out.exit_code(), EXIT_OK, "{}", out.report_json());
        assert!(out.samples_csv.starts_with("op,sample,chart"));
        assert_eq!(out.samples_csv.lines().count(), 65);
    }

    #[test]
    fn degenerate_translate_exits_numeric() {
        let text = r#"{"schema":"spherelab/scenario-v1","name":"translate-degenerate","resolution":8,
            "immersion":{"family":"clifford"},
            "operations":[{"op":"translate","r":"0.25pi"}]}"#;
        let out = run(&Scenario::from_json(text).unwrap());
        assert_eq!(out.exit_code(), EXIT_NUMERIC);
        assert!(out.report.diagnostics[0].message.contains("principal radius hit"));
    }

    #[test]
    fn failed_assertion_exits_one() {
        let text = r#"{"schema":"spherelab/scenario-v1","name":"wrong","resolution":6,
            "immersion":{"family":"round","r":"0.25pi"},
            "operations":[{"op":"assert-kappa","values":[2.0]}]}"#;
        let out = run(&Scenario::from_json(text).unwrap());
        assert_eq!(out.exit_code(), EXIT_ASSERTION);
    }

    #[test]
    fn decks_parse() {
        assert_eq!(parse_deck("lens:3,1", 4).unwrap().order(), 3);
        assert_eq!(parse_deck("antipodal", 4).unwrap().order(), 2);
        assert!(parse_deck("lens:3", 4).is_err());
        assert!(parse_deck("lens:3,1", 5).is_err());
    }
}
