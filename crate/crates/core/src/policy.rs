//! The linear half-step policy `a = clamp(M s)`, the affine sim-to-real
//! state correction and the policy bundle file format.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{JointState, STATE_DIM};
use crate::trajectory::{ControlPointSet, RadiusBounds, DEFAULT_CONTROL_POINTS};

pub const BUNDLE_VERSION: u32 = 1;
/// Condition number of the fitted correction above which a warning is logged.
pub const CONDITION_WARNING: f64 = 1e6;
const RIDGE: f64 = 1e-10;
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("malformed file: {0}")]
    FormatError(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("weighted design matrix is rank deficient (eigenvalue ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Action-by-state policy matrix. Rows are control points, columns are
/// motor angles.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMatrix(DMatrix<f64>);

impl PolicyMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, PolicyError> {
        if m.ncols() != STATE_DIM {
            return Err(PolicyError::DimensionMismatch(format!(
                "policy needs {STATE_DIM} columns, got {}",
                m.ncols()
            )));
        }
        if !(crate::trajectory::MIN_CONTROL_POINTS..=crate::trajectory::MAX_CONTROL_POINTS)
            .contains(&m.nrows())
        {
            return Err(PolicyError::DimensionMismatch(format!(
                "policy row count {} is not a valid control point count",
                m.nrows()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFinite("policy matrix"));
        }
        Ok(Self(m))
    }

    pub fn zeros(action_dim: usize) -> Self {
        Self(DMatrix::zeros(action_dim, STATE_DIM))
    }

    pub fn default_zeros() -> Self {
        Self::zeros(DEFAULT_CONTROL_POINTS)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn action_dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.0.ncols()
    }

    /// `M s` without clamping.
    pub fn apply(&self, s: &[f64]) -> DVector<f64> {
        &self.0 * DVector::from_column_slice(s)
    }
}

fn clamp_to_points(raw: DVector<f64>, bounds: &RadiusBounds) -> ControlPointSet {
    let radii = raw.iter().map(|&r| bounds.clamp(r)).collect();
    // Row count was validated when the matrix was built and clamped values are finite.
    ControlPointSet::new(radii).expect("policy rows form a valid control point set")
}

/// Control points for state `s`: `clamp(M s)` into the radius bounds.
pub fn act(m: &PolicyMatrix, s: &JointState, bounds: &RadiusBounds) -> ControlPointSet {
    clamp_to_points(m.apply(s.as_slice()), bounds)
}

/// Control points for a measured state: `clamp(M (M_hat s + b_bar))`.
pub fn act_corrected(
    m: &PolicyMatrix,
    map: &Sim2RealMap,
    s_real: &JointState,
    bounds: &RadiusBounds,
) -> ControlPointSet {
    let corrected = map.transform(s_real.as_slice());
    clamp_to_points(&m.0 * corrected, bounds)
}

/// Affine map taking measured motor angles into the simulator's state
/// distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Sim2RealMap {
    pub m_hat: DMatrix<f64>,
    pub b_bar: DVector<f64>,
}

impl Sim2RealMap {
    pub fn new(m_hat: DMatrix<f64>, b_bar: DVector<f64>) -> Result<Self, PolicyError> {
        if m_hat.shape() != (STATE_DIM, STATE_DIM) || b_bar.len() != STATE_DIM {
            return Err(PolicyError::DimensionMismatch(format!(
                "correction must be {STATE_DIM}x{STATE_DIM} plus {STATE_DIM} offsets, got {:?} and {}",
                m_hat.shape(),
                b_bar.len()
            )));
        }
        if m_hat.iter().chain(b_bar.iter()).any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFinite("sim-to-real map"));
        }
        Ok(Self { m_hat, b_bar })
    }

    pub fn identity() -> Self {
        Self {
            m_hat: DMatrix::identity(STATE_DIM, STATE_DIM),
            b_bar: DVector::zeros(STATE_DIM),
        }
    }

    pub fn transform(&self, s: &[f64]) -> DVector<f64> {
        &self.m_hat * DVector::from_column_slice(s) + &self.b_bar
    }

    pub fn apply(&self, s: &JointState) -> JointState {
        let v = self.transform(s.as_slice());
        JointState::from_slice(v.as_slice()).expect("finite map of a finite state")
    }

    pub fn condition_number(&self) -> f64 {
        let sv = self.m_hat.clone().singular_values();
        let max = sv.max();
        let min = sv.min();
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

/// Paired simulated and measured motor-angle traces with per-sample weights.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTracePair {
    pub times: Vec<f64>,
    pub sim_states: Vec<JointState>,
    pub real_states: Vec<JointState>,
    pub sample_weights: Vec<f64>,
}

/// Weights emphasising the stance half of the cycle, where contact makes
/// tracking worst.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StanceWeighting {
    pub stance: f64,
    pub swing: f64,
}

impl Default for StanceWeighting {
    fn default() -> Self {
        Self {
            stance: 3.0,
            swing: 1.0,
        }
    }
}

impl StanceWeighting {
    /// Weight for a sample taken at global phase `phi`; `[0, π)` is stance.
    pub fn weight(&self, phi: f64) -> f64 {
        if crate::trajectory::wrap_phase(phi) < std::f64::consts::PI {
            self.stance
        } else {
            self.swing
        }
    }
}

impl StateTracePair {
    pub fn new(
        times: Vec<f64>,
        sim_states: Vec<JointState>,
        real_states: Vec<JointState>,
        sample_weights: Vec<f64>,
    ) -> Result<Self, PolicyError> {
        let n = sim_states.len();
        if real_states.len() != n || sample_weights.len() != n || times.len() != n {
            return Err(PolicyError::InvalidTrace(format!(
                "length mismatch: {} times, {} sim, {} real, {} weights",
                times.len(),
                n,
                real_states.len(),
                sample_weights.len()
            )));
        }
        if sample_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(PolicyError::InvalidTrace(
                "weights must be finite and non-negative".into(),
            ));
        }
        if sample_weights.iter().sum::<f64>() <= 0.0 {
            return Err(PolicyError::InvalidTrace(
                "weights must have a positive sum".into(),
            ));
        }
        Ok(Self {
            times,
            sim_states,
            real_states,
            sample_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.sim_states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sim_states.is_empty()
    }

    /// Reads `t_s, sim_q0..sim_q11, real_q0..real_q11, weight`.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, PolicyError> {
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader
            .headers()
            .map_err(|e| PolicyError::FormatError(e.to_string()))?
            .clone();
        let expected = trace_header();
        if headers.iter().collect::<Vec<_>>()
            != expected.iter().map(String::as_str).collect::<Vec<_>>()
        {
            return Err(PolicyError::FormatError(format!(
                "trace header must be {}",
                expected.join(",")
            )));
        }
        let (mut times, mut sim, mut real, mut weights) = (vec![], vec![], vec![], vec![]);
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| PolicyError::FormatError(e.to_string()))?;
            let values: Vec<f64> = record
                .iter()
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| PolicyError::FormatError(format!("data row {}: {e}", row + 1)))?;
            let bad_row = |e| PolicyError::FormatError(format!("data row {}: {e}", row + 1));
            times.push(values[0]);
            sim.push(JointState::from_slice(&values[1..1 + STATE_DIM]).map_err(bad_row)?);
            real.push(
                JointState::from_slice(&values[1 + STATE_DIM..1 + 2 * STATE_DIM])
                    .map_err(bad_row)?,
            );
            weights.push(values[1 + 2 * STATE_DIM]);
        }
        Self::new(times, sim, real, weights)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PolicyError> {
        let mut w = csv::Writer::from_writer(out);
        let to_format = |e: csv::Error| PolicyError::FormatError(e.to_string());
        w.write_record(trace_header()).map_err(to_format)?;
        for k in 0..self.len() {
            let mut row = Vec::with_capacity(2 + 2 * STATE_DIM);
            row.push(self.times[k]);
            row.extend_from_slice(self.sim_states[k].as_slice());
            row.extend_from_slice(self.real_states[k].as_slice());
            row.push(self.sample_weights[k]);
            w.serialize(row).map_err(to_format)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn trace_header() -> Vec<String> {
    let mut h = vec!["t_s".to_string()];
    h.extend((0..STATE_DIM).map(|i| format!("sim_q{i}")));
    h.extend((0..STATE_DIM).map(|i| format!("real_q{i}")));
    h.push("weight".into());
    h
}

/// Fitted correction and its per-joint weighted residual RMS (radians).
#[derive(Debug, Clone, PartialEq)]
pub struct Sim2RealFit {
    pub map: Sim2RealMap,
    pub residual_rms: [f64; STATE_DIM],
    pub condition_number: f64,
}

impl Sim2RealFit {
    pub fn max_residual(&self) -> f64 {
        self.residual_rms.iter().copied().fold(0.0, f64::max)
    }
}

/// Weighted least squares `sim ≈ M_hat · real + b_bar`, solved row-wise
/// through the normal equations of the weight-centered data with a small
/// relative ridge.
pub fn fit_sim2real(trace: &StateTracePair) -> Result<Sim2RealFit, PolicyError> {
    let n = trace.len();
    if n < STATE_DIM + 1 {
        return Err(PolicyError::InvalidTrace(format!(
            "need at least {} samples, got {n}",
            STATE_DIM + 1
        )));
    }
    let total: f64 = trace.sample_weights.iter().sum();
    let real = |k: usize| DVector::from_column_slice(trace.real_states[k].as_slice());
    let sim = |k: usize| DVector::from_column_slice(trace.sim_states[k].as_slice());

    let mut real_mean = DVector::zeros(STATE_DIM);
    let mut sim_mean = DVector::zeros(STATE_DIM);
    for k in 0..n {
        let w = trace.sample_weights[k];
        real_mean += real(k) * w;
        sim_mean += sim(k) * w;
    }
    real_mean /= total;
    sim_mean /= total;

    let mut gram = DMatrix::<f64>::zeros(STATE_DIM, STATE_DIM);
    let mut cross = DMatrix::<f64>::zeros(STATE_DIM, STATE_DIM);
    for k in 0..n {
        let w = trace.sample_weights[k];
        let x = real(k) - &real_mean;
        let y = sim(k) - &sim_mean;
        gram += &x * x.transpose() * w;
        cross += &x * y.transpose() * w;
    }

    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
    if ratio < RANK_TOLERANCE {
        return Err(PolicyError::RankDeficient { ratio });
    }

    let ridge = RIDGE * gram.trace() / STATE_DIM as f64;
    let regularized = &gram + DMatrix::identity(STATE_DIM, STATE_DIM) * ridge;
    let chol = regularized
        .cholesky()
        .ok_or(PolicyError::RankDeficient { ratio })?;
    // Columns of `coeffs` are the rows of M_hat.
    let coeffs = chol.solve(&cross);
    let m_hat = coeffs.transpose();
    let b_bar = &sim_mean - &m_hat * &real_mean;
    let map = Sim2RealMap::new(m_hat, b_bar)?;

    let mut sq = [0.0; STATE_DIM];
    for k in 0..n {
        let w = trace.sample_weights[k];
        let e = map.transform(trace.real_states[k].as_slice()) - sim(k);
        for (acc, v) in sq.iter_mut().zip(e.iter()) {
            *acc += w * v * v;
        }
    }
    let residual_rms = sq.map(|s| (s / total).sqrt());
    let condition_number = map.condition_number();
    if condition_number > CONDITION_WARNING {
        log::warn!(
            "sim-to-real correction is ill-conditioned (condition number {condition_number:.3e})"
        );
    }
    Ok(Sim2RealFit {
        map,
        residual_rms,
        condition_number,
    })
}

/// Weighted squared residual of `map` on `trace`; the quantity the fitter minimises.
pub fn weighted_residual(map: &Sim2RealMap, trace: &StateTracePair) -> f64 {
    (0..trace.len())
        .map(|k| {
            let e = map.transform(trace.real_states[k].as_slice())
                - DVector::from_column_slice(trace.sim_states[k].as_slice());
            trace.sample_weights[k] * e.norm_squared()
        })
        .sum()
}

/// Everything needed to run a trained policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBundle {
    pub matrix: PolicyMatrix,
    pub correction: Option<Sim2RealMap>,
    pub bounds: RadiusBounds,
    /// Gait (or gait mix) the policy was trained for.
    pub gait: String,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleFile {
    version: u32,
    state_dim: usize,
    action_dim: usize,
    #[serde(rename = "M")]
    m: Vec<Vec<f64>>,
    #[serde(rename = "M_hat")]
    m_hat: Option<Vec<Vec<f64>>>,
    b_bar: Option<Vec<f64>>,
    #[serde(rename = "box")]
    bounds: BoxFile,
    gait: String,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxFile {
    radius_min: f64,
    radius_max: f64,
}

/// Sim-to-real map file written by the fitter.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    version: u32,
    #[serde(rename = "M_hat")]
    m_hat: Vec<Vec<f64>>,
    b_bar: Vec<f64>,
    #[serde(default)]
    residual_rms: Vec<f64>,
    #[serde(default)]
    condition_number: Option<f64>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(
    rows: &[Vec<f64>],
    ncols: usize,
    what: &str,
) -> Result<DMatrix<f64>, PolicyError> {
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(PolicyError::DimensionMismatch(format!(
            "{what} row has {} columns, expected {ncols}",
            bad.len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn map_from_parts(m_hat: &[Vec<f64>], b_bar: &[f64]) -> Result<Sim2RealMap, PolicyError> {
    if m_hat.len() != STATE_DIM {
        return Err(PolicyError::DimensionMismatch(format!(
            "M_hat has {} rows, expected {STATE_DIM}",
            m_hat.len()
        )));
    }
    let m = matrix_from_rows(m_hat, STATE_DIM, "M_hat")?;
    Sim2RealMap::new(m, DVector::from_column_slice(b_bar))
}

impl PolicyBundle {
    pub fn to_json(&self) -> Result<String, PolicyError> {
        let file = BundleFile {
            version: BUNDLE_VERSION,
            state_dim: self.matrix.state_dim(),
            action_dim: self.matrix.action_dim(),
            m: rows_of(self.matrix.matrix()),
            m_hat: self.correction.as_ref().map(|c| rows_of(&c.m_hat)),
            b_bar: self
                .correction
                .as_ref()
                .map(|c| c.b_bar.iter().copied().collect()),
            bounds: BoxFile {
                radius_min: self.bounds.min,
                radius_max: self.bounds.max,
            },
            gait: self.gait.clone(),
            seed: self.seed,
        };
        serde_json::to_string_pretty(&file).map_err(|e| PolicyError::FormatError(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        let file: BundleFile =
            serde_json::from_str(text).map_err(|e| PolicyError::FormatError(e.to_string()))?;
        if file.version != BUNDLE_VERSION {
            return Err(PolicyError::FormatError(format!(
                "unsupported bundle version {}",
                file.version
            )));
        }
        if file.state_dim != STATE_DIM {
            return Err(PolicyError::DimensionMismatch(format!(
                "state_dim {} but policies read {STATE_DIM} motor angles",
                file.state_dim
            )));
        }
        if file.m.len() != file.action_dim {
            return Err(PolicyError::DimensionMismatch(format!(
                "M has {} rows but action_dim is {}",
                file.m.len(),
                file.action_dim
            )));
        }
        let matrix = PolicyMatrix::new(matrix_from_rows(&file.m, file.state_dim, "M")?)?;
        let correction = match (file.m_hat, file.b_bar) {
            (Some(m_hat), Some(b_bar)) => Some(map_from_parts(&m_hat, &b_bar)?),
            (None, None) => None,
            _ => {
                return Err(PolicyError::FormatError(
                    "M_hat and b_bar must be given together".into(),
                ))
            }
        };
        let bounds = RadiusBounds::new(file.bounds.radius_min, file.bounds.radius_max)
            .map_err(|e| PolicyError::FormatError(e.to_string()))?;
        Ok(Self {
            matrix,
            correction,
            bounds,
            gait: file.gait,
            seed: file.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

impl Sim2RealFit {
    pub fn to_json(&self) -> Result<String, PolicyError> {
        let file = MapFile {
            version: BUNDLE_VERSION,
            m_hat: rows_of(&self.map.m_hat),
            b_bar: self.map.b_bar.iter().copied().collect(),
            residual_rms: self.residual_rms.to_vec(),
            condition_number: Some(self.condition_number),
        };
        serde_json::to_string_pretty(&file).map_err(|e| PolicyError::FormatError(e.to_string()))
    }
}

/// Loads a correction written by [`Sim2RealFit::to_json`].
pub fn load_sim2real_map(path: &Path) -> Result<Sim2RealMap, PolicyError> {
    let text = fs::read_to_string(path)?;
    let file: MapFile =
        serde_json::from_str(&text).map_err(|e| PolicyError::FormatError(e.to_string()))?;
    if file.version != BUNDLE_VERSION {
        return Err(PolicyError::FormatError(format!(
            "unsupported map version {}",
            file.version
        )));
    }
    map_from_parts(&file.m_hat, &file.b_bar)
}
