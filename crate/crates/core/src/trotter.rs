//! Trotterized transverse-field Ising circuits with optional annealing ramps.
//!
//! The Hamiltonian is `H(t) = -(1 - g(t)) sum_i h_i X_i - g(t) sum_ij J_ij Z_i Z_j`
//! (without a ramp, `-sum h X - sum J ZZ`). Each layer applies `exp(-i dt H_term)`
//! for every term, X terms first. A rotation `exp(-i theta P / 2)` realizes
//! `exp(-i dt (-c) P)` with `theta = -2 dt c`.

use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate, ParamRef};
use crate::error::{Error, Result};
use crate::pauli::Letter;
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RampKind {
    Linear,
    Square,
    Tanh,
}

impl RampKind {
    pub const ALL: [RampKind; 3] = [RampKind::Linear, RampKind::Square, RampKind::Tanh];

    pub fn name(self) -> &'static str {
        match self {
            RampKind::Linear => "linear",
            RampKind::Square => "square",
            RampKind::Tanh => "tanh",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        RampKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown ramp {s:?}")))
    }
}

/// Interpolation weight `g(t)` on `[0, t_f]`.
pub fn ramp_value(kind: RampKind, t: f64, tf: f64) -> Result<f64> {
    if !(tf > 0.0) {
        return Err(Error::Validation(format!("ramp duration must be positive, got {tf}")));
    }
    if !(0.0..=tf).contains(&t) {
        return Err(Error::Validation(format!("ramp time {t} outside [0, {tf}]")));
    }
    let s = t / tf;
    Ok(match kind {
        RampKind::Linear => s,
        RampKind::Square => s * s,
        RampKind::Tanh => 0.5 * ((-3.0 * (1.0 - s) + 3.0 * s).tanh() + 1.0),
    })
}

/// Where within layer `l` (1-based) the ramp is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RampSample {
    /// `t_l = l dt`
    #[default]
    End,
    /// `t_l = (l - 1/2) dt`
    Mid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub kind: RampKind,
    pub tf: f64,
    pub sample: RampSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Binding {
    /// Angles baked in as fixed values.
    #[default]
    Fixed,
    /// One parameter per gate.
    Free,
    /// Every gate references parameter 0.
    Shared,
    /// Per layer: one parameter for the X gates, one for the ZZ gates.
    SharedPerLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrotterSpec {
    pub layers: usize,
    pub dt: f64,
    /// Per-site fields.
    pub h: Vec<f64>,
    /// Per-edge couplings, in topology edge order.
    pub j: Vec<f64>,
    pub ramp: Option<Ramp>,
    pub binding: Binding,
}

impl TrotterSpec {
    /// Uniform `h` and `J`.
    pub fn uniform(top: &Topology, layers: usize, dt: f64, h: f64, j: f64) -> Self {
        TrotterSpec {
            layers,
            dt,
            h: vec![h; top.num_sites()],
            j: vec![j; top.edges().len()],
            ramp: None,
            binding: Binding::Fixed,
        }
    }

    pub fn with_ramp(mut self, kind: RampKind, tf: f64) -> Self {
        self.ramp = Some(Ramp {
            kind,
            tf,
            sample: RampSample::End,
        });
        self
    }

    pub fn with_binding(mut self, binding: Binding) -> Self {
        self.binding = binding;
        self
    }

    fn validate(&self, top: &Topology) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Validation("at least one Trotter layer is required".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if self.h.len() != top.num_sites() || self.j.len() != top.edges().len() {
            return Err(Error::Validation(format!(
                "coefficient arrays ({} fields, {} couplings) do not match topology ({} sites, {} edges)",
                self.h.len(),
                self.j.len(),
                top.num_sites(),
                top.edges().len()
            )));
        }
        Ok(())
    }
}

/// Rotation angles of the Trotter circuit, in gate order.
pub fn trotter_angles(top: &Topology, spec: &TrotterSpec) -> Result<Vec<f64>> {
    spec.validate(top)?;
    let mut angles = Vec::with_capacity(spec.layers * (top.num_sites() + top.edges().len()));
    for l in 1..=spec.layers {
        let g = match &spec.ramp {
            None => None,
            Some(r) => {
                let t = match r.sample {
                    RampSample::End => l as f64 * spec.dt,
                    RampSample::Mid => (l as f64 - 0.5) * spec.dt,
                };
                // Guard against t_f = layers * dt rounding just below t.
                let t = if t > r.tf && t - r.tf < 1e-9 * r.tf { r.tf } else { t };
                Some(ramp_value(r.kind, t, r.tf)?)
            }
        };
        let (wx, wzz) = g.map_or((1.0, 1.0), |g| (1.0 - g, g));
        angles.extend(spec.h.iter().map(|h| -2.0 * spec.dt * wx * h));
        angles.extend(spec.j.iter().map(|j| -2.0 * spec.dt * wzz * j));
    }
    Ok(angles)
}

/// Builds the Trotter circuit. For non-fixed bindings the returned circuit
/// is parameterized; [`natural_params`] gives the parameter vector that
/// reproduces the Trotter angles.
pub fn build_tfi_trotter(top: &Topology, spec: &TrotterSpec) -> Result<Circuit> {
    let angles = trotter_angles(top, spec)?;
    let n = top.num_sites();
    let per_layer = n + top.edges().len();
    let mut gates = Vec::with_capacity(angles.len());
    let mut m = 0;
    for (idx, &theta) in angles.iter().enumerate() {
        let layer = idx / per_layer;
        let is_x = idx % per_layer < n;
        let param = match spec.binding {
            Binding::Fixed => ParamRef::Fixed(theta),
            Binding::Free => ParamRef::Free(idx),
            Binding::Shared => ParamRef::Shared(0),
            Binding::SharedPerLayer => ParamRef::Shared(2 * layer + usize::from(!is_x)),
        };
        if let Some(k) = param.index() {
            m = m.max(k + 1);
        }
        let k = idx % per_layer;
        let gate = if is_x {
            Gate::r1(n, k, Letter::X, param)
        } else {
            let (a, b) = top.edges()[k - n];
            Gate::r2(n, (a, b), (Letter::Z, Letter::Z), param)?
        };
        gates.push(gate);
    }
    Circuit::new(n, m, gates)
}

/// Parameter vector reproducing the Trotter angles under the given binding.
/// Shared bindings require all tied gates to carry the same angle.
pub fn natural_params(top: &Topology, spec: &TrotterSpec) -> Result<Vec<f64>> {
    let angles = trotter_angles(top, spec)?;
    let n = top.num_sites();
    let per_layer = n + top.edges().len();
    let tied = |groups: Vec<Vec<f64>>| -> Result<Vec<f64>> {
        groups
            .into_iter()
            .map(|g| {
                let first = g[0];
                if g.iter().any(|&a| (a - first).abs() > 1e-15 * first.abs().max(1.0)) {
                    return Err(Error::Config(
                        "shared binding needs equal angles across tied gates".into(),
                    ));
                }
                Ok(first)
            })
            .collect()
    };
    match spec.binding {
        Binding::Fixed => Ok(Vec::new()),
        Binding::Free => Ok(angles),
        Binding::Shared => tied(vec![angles]),
        Binding::SharedPerLayer => tied(
            angles
                .chunks(per_layer)
                .flat_map(|c| [c[..n].to_vec(), c[n..].to_vec()])
                .filter(|g| !g.is_empty())
                .collect(),
        ),
    }
}
