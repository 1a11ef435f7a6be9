use serde::{Deserialize, Serialize};

use super::kinematics::{cosine, kinematics, Kinematics};
use crate::error::{Error, Result};
use crate::trajectory::{Point, Trajectory};

pub const SCHEMA_VERSION: u32 = 1;

/// Axis-aligned rectangle `[x_min, y_min, x_max, y_max]` in kilometres.
pub type Rect = [f64; 4];

/// Reading of the turning-cosine factor in the sharp-turn hinge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TurnSign {
    /// Penalize cosines below the threshold: `(cos_bar - cos)+`.
    #[default]
    Sharper,
    /// The literal `(cos - cos_bar)+` form.
    Printed,
}

/// Reading of the double U-turn hinge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UTurnForm {
    /// `(cos_bar - cos[t-1])+ * (cos_bar - cos[t])+`.
    #[default]
    Consecutive,
    /// The literal `(cos[t] - cos_bar)+ * (cos[t] - cos_bar)+` form.
    Printed,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

/// Single validity rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "leaf", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Leaf {
    /// Every point inside the union of `rects`.
    Region { rects: Vec<Rect> },
    /// Segment speed at most `kmh`.
    SpeedLimit { kmh: f64 },
    /// No turn sharper than `cos` while moving faster than `kmh`.
    SharpTurnAtSpeed {
        kmh: f64,
        cos: f64,
        #[serde(default, skip_serializing_if = "is_default")]
        sign: TurnSign,
    },
    /// No two consecutive turns sharper than `cos`.
    DoubleUTurn {
        cos: f64,
        #[serde(default, skip_serializing_if = "is_default")]
        form: UTurnForm,
    },
    /// Summed sharpness `cos(p[t-1] - p[t], p[t+1] - p[t])` stays below `budget`.
    CumulativeSharpness { budget: f64 },
}

/// Composable validity predicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExprRepr", into = "ExprRepr")]
pub enum ConstraintExpr {
    Leaf(Leaf),
    And(Vec<ConstraintExpr>),
    Or(Vec<ConstraintExpr>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
enum Composite {
    And { args: Vec<ConstraintExpr> },
    Or { args: Vec<ConstraintExpr> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ExprRepr {
    Composite(Composite),
    Leaf(Leaf),
}

impl TryFrom<ExprRepr> for ConstraintExpr {
    type Error = String;

    fn try_from(r: ExprRepr) -> std::result::Result<Self, String> {
        let expr = match r {
            ExprRepr::Leaf(l) => ConstraintExpr::Leaf(l),
            ExprRepr::Composite(Composite::And { args }) => ConstraintExpr::And(args),
            ExprRepr::Composite(Composite::Or { args }) => ConstraintExpr::Or(args),
        };
        expr.validate().map_err(|e| e.to_string())?;
        Ok(expr)
    }
}

impl From<ConstraintExpr> for ExprRepr {
    fn from(e: ConstraintExpr) -> Self {
        match e {
            ConstraintExpr::Leaf(l) => ExprRepr::Leaf(l),
            ConstraintExpr::And(args) => ExprRepr::Composite(Composite::And { args }),
            ConstraintExpr::Or(args) => ExprRepr::Composite(Composite::Or { args }),
        }
    }
}

/// Versioned on-disk form of a constraint expression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintDoc {
    pub version: u32,
    pub expr: ConstraintExpr,
}

/// Per-step indicator outcome. `steps[i]` is `None` where the expression is
/// not evaluated and `Some(true)` where it is violated.
#[derive(Clone, Debug, PartialEq)]
pub struct Indicator {
    pub steps: Vec<Option<bool>>,
}

impl Indicator {
    pub fn valid(&self) -> bool {
        !self.steps.iter().any(|s| *s == Some(true))
    }

    pub fn evaluated(&self) -> usize {
        self.steps.iter().filter(|s| s.is_some()).count()
    }

    pub fn violations(&self) -> usize {
        self.steps.iter().filter(|s| **s == Some(true)).count()
    }
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Euclidean distance from `p` to the nearest rectangle; 0 inside.
pub fn region_distance(rects: &[Rect], p: Point) -> f64 {
    rects
        .iter()
        .map(|r| {
            let dx = pos(r[0] - p[0]) + pos(p[0] - r[2]);
            let dy = pos(r[1] - p[1]) + pos(p[1] - r[3]);
            dx.hypot(dy)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Sharpness terms `cos(p[t-1] - p[t], p[t+1] - p[t])` at every interior
/// point where both segments are non-degenerate.
fn sharpness_sum(points: &[Point]) -> f64 {
    points
        .windows(3)
        .filter_map(|w| {
            let back = [w[0][0] - w[1][0], w[0][1] - w[1][1]];
            let fwd = [w[2][0] - w[1][0], w[2][1] - w[1][1]];
            cosine(back, fwd)
        })
        .sum()
}

impl Leaf {
    /// First 0-based point index the leaf is evaluated at.
    pub fn start_index(&self) -> usize {
        match self {
            Leaf::Region { .. } => 0,
            Leaf::SpeedLimit { .. } => 1,
            Leaf::SharpTurnAtSpeed { .. } | Leaf::CumulativeSharpness { .. } => 2,
            Leaf::DoubleUTurn { .. } => 3,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let ok = match self {
            Leaf::Region { rects } => {
                !rects.is_empty() && rects.iter().all(|r| finite(r) && r[0] <= r[2] && r[1] <= r[3])
            }
            Leaf::SpeedLimit { kmh } => finite(&[*kmh]),
            Leaf::SharpTurnAtSpeed { kmh, cos, .. } => finite(&[*kmh, *cos]),
            Leaf::DoubleUTurn { cos, .. } => finite(&[*cos]),
            Leaf::CumulativeSharpness { budget } => finite(&[*budget]),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid constraint leaf {self:?}")))
        }
    }

    /// `(hinge, violated)` per point; `None` where not evaluated.
    fn evaluate(&self, traj: &Trajectory, kin: &Kinematics) -> Vec<Option<(f64, bool)>> {
        let n = traj.len();
        let mut out = vec![None; n];
        match *self {
            Leaf::Region { ref rects } => {
                for (i, &p) in traj.points.iter().enumerate() {
                    let d = region_distance(rects, p);
                    out[i] = Some((d, d > 0.0));
                }
            }
            Leaf::SpeedLimit { kmh } => {
                for i in 1..n {
                    let v = kin.speed_kmh[i].expect("speed defined past the first point");
                    out[i] = Some((pos(v - kmh), v > kmh));
                }
            }
            Leaf::SharpTurnAtSpeed { kmh, cos, sign } => {
                for i in 2..n {
                    let (Some(v), Some(c)) = (kin.speed_kmh[i], kin.cosine[i]) else {
                        continue;
                    };
                    let (turn, turned) = match sign {
                        TurnSign::Sharper => (pos(cos - c), c < cos),
                        TurnSign::Printed => (pos(c - cos), c > cos),
                    };
                    out[i] = Some((pos(v - kmh) * turn, v > kmh && turned));
                }
            }
            Leaf::DoubleUTurn { cos, form } => {
                for i in 3..n {
                    let (Some(prev), Some(c)) = (kin.cosine[i - 1], kin.cosine[i]) else {
                        continue;
                    };
                    out[i] = Some(match form {
                        UTurnForm::Consecutive => (pos(cos - prev) * pos(cos - c), prev < cos && c < cos),
                        UTurnForm::Printed => (pos(c - cos) * pos(c - cos), c > cos),
                    });
                }
            }
            Leaf::CumulativeSharpness { budget } => {
                if n >= 3 {
                    let s = sharpness_sum(&traj.points);
                    out[n - 1] = Some((pos(s - budget), s >= budget));
                }
            }
        }
        out
    }
}

fn merge(children: Vec<Vec<Option<(f64, bool)>>>, conj: bool) -> Vec<Option<(f64, bool)>> {
    let n = children.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            children.iter().filter_map(|c| c[i]).fold(None, |acc, (h, v)| {
                Some(match acc {
                    None => (h, v),
                    Some((ha, va)) if conj => (ha + h, va || v),
                    Some((ha, va)) => (ha * h, va && v),
                })
            })
        })
        .collect()
}

impl ConstraintExpr {
    pub fn leaf(l: Leaf) -> Self {
        ConstraintExpr::Leaf(l)
    }

    /// Sharp turns at speed: the default car-physics rule.
    pub fn physics(kmh: f64, cos: f64) -> Self {
        ConstraintExpr::Leaf(Leaf::SharpTurnAtSpeed {
            kmh,
            cos,
            sign: TurnSign::Sharper,
        })
    }

    /// Two consecutive near-reversals.
    pub fn behavior(cos: f64) -> Self {
        ConstraintExpr::Leaf(Leaf::DoubleUTurn {
            cos,
            form: UTurnForm::Consecutive,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConstraintExpr::Leaf(l) => l.validate(),
            ConstraintExpr::And(args) | ConstraintExpr::Or(args) => {
                if args.is_empty() {
                    return Err(Error::Config("composite constraint needs arguments".into()));
                }
                args.iter().try_for_each(ConstraintExpr::validate)
            }
        }
    }

    pub fn leaves(&self) -> Vec<&Leaf> {
        match self {
            ConstraintExpr::Leaf(l) => vec![l],
            ConstraintExpr::And(a) | ConstraintExpr::Or(a) => a.iter().flat_map(|e| e.leaves()).collect(),
        }
    }

    fn evaluate(&self, traj: &Trajectory, kin: &Kinematics) -> Vec<Option<(f64, bool)>> {
        match self {
            ConstraintExpr::Leaf(l) => l.evaluate(traj, kin),
            ConstraintExpr::And(a) => merge(a.iter().map(|e| e.evaluate(traj, kin)).collect(), true),
            ConstraintExpr::Or(a) => merge(a.iter().map(|e| e.evaluate(traj, kin)).collect(), false),
        }
    }

    fn evaluate_checked(&self, traj: &Trajectory) -> Result<Vec<Option<(f64, bool)>>> {
        if !traj.is_finite() {
            return Err(Error::Input("trajectory has non-finite coordinates".into()));
        }
        let kin = kinematics(traj)?;
        Ok(self.evaluate(traj, &kin))
    }

    /// Per-step hinge penalty; composites add (and) or multiply (or).
    pub fn step_hinges(&self, traj: &Trajectory) -> Result<Vec<Option<f64>>> {
        Ok(self.evaluate_checked(traj)?.into_iter().map(|s| s.map(|(h, _)| h)).collect())
    }

    pub fn indicator(&self, traj: &Trajectory) -> Result<Indicator> {
        let steps = self.evaluate_checked(traj)?.into_iter().map(|s| s.map(|(_, v)| v)).collect();
        Ok(Indicator { steps })
    }

    /// Penalty of one trajectory with the same reduction as the training
    /// objective: leaves average their hinge over their index range, `and`
    /// sums and `or` multiplies children.
    pub fn trajectory_penalty(&self, traj: &Trajectory) -> Result<f64> {
        let kin = kinematics(traj)?;
        Ok(self.penalty_with(traj, &kin))
    }

    fn penalty_with(&self, traj: &Trajectory, kin: &Kinematics) -> f64 {
        match self {
            ConstraintExpr::Leaf(l) => {
                let span = leaf_span(l, traj.len());
                if span == 0 {
                    return 0.0;
                }
                let total: f64 = l.evaluate(traj, kin).into_iter().flatten().map(|(h, _)| h).sum();
                total / span as f64
            }
            ConstraintExpr::And(a) => a.iter().map(|e| e.penalty_with(traj, kin)).sum(),
            ConstraintExpr::Or(a) => a.iter().map(|e| e.penalty_with(traj, kin)).product(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ConstraintDoc {
            version: SCHEMA_VERSION,
            expr: self.clone(),
        })?)
    }

    /// Accepts a versioned document or a bare expression.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("version").is_some() {
            let doc: ConstraintDoc = serde_json::from_value(value)?;
            if doc.version != SCHEMA_VERSION {
                return Err(Error::Config(format!("unsupported constraint schema version {}", doc.version)));
            }
            Ok(doc.expr)
        } else {
            Ok(serde_json::from_value(value)?)
        }
    }
}

/// Number of indices a leaf's penalty is averaged over.
pub(crate) fn leaf_span(leaf: &Leaf, len: usize) -> usize {
    match leaf {
        Leaf::CumulativeSharpness { .. } => usize::from(len >= 3),
        l => len.saturating_sub(l.start_index()),
    }
}

/// Fraction of evaluated steps that are violated across `trajectories`.
pub fn violation_score(expr: &ConstraintExpr, trajectories: &[Trajectory]) -> Result<f64> {
    let mut evaluated = 0usize;
    let mut violated = 0usize;
    for t in trajectories {
        let ind = expr.indicator(t)?;
        evaluated += ind.evaluated();
        violated += ind.violations();
    }
    if evaluated == 0 {
        return Err(Error::Input("no evaluable steps for the violation score".into()));
    }
    Ok(violated as f64 / evaluated as f64)
}

/// Sharp-turn-at-speed hinge for steps `t = 3..=T` (1-based).
pub fn physics_hinge(traj: &Trajectory, kmh: f64, cos: f64) -> Result<Vec<Option<f64>>> {
    let h = ConstraintExpr::physics(kmh, cos).step_hinges(traj)?;
    Ok(h.into_iter().skip(2).collect())
}

/// Double U-turn hinge for steps `t = 4..=T` (1-based).
pub fn behavior_hinge(traj: &Trajectory, cos: f64) -> Result<Vec<Option<f64>>> {
    let h = ConstraintExpr::behavior(cos).step_hinges(traj)?;
    Ok(h.into_iter().skip(3).collect())
}
