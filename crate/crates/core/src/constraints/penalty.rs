use super::expr::{leaf_span, ConstraintExpr, Leaf, Rect, TurnSign, UTurnForm};
use super::kinematics::SECONDS_PER_HOUR;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Differentiable kinematics of a batch of trajectories given as per-step
/// `[J, 2]` tensors.
struct TapeKinematics {
    /// `[J, 1]` speed in km/h per segment end, index 0 unused.
    speed: Vec<Option<Var>>,
    /// `[J, 1]` turning cosine and a 0/1 mask for degenerate segments.
    cosine: Vec<Option<(Var, Var)>>,
}

fn kinematics_on_tape(tape: &mut Tape, steps: &[Var], interval_s: f64) -> Result<TapeKinematics> {
    let n = steps.len();
    let mut disp = vec![None; n];
    let mut norm = vec![None; n];
    let mut speed = vec![None; n];
    for i in 1..n {
        let d = tape.sub(steps[i], steps[i - 1])?;
        let sq = tape.square(d)?;
        let ss = tape.sum_cols(sq)?;
        let len = tape.sqrt(ss)?;
        speed[i] = Some(tape.scale(len, SECONDS_PER_HOUR / interval_s)?);
        disp[i] = Some(d);
        norm[i] = Some(len);
    }
    let mut cosine = vec![None; n];
    for i in 2..n {
        let (d1, d0) = (disp[i].unwrap(), disp[i - 1].unwrap());
        let prod = tape.mul(d1, d0)?;
        let dot = tape.sum_cols(prod)?;
        let denom = tape.mul(norm[i].unwrap(), norm[i - 1].unwrap())?;
        let mask: Vec<f64> = tape
            .value(denom)
            .data()
            .iter()
            .map(|&x| if x > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let rows = mask.len();
        let mask = tape.constant(Tensor::new(vec![rows, 1], mask)?)?;
        let safe = tape.clamp_min(denom, 1e-12)?;
        cosine[i] = Some((tape.div(dot, safe)?, mask));
    }
    Ok(TapeKinematics { speed, cosine })
}

/// `(threshold - x)+` or `(x - threshold)+`.
fn hinge_below(tape: &mut Tape, x: Var, threshold: f64) -> Result<Var> {
    let neg = tape.neg(x)?;
    let shifted = tape.add_scalar(neg, threshold)?;
    Ok(tape.relu(shifted)?)
}

fn hinge_above(tape: &mut Tape, x: Var, threshold: f64) -> Result<Var> {
    let shifted = tape.add_scalar(x, -threshold)?;
    Ok(tape.relu(shifted)?)
}

fn region_on_tape(tape: &mut Tape, rects: &[Rect], p: Var) -> Result<Var> {
    let x = tape.slice(p, 0, 1)?;
    let y = tape.slice(p, 1, 2)?;
    let mut best: Option<Var> = None;
    for r in rects {
        let lx = hinge_below(tape, x, r[0])?;
        let hx = hinge_above(tape, x, r[2])?;
        let ly = hinge_below(tape, y, r[1])?;
        let hy = hinge_above(tape, y, r[3])?;
        let dx = tape.add(lx, hx)?;
        let dy = tape.add(ly, hy)?;
        let dx2 = tape.square(dx)?;
        let dy2 = tape.square(dy)?;
        let s = tape.add(dx2, dy2)?;
        let d = tape.sqrt(s)?;
        best = Some(match best {
            None => d,
            Some(b) => tape.minimum(b, d)?,
        });
    }
    best.ok_or_else(|| Error::Config("region without rectangles".into()))
}

fn sum_all(tape: &mut Tape, terms: Vec<Var>, rows: usize) -> Result<Var> {
    let mut it = terms.into_iter();
    let Some(mut acc) = it.next() else {
        return Ok(tape.constant(Tensor::zeros(&[rows, 1]))?);
    };
    for t in it {
        acc = tape.add(acc, t)?;
    }
    Ok(acc)
}

fn leaf_on_tape(tape: &mut Tape, leaf: &Leaf, steps: &[Var], kin: &TapeKinematics, rows: usize) -> Result<Var> {
    let n = steps.len();
    let mut terms = Vec::new();
    match *leaf {
        Leaf::Region { ref rects } => {
            for &p in steps {
                terms.push(region_on_tape(tape, rects, p)?);
            }
        }
        Leaf::SpeedLimit { kmh } => {
            for i in 1..n {
                terms.push(hinge_above(tape, kin.speed[i].unwrap(), kmh)?);
            }
        }
        Leaf::SharpTurnAtSpeed { kmh, cos, sign } => {
            for i in 2..n {
                let (c, mask) = kin.cosine[i].unwrap();
                let fast = hinge_above(tape, kin.speed[i].unwrap(), kmh)?;
                let turn = match sign {
                    TurnSign::Sharper => hinge_below(tape, c, cos)?,
                    TurnSign::Printed => hinge_above(tape, c, cos)?,
                };
                let h = tape.mul(fast, turn)?;
                terms.push(tape.mul(h, mask)?);
            }
        }
        Leaf::DoubleUTurn { cos, form } => {
            for i in 3..n {
                let (c, mask) = kin.cosine[i].unwrap();
                let (prev, prev_mask) = kin.cosine[i - 1].unwrap();
                let h = match form {
                    UTurnForm::Consecutive => {
                        let a = hinge_below(tape, prev, cos)?;
                        let b = hinge_below(tape, c, cos)?;
                        tape.mul(a, b)?
                    }
                    UTurnForm::Printed => {
                        let a = hinge_above(tape, c, cos)?;
                        tape.square(a)?
                    }
                };
                let h = tape.mul(h, mask)?;
                terms.push(tape.mul(h, prev_mask)?);
            }
        }
        Leaf::CumulativeSharpness { budget } => {
            if n >= 3 {
                // Sharpness at the middle of each window is minus the
                // turning cosine of the window's last point.
                let mut masked = Vec::new();
                for i in 2..n {
                    let (c, mask) = kin.cosine[i].unwrap();
                    masked.push(tape.mul(c, mask)?);
                }
                let total = sum_all(tape, masked, rows)?;
                let sharp = tape.neg(total)?;
                terms.push(hinge_above(tape, sharp, budget)?);
            }
        }
    }
    let span = leaf_span(leaf, n);
    let total = sum_all(tape, terms, rows)?;
    if span == 0 {
        return Ok(total);
    }
    Ok(tape.scale(total, 1.0 / span as f64)?)
}

fn expr_on_tape(tape: &mut Tape, expr: &ConstraintExpr, steps: &[Var], kin: &TapeKinematics, rows: usize) -> Result<Var> {
    match expr {
        ConstraintExpr::Leaf(l) => leaf_on_tape(tape, l, steps, kin, rows),
        ConstraintExpr::And(args) | ConstraintExpr::Or(args) => {
            let conj = matches!(expr, ConstraintExpr::And(_));
            let mut acc: Option<Var> = None;
            for a in args {
                let v = expr_on_tape(tape, a, steps, kin, rows)?;
                acc = Some(match acc {
                    None => v,
                    Some(x) if conj => tape.add(x, v)?,
                    Some(x) => tape.mul(x, v)?,
                });
            }
            acc.ok_or_else(|| Error::Config("composite constraint needs arguments".into()))
        }
    }
}

impl ConstraintExpr {
    /// Per-trajectory penalty `[J, 1]` for a batch given as per-step `[J, 2]`
    /// point tensors. Matches [`ConstraintExpr::trajectory_penalty`].
    pub fn penalty_on_tape(&self, tape: &mut Tape, steps: &[Var], interval_s: f64) -> Result<Var> {
        let first = *steps.first().ok_or_else(|| Error::Input("empty trajectory batch".into()))?;
        if steps.len() < 2 {
            return Err(Error::Input("penalty needs at least 2 points".into()));
        }
        let rows = tape.value(first).rows();
        let kin = kinematics_on_tape(tape, steps, interval_s)?;
        expr_on_tape(tape, self, steps, &kin, rows)
    }
}
