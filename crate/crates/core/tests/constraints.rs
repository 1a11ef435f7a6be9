use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stgen::autodiff::{grad_check, Tape, Tensor};
use stgen::constraints::{
    behavior_hinge, kinematics, physics_hinge, violation_score, ConstraintExpr, Leaf, TurnSign, UTurnForm,
    DEFAULT_UTURN_COS,
};
use stgen::Trajectory;

fn traj(points: &[[f64; 2]]) -> Trajectory {
    Trajectory::new(points.to_vec())
}

/// A 0.3 km leg along x followed by a 0.3 km leg turning to cosine `c`.
fn turn(c: f64) -> Trajectory {
    let s = (1.0 - c * c).sqrt();
    traj(&[[0.0, 0.0], [0.3, 0.0], [0.3 + 0.3 * c, 0.3 * s]])
}

#[test]
fn kinematics_examples() {
    let k = kinematics(&traj(&[[0.0, 0.0], [0.3, 0.0]])).unwrap();
    assert!((k.speed_kmh[1].unwrap() - 72.0).abs() < 1e-12);
    assert_eq!(k.speed_kmh[0], None);
    let straight = kinematics(&traj(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])).unwrap();
    assert_eq!(straight.cosine[2], Some(1.0));
    let back = kinematics(&traj(&[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]])).unwrap();
    assert_eq!(back.cosine[2], Some(-1.0));
    assert!(kinematics(&traj(&[[0.0, 0.0]])).is_err());
}

#[test]
fn zero_length_displacement_has_no_angle() {
    let k = kinematics(&traj(&[[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])).unwrap();
    assert_eq!(k.cosine[2], None);
    assert_eq!(k.speed_kmh[1], Some(0.0));
    let h = physics_hinge(&traj(&[[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]), 60.0, -0.5).unwrap();
    assert_eq!(h, vec![None]);
}

#[test]
fn physics_hinge_examples() {
    assert_eq!(physics_hinge(&turn(1.0), 60.0, -0.5).unwrap(), vec![Some(0.0)]);
    let slow = traj(&[[0.0, 0.0], [0.05, 0.0], [0.0, 0.0]]);
    assert_eq!(physics_hinge(&slow, 60.0, -0.5).unwrap(), vec![Some(0.0)]);
    let h = physics_hinge(&turn(-0.9), 60.0, -0.5).unwrap()[0].unwrap();
    assert!((h - 4.8).abs() < 1e-12, "{h}");
}

#[test]
fn printed_sign_switch() {
    let leaf = ConstraintExpr::leaf(Leaf::SharpTurnAtSpeed {
        kmh: 60.0,
        cos: -0.5,
        sign: TurnSign::Printed,
    });
    let straight = leaf.step_hinges(&turn(1.0)).unwrap()[2].unwrap();
    assert!((straight - 12.0 * 1.5).abs() < 1e-9);
    assert_eq!(leaf.step_hinges(&turn(-0.9)).unwrap()[2], Some(0.0));
}

#[test]
fn behavior_hinge_examples() {
    let straight = traj(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]);
    assert_eq!(behavior_hinge(&straight, -0.5).unwrap(), vec![Some(0.0)]);
    let zigzag = traj(&[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [1.0, 0.0]]);
    assert_eq!(behavior_hinge(&zigzag, -0.5).unwrap(), vec![Some(0.25)]);
    let once = traj(&[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [-1.0, 0.0]]);
    assert_eq!(behavior_hinge(&once, -0.5).unwrap(), vec![Some(0.0)]);
    let printed = ConstraintExpr::leaf(Leaf::DoubleUTurn {
        cos: -0.5,
        form: UTurnForm::Printed,
    });
    assert_eq!(printed.step_hinges(&once).unwrap()[3], Some(2.25));
}

#[test]
fn indicator_examples() {
    let whole_plane = ConstraintExpr::leaf(Leaf::Region {
        rects: vec![[-1e9, -1e9, 1e9, 1e9]],
    });
    assert!(whole_plane.indicator(&turn(-1.0)).unwrap().valid());
    let limit = ConstraintExpr::leaf(Leaf::SpeedLimit { kmh: 60.0 });
    let ind = limit.indicator(&traj(&[[0.0, 0.0], [0.3, 0.0]])).unwrap();
    assert_eq!(ind.steps, vec![None, Some(true)]);
    let both = ConstraintExpr::And(vec![whole_plane.clone(), limit.clone()]);
    assert!(!both.indicator(&traj(&[[0.0, 0.0], [0.3, 0.0]])).unwrap().valid());
    let either = ConstraintExpr::Or(vec![whole_plane, limit]);
    assert!(either.indicator(&traj(&[[0.0, 0.0], [0.3, 0.0]])).unwrap().valid());
}

#[test]
fn violation_score_examples() {
    // Five points give three evaluable turns; only the last is sharp at speed.
    let c = -0.9f64;
    let s = (1.0 - c * c).sqrt();
    let t = traj(&[[0.0, 0.0], [0.3, 0.0], [0.6, 0.0], [0.9, 0.0], [0.9 + 0.3 * c, 0.3 * s]]);
    let phys = ConstraintExpr::physics(60.0, -0.5);
    assert!((violation_score(&phys, &[t]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(violation_score(&phys, &[turn(1.0)]).unwrap(), 0.0);
    assert!(violation_score(&phys, &[traj(&[[0.0, 0.0], [1.0, 0.0]])]).is_err());
}

#[test]
fn cumulative_sharpness_budget() {
    // Back and forward vectors at the middle of a U-turn are parallel: +1.
    let leaf = ConstraintExpr::leaf(Leaf::CumulativeSharpness { budget: 0.5 });
    let h = leaf.step_hinges(&traj(&[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]])).unwrap();
    assert_eq!(h, vec![None, None, Some(0.5)]);
    let ok = leaf.indicator(&traj(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])).unwrap();
    assert_eq!(ok.steps, vec![None, None, Some(false)]);
}

#[test]
fn json_forms() {
    let bare = r#"{"op":"and","args":[{"leaf":"speed-limit","kmh":60},{"op":"or","args":[{"leaf":"region","rects":[[0,0,1,1]]},{"leaf":"cumulative-sharpness","budget":2}]}]}"#;
    let e = ConstraintExpr::from_json(bare).unwrap();
    assert_eq!(e.leaves().len(), 3);
    let doc = e.to_json().unwrap();
    assert!(doc.contains("\"version\": 1"));
    assert_eq!(ConstraintExpr::from_json(&doc).unwrap(), e);
    assert!(ConstraintExpr::from_json(r#"{"version":2,"expr":{"leaf":"speed-limit","kmh":60}}"#).is_err());
    assert!(ConstraintExpr::from_json(r#"{"op":"and","args":[]}"#).is_err());
    assert!(ConstraintExpr::from_json(r#"{"leaf":"region","rects":[]}"#).is_err());
    assert!(ConstraintExpr::from_json(r#"{"leaf":"speed-limit","kmh":60,"extra":1}"#).is_err());
}

fn random_traj(rng: &mut ChaCha8Rng, len: usize) -> Trajectory {
    let mut p = [0.0, 0.0];
    let mut points = vec![p];
    for _ in 1..len {
        let step = rng.random_range(0.0..0.6);
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        p = [p[0] + step * theta.cos(), p[1] + step * theta.sin()];
        points.push(p);
    }
    Trajectory::new(points)
}

fn leaves() -> Vec<ConstraintExpr> {
    vec![
        ConstraintExpr::leaf(Leaf::Region {
            rects: vec![[-1.0, -1.0, 1.0, 1.0], [0.5, 0.5, 2.0, 3.0]],
        }),
        ConstraintExpr::leaf(Leaf::SpeedLimit { kmh: 60.0 }),
        ConstraintExpr::physics(60.0, -0.5),
        ConstraintExpr::leaf(Leaf::SharpTurnAtSpeed {
            kmh: 40.0,
            cos: 0.2,
            sign: TurnSign::Printed,
        }),
        ConstraintExpr::behavior(DEFAULT_UTURN_COS),
        ConstraintExpr::behavior(0.0),
        ConstraintExpr::leaf(Leaf::DoubleUTurn {
            cos: -0.3,
            form: UTurnForm::Printed,
        }),
        ConstraintExpr::leaf(Leaf::CumulativeSharpness { budget: -1.0 }),
    ]
}

#[test]
fn hinge_indicator_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let leaves = leaves();
    for _ in 0..10_000 {
        let len = rng.random_range(2..9);
        let t = random_traj(&mut rng, len);
        for leaf in &leaves {
            let hinges = leaf.step_hinges(&t).unwrap();
            let ind = leaf.indicator(&t).unwrap();
            for (h, v) in hinges.iter().zip(&ind.steps) {
                assert_eq!(h.is_some(), v.is_some());
                if let (Some(h), Some(v)) = (h, v) {
                    assert_eq!(*h > 0.0, *v, "{leaf:?} on {t:?}");
                }
            }
        }
    }
}

#[test]
fn composition_laws() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let leaves = leaves();
    for _ in 0..500 {
        let t = random_traj(&mut rng, 7);
        let a = &leaves[rng.random_range(0..leaves.len())];
        let b = &leaves[rng.random_range(0..leaves.len())];
        let ia = a.indicator(&t).unwrap().steps;
        let ib = b.indicator(&t).unwrap().steps;
        let and = ConstraintExpr::And(vec![a.clone(), b.clone()]).indicator(&t).unwrap().steps;
        let or = ConstraintExpr::Or(vec![a.clone(), b.clone()]).indicator(&t).unwrap().steps;
        for i in 0..t.len() {
            match (ia[i], ib[i]) {
                (Some(x), Some(y)) => {
                    assert_eq!(and[i], Some(x || y));
                    assert_eq!(or[i], Some(x && y));
                }
                (Some(x), None) | (None, Some(x)) => {
                    assert_eq!(and[i], Some(x));
                    assert_eq!(or[i], Some(x));
                }
                (None, None) => {
                    assert_eq!(and[i], None);
                    assert_eq!(or[i], None);
                }
            }
        }
    }
}

#[test]
fn tape_penalty_matches_numeric() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut exprs = leaves();
    exprs.push(ConstraintExpr::And(vec![exprs[1].clone(), ConstraintExpr::Or(vec![exprs[0].clone(), exprs[7].clone()])]));
    let (rows, len) = (6, 6);
    for _ in 0..50 {
        let trajs: Vec<Trajectory> = (0..rows).map(|_| random_traj(&mut rng, len)).collect();
        for e in &exprs {
            let mut tape = Tape::new();
            let steps: Vec<_> = (0..len)
                .map(|t| {
                    let data = trajs.iter().flat_map(|tr| tr.points[t]).collect();
                    tape.constant(Tensor::new(vec![rows, 2], data).unwrap()).unwrap()
                })
                .collect();
            let out = e.penalty_on_tape(&mut tape, &steps, 15.0).unwrap();
            for (r, tr) in trajs.iter().enumerate() {
                let want = e.trajectory_penalty(tr).unwrap();
                let got = tape.value(out).data()[r];
                assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{e:?}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn tape_penalty_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let t = random_traj(&mut rng, 6);
    let point = Tensor::new(vec![1, 12], t.points.iter().flatten().copied().collect()).unwrap();
    let expr = ConstraintExpr::And(vec![
        ConstraintExpr::leaf(Leaf::SpeedLimit { kmh: 20.0 }),
        ConstraintExpr::leaf(Leaf::SharpTurnAtSpeed {
            kmh: 10.0,
            cos: 0.9,
            sign: TurnSign::Sharper,
        }),
        ConstraintExpr::leaf(Leaf::Region {
            rects: vec![[5.0, 5.0, 6.0, 6.0]],
        }),
    ]);
    let err = grad_check(
        |tape, x| {
            let steps: Vec<_> = (0..6).map(|i| tape.slice(x, 2 * i, 2 * i + 2)).collect::<Result<_, _>>()?;
            let p = expr.penalty_on_tape(tape, &steps, 15.0).map_err(|e| match e {
                stgen::Error::Autodiff(a) => a,
                other => panic!("{other}"),
            })?;
            tape.sum(p)
        },
        &point,
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-5, "{err}");
}

proptest! {
    #[test]
    fn turning_cosine_scale_invariant(pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..8), k in 0.1f64..10.0) {
        let t = Trajectory::new(pts.iter().map(|&(x, y)| [x, y]).collect());
        let s = Trajectory::new(pts.iter().map(|&(x, y)| [k * x, k * y]).collect());
        let a = kinematics(&t).unwrap();
        let b = kinematics(&s).unwrap();
        for i in 0..t.len() {
            match (a.cosine[i], b.cosine[i]) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
                (x, y) => prop_assert_eq!(x.is_some(), y.is_some()),
            }
            if let (Some(x), Some(y)) = (a.speed_kmh[i], b.speed_kmh[i]) {
                prop_assert!((k * x - y).abs() <= 1e-9 * y.max(1.0));
            }
        }
    }

    #[test]
    fn violation_score_in_unit_interval(seed in 0u64..1000, n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trajs: Vec<_> = (0..n).map(|_| random_traj(&mut rng, 6)).collect();
        for e in leaves() {
            let vs = violation_score(&e, &trajs).unwrap();
            prop_assert!((0.0..=1.0).contains(&vs));
            let any = trajs.iter().any(|t| !e.indicator(t).unwrap().valid());
            prop_assert_eq!(vs == 0.0, !any);
        }
    }
}
