use std::sync::Arc;

use hyperbolic_boussinesq::mild_solver::{ForcingSpec, MildSolver, Modulated, StateVector, Trajectory, Waveform};
use hyperbolic_boussinesq::{RadialField, RadialGrid};

const P: f64 = 4.0;
const STEPS: usize = 32;

fn solver() -> MildSolver {
    let grid = Arc::new(RadialGrid::new(3, 16.0, 16, 8).unwrap());
    MildSolver::for_grid(grid, 1.0 / STEPS as f64).unwrap()
}

fn bump(g: &Arc<RadialGrid>, c: f64, a: f64) -> RadialField {
    RadialField::from_fn(g.clone(), |r| a * (-(r - c) * (r - c)).exp()).unwrap()
}

fn state(g: &Arc<RadialGrid>, a: f64, b: f64) -> StateVector {
    StateVector::new(bump(g, 0.5, a), bump(g, 1.0, b)).unwrap()
}

fn forcing(g: &Arc<RadialGrid>, scale: f64, gravity: f64) -> ForcingSpec {
    ForcingSpec::new(
        Modulated::new(bump(g, 0.0, scale), Waveform::sine(1.0, 1.0)),
        Modulated::new(bump(g, 1.5, scale), Waveform::sine(1.0, 0.5)),
        Modulated::new(bump(g, 0.0, gravity), Waveform::constant(1.0, 1.0)),
    )
    .unwrap()
}

fn eta(g: &Arc<RadialGrid>) -> Modulated {
    Modulated::new(bump(g, 0.7, 0.3), Waveform::sine(1.0, 1.0))
}

#[test]
fn zero_data_gives_zero_solution() {
    let s = solver();
    let g = s.grid().clone();
    let zero = StateVector::zeros(g.clone());
    let f = ForcingSpec::zero(g.clone(), 1.0);
    let traj = s.solve_linear(&zero, &f, &eta(&g), STEPS, P).unwrap();
    assert_eq!(traj.sup_norm(P).unwrap(), 0.0);
    let x = Trajectory::constant(zero.clone(), s.dt(), STEPS).unwrap();
    assert_eq!(s.picard_map(&zero, &x, &f).unwrap().sup_norm(P).unwrap(), 0.0);
}

#[test]
fn initial_node_is_the_initial_state() {
    let s = solver();
    let g = s.grid().clone();
    let x0 = state(&g, 1.0, -0.5);
    let traj = s.solve_linear(&x0, &forcing(&g, 0.3, 0.2), &eta(&g), STEPS, P).unwrap();
    assert_eq!(traj.first(), &x0);
    assert_eq!(s.linear_rhs(&x0, &forcing(&g, 0.3, 0.2), &eta(&g), 0.0).unwrap(), x0);
}

#[test]
fn linear_solution_is_linear_in_data() {
    let s = solver();
    let g = s.grid().clone();
    let e = eta(&g);
    // h is shared: the map (x0, F, f) -> x is linear only for fixed h and η
    let a = s.solve_linear(&state(&g, 1.0, 0.0), &forcing(&g, 0.2, 0.1), &e, STEPS, P).unwrap();
    let b = s.solve_linear(&state(&g, 0.0, 2.0), &forcing(&g, 0.6, 0.1), &e, STEPS, P).unwrap();
    let ab = s.solve_linear(&state(&g, 1.0, 2.0), &forcing(&g, 0.8, 0.1), &e, STEPS, P).unwrap();
    let hom = s.solve_linear(&StateVector::zeros(g.clone()), &forcing(&g, 0.0, 0.1), &e, STEPS, P).unwrap();
    // x_a + x_b - x_ab counts the η-coupling once too often
    for k in 0..=STEPS {
        let lhs = a.states()[k].add(&b.states()[k]).unwrap();
        let rhs = ab.states()[k].add(&hom.states()[k]).unwrap();
        let scale = 1.0 + rhs.norm(P).unwrap();
        assert!(lhs.distance(&rhs, P).unwrap() < 1e-12 * scale, "node {k}");
    }
}

#[test]
fn bilinear_term_is_bilinear() {
    let s = solver();
    let g = s.grid().clone();
    let traj = |a: f64, b: f64| {
        let x = state(&g, a, b);
        let states = (0..=STEPS).map(|k| x.scale(1.0 + 0.01 * k as f64)).collect();
        Trajectory::new(s.dt(), states).unwrap()
    };
    let (x, y, z) = (traj(1.0, 0.5), traj(-0.3, 2.0), traj(0.7, -1.0));
    let xy = Trajectory::new(
        s.dt(),
        x.states().iter().zip(y.states()).map(|(a, b)| a.add(b).unwrap()).collect(),
    )
    .unwrap();
    for t in [0.25, 0.5, 1.0] {
        let sum = s.op_B(&xy, &z, t).unwrap();
        let parts = s.op_B(&x, &z, t).unwrap().add(&s.op_B(&y, &z, t).unwrap()).unwrap();
        let scale = parts.norm(P).unwrap().max(1e-300);
        assert!(sum.distance(&parts, P).unwrap() < 1e-12 * scale, "t={t}");
        let scaled = s.op_B(&x.scale(3.0), &z, t).unwrap();
        let want = s.op_B(&x, &z, t).unwrap().scale(3.0);
        assert!(scaled.distance(&want, P).unwrap() < 1e-12 * want.norm(P).unwrap().max(1e-300));
    }
}

#[test]
fn free_evolution_contracts_and_composes() {
    let s = solver();
    let g = s.grid().clone();
    let x = state(&g, 1.0, 1.0);
    let half = s.evolve(0.5, &x).unwrap();
    let one = s.evolve(1.0, &x).unwrap();
    let twice = s.evolve(0.5, &half).unwrap();
    assert!(twice.distance(&one, P).unwrap() < 1e-12 * one.norm(P).unwrap());
    assert!(one.norm(P).unwrap() < half.norm(P).unwrap());
    assert!(half.norm(P).unwrap() < x.norm(P).unwrap());
}

#[test]
fn off_grid_times_and_bad_exponents_are_rejected() {
    let s = solver();
    let g = s.grid().clone();
    let x0 = state(&g, 1.0, 1.0);
    let f = forcing(&g, 0.1, 0.1);
    assert!(s.linear_rhs(&x0, &f, &eta(&g), 0.3 * s.dt()).is_err());
    assert!(s.solve_linear(&x0, &f, &eta(&g), STEPS, 3.0).is_err());
    let other = Arc::new(RadialGrid::new(3, 12.0, 16, 8).unwrap());
    assert!(s.solve_linear(&state(&other, 1.0, 1.0), &f, &eta(&g), STEPS, P).is_err());
}
