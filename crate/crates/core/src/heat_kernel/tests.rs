use std::sync::Arc;

use super::*;
use crate::geometry::{RadialField, RadialGrid};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn grid(d: usize) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::new(d, 24.0, 32, 8).unwrap())
}

// mpmath, 30 digits
const H2: [(f64, f64, f64); 5] = [
    (1.0, 0.0, 0.057535755205721974619),
    (1.0, 1.0, 0.04149118395782221757),
    (0.1, 0.5, 0.40365459509409944162),
    (10.0, 2.0, 0.00029433218421837149707),
    (0.5, 3.0, 0.00083097623017509558109),
];

// -e^{-3t} / (2π sinh r) ∂_r of the H³ kernel
const H5: [(f64, f64, f64); 4] = [
    (1.0, 0.5, 0.00004685664122677097686),
    (1.0, 1.0, 0.000030001207449852988192),
    (0.5, 2.0, 0.000071402769171822423573),
    (2.0, 3.0, 5.8463094770529555495e-9),
];

const H4: [(f64, f64, f64); 2] = [
    (1.0, 1.0, 0.00049391864528730385057),
    (0.5, 0.7, 0.006355435621934661544),
];

#[test]
fn h3_closed_form_at_origin() {
    let v = kernel_h3(1.0, 0.0).unwrap();
    assert!(rel(v, 8.258_301_266_124_23e-3) < 1e-12, "{v}");
    // r/sinh r is even and continuous through 0
    assert!(rel(kernel_h3(1.0, 1e-6).unwrap(), v) < 1e-11);
    assert_eq!(kernel_h3(1.0, -0.7).unwrap(), kernel_h3(1.0, 0.7).unwrap());
}

#[test]
fn h2_matches_integral_oracle() {
    for (t, r, want) in H2 {
        let got = kernel_h2(t, r).unwrap();
        assert!(rel(got, want) < 1e-9, "t={t} r={r}: {got} vs {want}");
    }
}

#[test]
fn descent_matches_differentiated_closed_forms() {
    for (t, r, want) in H5 {
        let got = kernel_recursion(5, t, r).unwrap();
        assert!(rel(got, want) < 1e-8, "d=5 t={t} r={r}: {got} vs {want}");
    }
    for (t, r, want) in H4 {
        let got = kernel_recursion(4, t, r).unwrap();
        assert!(rel(got, want) < 1e-6, "d=4 t={t} r={r}: {got} vs {want}");
    }
    assert!(kernel_recursion(3, 1.0, 1.0).is_err());
}

#[test]
fn tables_are_normalized() {
    for (d, tol) in [(2, 1e-7), (3, 1e-8), (4, 1e-6), (5, 1e-6)] {
        for t in [0.1, 1.0, 10.0] {
            let m = KernelTable::new(d, t).unwrap().mass();
            assert!((m - 1.0).abs() < tol, "d={d} t={t}: mass {m}");
        }
    }
}

#[test]
fn tables_are_positive_and_radially_decreasing() {
    for d in 2..=5 {
        for t in [0.05, 1.0, 6.0] {
            let tab = KernelTable::new(d, t).unwrap();
            let s = tab.samples();
            assert!(s.iter().all(|v| *v >= 0.0), "d={d} t={t}");
            assert!(s.windows(2).all(|w| w[1] <= w[0]), "d={d} t={t}");
            assert_eq!(tab.eval(tab.rho_max() * 1.01), 0.0);
        }
    }
}

#[test]
fn table_interpolates_the_closed_form() {
    let tab = KernelTable::new(3, 0.7).unwrap();
    for r in [0.0, 0.013, 0.5, 1.234, 3.3, 7.0] {
        let want = kernel_h3(0.7, r).unwrap();
        assert!(rel(tab.eval(r), want) < 1e-7, "r={r}");
    }
}

#[test]
fn small_time_branch_is_continuous() {
    let below = SMALL_TIME * (1.0 - 1e-9);
    let above = SMALL_TIME * (1.0 + 1e-9);
    for r in [0.0, 0.01, 0.05] {
        let a = kernel_direct(3, below, r).unwrap();
        let b = kernel_direct(3, above, r).unwrap();
        // the leading term is exact in three dimensions
        assert!(rel(a, b) < 1e-8, "d=3 r={r}");
        let a = kernel_direct(2, below, r).unwrap();
        let b = kernel_direct(2, above, r).unwrap();
        assert!(rel(a, b) < 1e-4, "d=2 r={r}: {a} vs {b}");
    }
}

#[test]
fn invalid_arguments_are_rejected() {
    assert!(kernel_h3(0.0, 1.0).is_err());
    assert!(kernel_h2(-1.0, 1.0).is_err());
    assert!(kernel_h3(f64::NAN, 1.0).is_err());
    assert!(KernelTable::new(1, 1.0).is_err());
    assert!(MatrixSemigroup::new(grid(3), -0.5).is_err());
}

fn bump(g: &Arc<RadialGrid>) -> RadialField {
    RadialField::from_fn(g.clone(), |r| (-(r - 1.0) * (r - 1.0)).exp() + 0.3 * (-r * r).exp()).unwrap()
}

#[test]
fn semigroup_law_and_mass_conservation() {
    for d in [2, 3] {
        let g = grid(d);
        let f = bump(&g);
        let half = MatrixSemigroup::new(g.clone(), 0.5).unwrap();
        let one = MatrixSemigroup::new(g.clone(), 1.0).unwrap();
        let twice = half.scalar(&half.scalar(&f).unwrap()).unwrap();
        let direct = one.scalar(&f).unwrap();
        let defect = twice.sub(&direct).unwrap().lp_norm(2.0).unwrap() / f.lp_norm(2.0).unwrap();
        assert!(defect < 1e-8, "d={d}: {defect}");
        let m0 = f.lp_norm(1.0).unwrap();
        let m1 = direct.lp_norm(1.0).unwrap();
        assert!(rel(m1, m0) < 1e-9, "d={d}: {m1} vs {m0}");
    }
}

#[test]
fn convolution_is_symmetric_and_contractive() {
    let g = grid(3);
    let tab = KernelTable::new(3, 0.8).unwrap();
    let conv = ConvolutionOperator::new(g.clone(), &tab, AngularRule::default()).unwrap();
    let k = conv.averages();
    let n = g.len();
    for i in (0..n).step_by(17) {
        for j in (0..n).step_by(13) {
            assert!((k[(i, j)] - k[(j, i)]).abs() <= 1e-14 * k[(i, j)].abs().max(1e-300));
        }
    }
    let f = bump(&g);
    let kf = conv.apply(&f).unwrap();
    for p in [1.0, 2.0, 4.0, f64::INFINITY] {
        assert!(kf.lp_norm(p).unwrap() <= f.lp_norm(p).unwrap() * (1.0 + 1e-9), "p={p}");
    }
    // positivity preserving
    assert!(kf.values().iter().all(|v| *v >= 0.0));
}

#[test]
fn spectral_propagator_agrees_with_convolution() {
    let g = grid(3);
    let prop = SpectralPropagator::with_defaults(g.clone()).unwrap();
    let f = bump(&g);
    for t in [0.25, 1.0, 3.0] {
        let spectral = prop.evolve(t, 0.0, f.values());
        let direct = MatrixSemigroup::new(g.clone(), t).unwrap().scalar(&f).unwrap();
        let diff = RadialField::new(g.clone(), spectral).unwrap().sub(&direct).unwrap();
        assert!(diff.lp_norm(2.0).unwrap() < 1e-7 * f.lp_norm(2.0).unwrap(), "t={t}");
    }
    // the generator is negative with its top near the spectral gap
    let lam = prop.eigenvalues();
    let top = lam.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(top < 0.0 && top > -1.5, "{top}");
}

#[test]
fn vector_semigroup_is_damped_scalar_semigroup() {
    let g = grid(3);
    let f = bump(&g);
    let t = 0.6;
    let sg = MatrixSemigroup::new(g.clone(), t).unwrap();
    let v = sg.vector(&f).unwrap();
    let s = sg.scalar(&f).unwrap().scale((-2.0 * t).exp());
    assert!(v.sub(&s).unwrap().max_abs() < 1e-15);
    assert_eq!(vector_damping(3), 2.0);
    let zero = MatrixSemigroup::new(g.clone(), 0.0).unwrap();
    assert_eq!(zero.scalar(&f).unwrap(), f);
}
