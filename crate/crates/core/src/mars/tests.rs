use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;

fn design(columns: &[Vec<f64>]) -> DesignMatrix {
    let names = (0..columns.len()).map(|j| format!("x{j}")).collect();
    DesignMatrix::from_columns(names, columns).unwrap()
}

fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn predictions(model: &MarsModel, x: &DesignMatrix) -> Vec<f64> {
    (0..x.nrows()).map(|i| mars_predict(model, &x.row(i)).unwrap()).collect()
}

fn hinge_vars(model: &MarsModel, var: usize) -> Vec<(Direction, f64)> {
    model
        .basis
        .iter()
        .flat_map(|b| b.factors.iter())
        .filter_map(|f| match *f {
            Factor::Hinge { var: v, direction, knot } if v == var => Some((direction, knot)),
            _ => None,
        })
        .collect()
}

/// RSS of OLS on an explicit set of columns, solved by normal equations.
fn ols_rss(columns: &[Vec<f64>], y: &[f64]) -> f64 {
    let n = y.len();
    let p = columns.len();
    let xtx = nalgebra::DMatrix::<f64>::from_fn(p, p, |a, b| (0..n).map(|i| columns[a][i] * columns[b][i]).sum());
    let xty = nalgebra::DVector::<f64>::from_fn(p, |a, _| (0..n).map(|i| columns[a][i] * y[i]).sum());
    let beta = xtx.lu().solve(&xty).unwrap();
    (0..n)
        .map(|i| {
            let fit: f64 = (0..p).map(|a| beta[a] * columns[a][i]).sum();
            (y[i] - fit).powi(2)
        })
        .sum()
}

#[test]
fn exact_linear_response_is_reproduced() {
    let x = grid(60, -2.0, 3.0);
    let y: Vec<f64> = x.iter().map(|v| 1.5 - 0.7 * v).collect();
    let d = design(std::slice::from_ref(&x));
    let model = forward_pass(&d, &y, &MarsOptions::default()).unwrap();
    let rss: f64 = predictions(&model, &d).iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum();
    assert!(rss < 1e-18, "rss {rss}");
    assert!(model.basis[0].is_intercept());
}

#[test]
fn hinge_knot_matches_exhaustive_search() {
    // 0.5 is a grid point and minspan 1 keeps every distinct value.
    let x = grid(41, 0.0, 1.0);
    let y: Vec<f64> = x.iter().map(|v| (v - 0.5_f64).max(0.0)).collect();
    let d = design(std::slice::from_ref(&x));
    let options = MarsOptions {
        minspan: Some(1),
        max_terms: 3,
        ..MarsOptions::default()
    };
    let model = forward_pass(&d, &y, &options).unwrap();

    // Oracle: try every candidate knot with the explicit pair of columns.
    let mut oracle = (f64::INFINITY, f64::NAN);
    for &t in &x[..x.len() - 1] {
        let cols = vec![
            vec![1.0; x.len()],
            x.iter().map(|v| (v - t).max(0.0)).collect(),
            x.iter().map(|v| (t - v).max(0.0)).collect(),
        ];
        let cols: Vec<Vec<f64>> = cols.into_iter().filter(|c| c.iter().any(|v| *v != 0.0)).collect();
        let rss = ols_rss(&cols, &y);
        if rss < oracle.0 - 1e-14 {
            oracle = (rss, t);
        }
    }
    assert_eq!(oracle.1, 0.5);
    let knots = hinge_vars(&model, 0);
    assert!(!knots.is_empty());
    assert!(knots.iter().all(|&(_, k)| k == 0.5), "{knots:?}");
    assert!(model.rss < 1e-20);
}

#[test]
fn parabola_gets_two_sided_hinges() {
    let x = grid(200, -1.0, 1.0);
    let y: Vec<f64> = x.iter().map(|v| v * v).collect();
    let d = design(std::slice::from_ref(&x));
    let model = forward_pass(&d, &y, &MarsOptions::default()).unwrap();
    let hinges = hinge_vars(&model, 0);
    assert!(hinges.len() >= 2);
    assert!(hinges.iter().any(|h| h.0 == Direction::Plus));
    assert!(hinges.iter().any(|h| h.0 == Direction::Minus));
    // Closed-form simple regression of x^2 on x.
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let linear_rss = syy - sxy * sxy / sxx;
    assert!(model.rss * 5.0 < linear_rss, "{} vs {}", model.rss, linear_rss);
}

#[test]
fn forward_rss_is_non_increasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..300).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = (0..300)
        .map(|i| (cols[0][i] - 0.2).max(0.0) * 3.0 + cols[1][i] * cols[2][i] + 0.1 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let options = MarsOptions {
        max_degree: 2,
        ..MarsOptions::default()
    };
    let model = forward_pass(&design(&cols), &y, &options).unwrap();
    assert!(model.forward_rss.len() > 2);
    assert!(model.forward_rss.windows(2).all(|w| w[1] <= w[0]));
    assert!((model.forward_rss.last().unwrap() - model.rss).abs() < 1e-9 * model.forward_rss[0]);
    assert!(model.basis.len() <= options.max_terms);
    assert!(model.basis.iter().any(|b| b.degree() == 2));
}

#[test]
fn additive_model_has_degree_one_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cols: Vec<Vec<f64>> = (0..2).map(|_| (0..200).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = (0..200).map(|i| cols[0][i] * cols[1][i] + cols[0][i].abs()).collect();
    let model = mars_fit(&design(&cols), &y, &MarsOptions::default()).unwrap();
    assert!(model.basis.iter().all(|b| b.degree() <= 1));
}

#[test]
fn self_product_flag_allows_squares() {
    let x = grid(120, -1.0, 1.0);
    let y: Vec<f64> = x.iter().map(|v| v * v).collect();
    let d = design(std::slice::from_ref(&x));
    let options = MarsOptions {
        max_degree: 2,
        allow_self_product: true,
        ..MarsOptions::default()
    };
    let repeats = |m: &MarsModel| {
        m.basis
            .iter()
            .any(|b| b.factors.iter().filter(|f| f.var() == 0).count() > 1)
    };
    let on = mars_fit(&d, &y, &options).unwrap();
    assert!(repeats(&on), "{on}");
    let off = mars_fit(&d, &y, &MarsOptions { allow_self_product: false, ..options }).unwrap();
    assert!(!repeats(&off));
    assert!(on.rss < off.rss);
}

#[test]
fn pruning_spurious_hinges_recovers_ols_line() {
    let x = grid(80, 0.0, 4.0);
    let y: Vec<f64> = x.iter().map(|v| 2.0 + 0.5 * v).collect();
    let d = design(std::slice::from_ref(&x));
    let hinge = |direction, knot| BasisFunction {
        factors: vec![Factor::Hinge { var: 0, direction, knot }],
    };
    let basis = vec![
        BasisFunction::intercept(),
        BasisFunction {
            factors: vec![Factor::Linear { var: 0 }],
        },
        hinge(Direction::Plus, 1.0),
        hinge(Direction::Minus, 2.5),
        hinge(Direction::Plus, 3.1),
    ];
    let columns: Vec<Vec<f64>> = basis.iter().map(|b| b.column(&d)).collect();
    let seeded = prune::refit(
        d.names().to_vec(),
        basis,
        &columns.iter().map(Vec::as_slice).collect::<Vec<_>>(),
        &y,
        &MarsOptions::default(),
    )
    .unwrap();
    let pruned = backward_prune(&seeded, &d, &y).unwrap();
    assert!(pruned.basis.len() < seeded.basis.len());
    for (p, v) in predictions(&pruned, &d).iter().zip(&x) {
        assert!((p - (2.0 + 0.5 * v)).abs() < 1e-8);
    }
}

#[test]
fn pruning_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..250).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| v.abs() + 0.2 * rng.sample::<f64, _>(StandardNormal)).collect();
    let d = design(std::slice::from_ref(&x));
    let once = mars_fit(&d, &y, &MarsOptions::default()).unwrap();
    let twice = backward_prune(&once, &d, &y).unwrap();
    assert_eq!(once.basis, twice.basis);
    assert_eq!(once.coefficients, twice.coefficients);
}

#[test]
fn pruned_gcv_never_exceeds_unpruned() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..2).map(|_| (0..150).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..150).map(|i| cols[0][i].max(0.0) + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
        let d = design(&cols);
        let grown = forward_pass(&d, &y, &MarsOptions::default()).unwrap();
        let pruned = backward_prune(&grown, &d, &y).unwrap();
        assert!(pruned.gcv <= grown.gcv);
        assert!(pruned.gcv.is_finite() && pruned.gcv > 0.0);
    }
}

#[test]
fn gcv_formula() {
    assert!((gcv(10.0, 100, 10.0) - 0.1 / 0.81).abs() < 1e-15);
    assert_eq!(gcv(1.0, 10, 10.0), f64::INFINITY);
}

#[test]
fn collinear_predictors_keep_one() {
    let x1 = grid(50, 0.0, 1.0);
    let x2: Vec<f64> = x1.iter().map(|v| 2.0 * v).collect();
    let d = design(&[x1.clone(), x2]);
    let model = mars_fit(&d, &x1, &MarsOptions::default()).unwrap();
    let users = [model.uses_var(0), model.uses_var(1)];
    assert_eq!(users.iter().filter(|u| **u).count(), 1);
    assert!(model.rss < 1e-20);
}

#[test]
fn v_shape_keeps_both_sides() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| v.abs() + 0.05 * rng.sample::<f64, _>(StandardNormal)).collect();
    let d = design(std::slice::from_ref(&x));
    let model = mars_fit(&d, &y, &MarsOptions::default()).unwrap();
    // Both max(0, x - t) and max(0, t - x) near 0 with positive slopes.
    let mut sides = (false, false);
    for (b, c) in model.basis.iter().zip(&model.coefficients) {
        if let [Factor::Hinge { direction, knot, .. }] = b.factors[..] {
            if knot.abs() < 0.1 && *c > 0.5 {
                match direction {
                    Direction::Plus => sides.0 = true,
                    Direction::Minus => sides.1 = true,
                }
            }
        }
    }
    assert_eq!(sides, (true, true), "{model}");
}

#[test]
fn correlated_true_driver_absorbs_spurious_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let z: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x: Vec<f64> = z.iter().map(|v| v + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    let y = z.clone();
    let model = mars_fit(&design(&[x, z]), &y, &MarsOptions::default()).unwrap();
    assert!(!model.uses_var(0), "{model}");
    assert!(model.uses_var(1));
}

#[test]
fn tiny_sample_with_one_term_is_intercept_only() {
    let x = vec![0.1, 0.4, 0.2, 0.9, 0.5];
    let y = vec![1.0, 2.0, 0.5, 3.0, 1.0];
    let d = design(std::slice::from_ref(&x));
    let model = mars_fit(
        &d,
        &y,
        &MarsOptions {
            max_terms: 1,
            ..MarsOptions::default()
        },
    )
    .unwrap();
    assert_eq!(model.basis, vec![BasisFunction::intercept()]);
    assert!((model.coefficients[0] - 1.5).abs() < 1e-12);
    assert!((mars_predict(&model, &[7.0]).unwrap() - 1.5).abs() < 1e-12);
}

#[test]
fn input_errors() {
    let x = grid(15, 0.0, 1.0);
    let d = design(std::slice::from_ref(&x));
    assert!(matches!(
        forward_pass(&d, &[2.0; 15], &MarsOptions { max_terms: 5, ..MarsOptions::default() }),
        Err(Error::DegenerateResponse(_))
    ));
    assert!(matches!(
        forward_pass(&d, &x, &MarsOptions::default()),
        Err(Error::TooFewObservations { .. })
    ));
    assert!(matches!(
        forward_pass(&d, &x[..10], &MarsOptions::default()),
        Err(Error::Shape { .. })
    ));
    let model = mars_fit(&d, &x, &MarsOptions { max_terms: 5, ..MarsOptions::default() }).unwrap();
    assert!(matches!(mars_predict(&model, &[0.1, 0.2]), Err(Error::Shape { expected: 1, got: 2 })));
}

#[test]
fn hinge_is_continuous_at_its_knot() {
    let model = MarsModel {
        variable_names: vec!["x".into()],
        basis: vec![
            BasisFunction::intercept(),
            BasisFunction {
                factors: vec![Factor::Hinge {
                    var: 0,
                    direction: Direction::Plus,
                    knot: 0.3,
                }],
            },
        ],
        coefficients: vec![1.25, -4.0],
        rss: 0.0,
        gcv: 1.0,
        max_degree: 1,
        penalty_d: 3.0,
        forward_rss: Vec::new(),
    };
    assert_eq!(mars_predict(&model, &[0.3]).unwrap(), 1.25);
    assert_eq!(model.dump().terms[1].formula, "max(0, x - 0.3000)");
}

#[test]
fn formulas() {
    let names = vec!["CPI_M.LDIFF6M".to_string(), "HPI".to_string()];
    let f = BasisFunction {
        factors: vec![
            Factor::Hinge {
                var: 0,
                direction: Direction::Plus,
                knot: 0.0,
            },
            Factor::Hinge {
                var: 1,
                direction: Direction::Minus,
                knot: -0.25,
            },
        ],
    };
    assert_eq!(f.formula(&names), "max(0, CPI_M.LDIFF6M - 0.0000) * max(0, -0.2500 - HPI)");
    let neg = Factor::Hinge {
        var: 1,
        direction: Direction::Plus,
        knot: -0.5,
    };
    assert_eq!(neg.formula(&names), "max(0, HPI + 0.5000)");
    assert_eq!(BasisFunction::intercept().formula(&names), "(Intercept)");
}

fn random_model(rng: &mut ChaCha8Rng, p: usize) -> MarsModel {
    let mut basis = vec![BasisFunction::intercept()];
    for _ in 0..rng.random_range(1..6) {
        let mut factors = Vec::new();
        for _ in 0..rng.random_range(1..3) {
            let var = rng.random_range(0..p);
            factors.push(if rng.random_bool(0.2) {
                Factor::Linear { var }
            } else {
                Factor::Hinge {
                    var,
                    direction: if rng.random_bool(0.5) { Direction::Plus } else { Direction::Minus },
                    knot: rng.random_range(-1.0..1.0),
                }
            });
        }
        basis.push(BasisFunction { factors });
    }
    MarsModel {
        variable_names: (0..p).map(|j| format!("v{j}")).collect(),
        coefficients: (0..basis.len()).map(|_| rng.random_range(-3.0..3.0)).collect(),
        basis,
        rss: 0.0,
        gcv: 1.0,
        max_degree: 2,
        penalty_d: 3.0,
        forward_rss: Vec::new(),
    }
}

/// Evaluates the printed formulas directly, independent of `Factor::eval`.
fn symbolic(model: &MarsModel, x: &[f64]) -> f64 {
    let dump = model.dump();
    dump.terms
        .iter()
        .map(|t| {
            if t.formula == "(Intercept)" {
                return t.coefficient;
            }
            let mut prod = t.coefficient;
            for part in t.formula.split(" * ") {
                let var = |name: &str| x[name.trim_start_matches('v').parse::<usize>().unwrap()];
                prod *= if let Some(inner) = part.strip_prefix("max(0, ").and_then(|s| s.strip_suffix(')')) {
                    let toks: Vec<&str> = inner.split(' ').collect();
                    let (a, op, b) = (toks[0], toks[1], toks[2]);
                    let val = |s: &str| if s.starts_with('v') { var(s) } else { s.parse::<f64>().unwrap() };
                    let v = if op == "-" { val(a) - val(b) } else { val(a) + val(b) };
                    v.max(0.0)
                } else {
                    var(part)
                };
            }
            prod
        })
        .sum()
}

#[test]
fn prediction_matches_symbolic_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let mut model = random_model(&mut rng, 3);
        // Snap knots to the printed precision so both evaluations agree.
        for b in &mut model.basis {
            for f in &mut b.factors {
                if let Factor::Hinge { knot, .. } = f {
                    *knot = (*knot * 1e4).round() / 1e4;
                }
            }
        }
        for _ in 0..10 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let a = mars_predict(&model, &x).unwrap();
            let b = symbolic(&model, &x);
            assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn fits_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..300).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = (0..300).map(|i| cols[0][i].abs() - cols[2][i] + 0.2 * rng.sample::<f64, _>(StandardNormal)).collect();
    let d = design(&cols);
    let a = mars_fit(&d, &y, &MarsOptions::default()).unwrap();
    let b = mars_fit(&d, &y, &MarsOptions::default()).unwrap();
    assert_eq!(a.basis, b.basis);
    assert_eq!(a.coefficients, b.coefficients);
    let json = serde_json::to_value(a.dump()).unwrap();
    assert!(json["terms"][0]["formula"] == "(Intercept)");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fitted_models_are_continuous_at_knots(seed in 0u64..1000, degree in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..2).map(|_| (0..120).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..120)
            .map(|i| (cols[0][i] - 0.3).abs() + cols[0][i] * cols[1][i] + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let model = mars_fit(&design(&cols), &y, &MarsOptions { max_degree: degree, ..MarsOptions::default() }).unwrap();
        prop_assert_eq!(model.coefficients.len(), model.basis.len());
        prop_assert!(model.gcv.is_finite());
        let eps = 1e-8;
        for b in &model.basis {
            for (var, knot) in b.knots() {
                let mut x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
                x[var] = knot - eps;
                let lo = mars_predict(&model, &x).unwrap();
                x[var] = knot + eps;
                let hi = mars_predict(&model, &x).unwrap();
                prop_assert!((lo - hi).abs() < 1e-6);
            }
        }
    }
}
