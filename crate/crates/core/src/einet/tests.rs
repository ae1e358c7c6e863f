use proptest::prelude::*;

use super::dense::tie_gradient;
use super::io::ParamDocument;
use super::*;

fn rand_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

fn rand_state(arch: &Architecture, k: usize, n_items: usize, n_ctx: usize, rng: &mut SeededRng) -> PhaseInput {
    PhaseInput {
        x: rand_matrix(k, arch.groups[0].width, rng),
        i: rand_matrix(n_items, arch.groups[1].width, rng),
        u: rand_matrix(n_ctx, arch.context_width().unwrap_or(1), rng),
    }
}

fn arch(ctx: bool, channels: usize, layers: usize, act: Activation) -> Architecture {
    Architecture::new(3, 2, ctx.then_some(2), channels, layers, act).unwrap()
}

/// Two-layer single-channel network on 1-wide items, used for hand examples.
fn single_channel() -> Architecture {
    Architecture::new(1, 1, None, 1, 2, Activation::Identity).unwrap()
}

#[test]
fn layer_forward_hand_example() {
    let a = single_channel();
    let mut p = SharedParams::zeros(a.clone()).unwrap();
    p.set(a.self_index(0, GroupId::I, 0, 0).unwrap(), 1.0);
    p.set(a.pool_index(0, GroupId::I, GroupId::I, 0, 0).unwrap(), 1.0);
    let inputs = vec![Matrix::zeros(0, 2), Matrix::from_vec(2, 1, vec![1.0, 3.0]).unwrap()];
    let out = p.layer_forward(0, &inputs).unwrap();
    assert_eq!(out[1].as_slice(), &[3.0, 5.0]);
    assert!(out[0].is_empty());
}

#[test]
fn constant_map_from_bias() {
    let a = arch(true, 4, 2, Activation::Identity);
    let mut p = SharedParams::zeros(a.clone()).unwrap();
    for g in [GroupId::X, GroupId::I, GroupId::U] {
        for o in 0..4 {
            p.set(a.bias_index(0, g, o).unwrap(), 0.75);
        }
    }
    let mut rng = SeededRng::new(0);
    let s = rand_state(&a, 2, 3, 2, &mut rng);
    let inputs = vec![s.x.clone(), s.i.clone(), s.u.clone()];
    for m in p.layer_forward(0, &inputs).unwrap() {
        assert!(m.as_slice().iter().all(|&v| v == 0.75));
    }
}

#[test]
fn width_mismatch_is_error() {
    let a = arch(false, 4, 2, Activation::Tanh);
    let p = SharedParams::zeros(a).unwrap();
    let bad = vec![Matrix::zeros(1, 3), Matrix::zeros(2, 3)];
    assert!(matches!(p.layer_forward(0, &bad), Err(Error::Shape { .. })));
}

#[test]
fn psi_only_network_equals_its_layer() {
    let a = Architecture::new(1, 1, None, 1, 1, Activation::Identity).unwrap();
    let mut p = SharedParams::zeros(a.clone()).unwrap();
    p.set(a.self_index(0, GroupId::I, 0, 0).unwrap(), 1.0);
    p.set(a.pool_index(0, GroupId::I, GroupId::I, 0, 0).unwrap(), 1.0);
    let s = PhaseInput {
        x: Matrix::zeros(0, 2),
        i: Matrix::from_vec(2, 1, vec![1.0, 3.0]).unwrap(),
        u: Matrix::zeros(0, 1),
    };
    let q = p.forward(&s).unwrap();
    assert_eq!((q.rows(), q.cols()), (2, 1));
    assert_eq!(q.as_slice(), &[3.0, 5.0]);
}

#[test]
fn empty_item_group_is_error() {
    let a = arch(false, 4, 2, Activation::Tanh);
    let p = SharedParams::zeros(a.clone()).unwrap();
    let s = PhaseInput {
        x: Matrix::zeros(1, 5),
        i: Matrix::zeros(0, 3),
        u: Matrix::zeros(0, 2),
    };
    assert!(matches!(p.forward(&s), Err(Error::EmptyItems)));
}

#[test]
fn projection_hand_example() {
    let a = Architecture::new(1, 1, None, 1, 1, Activation::Identity).unwrap();
    let mut p = SharedParams::zeros(a.clone()).unwrap();
    let (wi, wii) = (0.7, -0.4);
    p.set(a.self_index(0, GroupId::I, 0, 0).unwrap(), wi);
    p.set(a.pool_index(0, GroupId::I, GroupId::I, 0, 0).unwrap(), wii);
    let dense = project_params(&p, 0, 2, 0).unwrap();
    let layer = dense.layer(0);
    assert_eq!((layer.out_dim, layer.in_dim), (2, 2));
    let expected = [wi + wii / 2.0, wii / 2.0, wii / 2.0, wi + wii / 2.0];
    for (got, want) in layer.weights.iter().zip(expected) {
        assert!((got - want).abs() < 1e-15);
    }
}

#[test]
fn zero_theta_projects_to_zero() {
    let a = arch(true, 3, 3, Activation::Relu);
    let p = SharedParams::zeros(a).unwrap();
    let dense = project_params(&p, 1, 3, 2).unwrap();
    assert!(dense.params().iter().all(|&v| v == 0.0));
}

#[test]
fn dense_count_grows_while_shared_count_is_fixed() {
    let a = arch(false, 4, 3, Activation::Relu);
    let mut rng = SeededRng::new(5);
    let p = SharedParams::init(a, &mut rng).unwrap();
    let small = project_params(&p, 0, 5, 0).unwrap().param_count();
    let large = project_params(&p, 0, 20, 0).unwrap().param_count();
    // quadrupling N should multiply the dense count by roughly 16
    assert!(large as f64 / small as f64 > 12.0, "{small} -> {large}");
    assert_eq!(p.param_count(), p.arch().param_count());
}

#[test]
fn param_count_laws() {
    // the middle layer of a single-channel stack has P = O = 1 for both groups
    let two_group = Architecture::new(1, 1, None, 1, 3, Activation::Identity).unwrap();
    let middle = &two_group.layouts()[1];
    assert_eq!(middle.len, 8);
    let mut bad = two_group.clone();
    bad.layers = 0;
    assert!(SharedParams::zeros(bad).is_err());
    // one parameter vector serves every item count
    let a = arch(true, 48, 3, Activation::Relu);
    let p = SharedParams::init(a, &mut SeededRng::new(1)).unwrap();
    let mut rng = SeededRng::new(2);
    for n in [50, 200] {
        let s = rand_state(p.arch(), 0, n, 4, &mut rng);
        let q = p.forward(&s).unwrap();
        assert_eq!(q.rows(), n);
    }
}

#[test]
fn zero_upstream_gives_zero_gradient() {
    let a = arch(true, 4, 3, Activation::Tanh);
    let mut rng = SeededRng::new(3);
    let p = SharedParams::init(a.clone(), &mut rng).unwrap();
    let s = rand_state(&a, 1, 3, 2, &mut rng);
    let g = p.backward(&s, &Matrix::zeros(3, 2)).unwrap();
    assert!(g.iter().all(|&v| v == 0.0));
}

fn loss_at(p: &SharedParams, s: &PhaseInput, up: &Matrix) -> f64 {
    let q = p.forward(s).unwrap();
    q.as_slice().iter().zip(up.as_slice()).map(|(a, b)| a * b).sum()
}

#[test]
fn backward_matches_finite_differences() {
    let mut rng = SeededRng::new(11);
    for case in 0..10 {
        let a = arch(case % 2 == 0, 3, 3, Activation::Tanh);
        let p = SharedParams::init(a.clone(), &mut rng).unwrap();
        let k = case % 3;
        let s = rand_state(&a, k, 2 + case % 3, if a.has_context() { 2 } else { 0 }, &mut rng);
        let up = rand_matrix(s.i.rows(), 2, &mut rng);
        let g = p.backward(&s, &up).unwrap();
        let h = 1e-5;
        for t in 0..p.param_count() {
            let mut plus = p.clone();
            plus.scalars_mut()[t] += h;
            let mut minus = p.clone();
            minus.scalars_mut()[t] -= h;
            let fd = (loss_at(&plus, &s, &up) - loss_at(&minus, &s, &up)) / (2.0 * h);
            let denom = fd.abs().max(g[t].abs()).max(1e-6);
            assert!((fd - g[t]).abs() / denom < 1e-4, "case {case} scalar {t}: fd {fd} vs {}", g[t]);
        }
    }
}

#[test]
fn tied_gradient_is_sum_of_dense_gradients() {
    let mut rng = SeededRng::new(12);
    for case in 0..6 {
        let a = arch(case % 2 == 1, 3, 3, Activation::Tanh);
        let p = SharedParams::init(a.clone(), &mut rng).unwrap();
        let (k, n, u) = (case % 3, 2 + case % 2, if a.has_context() { 2 } else { 0 });
        let s = rand_state(&a, k, n, u, &mut rng);
        let up = rand_matrix(n, 2, &mut rng);
        let shared = p.backward(&s, &up).unwrap();
        let dense = project_params(&p, k, n, u).unwrap();
        let dg = dense.backward(&s, &up).unwrap();
        let tied = tie_gradient(&p, &dense, &dg).unwrap();
        for (a, b) in shared.iter().zip(&tied) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn empty_context_group_is_neutral() {
    let mut rng = SeededRng::new(13);
    let without = arch(false, 3, 3, Activation::Tanh);
    let with = arch(true, 3, 3, Activation::Tanh);
    let p = SharedParams::init(without.clone(), &mut rng).unwrap();
    let mut q = SharedParams::init(with.clone(), &mut rng).unwrap();
    // copy every block the two architectures share
    for (l, lay) in without.layouts().iter().enumerate() {
        for &g in &lay.out_groups {
            let gid = without.groups[g].id;
            for o in 0..lay.out_width {
                q.set(with.bias_index(l, gid, o).unwrap(), p.scalars()[without.bias_index(l, gid, o).unwrap()]);
                for p_ in 0..lay.in_widths[g] {
                    q.set(
                        with.self_index(l, gid, o, p_).unwrap(),
                        p.scalars()[without.self_index(l, gid, o, p_).unwrap()],
                    );
                }
                for src in [GroupId::X, GroupId::I] {
                    let w = lay.in_widths[without.group_index(src).unwrap()];
                    for p_ in 0..w {
                        q.set(
                            with.pool_index(l, gid, src, o, p_).unwrap(),
                            p.scalars()[without.pool_index(l, gid, src, o, p_).unwrap()],
                        );
                    }
                }
            }
        }
    }
    let mut s = rand_state(&without, 2, 4, 0, &mut rng);
    s.u = Matrix::zeros(0, 2);
    assert!(p.forward(&s).unwrap().max_abs_diff(&q.forward(&s).unwrap()) < 1e-12);
}

#[test]
fn local_only_rows_depend_on_own_item() {
    let a = arch(true, 4, 3, Activation::Tanh).with_local_only(true);
    let mut rng = SeededRng::new(14);
    let p = SharedParams::init(a.clone(), &mut rng).unwrap();
    let s = rand_state(&a, 1, 4, 2, &mut rng);
    let q = p.forward(&s).unwrap();
    let mut s2 = s.clone();
    s2.i.row_mut(2).copy_from_slice(&[0.3, -0.2, 0.9]);
    s2.x.row_mut(0)[0] += 1.0;
    let q2 = p.forward(&s2).unwrap();
    for r in 0..4 {
        let diff: f64 = q.row(r).iter().zip(q2.row(r)).map(|(a, b)| (a - b).abs()).sum();
        assert_eq!(diff > 0.0, r == 2, "row {r}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equi_invariance(seed in 0u64..100_000, k in 0usize..3, n in 1usize..6, ctx in 0usize..3) {
        let mut rng = SeededRng::new(seed);
        let a = arch(true, 5, 3, Activation::Relu);
        let p = SharedParams::init(a.clone(), &mut rng).unwrap();
        let s = rand_state(&a, k, n, ctx, &mut rng);
        let sigma = Permutation::random_for(&s, &mut rng);
        let lhs = p.forward(&apply_permutation(&sigma, &s).unwrap()).unwrap();
        let rhs = permute_rows(&sigma.i, &p.forward(&s).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-10);
        // permuting only the selected/context groups leaves the output fixed
        let mut only_xu = sigma.clone();
        only_xu.i = Perm::identity(n);
        let inv = p.forward(&apply_permutation(&only_xu, &s).unwrap()).unwrap();
        prop_assert!(inv.max_abs_diff(&p.forward(&s).unwrap()) <= 1e-10);
    }

    #[test]
    fn shared_equals_dense(seed in 0u64..100_000, k in 0usize..3, n in 1usize..5, ctx in 0usize..3) {
        let mut rng = SeededRng::new(seed);
        let a = arch(true, 3, 3, Activation::Softplus);
        let p = SharedParams::init(a.clone(), &mut rng).unwrap();
        let s = rand_state(&a, k, n, ctx, &mut rng);
        let dense = project_params(&p, k, n, ctx).unwrap();
        prop_assert!(dense.forward(&s).unwrap().max_abs_diff(&p.forward(&s).unwrap()) <= 1e-10);
    }

    #[test]
    fn document_round_trip_is_bit_exact(seed in 0u64..100_000) {
        let mut rng = SeededRng::new(seed);
        let a = arch(true, 4, 3, Activation::Relu);
        let sets = vec![SharedParams::init(a.clone(), &mut rng).unwrap(), SharedParams::init(a, &mut rng).unwrap()];
        let doc = ParamDocument::from_sets(&sets, &[0, 0, 1]).unwrap();
        let back = ParamDocument::from_json(&doc.to_json().unwrap()).unwrap();
        let (sets2, map) = back.to_sets().unwrap();
        prop_assert_eq!(map, vec![0, 0, 1]);
        for (x, y) in sets.iter().zip(&sets2) {
            let bx: Vec<u64> = x.scalars().iter().map(|v| v.to_bits()).collect();
            let by: Vec<u64> = y.scalars().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bx, by);
        }
    }
}
