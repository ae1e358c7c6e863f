//! Property suites for the weight-shared networks: equi-invariance, tied
//! gradients, the projection identity behind local optimality and the
//! invariance of the permutation-augmented loss.

use crate::einet::{
    apply_permutation, permute_rows, project_params, tie_gradient, Activation, Architecture, DenseGrad, DenseNet,
    Permutation, PhaseInput, SharedParams,
};
use crate::error::Result;
use crate::math::{Matrix, SeededRng};

use super::{CheckReport, Control};

pub const EI_TOL: f64 = 1e-10;
pub const GRAD_TOL: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-5;
pub const PROJECTION_TOL: f64 = 1e-8;
pub const STATIONARY_TOL: f64 = 1e-10;
pub const LOSS_TOL: f64 = 1e-10;
/// Deviation an untied network must exceed for a control to count as caught.
pub const CONTROL_THRESHOLD: f64 = 1e-3;

pub(crate) fn rand_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect()).expect("sized")
}

pub(crate) fn rand_state(arch: &Architecture, k: usize, n_items: usize, n_ctx: usize, rng: &mut SeededRng) -> PhaseInput {
    PhaseInput {
        x: rand_matrix(k, arch.groups[0].width, rng),
        i: rand_matrix(n_items, arch.item_width(), rng),
        u: rand_matrix(n_ctx, arch.context_width().unwrap_or(1), rng),
    }
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random `(θ, s, σ)` over phases `{0,1,2}`, `N ∈ {4,8}`, `C ∈ {1,5}` and
/// context sizes `{0,2}`: `max |Q(σ s) − σ_i Q(s)|`. The control unties one
/// weight of the projected dense network.
pub fn check_ei(seed: u64, trials: usize) -> Result<CheckReport> {
    let mut rng = SeededRng::new(seed);
    let mut worst = 0.0f64;
    let mut control = 0.0f64;
    for t in 0..trials {
        let k = rng.below(3);
        let n = [4, 8][rng.below(2)];
        let c = [1, 5][rng.below(2)];
        let ctx = [0, 2][rng.below(2)];
        let act = [Activation::Relu, Activation::Tanh][t % 2];
        let arch = Architecture::new(3, c, (ctx > 0).then_some(2), 8, 3, act)?;
        let theta = SharedParams::init(arch.clone(), &mut rng)?;
        let s = rand_state(&arch, k, n - k, ctx, &mut rng);
        let sigma = Permutation::random_for(&s, &mut rng);
        let moved = apply_permutation(&sigma, &s)?;
        let q = theta.forward(&s)?;
        let expect = permute_rows(&sigma.i, &q)?;
        worst = worst.max(theta.forward(&moved)?.max_abs_diff(&expect));

        if t < 20 {
            let mut dense = project_params(&theta, k, n - k, ctx)?;
            dense.params_mut()[0] += 0.5;
            let dq = dense.forward(&s)?;
            control = control.max(dense.forward(&moved)?.max_abs_diff(&permute_rows(&sigma.i, &dq)?));
        }
    }
    Ok(CheckReport::new("ei", seed, trials, worst, EI_TOL)
        .with_control(Control::new(control, CONTROL_THRESHOLD))
        .with_note("random (theta, s, sigma); control perturbs one projected dense weight"))
}

/// `max |Q(σ s) − σ_i Q(s)|` of one network over `trials` random states with
/// `k` selected, `n_items` unselected and `n_ctx` context items.
pub fn ei_deviation(
    theta: &SharedParams,
    k: usize,
    n_items: usize,
    n_ctx: usize,
    trials: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let s = rand_state(theta.arch(), k, n_items, n_ctx, rng);
        let sigma = Permutation::random_for(&s, rng);
        let expect = permute_rows(&sigma.i, &theta.forward(&s)?)?;
        worst = worst.max(theta.forward(&apply_permutation(&sigma, &s)?)?.max_abs_diff(&expect));
    }
    Ok(worst)
}

/// Analytic tied gradients of `Σ U∘Q` against central differences with
/// step `FD_STEP`, every scalar of every case (tanh).
pub fn check_gradients(seed: u64, trials: usize) -> Result<CheckReport> {
    let mut rng = SeededRng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let k = rng.below(3);
        let n = k + 1 + rng.below(4);
        let c = 1 + rng.below(3);
        let ctx = rng.below(3);
        let arch = Architecture::new(2, c, (ctx > 0).then_some(2), 3, 2 + rng.below(2), Activation::Tanh)?;
        let theta = SharedParams::init(arch.clone(), &mut rng)?;
        let s = rand_state(&arch, k, n - k, ctx, &mut rng);
        let up = rand_matrix(n - k, c, &mut rng);
        let g = theta.backward(&s, &up)?;
        let loss = |p: &SharedParams| -> Result<f64> {
            let q = p.forward(&s)?;
            Ok(q.as_slice().iter().zip(up.as_slice()).map(|(a, b)| a * b).sum())
        };
        let mut probe = theta.clone();
        for (j, &gj) in g.iter().enumerate() {
            let base = theta.scalars()[j];
            probe.set(j, base + FD_STEP);
            let hi = loss(&probe)?;
            probe.set(j, base - FD_STEP);
            let lo = loss(&probe)?;
            probe.set(j, base);
            let fd = (hi - lo) / (2.0 * FD_STEP);
            let denom = fd.abs().max(gj.abs()).max(1e-6);
            worst = worst.max((fd - gj).abs() / denom);
        }
    }
    Ok(CheckReport::new("grad", seed, trials, worst, GRAD_TOL)
        .with_note("relative error |fd-g|/max(|fd|,|g|,1e-6), central differences, tanh"))
}

/// A batch of states with equivariantly augmented targets.
struct Batch {
    states: Vec<PhaseInput>,
    targets: Vec<Matrix>,
    perms: Vec<Permutation>,
}

impl Batch {
    /// `(σ s_b, σ_i T_b)` for every `σ` and `b`.
    fn augmented(&self) -> Result<Vec<(PhaseInput, Matrix)>> {
        let mut out = Vec::with_capacity(self.perms.len() * self.states.len());
        for sigma in &self.perms {
            for (s, t) in self.states.iter().zip(&self.targets) {
                out.push((apply_permutation(sigma, s)?, permute_rows(&sigma.i, t)?));
            }
        }
        Ok(out)
    }
}

fn residual_upstream(q: &Matrix, t: &Matrix) -> Matrix {
    let mut up = q.clone();
    for (u, v) in up.as_mut_slice().iter_mut().zip(t.as_slice()) {
        *u = 2.0 * (*u - v);
    }
    up
}

/// `L_Ω` over the augmented batch.
fn dense_loss(dense: &DenseNet, aug: &[(PhaseInput, Matrix)]) -> Result<f64> {
    let mut total = 0.0;
    for (s, t) in aug {
        let q = dense.forward(s)?;
        total += q.as_slice().iter().zip(t.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(total)
}

fn dense_grad(dense: &DenseNet, aug: &[(PhaseInput, Matrix)]) -> Result<DenseGrad> {
    let mut g = vec![0.0; dense.param_count()];
    for (s, t) in aug {
        let up = residual_upstream(&dense.forward(s)?, t);
        for (a, b) in g.iter_mut().zip(dense.backward(s, &up)?.0) {
            *a += b;
        }
    }
    Ok(DenseGrad(g))
}

fn shared_grad(theta: &SharedParams, aug: &[(PhaseInput, Matrix)]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; theta.param_count()];
    for (s, t) in aug {
        let up = residual_upstream(&theta.forward(s)?, t);
        for (a, b) in g.iter_mut().zip(theta.backward(s, &up)?) {
            *a += b;
        }
    }
    Ok(g)
}

struct Case {
    theta: SharedParams,
    k: usize,
    m: usize,
    ctx: usize,
}

fn projection_case(rng: &mut SeededRng) -> Result<Case> {
    let k = rng.below(4);
    let m = 1 + rng.below(4);
    let ctx = [0, 2][rng.below(2)];
    let c = 1 + rng.below(2);
    let arch = Architecture::new(2, c, (ctx > 0).then_some(2), 3, 2 + rng.below(2), Activation::Tanh)?;
    Ok(Case {
        theta: SharedParams::init(arch, rng)?,
        k,
        m,
        ctx,
    })
}

fn random_batch(case: &Case, size: usize, rng: &mut SeededRng) -> Batch {
    let arch = case.theta.arch();
    Batch {
        states: (0..size).map(|_| rand_state(arch, case.k, case.m, case.ctx, rng)).collect(),
        targets: (0..size).map(|_| rand_matrix(case.m, arch.commands, rng)).collect(),
        perms: Permutation::enumerate(case.k, case.m, case.ctx),
    }
}

/// Orthonormal basis of the span of `cols` (modified Gram–Schmidt, two
/// passes).
fn orthonormal_basis(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for c in cols {
        let mut v = c.clone();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Targets `T = Q(θ) − R` with residuals `R` orthogonal to every output
/// Jacobian column, so that `θ` is a stationary point of the tied loss.
fn stationary_batch(case: &Case, rng: &mut SeededRng) -> Result<Batch> {
    let arch = case.theta.arch();
    let p = case.theta.param_count();
    let per_state = case.m * arch.commands;
    let size = (p + 8).div_ceil(per_state);
    let mut batch = random_batch(case, size, rng);
    // Jacobian columns: ∂(stacked outputs)/∂θ_j
    let rows = size * per_state;
    let mut cols = vec![vec![0.0; rows]; p];
    let mut outputs = Vec::with_capacity(size);
    for (b, s) in batch.states.iter().enumerate() {
        outputs.push(case.theta.forward(s)?);
        for e in 0..per_state {
            let mut up = Matrix::zeros(case.m, arch.commands);
            up.as_mut_slice()[e] = 1.0;
            for (j, v) in case.theta.backward(s, &up)?.into_iter().enumerate() {
                cols[j][b * per_state + e] = v;
            }
        }
    }
    let basis = orthonormal_basis(&cols);
    let mut r: Vec<f64> = (0..rows).map(|_| rng.uniform(-0.5, 0.5)).collect();
    for _ in 0..2 {
        for q in &basis {
            let d: f64 = r.iter().zip(q).map(|(x, y)| x * y).sum();
            r.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
        }
    }
    batch.targets = outputs
        .iter()
        .enumerate()
        .map(|(b, q)| {
            let mut t = q.clone();
            for (e, v) in t.as_mut_slice().iter_mut().enumerate() {
                *v -= r[b * per_state + e];
            }
            t
        })
        .collect();
    Ok(batch)
}

/// (a) the tied gradient of the augmented loss equals the tie-summed dense
/// gradient at `ω(θ)`; (b) at a constructed stationary point of the tied
/// loss, every symmetric direction `ω(d)` has zero directional derivative of
/// the dense loss. Every case enumerates `S_k × S_{N-k} × S_{|U|}` in full.
pub fn check_theorem1_projection(seed: u64, trials: usize) -> Result<CheckReport> {
    let mut rng = SeededRng::new(seed);
    let mut worst = 0.0f64;
    let mut control = f64::INFINITY;
    let (mut stationary, mut directional) = (0.0f64, 0.0f64);
    for t in 0..trials {
        let case = projection_case(&mut rng)?;
        let batch = random_batch(&case, 3, &mut rng);
        let aug = batch.augmented()?;
        let omega = project_params(&case.theta, case.k, case.m, case.ctx)?;
        let tied = shared_grad(&case.theta, &aug)?;
        let summed = tie_gradient(&case.theta, &omega, &dense_grad(&omega, &aug)?)?;
        worst = worst.max(max_abs(&tied, &summed));

        // control: one dense weight drifts away from its tie
        let mut untied = omega.clone();
        let j = rng.below(untied.param_count());
        untied.params_mut()[j] += 0.3;
        let off = tie_gradient(&case.theta, &untied, &dense_grad(&untied, &aug)?)?;
        control = control.min(max_abs(&tied, &off));

        if t % 5 == 0 {
            let stat = stationary_batch(&case, &mut rng)?;
            // EI makes every augmented copy contribute the same gradient
            let base: Vec<(PhaseInput, Matrix)> = stat.states.iter().cloned().zip(stat.targets.iter().cloned()).collect();
            let scale = stat.perms.len() as f64;
            let g_theta: Vec<f64> = shared_grad(&case.theta, &base)?.into_iter().map(|v| v * scale).collect();
            let norm = g_theta.iter().map(|v| v * v).sum::<f64>().sqrt();
            stationary = stationary.max(norm);
            let g_dense = dense_grad(&omega, &stat.augmented()?)?;
            for _ in 0..3 {
                let d: Vec<f64> = (0..case.theta.param_count()).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let dir = project_params(&SharedParams::new(case.theta.arch().clone(), d)?, case.k, case.m, case.ctx)?;
                let dd: f64 = g_dense.0.iter().zip(dir.params()).map(|(a, b)| a * b).sum();
                directional = directional.max(dd.abs());
            }
        }
    }
    Ok(CheckReport::new("theorem1", seed, trials, worst, PROJECTION_TOL)
        .with_control(Control::new(control, CONTROL_THRESHOLD))
        .with_part("stationary_gradient_norm", stationary, STATIONARY_TOL)
        .with_part("symmetric_directional_derivative", directional, PROJECTION_TOL)
        .with_note("full enumeration of S_k x S_(N-k) x S_|U|; stationary points every fifth case"))
}

/// `L_Ω(ω(θ)+ω₀) = L_Ω(ω(θ)+σ(ω₀))` for random dense offsets `ω₀` and 20
/// sampled `σ` per case.
pub fn check_loss_invariance(seed: u64, trials: usize) -> Result<CheckReport> {
    let mut rng = SeededRng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let case = projection_case(&mut rng)?;
        let batch = random_batch(&case, 3, &mut rng);
        let aug = batch.augmented()?;
        let omega = project_params(&case.theta, case.k, case.m, case.ctx)?;
        let offset = DenseNet::init(case.theta.arch(), case.k, case.m, case.ctx, &mut rng)?;
        let base = dense_loss(&omega.add(&offset)?, &aug)?;
        for _ in 0..20 {
            let sigma = Permutation::random_for(&batch.states[0], &mut rng);
            let moved = dense_loss(&omega.add(&offset.permuted(&sigma)?)?, &aug)?;
            worst = worst.max((base - moved).abs());
        }
    }
    Ok(CheckReport::new("lemma", seed, trials, worst, LOSS_TOL).with_note("20 sampled sigma per case"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_small_runs() {
        for r in [
            check_ei(1, 40).unwrap(),
            check_gradients(2, 5).unwrap(),
            check_theorem1_projection(3, 5).unwrap(),
            check_loss_invariance(4, 5).unwrap(),
        ] {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn zero_weights_zero_targets_give_zero_gradients() {
        let arch = Architecture::new(2, 1, None, 3, 2, Activation::Tanh).unwrap();
        let theta = SharedParams::zeros(arch).unwrap();
        let case = Case {
            theta,
            k: 1,
            m: 2,
            ctx: 0,
        };
        let mut batch = random_batch(&case, 2, &mut SeededRng::new(0));
        batch.targets.iter_mut().for_each(|t| *t = Matrix::zeros(2, 1));
        let aug = batch.augmented().unwrap();
        let omega = project_params(&case.theta, 1, 2, 0).unwrap();
        assert!(shared_grad(&case.theta, &aug).unwrap().iter().all(|&v| v == 0.0));
        assert!(dense_grad(&omega, &aug).unwrap().0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn doubling_residuals_doubles_both_sides() {
        let mut rng = SeededRng::new(8);
        let case = projection_case(&mut rng).unwrap();
        let batch = random_batch(&case, 2, &mut rng);
        let aug = batch.augmented().unwrap();
        let doubled: Vec<(PhaseInput, Matrix)> = aug
            .iter()
            .map(|(s, t)| {
                let q = case.theta.forward(s).unwrap();
                let mut t2 = t.clone();
                for (v, qv) in t2.as_mut_slice().iter_mut().zip(q.as_slice()) {
                    *v = 2.0 * *v - qv;
                }
                (s.clone(), t2)
            })
            .collect();
        let omega = project_params(&case.theta, case.k, case.m, case.ctx).unwrap();
        let a = shared_grad(&case.theta, &aug).unwrap();
        let b = shared_grad(&case.theta, &doubled).unwrap();
        let da = dense_grad(&omega, &aug).unwrap().0;
        let db = dense_grad(&omega, &doubled).unwrap().0;
        assert!(a.iter().zip(&b).all(|(x, y)| (2.0 * x - y).abs() < 1e-10));
        assert!(da.iter().zip(&db).all(|(x, y)| (2.0 * x - y).abs() < 1e-10));
    }

    #[test]
    fn zero_offset_is_exactly_invariant() {
        let mut rng = SeededRng::new(9);
        let case = projection_case(&mut rng).unwrap();
        let batch = random_batch(&case, 2, &mut rng);
        let aug = batch.augmented().unwrap();
        let omega = project_params(&case.theta, case.k, case.m, case.ctx).unwrap();
        let zero = omega.with_params(vec![0.0; omega.param_count()]).unwrap();
        let sigma = Permutation::random_for(&batch.states[0], &mut rng);
        let a = dense_loss(&omega.add(&zero).unwrap(), &aug).unwrap();
        let b = dense_loss(&omega.add(&zero.permuted(&sigma).unwrap()).unwrap(), &aug).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identity_sigma_has_zero_deviation() {
        let arch = Architecture::new(3, 2, Some(2), 4, 3, Activation::Relu).unwrap();
        let mut rng = SeededRng::new(0);
        let theta = SharedParams::init(arch.clone(), &mut rng).unwrap();
        let s = rand_state(&arch, 1, 3, 2, &mut rng);
        let id = Permutation::identity_for(&s);
        let q = theta.forward(&s).unwrap();
        assert_eq!(theta.forward(&apply_permutation(&id, &s).unwrap()).unwrap(), q);
    }
}
