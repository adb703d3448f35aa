//! Finite-difference checks shared by the core tests and the acceptance suite.

use dance_core::cosearch::search::cost_hw_graph;
use dance_core::cosearch::supernet::cross_entropy;
use dance_core::cosearch::{SuperNet, SuperNetConfig};
use dance_core::evaluator::{EvaluatorModel, NoiseSource};
use dance_core::nn::gradcheck::{gradcheck, GradcheckReport};
use dance_core::nn::layers::BatchNorm;
use dance_core::nn::loss::{gumbel_softmax, sample_gumbel};
use dance_core::nn::tape::{full_segment, segments_from_sizes, uniform_segments};
use dance_core::nn::{Bound, Dense, Matrix, Mode, ParamSet, ResidualMlp, Tape, Var};
use dance_core::objective::CostFunctionSpec;
use dance_core::workload::NUM_OPS;
use dance_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LAYER_TOL: f64 = 1e-4;
pub const END_TO_END_TOL: f64 = 1e-3;

fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

/// Reduces a node to a scalar through a fixed random projection so that
/// every output entry carries a distinct weight.
fn project(t: &mut Tape, v: Var, seed: u64) -> Result<Var> {
    let (r, c) = t.shape(v);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = t.constant(rand_matrix(&mut rng, r, c, -1.0, 1.0));
    let p = t.mul(v, w)?;
    Ok(t.sum(p))
}

type Check = (&'static str, GradcheckReport);

/// Every tape primitive and layer type.
pub fn layer_checks() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = rand_matrix(&mut rng, 4, 3, -1.0, 1.0);
    let b = rand_matrix(&mut rng, 3, 5, -1.0, 1.0);
    let c = rand_matrix(&mut rng, 4, 3, -1.0, 1.0);
    let row = rand_matrix(&mut rng, 1, 3, -1.0, 1.0);
    let pos = rand_matrix(&mut rng, 4, 3, 0.5, 2.0);
    let s = rand_matrix(&mut rng, 1, 1, -1.0, 1.0);
    let k = rand_matrix(&mut rng, 4, 3, -1.0, 1.0);
    let wide = rand_matrix(&mut rng, 3, 9, -2.0, 2.0);
    let noise = sample_gumbel(&mut rng, (3, 9));
    let target = rand_matrix(&mut rng, 4, 3, 0.5, 2.0);

    let mut out: Vec<Check> = Vec::new();
    let tol = LAYER_TOL;
    out.push(("matmul", gradcheck(|t, v| { let y = t.matmul(v[0], v[1])?; project(t, y, 1) }, &[a.clone(), b.clone()], tol)?));
    out.push(("add", gradcheck(|t, v| { let y = t.add(v[0], v[1])?; project(t, y, 2) }, &[a.clone(), c.clone()], tol)?));
    out.push(("sub", gradcheck(|t, v| { let y = t.sub(v[0], v[1])?; project(t, y, 3) }, &[a.clone(), c.clone()], tol)?));
    out.push(("mul", gradcheck(|t, v| { let y = t.mul(v[0], v[1])?; project(t, y, 4) }, &[a.clone(), c.clone()], tol)?));
    out.push(("add_row", gradcheck(|t, v| { let y = t.add_row(v[0], v[1])?; project(t, y, 5) }, &[a.clone(), row.clone()], tol)?));
    out.push(("mul_row", gradcheck(|t, v| { let y = t.mul_row(v[0], v[1])?; project(t, y, 6) }, &[a.clone(), row.clone()], tol)?));
    out.push(("mul_scalar", gradcheck(|t, v| { let y = t.mul_scalar(v[0], v[1])?; project(t, y, 7) }, &[a.clone(), s.clone()], tol)?));
    out.push(("scale", gradcheck(|t, v| { let y = t.scale(v[0], -2.5); project(t, y, 8) }, std::slice::from_ref(&a), tol)?));
    out.push(("add_const", gradcheck(|t, v| { let y = t.add_const(v[0], &k)?; let y = t.square(y); project(t, y, 9) }, std::slice::from_ref(&a), tol)?));
    out.push(("relu", gradcheck(|t, v| { let y = t.relu(v[0]); project(t, y, 10) }, std::slice::from_ref(&a), tol)?));
    out.push(("exp", gradcheck(|t, v| { let y = t.exp(v[0]); project(t, y, 11) }, std::slice::from_ref(&a), tol)?));
    out.push(("ln", gradcheck(|t, v| { let y = t.ln(v[0]); project(t, y, 12) }, std::slice::from_ref(&pos), tol)?));
    out.push(("square", gradcheck(|t, v| { let y = t.square(v[0]); project(t, y, 13) }, std::slice::from_ref(&a), tol)?));
    out.push(("mean", gradcheck(|t, v| { let y = t.square(v[0]); Ok(t.mean(y)) }, std::slice::from_ref(&a), tol)?));
    out.push(("sum_squares", gradcheck(|t, v| Ok(t.sum_squares(v[0])), std::slice::from_ref(&a), tol)?));
    out.push(("concat_cols", gradcheck(|t, v| { let y = t.concat_cols(&[v[0], v[1]])?; project(t, y, 14) }, &[a.clone(), c.clone()], tol)?));
    out.push(("slice_cols", gradcheck(|t, v| { let y = t.slice_cols(v[0], 1, 3)?; project(t, y, 15) }, std::slice::from_ref(&a), tol)?));
    let segs = segments_from_sizes(&[2, 3, 4]);
    out.push(("softmax", gradcheck(|t, v| { let y = t.softmax(v[0], segs.clone())?; project(t, y, 16) }, std::slice::from_ref(&wide), tol)?));
    out.push(("log_softmax", gradcheck(|t, v| { let y = t.log_softmax(v[0], segs.clone())?; project(t, y, 17) }, std::slice::from_ref(&wide), tol)?));
    out.push((
        "nll",
        gradcheck(|t, v| { let lp = t.log_softmax(v[0], full_segment(3))?; t.nll(lp, vec![0, 2, 1, 2]) }, std::slice::from_ref(&a), tol)?,
    ));
    out.push(("msre", gradcheck(|t, v| t.msre(v[0], target.clone()), std::slice::from_ref(&pos), tol)?));
    out.push((
        "batch_norm_train",
        gradcheck(
            |t, v| {
                let (y, _, _) = t.batch_norm_train(v[0], v[1], v[2], 1e-5)?;
                project(t, y, 18)
            },
            &[a.clone(), row.clone(), rand_matrix(&mut rng, 1, 3, -1.0, 1.0)],
            tol,
        )?,
    ));
    out.push((
        "gumbel_softmax",
        gradcheck(
            |t, v| {
                let y = gumbel_softmax(t, v[0], 0.7, Some(&noise), &uniform_segments(3, 3), false)?;
                project(t, y, 19)
            },
            std::slice::from_ref(&wide),
            tol,
        )?,
    ));
    out.push((
        "cross_entropy_smoothed",
        gradcheck(|t, v| cross_entropy(t, v[0], &[2, 0, 1, 1], 0.1), std::slice::from_ref(&a), tol)?,
    ));

    let mut params = ParamSet::new();
    let dense = Dense::new(&mut params, "fc", 3, 5, &mut rng);
    let dense_vals = params.values().to_vec();
    out.push((
        "dense",
        gradcheck(
            |t, v| {
                let bound = Bound::from_vars(v[1..].to_vec());
                let y = dense.forward(t, &bound, v[0])?;
                project(t, y, 20)
            },
            &[vec![a.clone()], dense_vals].concat(),
            tol,
        )?,
    ));

    let mut bn_params = ParamSet::new();
    let mut bn = BatchNorm::new(&mut bn_params, "bn", 3);
    bn.running_mean = ndarray::arr1(&[0.2, -0.1, 0.4]);
    bn.running_var = ndarray::arr1(&[0.5, 1.5, 2.0]);
    let bn_vals = vec![row.clone(), rand_matrix(&mut rng, 1, 3, -1.0, 1.0)];
    for (name, mode) in [("batch_norm_layer_train", Mode::Train), ("batch_norm_layer_eval", Mode::Eval)] {
        out.push((
            name,
            gradcheck(
                |t, v| {
                    let bound = Bound::from_vars(v[1..].to_vec());
                    let (y, _) = bn.forward(t, &bound, v[0], mode)?;
                    project(t, y, 21)
                },
                &[vec![a.clone()], bn_vals.clone()].concat(),
                tol,
            )?,
        ));
    }

    let x = rand_matrix(&mut rng, 6, 5, -1.0, 1.0);
    let y = rand_matrix(&mut rng, 6, 2, 0.5, 2.0);
    for (name, with_bn, mode) in [
        ("residual_mlp", false, Mode::Eval),
        ("residual_mlp_bn_train", true, Mode::Train),
        ("residual_mlp_bn_eval", true, Mode::Eval),
    ] {
        let mlp = ResidualMlp::new(5, 7, 2, with_bn, &mut rng);
        let vals = mlp.params.values().to_vec();
        out.push((
            name,
            gradcheck(
                |t, v| {
                    let fwd = mlp.forward_with(t, Bound::from_vars(v[1..].to_vec()), v[0], mode)?;
                    let e = t.exp(fwd.output);
                    t.msre(e, y.clone())
                },
                &[vec![x.clone()], vals].concat(),
                tol,
            )?,
        ));
    }

    let net = SuperNet::new(2, 5, 3, &SuperNetConfig { width: 4, hidden: [2, 3, 2, 3, 2, 3] }, &mut rng)?;
    let alpha = rand_matrix(&mut rng, 1, 2 * NUM_OPS, -1.0, 1.0);
    let arch_noise = sample_gumbel(&mut rng, (1, 2 * NUM_OPS));
    let xs = rand_matrix(&mut rng, 5, 5, -1.0, 1.0);
    let w_vals = net.params.values().to_vec();
    out.push((
        "supernet_mixture",
        gradcheck(
            |t, v| {
                let bound = Bound::from_vars(v[1..].to_vec());
                let probs = net.relaxed(t, v[0], 1.3, Some(&arch_noise), dance_core::cosearch::Relaxation::Soft)?;
                let xv = t.constant(xs.clone());
                let logits = net.logits(t, &bound, xv, probs)?;
                let ce = cross_entropy(t, logits, &[0, 1, 2, 1, 0], 0.0)?;
                let reg = net.weight_norm(t, &bound)?;
                let reg = t.scale(reg, 1e-2);
                t.add(ce, reg)
            },
            &[vec![alpha], w_vals].concat(),
            tol,
        )?,
    ));

    let costs = rand_matrix(&mut rng, 3, 3, 0.5, 2.0);
    for (name, spec) in [("cost_hw_edap", CostFunctionSpec::Edap), ("cost_hw_linear", CostFunctionSpec::balanced())] {
        out.push((name, gradcheck(|t, v| cost_hw_graph(t, v[0], &spec), std::slice::from_ref(&costs), tol)?));
    }
    Ok(out)
}

/// Random points on the product of simplices.
fn simplex_rows(rng: &mut ChaCha8Rng, rows: usize, positions: usize) -> Matrix {
    let mut m = rand_matrix(rng, rows, positions * NUM_OPS, 0.05, 1.0);
    for mut r in m.rows_mut() {
        for p in 0..positions {
            let mut seg = r.slice_mut(ndarray::s![p * NUM_OPS..(p + 1) * NUM_OPS]);
            let total = seg.sum();
            seg.mapv_inplace(|v| v / total);
        }
    }
    m
}

/// The frozen evaluator on its own, and composed with the cost function and
/// the Gumbel relaxation of `alpha`. Gumbel noise is frozen.
pub fn end_to_end_checks(model: &EvaluatorModel, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = model.arch_space.positions;
    let arch = simplex_rows(&mut rng, 3, positions);
    let hw_noise = sample_gumbel(&mut rng, (3, model.hw_dim()));
    let mut out: Vec<Check> = Vec::new();
    out.push((
        "evaluator_wrt_encoding",
        gradcheck(
            |t, v| {
                let c = model.cost_graph(t, v[0], NoiseSource::Fixed(&hw_noise))?;
                let l = t.ln(c);
                project(t, l, 30)
            },
            &[arch],
            END_TO_END_TOL,
        )?,
    ));

    let alpha = rand_matrix(&mut rng, 1, positions * NUM_OPS, -1.0, 1.0);
    let arch_noise = sample_gumbel(&mut rng, (1, positions * NUM_OPS));
    let one_noise = sample_gumbel(&mut rng, (1, model.hw_dim()));
    for (name, spec) in [
        ("cost_hw_edap_of_relaxed_alpha", CostFunctionSpec::Edap),
        ("cost_hw_linear_of_relaxed_alpha", CostFunctionSpec::latency_oriented()),
    ] {
        out.push((
            name,
            gradcheck(
                |t, v| {
                    let p = gumbel_softmax(t, v[0], 1.0, Some(&arch_noise), &uniform_segments(positions, NUM_OPS), false)?;
                    let c = model.cost_graph(t, p, NoiseSource::Fixed(&one_noise))?;
                    cost_hw_graph(t, c, &spec)
                },
                std::slice::from_ref(&alpha),
                END_TO_END_TOL,
            )?,
        ));
    }
    Ok(out)
}
