//! Central finite differences as an independent check of every
//! hand-derived gradient in the crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{biased_attention, biased_attention_grad_bias, HeadBias, MatRef, RelativeBins, TokenLayout};
use crate::geometry::{bilinear_sample, bilinear_sample_grad, FeatureMap};
use crate::nn::{sigmoid, Linear, Mlp};
use crate::volume::{blend_vacant, blend_vacant_grad_gate, fourier_features};

/// Step for perturbing feature-grid coordinates.
pub const EPS_COORD: f64 = 1e-4;
/// Step for perturbing parameters and features.
pub const EPS_PARAM: f64 = 1e-5;
/// Denominator floor of the relative error.
pub const REL_FLOOR: f64 = 1e-8;
pub const DEFAULT_TOL_ABS: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumcheckError {
    #[error("no gradient check registered for `{0}`")]
    UnknownOp(String),
    #[error("non-finite function value when perturbing coordinate {coordinate}")]
    NonFinite { coordinate: usize },
    #[error("step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("analytic gradient has {analytic} entries, numeric {numeric}")]
    LengthMismatch { analytic: usize, numeric: usize },
}

/// `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps` for every coordinate.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Result<Vec<f64>, NumcheckError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(NumcheckError::BadStep(eps));
    }
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + eps;
            let hi = f(&xp);
            xp[i] = x[i] - eps;
            let lo = f(&xp);
            xp[i] = x[i];
            if !(hi.is_finite() && lo.is_finite()) {
                return Err(NumcheckError::NonFinite { coordinate: i });
            }
            Ok((hi - lo) / (2.0 * eps))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub op: String,
    pub seed: u64,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Coordinate with the largest relative error.
    pub worst_coordinate: usize,
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub passed: bool,
}

/// A coordinate passes when its relative error is within `tol_rel` or its
/// absolute error within `tol_abs`.
pub fn compare(
    op: &str,
    seed: u64,
    analytic: &[f64],
    numeric: &[f64],
    tol_rel: f64,
    tol_abs: f64,
) -> Result<GradCheckReport, NumcheckError> {
    if analytic.len() != numeric.len() {
        return Err(NumcheckError::LengthMismatch { analytic: analytic.len(), numeric: numeric.len() });
    }
    let mut r = GradCheckReport {
        op: op.to_string(),
        seed,
        coordinates: analytic.len(),
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_coordinate: 0,
        tol_rel,
        tol_abs,
        passed: true,
    };
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(REL_FLOOR);
        if !(rel <= tol_rel || abs <= tol_abs) {
            r.passed = false;
        }
        if rel > r.max_rel_error || i == 0 {
            r.max_rel_error = rel;
            r.worst_coordinate = i;
        }
        r.max_abs_error = r.max_abs_error.max(abs);
    }
    Ok(r)
}

/// A scalar function, the point to check it at, and its analytic gradient.
pub struct Problem {
    pub x: Vec<f64>,
    pub eps: f64,
    pub f: ScalarFn,
    pub grad: GradFn,
}

pub type ScalarFn = Box<dyn Fn(&[f64]) -> f64>;
pub type GradFn = Box<dyn Fn(&[f64]) -> Vec<f64>>;

type Builder = fn(&mut ChaCha8Rng) -> Vec<Problem>;

/// Every operation with a hand-written gradient.
pub const REGISTRY: &[(&str, Builder)] = &[
    ("bilinear_sample", bilinear_problems),
    ("blend_vacant", blend_problems),
    ("blend_vacant_sqnorm", blend_sqnorm_problems),
    ("gate_mlp", gate_mlp_problems),
    ("posemb_mlp", posemb_problems),
    ("biased_attention_bins", attention_problems),
    ("temporal_fc", temporal_fc_problems),
];

pub fn registered_ops() -> impl Iterator<Item = &'static str> {
    REGISTRY.iter().map(|(n, _)| *n)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn weighted(w: &[f64], y: &[f64]) -> f64 {
    w.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Random linear read-out `w . sample(u, v)` at 50 points away from cell
/// edges, where the interpolant is smooth.
fn bilinear_problems(rng: &mut ChaCha8Rng) -> Vec<Problem> {
    let (h, w, c) = (6, 7, 3);
    let data = uniform(rng, h * w * c, 1.0);
    let fm = FeatureMap::new(h, w, c, data).expect("valid map");
    (0..50)
        .map(|_| {
            let u = rng.random_range(0..w - 1) as f64 + rng.random_range(0.01..0.99);
            let v = rng.random_range(0..h - 1) as f64 + rng.random_range(0.01..0.99);
            let wt = uniform(rng, c, 1.0);
            let (fm2, wt2) = (fm.clone(), wt.clone());
            let fm = fm.clone();
            Problem {
                x: vec![u, v],
                eps: EPS_COORD,
                f: Box::new(move |p| weighted(&wt, &bilinear_sample(&fm, p[0], p[1]))),
                grad: Box::new(move |p| {
                    let g = bilinear_sample_grad(&fm2, p[0], p[1]);
                    vec![weighted(&wt2, &g.d_u), weighted(&wt2, &g.d_v)]
                }),
            }
        })
        .collect()
}

/// `x = [f_sem, g, f_vac]`, loss `w . blend`.
fn blend_problems(rng: &mut ChaCha8Rng) -> Vec<Problem> {
    let c = 5;
    let w = uniform(rng, c, 1.0);
    let mut x = uniform(rng, c, 2.0);
    x.push(rng.random_range(0.05..0.95));
    x.extend(uniform(rng, c, 2.0));
    let w2 = w.clone();
    vec![Problem {
        x,
        eps: EPS_PARAM,
        f: Box::new(move |p| weighted(&w, &blend_vacant(&p[..c], p[c], &p[c + 1..]))),
        grad: Box::new(move |p| {
            let g = p[c];
            let mut out: Vec<f64> = w2.iter().map(|wi| g * wi).collect();
            out.push(weighted(&w2, &blend_vacant_grad_gate(&p[..c], &p[c + 1..])));
            out.extend(w2.iter().map(|wi| (1.0 - g) * wi));
            out
        }),
    }]
}

/// `||blend(f_sem, g, f_vac)||^2` as a function of the gate alone.
fn blend_sqnorm_problems(rng: &mut ChaCha8Rng) -> Vec<Problem> {
    let c = 6;
    let (s, v) = (uniform(rng, c, 2.0), uniform(rng, c, 2.0));
    let (s2, v2) = (s.clone(), v.clone());
    vec![Problem {
        x: vec![rng.random_range(0.05..0.95)],
        eps: EPS_PARAM,
        f: Box::new(move |p| blend_vacant(&s, p[0], &v).iter().map(|x| x * x).sum()),
        grad: Box::new(move |p| {
            let f = blend_vacant(&s2, p[0], &v2);
            vec![2.0 * weighted(&f, &blend_vacant_grad_gate(&s2, &v2))]
        }),
    }]
}

/// Gate `sigmoid(mlp(x))` w.r.t. the MLP parameters and its input.
fn gate_mlp_problems(rng: &mut ChaCha8Rng) -> Vec<Problem> {
    let (inp, hidden) = (6, 8);
    let mlp = Mlp::random(inp, hidden, 1, rng);
    let input = uniform(rng, inp, 1.0);
    let np = mlp.param_count();
    let mut x = mlp.params();
    x.extend(&input);
    let (m1, m2) = (mlp.clone(), mlp);
    vec![Problem {
        x,
        eps: EPS_PARAM,
        f: Box::new(move |p| {
            let mut m = m1.clone();
            m.set_params(&p[..np]);
            sigmoid(m.forward(&p[np..])[0])
        }),
        grad: Box::new(move |p| {
            let mut m = m2.clone();
            m.set_params(&p[..np]);
            let z = m.forward(&p[np..])[0];
            let s = sigmoid(z);
            let (gx, gp) = m.backward(&p[np..], &[s * (1.0 - s)]);
            gp.into_iter().chain(gx).collect()
        }),
    }]
}

/// `w . posemb(fourier(c))` w.r.t. the MLP parameters.
fn posemb_problems(rng: &mut ChaCha8Rng) -> Vec<Problem> {
    let (levels, hidden, c) = (3, 8, 5);
    let mlp = Mlp::random(6 * levels, hidden, c, rng);
    let coord = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let feats = fourier_features(coord, levels);
    let w = uniform(rng, c, 1.0);
    let (m1, m2, f1, w1) = (mlp.clone(), mlp.clone(), feats.clone(), w.clone());
    vec![Problem {
        x: mlp.params(),
        eps: EPS_PARAM,
        f: Box::new(move |p| {
            let mut m = m1.clone();
            m.set_params(p);
            weighted(&w1, &m.forward(&f1))
        }),
        grad: Box::new(move |p| {
            let mut m = m2.clone();
            m.set_params(p);
            m.backward(&feats, &w).1
        }),
    }]
}

fn mat(d: &[f64], rows: usize, cols: usize) -> MatRef<'_> {
    MatRef::new(d, rows, cols).expect("consistent shape")
}

/// `w . biased_attention(Q, K, V, B(bins))` w.r.t. all bin values of one
/// head, on 5 voxel and 3 text tokens.
fn attention_problems(rng: &mut ChaCha8Rng) -> Vec<Problem> {
    let dh = 4;
    let layout = TokenLayout {
        visual_coords: (0..5)
            .map(|_| [rng.random_range(-40.0..40.0), rng.random_range(-12.0..12.0), rng.random_range(-3.0..3.0)])
            .collect(),
        text_positions: vec![0.0, 1.0, 2.0],
    };
    let n = layout.len();
    let (q, k, v) = (uniform(rng, n * dh, 1.0), uniform(rng, n * dh, 1.0), uniform(rng, n * dh, 1.0));
    let w = uniform(rng, n * dh, 1.0);
    let bins = RelativeBins::new(&layout);
    let head = HeadBias::random(0.5, rng);
    let (b1, q1, k1, v1, w1) = (bins.clone(), q.clone(), k.clone(), v.clone(), w.clone());
    vec![Problem {
        x: head.params(),
        eps: EPS_PARAM,
        f: Box::new(move |p| {
            let b = b1.bias_matrix(&HeadBias::from_params(p));
            let out = biased_attention(mat(&q1, n, dh), mat(&k1, n, dh), mat(&v1, n, dh), &b).expect("shape");
            weighted(&w1, &out)
        }),
        grad: Box::new(move |p| {
            let b = bins.bias_matrix(&HeadBias::from_params(p));
            let gb = biased_attention_grad_bias(mat(&q, n, dh), mat(&k, n, dh), mat(&v, n, dh), &b, &w).expect("shape");
            bins.grad_to_bins(&gb).params()
        }),
    }]
}

/// `w . fc(x)` w.r.t. the layer parameters and the concatenated frames.
fn temporal_fc_problems(rng: &mut ChaCha8Rng) -> Vec<Problem> {
    let (c, frames) = (4, 2);
    let fc = Linear::random(frames * c, c, rng);
    let input = uniform(rng, frames * c, 1.0);
    let w = uniform(rng, c, 1.0);
    let np = fc.param_count();
    let mut x = fc.params();
    x.extend(&input);
    let (l1, l2, w1) = (fc.clone(), fc, w.clone());
    vec![Problem {
        x,
        eps: EPS_PARAM,
        f: Box::new(move |p| {
            let mut l = l1.clone();
            l.set_params(&p[..np]);
            weighted(&w1, &l.forward(&p[np..]))
        }),
        grad: Box::new(move |p| {
            let mut l = l2.clone();
            l.set_params(&p[..np]);
            let (gx, gp) = l.backward(&p[np..], &w);
            gp.flatten().into_iter().chain(gx).collect()
        }),
    }]
}

/// Run the registered check for `op` with inputs drawn from `seed`.
pub fn check_grad(op: &str, seed: u64, tol_rel: f64, tol_abs: f64) -> Result<GradCheckReport, NumcheckError> {
    let (_, build) = REGISTRY.iter().find(|(n, _)| *n == op).ok_or_else(|| NumcheckError::UnknownOp(op.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for p in build(&mut rng) {
        analytic.extend((p.grad)(&p.x));
        numeric.extend(finite_diff_grad(&p.f, &p.x, p.eps)?);
    }
    compare(op, seed, &analytic, &numeric, tol_rel, tol_abs)
}

/// Every registered op, in registry order.
pub fn check_all(seed: u64, tol_rel: f64, tol_abs: f64) -> Result<Vec<GradCheckReport>, NumcheckError> {
    registered_ops().map(|op| check_grad(op, seed, tol_rel, tol_abs)).collect()
}
