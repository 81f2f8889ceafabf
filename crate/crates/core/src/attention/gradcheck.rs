//! Analytic-versus-numeric gradient comparison for the whole block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{panel_attention_backward, panel_attention_forward, PanelParams, Result};
use crate::tensor::{finite_diff_grad_slice, ParamBlob, ParamEntry, Tensor};

/// Acceptance bound on the relative gradient error.
pub const GRAD_REL_TOL: f64 = 1e-5;

const FD_STEP: f64 = 1e-5;


#[derive(Debug, Clone, Serialize)]
pub struct GroupError {
    pub name: String,
    pub entries: usize,
    /// `max |a - n| / max(max |a|, max |n|)` over the group's entries.
    pub max_rel_error: f64,
    /// `||a - n||_2 / max(||a||_2, ||n||_2)`.
    pub norm_rel_error: f64,
    /// Largest analytic gradient magnitude in the group.
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub shape: (usize, usize, usize),
    pub seed: u64,
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error() <= tol
    }
}

fn compare(name: &str, analytic: &[f64], numeric: &[f64]) -> GroupError {
    let (mut max_diff, mut max_a, mut max_n) = (0.0f64, 0.0f64, 0.0f64);
    let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
    for (&a, &n) in analytic.iter().zip(numeric) {
        max_diff = max_diff.max((a - n).abs());
        max_a = max_a.max(a.abs());
        max_n = max_n.max(n.abs());
        diff2 += (a - n) * (a - n);
        a2 += a * a;
        n2 += n * n;
    }
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { num };
    GroupError {
        name: name.to_string(),
        entries: analytic.len(),
        max_rel_error: ratio(max_diff, max_a.max(max_n)),
        norm_rel_error: ratio(diff2.sqrt(), a2.sqrt().max(n2.sqrt())),
        scale: max_a,
    }
}

/// Random block with a learned transition, non-trivial norms and slope.
pub(crate) fn random_case(c: usize, h: usize, w: usize, seed: u64) -> (Tensor<f64>, PanelParams<f64>, Tensor<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = PanelParams::<f64>::random(c, true, &mut rng);
    let mut around = |centre: f64, spread: f64, n: usize| -> Vec<f64> {
        (0..n).map(|_| centre + rng.random_range(-spread..spread)).collect()
    };
    if let Some(ln) = params.layer_norm.as_mut() {
        ln.gamma = around(1.0, 0.5, c);
        ln.beta = around(0.0, 0.5, c);
    }
    if let Some(bn) = params.batch_norm.as_mut() {
        bn.gamma = around(1.0, 0.5, c);
        bn.beta = around(0.0, 0.5, c);
        bn.running_mean = around(0.0, 0.5, c);
        bn.running_var = around(1.0, 0.5, c);
    }
    params.prelu_slope = around(0.25, 0.1, 1)[0];
    let x = Tensor::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0..1.0));
    let dy = Tensor::from_fn(c, h / 2, w / 2, |_, _, _| rng.random_range(-1.0..1.0));
    (x, params, dy)
}

/// Compares [`panel_attention_backward`] with central differences of
/// `L = <dy, y>` for the input and every parameter entry, in `f64`.
pub fn check_panel_gradients(c: usize, h: usize, w: usize, seed: u64) -> Result<GradCheckReport> {
    let (x, params, dy) = random_case(c, h, w, seed);
    let (dx, grads) = panel_attention_backward(&x, &params, &dy)?;
    let loss = |x: &Tensor<f64>, p: &PanelParams<f64>| -> f64 {
        let (y, _) = panel_attention_forward(x, p).expect("valid case");
        y.dot(&dy).expect("same shape")
    };

    let mut groups = Vec::new();
    let numeric_x = finite_diff_grad_slice(
        |v| loss(&Tensor::new(c, h, w, v.to_vec()).unwrap(), &params),
        x.data(),
        FD_STEP,
    );
    groups.push(compare("input", dx.data(), &numeric_x));

    let blob = params.to_blob();
    let grad_blob = grads.to_blob();
    for (name, entry) in blob.iter() {
        let numeric = finite_diff_grad_slice(
            |v| {
                let mut perturbed: ParamBlob<f64> = blob.clone();
                perturbed.insert(name, ParamEntry::new(entry.shape().to_vec(), v.to_vec()).unwrap());
                loss(&x, &PanelParams::from_blob(&perturbed).unwrap())
            },
            entry.data(),
            FD_STEP,
        );
        let analytic = grad_blob.require(name)?.data();
        groups.push(compare(name, analytic, &numeric));
    }
    Ok(GradCheckReport {
        shape: (c, h, w),
        seed,
        groups,
    })
}
