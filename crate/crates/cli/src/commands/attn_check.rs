use echomeasure_core::attention::{
    check_panel_gradients, mac_count, panel_attention_forward, AttentionKind, PanelParams, GRAD_REL_TOL,
};
use echomeasure_core::tensor::{pixel_shuffle, pixel_unshuffle};
use echomeasure_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{create_dir, thread_pool, write_json};
use crate::args::AttnCheckArgs;
use crate::error::CliError;

#[derive(Serialize)]
struct CheckLine {
    name: &'static str,
    passed: bool,
    detail: String,
}

#[derive(Serialize)]
struct Report {
    command: &'static str,
    checks: Vec<CheckLine>,
}

fn shape_contract(seed: u64) -> Result<CheckLine, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = Vec::new();
    for _ in 0..50 {
        let c = rng.random_range(1..=8);
        let h = 2 * rng.random_range(1..=8);
        let w = 2 * rng.random_range(1..=8);
        let params = PanelParams::<f32>::random(c, rng.random_bool(0.5), &mut rng);
        let x = Tensor::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0f32..1.0));
        let (y, _) = panel_attention_forward(&x, &params)?;
        if y.shape() != (c, h / 2, w / 2) || !y.is_finite() {
            bad.push(format!("({c},{h},{w}) -> {:?}", y.shape()));
        }
    }
    Ok(CheckLine {
        name: "shape",
        passed: bad.is_empty(),
        detail: if bad.is_empty() { "50 random shapes".into() } else { bad.join("; ") },
    })
}

fn round_trip(seed: u64) -> Result<CheckLine, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut failures = 0;
    for _ in 0..100 {
        let (c, h, w) = (rng.random_range(1..=6), 2 * rng.random_range(1..=6), 2 * rng.random_range(1..=6));
        let x = Tensor::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0f64..1.0));
        let back = pixel_shuffle(&pixel_unshuffle(&x, 2)?, 2)?;
        if back != x {
            failures += 1;
        }
    }
    Ok(CheckLine {
        name: "unshuffle_round_trip",
        passed: failures == 0,
        detail: format!("{} of 100 exact", 100 - failures),
    })
}

fn gradients(args: &AttnCheckArgs) -> Result<CheckLine, CliError> {
    let cases: Vec<_> = [(2, 4, 4), (4, 8, 8)]
        .into_iter()
        .flat_map(|s| (args.seed..args.seed + args.seeds).map(move |seed| (s, seed)))
        .collect();
    let pool = thread_pool(args.threads)?;
    let worst = pool.install(|| {
        cases
            .par_iter()
            .map(|&((c, h, w), seed)| check_panel_gradients(c, h, w, seed).map(|r| (r.max_rel_error(), (c, h, w), seed)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let (err, shape, seed) = worst
        .into_iter()
        .fold((0.0, (0, 0, 0), 0), |a, b| if b.0 > a.0 { b } else { a });
    Ok(CheckLine {
        name: "gradients",
        passed: err <= GRAD_REL_TOL,
        detail: format!(
            "{} cases, worst relative error {err:.3e} at {shape:?} seed {seed} (tol {GRAD_REL_TOL:e})",
            cases.len()
        ),
    })
}

fn weights() -> CheckLine {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let counts: Vec<(usize, usize)> = [4, 8, 16]
        .into_iter()
        .map(|c| (c, PanelParams::<f32>::random(c, false, &mut rng).stream_weight_count()))
        .collect();
    CheckLine {
        name: "stream_weights",
        passed: counts.iter().all(|&(c, n)| n == 4 * c * c),
        detail: counts.iter().map(|(c, n)| format!("c={c}: {n}")).collect::<Vec<_>>().join(", "),
    }
}

fn macs() -> Result<CheckLine, CliError> {
    let mut passed = true;
    for c in [4, 16, 64] {
        for (h, w) in [(8, 8), (32, 32), (64, 48)] {
            let m = |k| mac_count(k, c, h, w).map(|b| b.attention);
            let (before, after, panel) = (m(AttentionKind::NlBefore)?, m(AttentionKind::NlAfter)?, m(AttentionKind::Panel)?);
            passed &= panel < after && after < before && panel * 16 == before;
        }
    }
    Ok(CheckLine {
        name: "macs",
        passed,
        detail: "panel < nl_after < nl_before, panel = nl_before / 16".into(),
    })
}

pub fn run(args: AttnCheckArgs) -> Result<(), CliError> {
    let checks = vec![
        shape_contract(args.seed)?,
        round_trip(args.seed)?,
        gradients(&args)?,
        weights(),
        macs()?,
    ];
    for c in &checks {
        println!("{:<22} {:<4} {}", c.name, if c.passed { "ok" } else { "FAIL" }, c.detail);
    }
    let report = Report { command: "attn-check", checks };
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_json(&out.join("report.json"), &report)?;
    }
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::new("panel-attention", format!("check failed: {}", failed.join(", "))))
    }
}
