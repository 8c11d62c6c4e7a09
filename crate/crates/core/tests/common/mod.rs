#![allow(dead_code)]

use kinkpanel::panel::{PanelBuilder, PanelDataset};
use kinkpanel::threshold::{fit_threshold, ThresholdSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Unbalanced panel with columns `y`, `x1`, `x2`; regressors correlate with
/// the entity and year effects.
pub fn random_panel(seed: u64, n_entities: usize, n_years: usize, drop_rate: f64) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let years: Vec<f64> = (0..n_years).map(|_| rng.sample(StandardNormal)).collect();
    let mut b = PanelBuilder::new(["y", "x1", "x2"]);
    for e in 0..n_entities {
        let a: f64 = rng.sample(StandardNormal);
        for (t, lambda) in years.iter().enumerate() {
            if rng.gen::<f64>() < drop_rate {
                continue;
            }
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.sample(StandardNormal);
            let x1 = z1 + 0.7 * a;
            let x2 = z2 - 0.5 * lambda + 0.3 * x1;
            let y = 2.0 * a + lambda + 0.8 * x1 - 1.3 * x2 + u;
            b.push(&format!("{e}"), 2000 + t as i64, vec![y, x1, x2]);
        }
    }
    b.build().expect("nonempty panel")
}

/// Copies the rows of the listed entities, relabelled so repeated draws are
/// distinct entities.
pub fn resample_entities(d: &PanelDataset, draws: &[usize]) -> PanelDataset {
    let names: Vec<String> = d.variable_names().map(str::to_string).collect();
    let cols: Vec<&[f64]> = names.iter().map(|n| d.column(n).unwrap()).collect();
    let mut b = PanelBuilder::new(names.clone());
    for (k, &e) in draws.iter().enumerate() {
        for r in d.entity_rows(e) {
            b.push(&format!("b{k}"), d.years()[r], cols.iter().map(|c| c[r]).collect());
        }
    }
    b.build().unwrap()
}

/// Pairs cluster bootstrap SE of `β_N` (entities drawn with replacement).
pub fn cluster_bootstrap_se_beta_n(d: &PanelDataset, spec: &ThresholdSpec, reps: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = d.n_entities();
    let mut est = Vec::with_capacity(reps);
    for _ in 0..reps {
        let draws: Vec<usize> = (0..g).map(|_| rng.gen_range(0..g)).collect();
        let bd = resample_entities(d, &draws);
        if let Ok(f) = fit_threshold(&bd, spec) {
            est.push(f.beta_nonagr.estimate);
        }
    }
    let m = est.iter().sum::<f64>() / est.len() as f64;
    (est.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
