use panel_dml_core::ddml::{
    ddml_estimate, simulate_dynamic_panel, state_name, true_effects, DdmlSpec, DynamicDgpParams, InformationSet,
    OUTCOME, TREATMENT,
};
use panel_dml_core::dml::{dml_arrays, dml_plm, DmlOptions, DmlSpec};
use panel_dml_core::learners::LearnerSpec;
use panel_dml_core::{Error, Matrix, PanelDataset};

fn params() -> DynamicDgpParams {
    DynamicDgpParams {
        a: vec![0.4, -0.3, 0.2],
        b: vec![vec![0.5, 0.1, 0.0], vec![-0.2, 0.4, 0.1], vec![0.0, 0.3, 0.3]],
        c: vec![0.0; 3],
        alpha: 0.3,
        d: vec![0.5, 0.2, -0.4],
        e: 0.8,
        sigma: vec![0.0; 3],
        f: vec![0.7, -0.5, 0.9],
        state_noise_sd: 1.0,
        treatment_noise_sd: 1.0,
        outcome_noise_sd: 1.0,
        periods: 3,
    }
}

fn spec(p: usize) -> DdmlSpec {
    DdmlSpec {
        outcome: OUTCOME.into(),
        treatment: TREATMENT.into(),
        controls: (0..p).map(state_name).collect(),
        options: DmlOptions::with_learner(LearnerSpec::Ols),
        ..DdmlSpec::default()
    }
}

/// Noise-free trajectory written straight from the structural equations.
/// `shift` adds `δ` to `D_t` at period `t` (1-based); when `hold` is given,
/// treatments after `t` are pinned to those values instead of responding.
fn terminal_outcome(p: &DynamicDgpParams, x1: &[f64], shift: Option<(usize, f64)>, hold: Option<&[f64]>) -> (f64, Vec<f64>) {
    let k = x1.len();
    let mut x = x1.to_vec();
    let mut ds = Vec::new();
    let mut y = 0.0;
    for t in 1..=p.periods {
        if t > 1 {
            let prev = *ds.last().unwrap();
            let mut next = vec![0.0; k];
            for i in 0..k {
                next[i] = (p.a[i] + p.c[i] * x[i]) * prev;
                for j in 0..k {
                    next[i] += p.b[i][j] * x[j];
                }
            }
            x = next;
        }
        let lag = if t > 1 { p.alpha * ds[t - 2] } else { 0.0 };
        let mut d = lag + (1.0 - p.alpha) * p.d.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        if let (Some((s, _)), Some(h)) = (shift, hold) {
            if t > s {
                d = h[t - 1];
            }
        }
        if let Some((s, delta)) = shift {
            if t == s {
                d += delta;
            }
        }
        ds.push(d);
        let sx: f64 = p.sigma.iter().zip(&x).map(|(a, b)| a * b).sum();
        let fx: f64 = p.f.iter().zip(&x).map(|(a, b)| a * b).sum();
        y = (sx + 1.0) * p.e * d + fx;
    }
    (y, ds)
}

#[test]
fn true_effects_match_finite_differences() {
    for periods in [2, 3, 5] {
        let p = DynamicDgpParams { periods, ..params() };
        let eff = true_effects(&p).unwrap();
        for x1 in [[0.0, 0.0, 0.0], [1.0, -2.0, 0.5], [-0.3, 0.7, 2.0]] {
            let (base, path) = terminal_outcome(&p, &x1, None, None);
            for t in 1..=periods {
                let delta = 1e-3;
                let (shifted, _) = terminal_outcome(&p, &x1, Some((t, delta)), Some(&path));
                let fd = (shifted - base) / delta;
                assert!((fd - eff.psi[t - 1]).abs() < 1e-6, "m={periods} t={t}: fd {fd} vs {}", eff.psi[t - 1]);
            }
        }
    }
}

#[test]
fn no_state_channel_leaves_only_the_contemporaneous_effect() {
    let p = DynamicDgpParams { a: vec![0.0; 3], periods: 2, ..params() };
    let eff = true_effects(&p).unwrap();
    assert_eq!(eff.psi, vec![0.0, p.e]);
    assert_eq!(eff.se, vec![0.0, 0.0]);
}

#[test]
fn simulated_second_moments_follow_covariance_recursion() {
    // s_t = (X_t, D_t) = M s_{t-1} + N u_t with u_t = (ε_t, ζ_t).
    let p = params();
    let k = 3;
    let dim = k + 1;
    let a1 = 1.0 - p.alpha;
    let mut m = vec![vec![0.0; dim]; dim];
    let mut nmat = vec![vec![0.0; dim]; dim];
    for i in 0..k {
        m[i][..k].copy_from_slice(&p.b[i]);
        m[i][k] = p.a[i];
        nmat[i][i] = p.state_noise_sd;
    }
    for j in 0..k {
        m[k][j] = a1 * (0..k).map(|i| p.d[i] * p.b[i][j]).sum::<f64>();
        nmat[k][j] = a1 * p.d[j] * p.state_noise_sd;
    }
    m[k][k] = p.alpha + a1 * (0..k).map(|i| p.d[i] * p.a[i]).sum::<f64>();
    nmat[k][k] = p.treatment_noise_sd;
    let mul = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        (0..dim)
            .map(|i| (0..dim).map(|j| (0..dim).map(|l| a[i][l] * b[l][j]).sum()).collect())
            .collect()
    };
    let tr = |a: &Vec<Vec<f64>>| -> Vec<Vec<f64>> { (0..dim).map(|i| (0..dim).map(|j| a[j][i]).collect()).collect() };
    // Period 1: X_1 ~ N(0, I), D_1 = (1−α)dᵀX_1 + ζ_1.
    let mut l1 = vec![vec![0.0; dim]; dim];
    for i in 0..k {
        l1[i][i] = 1.0;
        l1[k][i] = a1 * p.d[i];
    }
    l1[k][k] = p.treatment_noise_sd;
    let mut sigma = mul(&l1, &tr(&l1));
    let mut analytic = vec![sigma.clone()];
    let shock = mul(&nmat, &tr(&nmat));
    for _ in 1..p.periods {
        let prop = mul(&mul(&m, &sigma), &tr(&m));
        sigma = (0..dim).map(|i| (0..dim).map(|j| prop[i][j] + shock[i][j]).collect()).collect();
        analytic.push(sigma.clone());
    }

    let n = 50_000;
    let ds = simulate_dynamic_panel(&p, n, 2024).unwrap();
    let years = ds.years();
    let cols: Vec<&[f64]> = (0..k)
        .map(|j| ds.values(&state_name(j)).unwrap())
        .chain(std::iter::once(ds.values(TREATMENT).unwrap()))
        .collect();
    for t in 1..=p.periods {
        let rows: Vec<usize> = (0..ds.len()).filter(|&i| years[i] == t as i64).collect();
        for v in 0..dim {
            let xs: Vec<f64> = rows.iter().map(|&i| cols[v][i]).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            let truth = analytic[t - 1][v][v];
            // Gaussian Monte-Carlo SEs of the sample mean and variance.
            assert!(mean.abs() < 3.0 * (truth / n as f64).sqrt(), "t={t} v={v} mean {mean}");
            assert!((var - truth).abs() < 3.0 * truth * (2.0 / n as f64).sqrt(), "t={t} v={v}: {var} vs {truth}");
        }
    }
}

#[test]
fn estimates_cover_true_effects() {
    let p = params();
    let truth = true_effects(&p).unwrap();
    let ds = simulate_dynamic_panel(&p, 5000, 11).unwrap();
    let est = ddml_estimate(&ds, &spec(3)).unwrap();
    assert_eq!(est.waves, vec![1, 2, 3]);
    assert_eq!(est.n_obs, 15_000);
    for t in 0..3 {
        assert!((est.psi[t] - truth.psi[t]).abs() <= 3.0 * est.se[t], "t={t}: {} vs {}", est.psi[t], truth.psi[t]);
    }
    let full = ddml_estimate(&ds, &DdmlSpec { information_set: InformationSet::FullHistory, ..spec(3) }).unwrap();
    for t in 0..3 {
        assert!((full.psi[t] - truth.psi[t]).abs() <= 3.0 * full.se[t]);
    }
}

#[test]
fn null_dynamic_effect() {
    let p = DynamicDgpParams { e: 0.0, f: vec![0.0; 3], ..params() };
    let ds = simulate_dynamic_panel(&p, 3000, 12).unwrap();
    let est = ddml_estimate(&ds, &spec(3)).unwrap();
    for t in 0..3 {
        assert!(est.psi[t].abs() <= 3.0 * est.se[t]);
    }
}

#[test]
fn single_period_reduces_to_dml() {
    let ds = simulate_dynamic_panel(&params(), 400, 13).unwrap().restrict_waves(&[3]).unwrap();
    let est = ddml_estimate(&ds, &spec(3)).unwrap();
    let s = spec(3);
    let plain = dml_plm(
        &ds,
        &DmlSpec {
            outcome: s.outcome.clone(),
            treatment: s.treatment.clone(),
            controls: s.controls.clone(),
            instrument: None,
            options: s.options.clone(),
        },
    )
    .unwrap();
    assert_eq!(est.psi[0].to_bits(), plain.theta.to_bits());
    assert_eq!(est.se[0].to_bits(), plain.se.to_bits());
}

#[test]
fn terminal_stage_is_plain_dml_on_markov_set() {
    let ds = simulate_dynamic_panel(&params(), 500, 14).unwrap();
    let est = ddml_estimate(&ds, &spec(3)).unwrap();
    let rows = |w: i64| -> Vec<usize> { (0..ds.len()).filter(|&i| ds.years()[i] == w).collect() };
    let (r3, r2) = (rows(3), rows(2));
    let pick = |name: &str, rows: &[usize]| -> Vec<f64> { rows.iter().map(|&i| ds.values(name).unwrap()[i]).collect() };
    let mut cols: Vec<Vec<f64>> = (0..3).map(|j| pick(&state_name(j), &r3)).collect();
    cols.push(pick(TREATMENT, &r2));
    let x = Matrix::from_columns(500, &cols).unwrap();
    let r = dml_arrays(&pick(OUTCOME, &r3), &pick(TREATMENT, &r3), None, &x, &spec(3).options).unwrap();
    assert_eq!(est.psi[2].to_bits(), r.theta.to_bits());
}

#[test]
fn wave_restriction_and_balance() {
    let ds = simulate_dynamic_panel(&params(), 300, 15).unwrap();
    let two = ddml_estimate(&ds, &DdmlSpec { waves: Some(vec![1, 3]), ..spec(3) }).unwrap();
    assert_eq!(two.waves, vec![1, 3]);
    assert_eq!(two.psi.len(), 2);

    let keep: Vec<usize> = (0..ds.len()).filter(|&i| i != 4).collect();
    let unbalanced: PanelDataset = ds.select_rows(&keep);
    assert!(matches!(ddml_estimate(&unbalanced, &spec(3)), Err(Error::Unbalanced(_))));
    let missing = DdmlSpec { controls: vec!["nope".into()], ..spec(3) };
    assert!(ddml_estimate(&ds, &missing).is_err());
}
