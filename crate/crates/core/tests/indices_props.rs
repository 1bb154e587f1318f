use panel_dml_core::indices::{
    entropy_weights, fa_index, fa_score, sharpe_ratio, AssetClassParams, InclusionFlags, PortfolioWeights, RiskyClass,
};
use panel_dml_core::Matrix;
use proptest::prelude::*;

fn params() -> AssetClassParams {
    let classes = vec![
        RiskyClass { name: "bond".into(), expected_return: 0.04, sd: 0.03 },
        RiskyClass { name: "stock".into(), expected_return: 0.10, sd: 0.25 },
        RiskyClass { name: "fund".into(), expected_return: 0.07, sd: 0.12 },
    ];
    let corr = Matrix::from_rows(&[[1.0, 0.1, 0.2], [0.1, 1.0, 0.6], [0.2, 0.6, 1.0]]).unwrap();
    AssetClassParams::from_correlation(0.02, classes, &corr).unwrap()
}

/// Entropy weights written out directly from the definition.
fn entropy_oracle(cols: &[Vec<f64>]) -> Vec<f64> {
    let n = cols[0].len() as f64;
    let d: Vec<f64> = cols
        .iter()
        .map(|c| {
            if c.iter().all(|v| *v == c[0]) {
                return 0.0;
            }
            let s: f64 = c.iter().sum();
            let e = -c.iter().map(|v| v / s).filter(|p| *p > 0.0).map(|p| p * p.ln()).sum::<f64>() / n.ln();
            1.0 - e
        })
        .collect();
    let t: f64 = d.iter().sum();
    d.iter().map(|v| v / t).collect()
}

proptest! {
    #[test]
    fn sharpe_invariant_to_scaling_amounts(
        rf in 0.0f64..100.0,
        risky in prop::collection::vec(0.0f64..100.0, 3),
        scale in 0.01f64..1000.0,
    ) {
        prop_assume!(risky.iter().sum::<f64>() > 1e-3);
        let p = params();
        let a = sharpe_ratio(&PortfolioWeights::from_amounts(rf, &risky).unwrap(), &p).unwrap().unwrap();
        let scaled: Vec<f64> = risky.iter().map(|v| v * scale).collect();
        let b = sharpe_ratio(&PortfolioWeights::from_amounts(rf * scale, &scaled).unwrap(), &p).unwrap().unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn entropy_weights_row_permutation_invariant(
        bits in prop::collection::vec(prop::collection::vec(0u8..2, 4), 3..40),
        seed in any::<u64>(),
    ) {
        let rows: Vec<Vec<f64>> = bits.iter().map(|r| r.iter().map(|b| f64::from(*b)).collect()).collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let Ok(w) = entropy_weights(&m) else {
            prop_assert!((0..4).all(|j| rows.iter().all(|r| r[j] == rows[0][j])));
            return Ok(());
        };
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut perm: Vec<usize> = (0..rows.len()).collect();
        let mut s = seed;
        for i in (1..perm.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let w2 = entropy_weights(&Matrix::from_rows(&shuffled).unwrap()).unwrap();
        for (a, b) in w.iter().zip(&w2) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let cols: Vec<Vec<f64>> = (0..4).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        for (a, b) in w.iter().zip(entropy_oracle(&cols)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fa_index_is_uniform_fa_score(c in 0u8..2, d in 0u8..2, b in 0u8..2, i in 0u8..2) {
        let f = InclusionFlags::new(c, d, b, i).unwrap();
        prop_assert_eq!(fa_index(&f), fa_score(&f, &[0.25; 4]).unwrap());
    }
}

#[test]
fn entropy_hand_example() {
    // Column A = (1,0,0,0): p = (1,0,0,0), e = 0, d = 1.
    // Column B = (1,1,0,0): p = (1/2,1/2,0,0), e = ln 2 / ln 4 = 1/2, d = 1/2.
    let m = Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]]).unwrap();
    let w = entropy_weights(&m).unwrap();
    assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
    assert!((w[1] - 1.0 / 3.0).abs() < 1e-12);
    let same = Matrix::from_rows(&[[1.0, 1.0], [0.0, 0.0], [1.0, 1.0]]).unwrap();
    assert_eq!(entropy_weights(&same).unwrap(), vec![0.5, 0.5]);
}

#[test]
fn fa_score_hand_example() {
    let f = InclusionFlags::new(1, 0, 0, 0).unwrap();
    assert_eq!(fa_score(&f, &[0.4, 0.3, 0.2, 0.1]).unwrap(), 0.4);
    let all = InclusionFlags::new(1, 1, 1, 1).unwrap();
    assert!((fa_score(&all, &[0.4, 0.3, 0.2, 0.1]).unwrap() - 1.0).abs() < 1e-15);
}
