//! Stacked GRU against values produced by a reference deep-learning framework
//! (bias-free, double precision) for deterministic weights and inputs.

use dnnmg_core::neural::{GruStack, NetworkConfig};

const OUT: [f64; 24] = [-0.02272504268555868, 0.1721277204996463, 0.12786119409507685, -0.06909459680995504, -0.0034016241215303056, -0.032027918803435945, -0.10796621888367039, -0.016163713001782737, -0.025543153995900535, 0.13561017490391142, 0.08669991838622865, -0.074631763736889, 0.045146921531770905, 0.10651703924789918, -0.07502001603200474, -0.1668262595250551, -0.02616165828598413, 0.11454426229651984, 0.06485364758585264, -0.07770658976740374, 0.0973243222547974, 0.26943802117493765, -0.07257277877699779, -0.41112194963136905];
const HN: [f64; 16] = [-0.05306000201584844, 0.24171338000096923, -0.07696492752378892, -0.014882086787853329, 0.7624010487290005, 0.25544340331955295, -0.4023480094453931, 0.6959739772316492, -0.02616165828598413, 0.11454426229651984, 0.06485364758585264, -0.07770658976740374, 0.0973243222547974, 0.26943802117493765, -0.07257277877699779, -0.41112194963136905];

const F: usize = 6;
const M: usize = 4;
const L: usize = 2;
const B: usize = 2;
const S: usize = 3;

fn stack() -> GruStack<f64> {
    let mut s = GruStack::zeros(NetworkConfig::new(M, L, F, M)).unwrap();
    let gru = dnnmg_core::neural::count_params(&s.config).gru_only;
    let p = s.params_mut();
    for (i, v) in p[..gru].iter_mut().enumerate() {
        *v = 0.6 * (0.37 * i as f64 + 0.2).sin();
    }
    // Identity head exposes the top hidden state.
    for j in 0..M {
        p[gru + j * M + j] = 1.0;
    }
    s
}

#[test]
fn matches_reference_framework() {
    let s = stack();
    let mut hidden: Vec<Vec<f64>> = (0..L)
        .map(|l| (0..B * M).map(|k| 0.1 * (l + 1) as f64 * ((k / M * M + k % M) as f64).sin()).collect())
        .collect();
    for step in 0..S {
        let x: Vec<f64> = (0..B * F)
            .map(|k| (1.3 * (step * B * F + k) as f64).cos() * (1 + step) as f64)
            .collect();
        let out = s.step(&x, B, &mut hidden, None);
        for (a, b) in out.iter().zip(&OUT[step * B * M..(step + 1) * B * M]) {
            assert!((a - b).abs() < 1e-12, "step {step}: {a} vs {b}");
        }
    }
    for (a, b) in hidden.concat().iter().zip(HN.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn single_precision_tracks_double() {
    let s = stack();
    let s32 = GruStack::<f32>::from_params(s.config, s.params().iter().map(|&v| v as f32).collect()).unwrap();
    let mut hidden = vec![vec![0.0f32; B * M]; L];
    let x: Vec<f32> = (0..B * F).map(|k| (1.3 * k as f32).cos()).collect();
    let out = s32.step(&x, B, &mut hidden, None);
    let mut h64 = vec![vec![0.0f64; B * M]; L];
    let x64: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let ref64 = s.step(&x64, B, &mut h64, None);
    for (a, b) in out.iter().zip(&ref64) {
        assert!((*a as f64 - b).abs() < 1e-5);
    }
}
