//! Reference computations written directly from the model definitions,
//! sharing no code with the library beyond its public data types.
#![allow(dead_code)]

pub const K: usize = 32;

pub fn poisson(mu: f64, k_max: usize) -> Vec<f64> {
    (0..=k_max)
        .map(|k| {
            let log_fact: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
            (-mu + k as f64 * mu.ln() - log_fact).exp()
        })
        .collect()
}

pub fn thermal(mu: f64, k_max: usize) -> Vec<f64> {
    (0..=k_max)
        .map(|k| mu.powi(k as i32) / (1.0 + mu).powi(k as i32 + 1))
        .collect()
}

pub fn vacuum(k_max: usize) -> Vec<f64> {
    let mut v = vec![0.0; k_max + 1];
    v[0] = 1.0;
    v
}

/// Coincidence-model yield of `|n>|m>`.
pub fn oracle_y(eta_a: f64, eta_b: f64, dark: f64, n: usize, m: usize) -> f64 {
    let click = |eta: f64, k: usize| 1.0 - (1.0 - dark) * (1.0 - eta).powf(k as f64);
    click(eta_a, n) * click(eta_b, m)
}

/// Coincidence-model error rate of `|n>|m>`.
pub fn oracle_e(eta_a: f64, eta_b: f64, dark: f64, misalign: f64, n: usize, m: usize) -> f64 {
    if n == 0 && m == 0 {
        return 0.5;
    }
    let y = oracle_y(eta_a, eta_b, dark, n, m);
    let photons = (1.0 - (1.0 - eta_a).powf(n as f64)) * (1.0 - (1.0 - eta_b).powf(m as f64));
    let p_true = photons / y;
    p_true * misalign + (1.0 - p_true) * 0.5
}

/// `(S, E)` of one source pair by direct double summation over tables.
pub fn brute_cell(pa: &[f64], pb: &[f64], y: &[Vec<f64>], e: &[Vec<f64>]) -> (f64, f64) {
    let mut s = 0.0;
    let mut es = 0.0;
    for (n, a) in pa.iter().enumerate() {
        for (m, b) in pb.iter().enumerate() {
            s += a * b * y[n][m];
            es += a * b * y[n][m] * e[n][m];
        }
    }
    (s, if s > 0.0 { es / s } else { 0.0 })
}

/// Nine `(S, E)` cells indexed `[alice][bob]` over (vacuum, decoy, signal).
pub fn brute_tables(
    alice: [&[f64]; 3],
    bob: [&[f64]; 3],
    y: &[Vec<f64>],
    e: &[Vec<f64>],
) -> [[(f64, f64); 3]; 3] {
    let mut out = [[(0.0, 0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = brute_cell(alice[i], bob[j], y, e);
        }
    }
    out
}

/// `s11` bound obtained by eliminating whichever of `s12`, `s21` has the
/// smaller coefficient ratio, written out from the two expansions
/// `S_xx - S0 = sum a_n b_m s_nm` and `S_yy - S0' = sum a'_n b'_m s_nm`.
pub fn s11_by_elimination(s: [[f64; 3]; 3], a: &[f64], ap: &[f64], b: &[f64], bp: &[f64]) -> f64 {
    let (r12, r21) = elimination_ratios(a, ap, b, bp);
    s11_eliminating(s, a, ap, b, bp, r12 <= r21)
}

/// Ratios `a'1 b'2 / (a1 b2)` and `a'2 b'1 / (a2 b1)`.
pub fn elimination_ratios(a: &[f64], ap: &[f64], b: &[f64], bp: &[f64]) -> (f64, f64) {
    (
        (ap[1] * bp[2]) / (a[1] * b[2]),
        (ap[2] * bp[1]) / (a[2] * b[1]),
    )
}

/// The elimination formula with the branch forced: `s12` when `drop_s12`, else `s21`.
pub fn s11_eliminating(
    s: [[f64; 3]; 3],
    a: &[f64],
    ap: &[f64],
    b: &[f64],
    bp: &[f64],
    drop_s12: bool,
) -> f64 {
    let s0 = a[0] * s[0][1] + b[0] * s[1][0] - a[0] * b[0] * s[0][0];
    let s0p = ap[0] * s[0][2] + bp[0] * s[2][0] - ap[0] * bp[0] * s[0][0];
    let dx = s[1][1] - s0;
    let dy = s[2][2] - s0p;
    let (r12, r21) = elimination_ratios(a, ap, b, bp);
    let r = if drop_s12 { r12 } else { r21 };
    (r * dx - dy) / (r * a[1] * b[1] - ap[1] * bp[1])
}

pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
