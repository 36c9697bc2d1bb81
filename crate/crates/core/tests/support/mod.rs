//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the crate's numerics: each oracle is a slow,
//! direct transcription of the textbook definition.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric dissimilarity matrix with zero diagonal. With `levels > 0`
/// entries are quantized to force ties.
pub fn random_dissimilarity(r: &mut ChaCha8Rng, n: usize, levels: u32) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let x: f64 = r.random();
            let x = if levels > 0 { (x * levels as f64).floor() / levels as f64 } else { x };
            d[i][j] = x;
            d[j][i] = x;
        }
    }
    d
}

/// Random row-stochastic matrix, dense.
pub fn random_stochastic(r: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| r.random::<f64>().powi(3) + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Persistent homology: full boundary matrix of the 2-skeleton, dense Z/2
// columns, standard left-to-right reduction, no clearing.

pub struct BruteDiagram {
    /// Finite H0 deaths (births are all 0), sorted.
    pub dim0_deaths: Vec<f64>,
    pub dim0_essential: usize,
    /// Finite H1 pairs with positive persistence, sorted.
    pub dim1: Vec<(f64, f64)>,
    pub dim1_essential: usize,
}

pub fn brute_rips(d: &[Vec<f64>]) -> BruteDiagram {
    let n = d.len();
    let mut simplices: Vec<(f64, Vec<usize>)> = (0..n).map(|v| (0.0, vec![v])).collect();
    for i in 0..n {
        for j in i + 1..n {
            simplices.push((d[i][j], vec![i, j]));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                simplices.push((d[i][j].max(d[i][k]).max(d[j][k]), vec![i, j, k]));
            }
        }
    }
    // Any order that refines (value, dimension) is a valid filtration.
    simplices.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.len().cmp(&b.1.len())));
    let m = simplices.len();
    let index_of = |s: &[usize]| simplices.iter().position(|t| t.1 == s).unwrap();

    let mut cols: Vec<Vec<bool>> = vec![vec![false; m]; m];
    for (c, (_, s)) in simplices.iter().enumerate() {
        if s.len() > 1 {
            for skip in 0..s.len() {
                let face: Vec<usize> = s.iter().enumerate().filter(|&(k, _)| k != skip).map(|(_, &v)| v).collect();
                cols[c][index_of(&face)] = true;
            }
        }
    }
    let low = |col: &[bool]| col.iter().rposition(|&b| b);
    let mut lows: Vec<Option<usize>> = vec![None; m];
    for j in 0..m {
        loop {
            let Some(l) = low(&cols[j]) else { break };
            let Some(i) = (0..j).find(|&i| lows[i] == Some(l)) else { break };
            let other = cols[i].clone();
            for (x, y) in cols[j].iter_mut().zip(other) {
                *x ^= y;
            }
        }
        lows[j] = low(&cols[j]);
    }

    let mut paired = vec![false; m];
    let mut out = BruteDiagram { dim0_deaths: vec![], dim0_essential: 0, dim1: vec![], dim1_essential: 0 };
    for j in 0..m {
        if let Some(i) = lows[j] {
            paired[i] = true;
            paired[j] = true;
            let (birth, death) = (simplices[i].0, simplices[j].0);
            match simplices[i].1.len() {
                1 => out.dim0_deaths.push(death),
                2 if death > birth => out.dim1.push((birth, death)),
                _ => {}
            }
        }
    }
    for j in 0..m {
        if !paired[j] {
            match simplices[j].1.len() {
                1 => out.dim0_essential += 1,
                2 => out.dim1_essential += 1,
                _ => {}
            }
        }
    }
    out.dim0_deaths.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dim1.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

/// Bottleneck distance between two finite diagrams, by thresholded perfect
/// matching on the diagonal-augmented bipartite graph.
pub fn bottleneck(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (na, nb) = (a.len(), b.len());
    let size = na + nb;
    if size == 0 {
        return 0.0;
    }
    let diag = |p: &(f64, f64)| (p.1 - p.0) / 2.0;
    // Left: a points then diagonal slots for b. Right: b points then slots for a.
    let cost = |l: usize, r: usize| -> f64 {
        match (l < na, r < nb) {
            (true, true) => (a[l].0 - b[r].0).abs().max((a[l].1 - b[r].1).abs()),
            (true, false) => {
                if r - nb == l { diag(&a[l]) } else { f64::INFINITY }
            }
            (false, true) => {
                if l - na == r { diag(&b[r]) } else { f64::INFINITY }
            }
            (false, false) => 0.0,
        }
    };
    let mut candidates: Vec<f64> = (0..size)
        .flat_map(|l| (0..size).map(move |r| (l, r)))
        .map(|(l, r)| cost(l, r))
        .filter(|c| c.is_finite())
        .collect();
    candidates.sort_by(|x, y| x.partial_cmp(y).unwrap());
    candidates.dedup();
    for &eps in &candidates {
        if perfect_matching(size, |l, r| cost(l, r) <= eps) {
            return eps;
        }
    }
    unreachable!("matching every point to the diagonal is always feasible")
}

fn perfect_matching(size: usize, ok: impl Fn(usize, usize) -> bool) -> bool {
    fn augment(l: usize, size: usize, ok: &dyn Fn(usize, usize) -> bool, seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for r in 0..size {
            if ok(l, r) && !seen[r] {
                seen[r] = true;
                if owner[r].is_none_or(|o| augment(o, size, ok, seen, owner)) {
                    owner[r] = Some(l);
                    return true;
                }
            }
        }
        false
    }
    let mut owner = vec![None; size];
    (0..size).all(|l| augment(l, size, &ok, &mut vec![false; size], &mut owner))
}

// ---------------------------------------------------------------------------
// Dense linear algebra.

/// Characteristic polynomial coefficients `c` with
/// `det(λI − M) = λⁿ + c[1] λⁿ⁻¹ + … + c[n]`, by Faddeev–LeVerrier.
pub fn char_poly(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut c = vec![0.0; n + 1];
    c[0] = 1.0;
    let mut mk = vec![vec![0.0; n]; n];
    for k in 1..=n {
        // M_k = M · M_{k-1} + c_{k-1} I ; c_k = −tr(M · M_k) / k
        let mut next = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                next[i][j] = (0..n).map(|t| m[i][t] * mk[t][j]).sum::<f64>();
            }
            next[i][i] += c[k - 1];
        }
        mk = next;
        let mut tr = 0.0;
        for i in 0..n {
            tr += (0..n).map(|t| m[i][t] * mk[t][i]).sum::<f64>();
        }
        c[k] = -tr / k as f64;
    }
    c
}

/// Coefficients of `Π (λ − r_i)` in the same convention as [`char_poly`].
pub fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (k, &x) in c.iter().enumerate() {
            next[k] += x;
            next[k + 1] -= r * x;
        }
        c = next;
    }
    c
}

pub fn laplacian(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let mut l = vec![vec![0.0; n]; n];
    for &(i, j) in edges {
        l[i][j] -= 1.0;
        l[j][i] -= 1.0;
        l[i][i] += 1.0;
        l[j][j] += 1.0;
    }
    l
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ev
}

/// `‖A − A_k‖_F / ‖A‖_F` from the eigenvalues of `AᵀA`.
pub fn low_rank_error_oracle(a: &[Vec<f64>], k: usize) -> f64 {
    let n = a.len();
    let ata: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|t| a[t][i] * a[t][j]).sum()).collect())
        .collect();
    let ev: Vec<f64> = jacobi_eigenvalues(&ata).into_iter().map(|x| x.max(0.0)).collect();
    let total: f64 = ev.iter().sum();
    (ev[k.min(n)..].iter().sum::<f64>() / total).sqrt()
}

// ---------------------------------------------------------------------------
// Statistics.

pub type Pair = (&'static [f64], &'static [f64]);

pub const CORR_CASES: [Pair; 11] = [
    (&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]),
    (&[1.0, 2.0, 3.0, 4.0, 5.0], &[5.0, 6.0, 7.0, 8.0, 7.0]),
    (&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[6.0, 5.0, 4.0, 3.0, 2.0, 2.5]),
    (&[0.1, 0.4, 0.2, 0.9, 0.5, 0.3, 0.7], &[1.2, 2.9, 1.1, 4.0, 3.3, 2.0, 2.4]),
    (&[2.0, 2.0, 3.0, 3.0, 4.0, 5.0], &[1.0, 2.0, 2.0, 3.0, 3.0, 3.0]),
    (&[1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 0.5, -0.5], &[0.3, 0.1, 0.6, -0.2, 0.4, 0.0, 0.2, 0.5]),
    (&[10.0, 20.0, 30.0, 40.0, 50.0], &[1.0, 4.0, 9.0, 16.0, 25.0]),
    (&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0], &[2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0, 8.0, 2.0, 8.0]),
    (&[0.5, 0.25, 0.125, 0.0625], &[1.0, 0.9, 0.95, 0.1]),
    (&[1e3, 2e3, 3.5e3, 3.6e3, 8e3], &[-1.0, -2.0, -2.1, -2.05, -4.0]),
    (&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0], &[2.1, 1.9, 3.5, 3.9, 5.2, 4.8, 7.7, 8.1, 8.0, 10.4, 11.9, 11.2]),
];

pub const WELCH_CASES: [Pair; 10] = [
    (&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 4.0, 5.0, 6.0]),
    (&[5.1, 4.9, 5.0, 5.2, 4.8], &[4.0, 6.0, 5.5, 3.9, 6.1, 5.0]),
    (&[0.2, 0.4, 0.3, 0.35], &[0.9, 1.1, 0.7, 1.3, 1.0]),
    (&[10.0, 12.0, 11.0, 13.0, 9.0, 12.5], &[10.5, 11.0, 10.0, 12.0]),
    (&[1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0], &[1.2, 1.4, 1.6, 1.8]),
    (&[100.0, 101.0, 99.0, 102.0], &[95.0, 105.0, 90.0, 110.0, 100.0]),
    (&[-1.0, -2.0, -1.5, -0.5, -1.2], &[1.0, 2.0, 1.5, 0.5, 1.2]),
    (&[3.3, 3.1, 3.6, 3.2, 3.4, 3.0, 3.5], &[3.0, 3.2, 2.9, 3.1, 3.3, 2.8, 3.4, 3.0]),
    (&[0.01, 0.02, 0.015, 0.03], &[0.011, 0.021, 0.014, 0.032, 0.018]),
    (&[7.0, 8.0, 9.0, 7.5, 8.5, 9.5, 10.0, 6.5], &[7.2, 8.1, 9.3, 7.7]),
];

pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Midranks by counting: `#{x_j < x_i} + (#{x_j = x_i} + 1) / 2`.
pub fn ranks_oracle(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Two-sided Student-t tail by quadrature. With `x = √ν tan θ` the density
/// is proportional to `cos^{ν−1} θ`; substituting `φ = π/2 − θ = s²` leaves
/// a smooth integrand for `ν ≥ 1`.
pub fn t_two_sided_oracle(t: f64, nu: f64) -> f64 {
    assert!(nu >= 1.0);
    let g = |s: f64| 2.0 * s * (s * s).sin().powf(nu - 1.0);
    let phi0 = std::f64::consts::FRAC_PI_2 - (t.abs() / nu.sqrt()).atan();
    let num = simpson(g, 0.0, phi0.sqrt(), 200_000);
    let den = simpson(g, 0.0, std::f64::consts::FRAC_PI_2.sqrt(), 200_000);
    num / den
}

pub fn pearson_p_oracle(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    t_two_sided_oracle(r * (df / (1.0 - r * r)).sqrt(), df)
}

/// `(t, df, p)` for Welch's test, straight from the definitions.
pub fn welch_oracle(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let m = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let v = |x: &[f64]| {
        let mu = m(x);
        x.iter().map(|y| (y - mu).powi(2)).sum::<f64>() / (x.len() - 1) as f64
    };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (qa, qb) = (v(a) / na, v(b) / nb);
    let t = (m(a) - m(b)) / (qa + qb).sqrt();
    let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    (t, df, t_two_sided_oracle(t, df))
}

// ---------------------------------------------------------------------------
// Marchenko–Pastur, square case: with x = 4 sin²θ the CDF is
// F(x) = (2θ + sin 2θ) / π.

pub fn mp_square_cdf(x: f64) -> f64 {
    let theta = (x.clamp(0.0, 4.0).sqrt() / 2.0).asin();
    (2.0 * theta + (2.0 * theta).sin()) / std::f64::consts::PI
}

pub fn mp_square_quantile(u: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 4.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mp_square_cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Row-stochastic matrix helper for tests that need arbitrary dense rows.
pub fn uniform_random_rows(seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    random_stochastic(&mut r, n)
}

pub fn random_f64(r: &mut ChaCha8Rng) -> f64 {
    r.random()
}
