//! Small numerical utilities shared across modules: adaptive quadrature,
//! safeguarded root finding, normal CDF, and a discrete KS distance.

/// Adaptive Simpson quadrature with a relative tolerance.
///
/// The tolerance is measured against `scale`, an a-priori estimate of the
/// integral's magnitude (pass 0.0 to fall back to the running estimate).
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64, scale: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let scale = if scale > 0.0 { scale } else { whole.abs().max(1e-300) };
    simpson_rec(f, a, b, fa, fm, fb, whole, rel_tol * scale, 52)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Root of a continuous increasing-through-zero function on a bracketing
/// interval, by bisection followed by secant polishing.
///
/// `f(lo)` and `f(hi)` must have opposite signs. Returns the abscissa where
/// `|f|` is smallest among the candidates visited.
pub fn bracketed_root<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, x_rel_tol: f64) -> f64 {
    let mut flo = f(lo);
    let fhi = f(hi);
    debug_assert!(flo * fhi <= 0.0, "root not bracketed");
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= x_rel_tol * mid.abs().max(1e-300) {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    // Secant polish inside the final bracket.
    let mut x0 = lo;
    let mut x1 = hi;
    let mut f0 = f(x0);
    let mut f1 = f(x1);
    for _ in 0..8 {
        if (f1 - f0).abs() < 1e-300 {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if !x2.is_finite() || x2 < lo || x2 > hi {
            break;
        }
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f(x1);
        if f1 == 0.0 {
            break;
        }
    }
    if f1.abs() <= f0.abs() {
        x1
    } else {
        x0
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `Phi(a) - Phi(-a)`, the central mass of the standard normal law.
pub fn normal_central_mass(a: f64) -> f64 {
    libm::erf(a / std::f64::consts::SQRT_2)
}

/// Kolmogorov-Smirnov distance between the empirical law of positive
/// integer gaps and Geometric(p) on {1, 2, ...}.
///
/// The supremum is evaluated at the sample jump points; between samples the
/// empirical CDF is constant while the geometric CDF grows by at most `p`
/// per lattice step, so the result is exact up to `p`.
pub fn ks_distance_geometric(gaps: &[u64], p: f64) -> f64 {
    assert!(!gaps.is_empty());
    let mut sorted = gaps.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let cdf = |k: u64| -> f64 { 1.0 - (1.0 - p).powi(k as i32) };
    let mut d: f64 = 0.0;
    for (i, &g) in sorted.iter().enumerate() {
        let fg = cdf(g);
        let hi = (i + 1) as f64 / n - fg;
        let lo = fg - i as f64 / n;
        d = d.max(hi.abs()).max(lo.abs());
    }
    d
}

/// Second central difference `(f(t-h) - 2 f(t) + f(t+h)) / h^2`.
pub fn second_central_difference<F: Fn(f64) -> f64>(f: &F, t: f64, h: f64) -> f64 {
    (f(t - h) - 2.0 * f(t) + f(t + h)) / (h * h)
}
