//! Special functions and quadrature rules used by the denoisers and the
//! asymptotic analysis.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Scaled complementary error function `exp(x^2) erfc(x)`.
///
/// Finite for every finite `x >= -26`; for large positive `x` it behaves
/// like `1/(x sqrt(pi))`.
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        if x < -26.6 {
            return f64::INFINITY;
        }
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 2.0 {
        return (x * x).exp() * erfc(x);
    }
    // Continued fraction, evaluated with the modified Lentz method:
    // sqrt(pi) erfcx(x) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..5000 {
        let a = k as f64 * 0.5;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    FRAC_1_SQRT_PI / f
}

/// `ln erfc(x)`, accurate in both tails.
pub fn ln_erfc(x: f64) -> f64 {
    if x < 2.0 {
        erfc(x).ln()
    } else {
        erfcx(x).ln() - x * x
    }
}

/// Log-density of `N(x | mean, var)`.
#[inline]
pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Mean and variance of `N(mu, s2)` truncated to `x > 0`.
pub fn truncated_normal_positive(mu: f64, s2: f64) -> (f64, f64) {
    let s = s2.sqrt();
    let alpha = -mu / s;
    // inverse Mills ratio phi(alpha)/(1 - Phi(alpha)), stable for all alpha
    let lambda = (2.0 / PI).sqrt() / erfcx(alpha / std::f64::consts::SQRT_2);
    let mean = mu + s * lambda;
    let var = s2 * (1.0 + alpha * lambda - lambda * lambda);
    (mean, var.max(0.0))
}

/// Stable `ln(sum exp(x_i))`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Gauss-Hermite rule for the standard normal measure: nodes `z_k` and
/// weights `w_k` with `sum w_k f(z_k) ~ E f(Z)`, `Z ~ N(0,1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub-Welsch construction from the probabilists' Hermite recurrence.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let mut jac = DMatrix::<f64>::zeros(order, order);
        for k in 1..order {
            let b = (k as f64).sqrt();
            jac[(k, k - 1)] = b;
            jac[(k - 1, k)] = b;
        }
        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // symmetrize to remove eigen-solver noise
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for k in 0..n {
            let j = n - 1 - k;
            nodes[k] = 0.5 * (pairs[k].0 - pairs[j].0);
            weights[k] = 0.5 * (pairs[k].1 + pairs[j].1);
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self { nodes, weights }
    }

    /// The shared 61-point rule.
    pub fn order61() -> &'static GaussHermite {
        static RULE: OnceLock<GaussHermite> = OnceLock::new();
        RULE.get_or_init(|| GaussHermite::new(61))
    }

    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * GK_WK[7];
    let mut gauss = fc * GK_WG[3];
    for k in 0..7 {
        let x = h * GK_NODES[k];
        let s = f(c - x) + f(c + x);
        kron += GK_WK[k] * s;
        if k % 2 == 1 {
            gauss += GK_WG[k / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]` with the given
/// interior breakpoints.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().cloned().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    pts.sort_by(|x, y| x.total_cmp(y));
    pts.dedup();
    let mut stack: Vec<(f64, f64, f64, f64, usize)> = Vec::new();
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (v, e) = gk15(&mut f, w[0], w[1]);
        stack.push((w[0], w[1], v, e, 0));
        total += v;
    }
    let mut done = Vec::new();
    while let Some((lo, hi, v, e, depth)) = stack.pop() {
        let tol = abs_tol.max(rel_tol * total.abs());
        if e <= tol * ((hi - lo) / (b - a)).max(1e-3) || depth > 40 {
            done.push(v);
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        total += v1 + v2 - v;
        stack.push((lo, mid, v1, e1, depth + 1));
        stack.push((mid, hi, v2, e2, depth + 1));
    }
    // summing the accepted panels in a fixed order keeps results deterministic
    done.iter().sum()
}

/// `E f(Z)` for `Z ~ N(0,1)` by adaptive quadrature over `[-40, 40]`, with
/// extra breakpoints where `f` is expected to vary quickly.
pub fn gaussian_expectation<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = vec![-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0];
    pts.extend_from_slice(breaks);
    integrate(
        |z| {
            let w = (-0.5 * z * z).exp();
            if w == 0.0 {
                0.0
            } else {
                w * f(z)
            }
        },
        -40.0,
        40.0,
        &pts,
        tol,
        tol,
    ) / (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfcx_reference_values() {
        // 30-digit reference values
        let cases = [
            (-3.0, 16205.988853999586625),
            (-0.5, 1.9523604891825570933),
            (0.0, 1.0),
            (0.3, 0.73459933456765514992),
            (1.0, 0.42758357615580700441),
            (1.9, 0.26650937366167265995),
            (2.0, 0.25539567631050574387),
            (2.5, 0.21080636406114358065),
            (4.0, 0.13699945762506138989),
            (6.0, 0.092776567800538354389),
        ];
        for (x, want) in cases {
            let v = erfcx(x);
            assert!((v - want).abs() <= 1e-12 * want, "x={x}: {v} vs {want}");
        }
    }

    #[test]
    fn erfcx_asymptotics() {
        let x: f64 = 1e4;
        let approx = FRAC_1_SQRT_PI / x * (1.0 - 0.5 / (x * x));
        assert!((erfcx(x) - approx).abs() < 1e-15 * approx);
        assert!((ln_erfc(30.0) - (erfcx(30.0).ln() - 900.0)).abs() < 1e-12);
        assert!(ln_erfc(40.0).is_finite());
    }

    #[test]
    fn gauss_hermite_moments() {
        let gh = GaussHermite::order61();
        assert!((gh.expect(|_| 1.0) - 1.0).abs() < 1e-14);
        assert!(gh.expect(|z| z).abs() < 1e-14);
        assert!((gh.expect(|z| z * z) - 1.0).abs() < 1e-12);
        assert!((gh.expect(|z| z.powi(4)) - 3.0).abs() < 1e-11);
        assert!((gh.expect(|z| z.powi(8)) - 105.0).abs() < 1e-9);
    }

    #[test]
    fn adaptive_quadrature_known_integrals() {
        let v = integrate(|x| x.sin(), 0.0, PI, &[], 1e-14, 1e-14);
        assert!((v - 2.0).abs() < 1e-13);
        let m = gaussian_expectation(|z| z.abs(), &[], 1e-13);
        assert!((m - (2.0 / PI).sqrt()).abs() < 1e-12);
        // narrow feature far from the GH nodes
        let narrow = gaussian_expectation(|z| (-(z / 1e-3).powi(2) / 2.0).exp(), &[-1e-2, 1e-2], 1e-15);
        let exact = 1e-3 / (1.0 + 1e-6f64).sqrt();
        assert!((narrow - exact).abs() < 1e-9 * exact, "{narrow} {exact}");
    }

    #[test]
    fn truncated_normal_moments_against_quadrature() {
        for &(mu, s2) in &[(0.3f64, 0.5f64), (-4.0, 0.01), (2.0, 1.0), (-30.0, 1.0)] {
            let s: f64 = f64::sqrt(s2);
            let z = integrate(|x| (-(x - mu) * (x - mu) / (2.0 * s2)).exp(), 0.0, mu.max(0.0) + 40.0 * s, &[mu.max(0.0) + s], 0.0, 1e-13);
            let m1 = integrate(|x| x * (-(x - mu) * (x - mu) / (2.0 * s2)).exp(), 0.0, mu.max(0.0) + 40.0 * s, &[mu.max(0.0) + s], 0.0, 1e-13) / z;
            let m2 = integrate(|x| x * x * (-(x - mu) * (x - mu) / (2.0 * s2)).exp(), 0.0, mu.max(0.0) + 40.0 * s, &[mu.max(0.0) + s], 0.0, 1e-13) / z;
            let (m, v) = truncated_normal_positive(mu, s2);
            if z > 0.0 {
                assert!((m - m1).abs() < 1e-8 * m1.abs().max(1e-3), "mu={mu}: {m} vs {m1}");
                assert!((v - (m2 - m1 * m1)).abs() < 1e-6 * v.max(1e-6), "mu={mu}: {v}");
            }
        }
    }
}
