//! Quadrature helpers: adaptive Simpson and Gauss-Laguerre nodes.

/// Adaptive Simpson quadrature on `[a, b]` with absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let c = 0.5 * (a + b);
    let fa = f(a);
    let fb = f(b);
    let fc = f(c);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_rec(&f, a, b, fa, fb, fc, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (a + c);
    let e = 0.5 * (c + b);
    let fd = f(d);
    let fe = f(e);
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let err = left + right - whole;
    if depth == 0 || err.abs() <= 15.0 * tol {
        return left + right + err / 15.0;
    }
    simpson_rec(f, a, c, fa, fc, fd, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, c, b, fc, fb, fe, right, 0.5 * tol, depth - 1)
}

/// Nodes and weights of the `n`-point Gauss-Laguerre rule, i.e. for
/// integrals of the form `int_0^inf e^{-x} f(x) dx ~= sum w_i f(x_i)`.
///
/// Newton iteration on the Laguerre recurrence, with the usual asymptotic
/// initial guesses.
pub fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..n {
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => z + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[i - 2])
            }
        };
        let mut p1 = 0.0;
        let mut pp = 0.0;
        for _ in 0..200 {
            p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0 - z) * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (p1 - p2) / z;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        // weight for alpha = 0: w = 1 / (x * pp^2) with pp = L_n'(x)
        weights[i] = 1.0 / (z * pp * pp);
        // recompute L_{n-1}(z) based form for numerical agreement
        let _ = p1;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_exact() {
        let v = simpson(|x| 3.0 * x * x, 0.0, 2.0, 1e-12);
        assert!((v - 8.0).abs() < 1e-10);
    }

    #[test]
    fn simpson_exp() {
        let v = simpson(|x| (-x).exp(), 0.0, 10.0, 1e-12);
        assert!((v - (1.0 - (-10.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn gauss_laguerre_moments() {
        for &n in &[8usize, 32, 64] {
            let (x, w) = gauss_laguerre(n);
            let m0: f64 = w.iter().sum();
            let m1: f64 = x.iter().zip(&w).map(|(x, w)| x * w).sum();
            let m2: f64 = x.iter().zip(&w).map(|(x, w)| x * x * w).sum();
            assert!((m0 - 1.0).abs() < 1e-10, "n={n} m0={m0}");
            assert!((m1 - 1.0).abs() < 1e-9, "n={n} m1={m1}");
            assert!((m2 - 2.0).abs() < 1e-8, "n={n} m2={m2}");
        }
    }

    #[test]
    fn gauss_laguerre_exp_decay() {
        // int_0^inf e^{-x} e^{-x} dx = 1/2
        let (x, w) = gauss_laguerre(64);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * (-x).exp()).sum();
        assert!((v - 0.5).abs() < 1e-10);
    }
}
