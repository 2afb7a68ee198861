//! Sine and cosine integrals, sinc, and Gauss-Legendre rules.

use std::f64::consts::{FRAC_PI_2, PI};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Returns `(Si(x), Ci(x))`.
///
/// Power series below |x| = 2, otherwise the continued fraction for the
/// complex exponential integral E1(ix) evaluated with the modified Lentz
/// method. `Ci` is only real for x > 0; for x <= 0 it is returned as NaN.
pub fn si_ci(x: f64) -> (f64, f64) {
    let t = x.abs();
    if t == 0.0 {
        return (0.0, f64::NAN);
    }
    let (si, ci) = if t > 2.0 {
        si_ci_fraction(t)
    } else {
        si_ci_series(t)
    };
    let si = if x < 0.0 { -si } else { si };
    let ci = if x < 0.0 { f64::NAN } else { ci };
    (si, ci)
}

pub fn si(x: f64) -> f64 {
    si_ci(x).0
}

pub fn ci(x: f64) -> f64 {
    si_ci(x).1
}

fn si_ci_series(t: f64) -> (f64, f64) {
    // Si = sum (-1)^k t^(2k+1) / ((2k+1)(2k+1)!)
    // Ci = gamma + ln t + sum (-1)^k t^(2k) / (2k (2k)!)
    let mut sum_s = 0.0;
    let mut sum_c = 0.0;
    let mut fact = 1.0;
    let mut sign = 1.0;
    for k in 1..200 {
        fact *= t / k as f64;
        let term = fact / k as f64;
        if k % 2 == 1 {
            sum_s += sign * term;
        } else {
            sign = -sign;
            sum_c += sign * term;
        }
        if term < 1e-18 * (sum_s.abs() + sum_c.abs()).max(1e-300) {
            break;
        }
    }
    (sum_s, EULER_GAMMA + t.ln() + sum_c)
}

fn si_ci_fraction(t: f64) -> (f64, f64) {
    // E1(it) = exp(-it) * (1/(1+it- 1/(3+it- 4/(5+it- ...))))
    let tiny = 1e-300;
    let mut b = (1.0, t);
    let mut c = (1.0 / tiny, 0.0);
    let mut d = cdiv((1.0, 0.0), b);
    let mut h = d;
    for i in 2..10_000 {
        let a = -((i - 1) * (i - 1)) as f64;
        b.0 += 2.0;
        d = cdiv((1.0, 0.0), cadd(cscale(d, a), b));
        c = cadd(b, cdiv((a, 0.0), c));
        let del = cmul(c, d);
        h = cmul(h, del);
        if (del.0 - 1.0).abs() + del.1.abs() < 1e-16 {
            break;
        }
    }
    let h = cmul((t.cos(), -t.sin()), h);
    (FRAC_PI_2 + h.1, -h.0)
}

fn cadd(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 + b.0, a.1 + b.1)
}

fn cscale(a: (f64, f64), s: f64) -> (f64, f64) {
    (a.0 * s, a.1 * s)
}

fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn cdiv(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let den = b.0 * b.0 + b.1 * b.1;
    ((a.0 * b.0 + a.1 * b.1) / den, (a.1 * b.0 - a.0 * b.1) / den)
}

/// Normalised sinc, sin(pi x)/(pi x).
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - (PI * x).powi(2) / 6.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
