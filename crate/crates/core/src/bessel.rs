//! Integer-order Bessel functions of the first kind.
//!
//! All orders 0..=n are produced together by Miller's backward recurrence,
//! normalized with J₀ + 2ΣJ₂ₖ = 1.

/// J_0(x) ..= J_n(x).
pub fn bessel_j_orders(n: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    // start well above both n and |x|
    let start = {
        let m = n.max(ax.ceil() as usize) + 20 + (ax.sqrt() * 10.0) as usize;
        m + m % 2
    };
    let mut j_next = 0.0;
    let mut j_cur = 1e-300;
    let mut norm = 0.0;
    let mut vals = vec![0.0; start + 1];
    vals[start] = j_cur;
    for k in (1..=start).rev() {
        let j_prev = 2.0 * k as f64 / ax * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        vals[k - 1] = j_cur;
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * j_cur;
        }
        // rescale to stay finite
        if j_cur.abs() > 1e250 {
            j_cur *= 1e-250;
            j_next *= 1e-250;
            norm *= 1e-250;
            for v in vals[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    norm += vals[0];
    for (o, v) in out.iter_mut().zip(&vals) {
        *o = v / norm;
    }
    if x < 0.0 {
        for (k, o) in out.iter_mut().enumerate() {
            if k % 2 == 1 {
                *o = -*o;
            }
        }
    }
    out
}

/// J_n(x) for any integer order, using J₋ₙ = (−1)ⁿJₙ.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    let m = n.unsigned_abs() as usize;
    let v = bessel_j_orders(m, x)[m];
    if n < 0 && m % 2 == 1 {
        -v
    } else {
        v
    }
}

/// Smallest n_max with Σ_{|n|≤n_max} J_n(x)² ≥ 1 − tol.
pub fn truncation_order(x: f64, tol: f64) -> usize {
    let limit = x.abs().ceil() as usize + 60;
    let j = bessel_j_orders(limit, x);
    let mut sum = j[0] * j[0];
    let mut n = 0;
    while sum < 1.0 - tol && n < limit {
        n += 1;
        sum += 2.0 * j[n] * j[n];
    }
    n
}

/// Smallest order beyond which every |J_m(x)| (m ≤ |x| + 60) stays below `eps`.
pub fn amplitude_order(x: f64, eps: f64) -> usize {
    let limit = x.abs().ceil() as usize + 60;
    let j = bessel_j_orders(limit, x);
    j.iter().rposition(|v| v.abs() >= eps).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn power_series(n: usize, x: f64) -> f64 {
        let mut term = (0.5 * x).powi(n as i32);
        for k in 1..=n {
            term /= k as f64;
        }
        let mut sum = term;
        for m in 1..80 {
            term *= -(0.25 * x * x) / (m as f64 * (m + n) as f64);
            sum += term;
        }
        sum
    }

    fn integral_rep(n: i32, x: f64) -> f64 {
        // (1/π)∫₀^π cos(nτ − x sin τ) dτ, trapezoid converges spectrally
        let m = 2000;
        let h = PI / m as f64;
        let mut acc = 0.0;
        for i in 0..=m {
            let t = i as f64 * h;
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            acc += w * (n as f64 * t - x * t.sin()).cos();
        }
        acc * h / PI
    }

    #[test]
    fn known_values() {
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j(1, 1.0) - 0.440_050_585_744_933_5).abs() < 1e-14);
        assert!((bessel_j(2, 3.0) - 0.486_091_260_585_891_1).abs() < 1e-14);
        assert_eq!(bessel_j(0, 0.0), 1.0);
        assert_eq!(bessel_j(3, 0.0), 0.0);
    }

    #[test]
    fn matches_power_series_and_integral() {
        for &x in &[0.1, 0.5, 1.0, 2.0, 3.0, 4.0, 7.5] {
            let all = bessel_j_orders(12, x);
            for n in 0..=12 {
                let s = power_series(n, x);
                let i = integral_rep(n as i32, x);
                assert!((all[n] - s).abs() < 1e-13, "n={n} x={x}: {} vs {s}", all[n]);
                assert!((all[n] - i).abs() < 1e-12, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn negative_order_and_argument() {
        for n in -5..=5 {
            assert!((bessel_j(n, 2.3) - integral_rep(n, 2.3)).abs() < 1e-12);
            assert!((bessel_j(n, -2.3) - integral_rep(n, -2.3)).abs() < 1e-12);
        }
    }

    #[test]
    fn large_argument_stays_finite() {
        let j = bessel_j_orders(5, 60.0);
        assert!((j[0] - integral_rep(0, 60.0)).abs() < 1e-10);
        assert!(j.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn truncation_rule() {
        for &x in &[0.0, 1.0, 3.0] {
            let n = truncation_order(x, 1e-12);
            let j = bessel_j_orders(n, x);
            let s: f64 = j[0] * j[0] + 2.0 * j[1..].iter().map(|v| v * v).sum::<f64>();
            assert!(s >= 1.0 - 1e-12);
            if n > 0 {
                let s_less = s - 2.0 * j[n] * j[n];
                assert!(s_less < 1.0 - 1e-12);
            }
        }
    }
}
