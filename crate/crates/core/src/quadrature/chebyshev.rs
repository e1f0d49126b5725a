//! Chebyshev interpolants on an interval with stable divided differences.

/// `f(x) ≈ Σ c_k T_k(s)` with `s = (x - mid) / half`.
#[derive(Debug, Clone)]
pub struct Chebyshev {
    coeffs: Vec<f64>,
    mid: f64,
    half: f64,
}

impl Chebyshev {
    /// Interpolates at `n` first-kind nodes (endpoints are never sampled).
    pub fn interpolate<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, n: usize) -> Self {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let theta: Vec<f64> = (0..n).map(|j| std::f64::consts::PI * (j as f64 + 0.5) / n as f64).collect();
        let vals: Vec<f64> = theta.iter().map(|t| f(mid + half * t.cos())).collect();
        let coeffs = (0..n)
            .map(|k| {
                let s: f64 = vals.iter().zip(&theta).map(|(v, t)| v * (k as f64 * t).cos()).sum();
                let scale = if k == 0 { 1.0 } else { 2.0 };
                scale * s / n as f64
            })
            .collect();
        Chebyshev { coeffs, mid, half }
    }

    /// Doubles the degree until the trailing coefficients fall below
    /// `tol · max|c_k|`; `None` if `max_n` is reached first.
    pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64, max_n: usize) -> Option<Self> {
        let mut n = 32;
        while n <= max_n {
            let c = Chebyshev::interpolate(&mut f, lo, hi, n);
            let scale = c.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let tail = c.coeffs[n - 6..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            // the direct transform leaves a rounding floor of a few ulps per coefficient
            let floor = tol.max(8.0 * n as f64 * f64::EPSILON);
            if tail <= floor * scale.max(f64::MIN_POSITIVE) {
                let mut c = c;
                let cut = c.coeffs.iter().rposition(|v| v.abs() > 0.01 * tol * scale).map_or(1, |i| i + 1);
                c.coeffs.truncate(cut);
                return Some(c);
            }
            n *= 2;
        }
        None
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    fn local(&self, x: f64) -> f64 {
        ((x - self.mid) / self.half).clamp(-1.0, 1.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let s = self.local(x);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * s * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        s * b1 - b2 + self.coeffs[0]
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let n = self.coeffs.len();
        if n < 2 {
            return 0.0;
        }
        let mut d = vec![0.0; n + 1];
        for k in (1..n).rev() {
            d[k - 1] = d[k + 1] + 2.0 * k as f64 * self.coeffs[k];
        }
        d[0] *= 0.5;
        let s = self.local(x);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in d[..n - 1].iter().skip(1).rev() {
            let b0 = 2.0 * s * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        (s * b1 - b2 + d[0]) / self.half
    }

    /// `f(a + h) - f(a)` without cancellation for small `h`.
    pub fn difference(&self, a: f64, h: f64) -> f64 {
        let sa = self.local(a);
        let sb = self.local(a + h);
        let ds = h / self.half;
        if ds == 0.0 {
            return 0.0;
        }
        // D_k = (T_k(sb) - T_k(sa)) / ds satisfies
        // D_{k+1} = 2 sb D_k + 2 T_k(sa) - D_{k-1}.
        let (mut t_prev, mut t_cur) = (1.0, sa);
        let (mut d_prev, mut d_cur) = (0.0, 1.0);
        let mut acc = if self.coeffs.len() > 1 { self.coeffs[1] } else { 0.0 };
        for &c in self.coeffs.iter().skip(2) {
            let d_next = 2.0 * sb * d_cur + 2.0 * t_cur - d_prev;
            let t_next = 2.0 * sa * t_cur - t_prev;
            acc += c * d_next;
            d_prev = d_cur;
            d_cur = d_next;
            t_prev = t_cur;
            t_cur = t_next;
        }
        acc * ds
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_smooth_function() {
        let c = Chebyshev::adaptive(|x: f64| (2.0 * x).exp() / (3.0 - x), -1.0, 2.5, 1e-15, 512).unwrap();
        for x in [-1.0f64, -0.3, 0.7, 2.5] {
            let f = (2.0 * x).exp() / (3.0 - x);
            assert!((c.eval(x) - f).abs() < 1e-12 * f.abs().max(1.0));
        }
        let x: f64 = 0.4;
        let df = (2.0 * x).exp() * (2.0 / (3.0 - x) + 1.0 / (3.0 - x).powi(2));
        assert!((c.derivative(x) - df).abs() < 1e-10 * df);
    }

    #[test]
    fn difference_is_accurate_for_close_points() {
        let c = Chebyshev::adaptive(|x: f64| x.sin() + 0.3 * x * x, -2.0, 2.0, 1e-15, 512).unwrap();
        let a: f64 = 0.7;
        for h in [1e-3, 1e-8, 1e-13] {
            let want = 2.0 * (a + 0.5 * h).cos() * (0.5 * h).sin() + 0.3 * h * (2.0 * a + h);
            let got = c.difference(a, h);
            assert!((got - want).abs() < 1e-11 * want.abs(), "h={h}: {got} {want}");
        }
        assert!((c.difference(-1.5, 2.7) - (c.eval(1.2) - c.eval(-1.5))).abs() < 1e-13);
    }
}
