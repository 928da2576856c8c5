//! Small numerical kernels: cubic Hermite interpolation with Fritsch–Carlson
//! slopes, bracketed root finding and trapezoid quadrature.

use crate::error::{Error, Result};

/// Value, first and second derivative of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Eval {
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

impl Eval {
    pub const ZERO: Eval = Eval { value: 0.0, slope: 0.0, curvature: 0.0 };

    pub fn new(value: f64, slope: f64, curvature: f64) -> Self {
        Eval { value, slope, curvature }
    }

    /// `self + k * other`, componentwise.
    pub fn add_scaled(self, k: f64, other: Eval) -> Eval {
        Eval {
            value: self.value + k * other.value,
            slope: self.slope + k * other.slope,
            curvature: self.curvature + k * other.curvature,
        }
    }
}

/// Piecewise cubic Hermite interpolant through `(xs[i], ys[i])` with node
/// derivatives `ds[i]`. Evaluation outside `[xs[0], xs[n-1]]` is an error.
#[derive(Debug, Clone, PartialEq)]
pub struct Hermite {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl Hermite {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, ds: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() || xs.len() != ds.len() {
            return Err(Error::InvalidInput(format!(
                "hermite needs >= 2 nodes with matching lengths (got {}, {}, {})",
                xs.len(),
                ys.len(),
                ds.len()
            )));
        }
        if xs.iter().chain(&ys).chain(&ds).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite interpolation node".into()));
        }
        if xs.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidInput("knot abscissae must be strictly increasing".into()));
        }
        Ok(Hermite { xs, ys, ds })
    }

    /// Monotone cubic through the data, slopes by Fritsch–Carlson.
    pub fn pchip(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::InvalidInput("pchip needs >= 2 nodes of matching length".into()));
        }
        if xs.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidInput("knot abscissae must be strictly increasing".into()));
        }
        let ds = fritsch_carlson_slopes(&xs, &ys);
        Hermite::new(xs, ys, ds)
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn slopes(&self) -> &[f64] {
        &self.ds
    }

    pub fn span(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn eval(&self, x: f64) -> Result<Eval> {
        let (lo, hi) = self.span();
        if !(x >= lo && x <= hi) {
            return Err(Error::OutOfRange { value: x, lo, hi });
        }
        Ok(self.eval_unchecked(x))
    }

    /// Evaluate, continuing linearly with the end slopes outside the span.
    pub fn eval_extended(&self, x: f64) -> Eval {
        let n = self.xs.len();
        if x < self.xs[0] {
            Eval::new(self.ys[0] + self.ds[0] * (x - self.xs[0]), self.ds[0], 0.0)
        } else if x > self.xs[n - 1] {
            Eval::new(self.ys[n - 1] + self.ds[n - 1] * (x - self.xs[n - 1]), self.ds[n - 1], 0.0)
        } else {
            self.eval_unchecked(x)
        }
    }

    /// Index of the segment containing `x`, clamped to the span.
    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        }
    }

    /// `∫_{xs[i]}^{x}` of the cubic on segment `i`.
    fn segment_integral(&self, i: usize, x: f64) -> f64 {
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
        let i00 = t - t3 + 0.5 * t4;
        let i10 = 0.5 * t2 - 2.0 * t3 / 3.0 + 0.25 * t4;
        let i01 = t3 - 0.5 * t4;
        let i11 = 0.25 * t4 - t3 / 3.0;
        h * (self.ys[i] * i00 + h * self.ds[i] * i10 + self.ys[i + 1] * i01 + h * self.ds[i + 1] * i11)
    }

    /// Cumulative integrals from the first knot to every knot.
    pub fn knot_integrals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.xs.len()];
        for i in 0..self.xs.len() - 1 {
            out[i + 1] = out[i] + self.segment_integral(i, self.xs[i + 1]);
        }
        out
    }

    /// `∫_{xs[0]}^{x}` for `x` in the span, given [`Hermite::knot_integrals`].
    pub fn integral_with(&self, cumulative: &[f64], x: f64) -> Result<f64> {
        let (lo, hi) = self.span();
        if !(x >= lo && x <= hi) {
            return Err(Error::OutOfRange { value: x, lo, hi });
        }
        let i = self.segment(x);
        Ok(cumulative[i] + self.segment_integral(i, x))
    }

    fn eval_unchecked(&self, x: f64) -> Eval {
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (y0, y1, d0, d1) = (self.ys[i], self.ys[i + 1], self.ds[i], self.ds[i + 1]);
        if t == 0.0 {
            let c2 = (6.0 * (y1 - y0) / h - 4.0 * d0 - 2.0 * d1) / h;
            return Eval::new(y0, d0, c2);
        }
        if t == 1.0 {
            let c2 = (-6.0 * (y1 - y0) / h + 2.0 * d0 + 4.0 * d1) / h;
            return Eval::new(y1, d1, c2);
        }
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let value = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
        let dh00 = 6.0 * t2 - 6.0 * t;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = -dh00;
        let dh11 = 3.0 * t2 - 2.0 * t;
        let slope = (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1;
        let ddh00 = 12.0 * t - 6.0;
        let ddh10 = 6.0 * t - 4.0;
        let ddh11 = 6.0 * t - 2.0;
        let curvature = (ddh00 * (y0 - y1) / h + ddh10 * d0 + ddh11 * d1) / h;
        Eval::new(value, slope, curvature)
    }
}

/// Shape-preserving node slopes (Fritsch–Carlson weighted harmonic mean in
/// the interior, one-sided three-point estimates at the ends).
pub fn fritsch_carlson_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|p| p[1] - p[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (a, b) = (delta[k - 1], delta[k]);
        if a * b > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / a + w2 / b);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d * m0 <= 0.0 {
        0.0
    } else if m0 * m1 <= 0.0 && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

/// Brent's method on a bracket with `f(a)` and `f(b)` of opposite sign.
pub fn brent<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64, xtol: f64) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoInteriorSolution(format!(
            "root not bracketed on [{a}, {b}] (f = {fa}, {fb})"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Err(Error::NoConvergence { points: vec![b] })
}

/// Trapezoid quadrature weights for nodes `xs`: `∫ f ≈ Σ w_i f(x_i)`.
pub fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = 0.5 * (xs[i + 1] - xs[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

/// Cumulative trapezoid integral starting from zero at `xs[0]`.
pub fn cumulative_trapezoid(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..xs.len() {
        acc += 0.5 * (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]);
        out.push(acc);
    }
    out
}

/// `n` equally log-spaced points on `[lo, hi]`; endpoints exact.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (n - 1) as f64;
    let mut g: Vec<f64> = (0..n).map(|i| (a + step * i as f64).exp()).collect();
    g[0] = lo;
    g[n - 1] = hi;
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_reproduces_cubic() {
        let f = |x: f64| 1.0 + 2.0 * x - 0.5 * x * x + 0.1 * x * x * x;
        let df = |x: f64| 2.0 - x + 0.3 * x * x;
        let xs = vec![0.0, 0.7, 1.9, 3.0];
        let ys = xs.iter().map(|&x| f(x)).collect();
        let ds = xs.iter().map(|&x| df(x)).collect();
        let h = Hermite::new(xs, ys, ds).unwrap();
        for &x in &[0.1, 0.5, 1.2, 2.5, 2.99] {
            let e = h.eval(x).unwrap();
            assert!((e.value - f(x)).abs() < 1e-12);
            assert!((e.slope - df(x)).abs() < 1e-12);
            assert!((e.curvature - (-1.0 + 0.6 * x)).abs() < 1e-10);
        }
        let big_f = |x: f64| x + x * x - x * x * x / 6.0 + 0.025 * x.powi(4);
        let cum = h.knot_integrals();
        for &x in &[0.0, 0.4, 1.9, 2.2, 3.0] {
            assert!((h.integral_with(&cum, x).unwrap() - big_f(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn knots_reproduced_exactly() {
        let xs = vec![0.0, 1.0, 2.5, 4.0];
        let ys = vec![0.3, 0.1, 0.7, 0.71];
        let h = Hermite::pchip(xs.clone(), ys.clone()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(h.eval(*x).unwrap().value, *y);
        }
        assert!(matches!(h.eval(-0.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn pchip_preserves_monotonicity() {
        let xs = vec![0.0, 1.0, 1.1, 5.0, 6.0];
        let ys = vec![0.0, 0.1, 2.0, 2.1, 8.0];
        let h = Hermite::pchip(xs, ys).unwrap();
        let mut prev = -1.0;
        for i in 0..=600 {
            let e = h.eval(i as f64 * 0.01).unwrap();
            assert!(e.slope >= -1e-12);
            assert!(e.value >= prev - 1e-12);
            prev = e.value;
        }
    }

    #[test]
    fn brent_finds_cubic_root() {
        let r = brent(|x| Ok(x * x * x - 2.0), 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-14);
    }

    #[test]
    fn log_grid_has_constant_ratio() {
        let g = log_grid(600.0, 325_000.0, 1000);
        let r0 = g[1] / g[0];
        for p in g.windows(2) {
            assert!((p[1] / p[0] - r0).abs() < 1e-12);
        }
    }
}
