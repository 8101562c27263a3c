//! Smooth compactly supported functions with exact derivatives via Taylor jets.

use std::fmt::Debug;

/// Truncated Taylor series at a point; `c[k] = f^(k)(x) / k!`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet(pub Vec<f64>);

impl Jet {
    pub fn constant(v: f64, len: usize) -> Jet {
        let mut c = vec![0.0; len];
        if len > 0 {
            c[0] = v;
        }
        Jet(c)
    }

    /// Jet of `x -> slope * x + offset` at the expansion point.
    pub fn affine(value: f64, slope: f64, len: usize) -> Jet {
        let mut j = Jet::constant(value, len);
        if len > 1 {
            j.0[1] = slope;
        }
        j
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn value(&self) -> f64 {
        self.0.first().copied().unwrap_or(0.0)
    }

    /// `f^(k)(x)` for `k < len`.
    pub fn derivatives(&self) -> Vec<f64> {
        let mut fact = 1.0;
        self.0
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if k > 0 {
                    fact *= k as f64;
                }
                c * fact
            })
            .collect()
    }

    pub fn add(&self, o: &Jet) -> Jet {
        Jet(self.0.iter().zip(&o.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        Jet(self.0.iter().zip(&o.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet(self.0.iter().map(|a| a * s).collect())
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let n = self.len().min(o.len());
        Jet((0..n).map(|k| (0..=k).map(|i| self.0[i] * o.0[k - i]).sum()).collect())
    }

    pub fn exp(&self) -> Jet {
        let n = self.len();
        let mut e = vec![0.0; n];
        if n == 0 {
            return Jet(e);
        }
        e[0] = self.0[0].exp();
        for k in 1..n {
            e[k] = (1..=k).map(|j| j as f64 * self.0[j] * e[k - j]).sum::<f64>() / k as f64;
        }
        Jet(e)
    }

    pub fn recip(&self) -> Jet {
        let n = self.len();
        let mut r = vec![0.0; n];
        if n == 0 {
            return Jet(r);
        }
        r[0] = 1.0 / self.0[0];
        for k in 1..n {
            r[k] = -(1..=k).map(|j| self.0[j] * r[k - j]).sum::<f64>() / self.0[0];
        }
        Jet(r)
    }
}

/// `exp(-1/t)` for `t > 0`, zero otherwise.
fn flat_jet(t: &Jet) -> Jet {
    if t.value() <= 0.0 {
        Jet::constant(0.0, t.len())
    } else {
        t.recip().scale(-1.0).exp()
    }
}

/// Smooth step rising from 0 at `t = 0` to 1 at `t = 1`.
pub fn smoothstep_jet(t: &Jet) -> Jet {
    let len = t.len();
    if t.value() <= 0.0 {
        return Jet::constant(0.0, len);
    }
    if t.value() >= 1.0 {
        return Jet::constant(1.0, len);
    }
    let one_minus = Jet::constant(1.0, len).sub(t);
    let a = flat_jet(t);
    let b = flat_jet(&one_minus);
    a.mul(&a.add(&b).recip())
}

pub fn smoothstep(t: f64) -> f64 {
    smoothstep_jet(&Jet::constant(t, 1)).value()
}

pub trait SmoothFunction: Debug + Send + Sync {
    /// Closed interval outside of which the function vanishes identically.
    fn support(&self) -> (f64, f64);

    /// Taylor jet with `len` coefficients at `x`.
    fn jet(&self, x: f64, len: usize) -> Jet;

    fn value(&self, x: f64) -> f64 {
        self.jet(x, 1).value()
    }

    /// Sampled sup norm over the support.
    fn sup_norm(&self) -> f64 {
        let (a, b) = self.support();
        (0..=400)
            .map(|k| self.value(a + (b - a) * k as f64 / 400.0).abs())
            .fold(0.0, f64::max)
    }

    /// Sampled sup norm of the `k`-th derivative.
    fn derivative_sup(&self, k: usize) -> f64 {
        let (a, b) = self.support();
        (1..2000)
            .map(|i| self.jet(a + (b - a) * i as f64 / 2000.0, k + 1).derivatives()[k].abs())
            .fold(0.0, f64::max)
    }
}

/// `amplitude * exp(1 - 1/(1 - s^2))` with `s = (x - center)/radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn new(center: f64, radius: f64) -> Self {
        Bump { center, radius, amplitude: 1.0 }
    }
}

impl SmoothFunction for Bump {
    fn support(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }

    fn jet(&self, x: f64, len: usize) -> Jet {
        let s = (x - self.center) / self.radius;
        if s.abs() >= 1.0 {
            return Jet::constant(0.0, len);
        }
        let sj = Jet::affine(s, 1.0 / self.radius, len);
        let one_minus = Jet::constant(1.0, len).sub(&sj.mul(&sj));
        Jet::constant(1.0, len).sub(&one_minus.recip()).exp().scale(self.amplitude)
    }
}

/// Equal to 1 on `[lo, hi]`, decaying smoothly to 0 over `ramp` on each side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plateau {
    pub lo: f64,
    pub hi: f64,
    pub ramp: f64,
}

impl SmoothFunction for Plateau {
    fn support(&self) -> (f64, f64) {
        (self.lo - self.ramp, self.hi + self.ramp)
    }

    fn jet(&self, x: f64, len: usize) -> Jet {
        let left = Jet::affine((x - self.lo + self.ramp) / self.ramp, 1.0 / self.ramp, len);
        let right = Jet::affine((self.hi + self.ramp - x) / self.ramp, -1.0 / self.ramp, len);
        smoothstep_jet(&left).mul(&smoothstep_jet(&right))
    }
}

/// Pointwise product of two smooth functions.
#[derive(Debug, Clone)]
pub struct Product<F, G>(pub F, pub G);

impl<F: SmoothFunction, G: SmoothFunction> SmoothFunction for Product<F, G> {
    fn support(&self) -> (f64, f64) {
        let (a, b) = self.0.support();
        let (c, d) = self.1.support();
        let lo = a.max(c);
        let hi = b.min(d);
        if lo < hi {
            (lo, hi)
        } else {
            (lo, lo)
        }
    }

    fn jet(&self, x: f64, len: usize) -> Jet {
        self.0.jet(x, len).mul(&self.1.jet(x, len))
    }
}

/// The identically zero function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zero;

impl SmoothFunction for Zero {
    fn support(&self) -> (f64, f64) {
        (0.0, 0.0)
    }

    fn jet(&self, _x: f64, len: usize) -> Jet {
        Jet::constant(0.0, len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: &dyn SmoothFunction, x: f64, h: f64) -> f64 {
        (f.value(x + h) - f.value(x - h)) / (2.0 * h)
    }

    #[test]
    fn bump_derivative_matches_finite_difference() {
        let b = Bump::new(0.3, 0.8);
        for &x in &[-0.2, 0.1, 0.5, 0.9] {
            let d = b.jet(x, 3).derivatives();
            assert!((d[1] - fd(&b, x, 1e-5)).abs() < 1e-7, "{x}");
        }
        assert_eq!(b.value(0.3), 1.0);
        assert_eq!(b.value(1.2), 0.0);
    }

    #[test]
    fn plateau_shape() {
        let p = Plateau { lo: 1.0, hi: 2.0, ramp: 0.5 };
        assert_eq!(p.value(1.5), 1.0);
        assert_eq!(p.value(0.4), 0.0);
        assert!((p.value(0.75) - 0.5).abs() < 1e-12);
        let d = p.jet(0.7, 2).derivatives();
        assert!((d[1] - fd(&p, 0.7, 1e-6)).abs() < 1e-6);
    }

    #[test]
    fn jet_algebra_roundtrip() {
        let a = Jet(vec![2.0, 0.5, -1.0, 0.25]);
        let one = a.mul(&a.recip());
        assert!((one.0[0] - 1.0).abs() < 1e-15);
        assert!(one.0[1..].iter().all(|c| c.abs() < 1e-15));
        // exp(x) around 0
        let e = Jet::affine(0.0, 1.0, 5).exp();
        assert!((e.0[4] - 1.0 / 24.0).abs() < 1e-15);
    }
}
