//! Analytic fields with the derivatives the forcing terms need.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Value and first two derivatives of a function of one variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet1 {
    pub v: f64,
    pub d: f64,
    pub dd: f64,
}

/// Value, gradient and unmixed second derivatives of a function on the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub x: f64,
    pub y: f64,
    pub xx: f64,
    pub yy: f64,
}

#[derive(Clone)]
pub struct Field1D(Arc<dyn Fn(f64) -> Jet1 + Send + Sync>);

#[derive(Clone)]
pub struct Field2D(Arc<dyn Fn(f64, f64) -> Jet2 + Send + Sync>);

impl fmt::Debug for Field1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Field1D")
    }
}

impl fmt::Debug for Field2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Field2D")
    }
}

impl Field1D {
    pub fn new(f: impl Fn(f64) -> Jet1 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn jet(&self, x: f64) -> Jet1 {
        (self.0)(x)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.jet(x).v
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| Jet1 {
            v: c,
            d: 0.0,
            dd: 0.0,
        })
    }

    /// `c · (1 + sin(k x)/2)`
    pub fn sine_modulated(c: f64, k: f64) -> Self {
        Self::new(move |x| Jet1 {
            v: c * (1.0 + 0.5 * (k * x).sin()),
            d: 0.5 * c * k * (k * x).cos(),
            dd: -0.5 * c * k * k * (k * x).sin(),
        })
    }

    /// `sin(k x)`
    pub fn sine(k: f64) -> Self {
        Self::new(move |x| Jet1 {
            v: (k * x).sin(),
            d: k * (k * x).cos(),
            dd: -k * k * (k * x).sin(),
        })
    }

    /// `exp(k x)`
    pub fn exponential(k: f64) -> Self {
        Self::new(move |x| {
            let e = (k * x).exp();
            Jet1 {
                v: e,
                d: k * e,
                dd: k * k * e,
            }
        })
    }

    /// `exp(sin x)`
    pub fn exp_sine() -> Self {
        Self::new(|x| {
            let (s, c) = x.sin_cos();
            let e = s.exp();
            Jet1 {
                v: e,
                d: c * e,
                dd: (c * c - s) * e,
            }
        })
    }

    /// `c0 + c1 x + c2 x²`
    pub fn quadratic(c0: f64, c1: f64, c2: f64) -> Self {
        Self::new(move |x| Jet1 {
            v: c0 + c1 * x + c2 * x * x,
            d: c1 + 2.0 * c2 * x,
            dd: 2.0 * c2,
        })
    }
}

impl Field2D {
    pub fn new(f: impl Fn(f64, f64) -> Jet2 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn jet(&self, x: f64, y: f64) -> Jet2 {
        (self.0)(x, y)
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.jet(x, y).v
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_, _| Jet2 {
            v: c,
            x: 0.0,
            y: 0.0,
            xx: 0.0,
            yy: 0.0,
        })
    }

    /// `sin(kπx) sin(kπy)`
    pub fn sine_product(k: f64) -> Self {
        Self::new(move |x, y| {
            let w = k * PI;
            let (sx, cx) = (w * x).sin_cos();
            let (sy, cy) = (w * y).sin_cos();
            let v = sx * sy;
            Jet2 {
                v,
                x: w * cx * sy,
                y: w * sx * cy,
                xx: -w * w * v,
                yy: -w * w * v,
            }
        })
    }

    /// `cos(kπx) cos(kπy)`
    pub fn cosine_product(k: f64) -> Self {
        Self::new(move |x, y| {
            let w = k * PI;
            let (sx, cx) = (w * x).sin_cos();
            let (sy, cy) = (w * y).sin_cos();
            let v = cx * cy;
            Jet2 {
                v,
                x: -w * sx * cy,
                y: -w * cx * sy,
                xx: -w * w * v,
                yy: -w * w * v,
            }
        })
    }

    /// `c · exp(σ φ)` for a field `φ`.
    pub fn scaled_exp_of(c: f64, sigma: f64, phi: Field2D) -> Self {
        Self::new(move |x, y| {
            let p = phi.jet(x, y);
            let e = c * (sigma * p.v).exp();
            Jet2 {
                v: e,
                x: sigma * p.x * e,
                y: sigma * p.y * e,
                xx: (sigma * p.xx + sigma * sigma * p.x * p.x) * e,
                yy: (sigma * p.yy + sigma * sigma * p.y * p.y) * e,
            }
        })
    }

    /// `c · (1 + φ/2)` for a field `φ`.
    pub fn half_modulated(c: f64, phi: Field2D) -> Self {
        Self::new(move |x, y| {
            let p = phi.jet(x, y);
            Jet2 {
                v: c * (1.0 + 0.5 * p.v),
                x: 0.5 * c * p.x,
                y: 0.5 * c * p.y,
                xx: 0.5 * c * p.xx,
                yy: 0.5 * c * p.yy,
            }
        })
    }
}

/// `−(m w')'` from jets.
pub fn flux_divergence_1d(m: Jet1, w: Jet1) -> f64 {
    -(m.d * w.d + m.v * w.dd)
}

/// `−∇·(m ∇w)` from jets.
pub fn flux_divergence_2d(m: Jet2, w: Jet2) -> f64 {
    -(m.x * w.x + m.v * w.xx + m.y * w.y + m.v * w.yy)
}
