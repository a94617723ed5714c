//! Double-double transfer-matrix model used as a finite-difference oracle.
//! Same physics as the simulator, evaluated with ~32 significant digits so
//! difference quotients are not swamped by rounding.

#![allow(dead_code)]

use std::ops::{Add, Div, Mul, Neg, Sub};

use twofloat::TwoFloat;

use prism_core::{Design, Simulator};

#[derive(Debug, Clone, Copy)]
pub struct C {
    re: TwoFloat,
    im: TwoFloat,
}

fn dd(x: f64) -> TwoFloat {
    TwoFloat::from(x)
}

impl C {
    fn new(re: TwoFloat, im: TwoFloat) -> Self {
        Self { re, im }
    }

    fn real(x: f64) -> Self {
        Self::new(dd(x), dd(0.0))
    }

    fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    fn norm_sqr(self) -> TwoFloat {
        self.re * self.re + self.im * self.im
    }

    fn scale(self, s: TwoFloat) -> Self {
        Self::new(self.re * s, self.im * s)
    }

    fn cos(self) -> Self {
        let (s, c) = sin_cos(self.re);
        let (sh, ch) = sinh_cosh(self.im);
        Self::new(c * ch, -(s * sh))
    }

    fn sin(self) -> Self {
        let (s, c) = sin_cos(self.re);
        let (sh, ch) = sinh_cosh(self.im);
        Self::new(s * ch, c * sh)
    }

    fn abs_max(self) -> f64 {
        f64::from(self.re).abs().max(f64::from(self.im).abs())
    }
}

// twofloat's division and transcendental functions are only accurate to
// ~1e-17, which shows up as noise in difference quotients. The helpers below
// keep full double-double precision.

/// Quotient with one Newton correction.
fn div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q = a / b;
    q + (a - q * b) / b
}

fn sin_cos(x: TwoFloat) -> (TwoFloat, TwoFloat) {
    let two_pi = dd(2.0) * twofloat::consts::PI;
    let k = f64::from(x / two_pi).round();
    let r = x - two_pi * dd(k);
    let (mut s, mut c) = (dd(0.0), dd(0.0));
    let mut term = dd(1.0);
    for n in 0..60 {
        if n % 2 == 0 {
            c += if n % 4 == 0 { term } else { -term };
        }
        term = div(term * r, dd((n + 1) as f64));
        if n % 2 == 0 {
            s += if n % 4 == 0 { term } else { -term };
        }
    }
    (s, c)
}

fn exp(x: TwoFloat) -> TwoFloat {
    let ln2 = twofloat::consts::LN_2;
    let k = f64::from(x / ln2).round();
    let r = x - ln2 * dd(k);
    let mut sum = dd(1.0);
    let mut term = dd(1.0);
    for n in 1..40 {
        term = div(term * r, dd(n as f64));
        sum += term;
    }
    sum * dd(2f64.powi(k as i32))
}

fn sinh_cosh(x: TwoFloat) -> (TwoFloat, TwoFloat) {
    if f64::from(x).abs() < 0.5 {
        let mut sh = dd(0.0);
        let mut ch = dd(0.0);
        let mut term = dd(1.0);
        for n in 0..40 {
            if n % 2 == 0 {
                ch += term;
            } else {
                sh += term;
            }
            term = div(term * x, dd((n + 1) as f64));
        }
        return (sh, ch);
    }
    let e = exp(x);
    let inv = div(dd(1.0), e);
    ((e - inv) * dd(0.5), (e + inv) * dd(0.5))
}

impl Add for C {
    type Output = C;
    fn add(self, o: C) -> C {
        C::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for C {
    type Output = C;
    fn sub(self, o: C) -> C {
        C::new(self.re - o.re, self.im - o.im)
    }
}

impl Neg for C {
    type Output = C;
    fn neg(self) -> C {
        C::new(-self.re, -self.im)
    }
}

impl Mul for C {
    type Output = C;
    fn mul(self, o: C) -> C {
        C::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

impl Div for C {
    type Output = C;
    fn div(self, o: C) -> C {
        let d = o.norm_sqr();
        let n = self * o.conj();
        C::new(div(n.re, d), div(n.im, d))
    }
}

type M = [[C; 2]; 2];

fn mul(a: &M, b: &M) -> M {
    let mut out = [[C::real(0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn amplitudes(m: &M, ei: C, eo: C) -> (C, C) {
    let b = m[0][0] + m[0][1] * eo;
    let c = m[1][0] + m[1][1] * eo;
    let den = ei * b + c;
    ((ei * b - c) / den, (ei + ei) / den)
}

/// Total `[R; T]` spectrum in double-double with thickness `t_layer` of layer
/// `layer` replaced by `base + offset` (exact sum).
pub fn simulate_dd(design: &Design, sim: &Simulator, layer: usize, offset: f64) -> Vec<TwoFloat> {
    let nw = sim.grid().len();
    let mut out = vec![dd(0.0); 2 * nw];
    let two_pi = TwoFloat::from(2.0) * twofloat::consts::PI;
    for (w, &lambda) in sim.grid().points().iter().enumerate() {
        let mut acc: M = [[C::real(1.0), C::real(0.0)], [C::real(0.0), C::real(1.0)]];
        let mut exp2: i32 = 0;
        for (l, (m, d)) in design.layers().enumerate() {
            let n = sim.index(m, w);
            let eta = C::new(dd(n.re), dd(-n.im));
            let thick = if l == layer { dd(d) + dd(offset) } else { dd(d) };
            let delta = eta.scale(div(two_pi * thick, dd(lambda)));
            let (c, s) = (delta.cos(), delta.sin());
            let i = C::new(dd(0.0), dd(1.0));
            let lm: M = [[c, i * s / eta], [i * eta * s, c]];
            acc = mul(&acc, &lm);
            let big = acc.iter().flatten().fold(0.0f64, |b, z| b.max(z.abs_max()));
            if big > 1e100 {
                // Power-of-two scaling keeps the renormalisation exact.
                let k = big.log2().floor() as i32;
                let inv = dd(2f64.powi(-k));
                acc = acc.map(|r| r.map(|z| z.scale(inv)));
                exp2 += k;
            }
        }
        let ns = sim.substrate_index(w);
        let sub = C::new(dd(ns.re), dd(-ns.im));
        let air = C::real(1.0);
        let t_scale = dd(2f64.powi(-2 * exp2));
        let (r, t) = amplitudes(&acc, air, sub);
        let rf = r.norm_sqr();
        let tf = sub.re * t.norm_sqr() * t_scale;
        let rev: M = [[acc[1][1], acc[0][1]], [acc[1][0], acc[0][0]]];
        let (r, t) = amplitudes(&rev, sub, air);
        let rb = r.norm_sqr();
        let tb = div(t.norm_sqr(), sub.re) * t_scale;
        let cl = sim.closure(w);
        let tau2 = dd(cl.tau) * dd(cl.tau);
        let denom = dd(1.0) - rb * dd(cl.r_b) * tau2;
        out[w] = rf + div(tf * tb * dd(cl.r_b) * tau2, denom);
        out[nw + w] = div(tf * dd(cl.tau) * dd(cl.t_b), denom);
    }
    out
}

/// Fourth-order central difference `∂s/∂d_layer` with step `h`, evaluated in
/// double-double.
pub fn fd_column(design: &Design, sim: &Simulator, layer: usize, h: f64) -> Vec<f64> {
    let at = |k: f64| simulate_dd(design, sim, layer, k * h);
    let (p1, m1, p2, m2) = (at(1.0), at(-1.0), at(2.0), at(-2.0));
    (0..p1.len())
        .map(|i| {
            let num = dd(8.0) * (p1[i] - m1[i]) - (p2[i] - m2[i]);
            f64::from(div(num, dd(12.0 * h)))
        })
        .collect()
}
