//! Double-double arithmetic (about 32 significant digits) used as an
//! independent reference for the distribution metrics.

#![allow(dead_code)]

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn mul_f(self, x: f64) -> Dd {
        self.mul(Dd::from(x))
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul_f(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul_f(q2));
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add(Dd::from(q3))
    }

    /// exp via reduction by ln 2, scaling by 2^-10 and a Taylor series.
    pub fn exp(self) -> Dd {
        if self.hi == 0.0 {
            return Dd::ONE;
        }
        let k = (self.hi / LN2.hi).round();
        let r = self.sub(LN2.mul_f(k)).mul_f(1.0 / 1024.0);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for i in 1..=20 {
            term = term.mul(r).div(Dd::from(i as f64));
            sum = sum.add(term);
        }
        for _ in 0..10 {
            sum = sum.mul(sum);
        }
        let scale = 2f64.powi(k as i32);
        Dd {
            hi: sum.hi * scale,
            lo: sum.lo * scale,
        }
    }

    /// Natural log by two Newton steps on `exp(y) = x`.
    pub fn ln(self) -> Dd {
        assert!(self.hi > 0.0, "log of non-positive value");
        let mut y = Dd::from(self.hi.ln());
        for _ in 0..2 {
            y = y.add(self.mul(y.neg().exp())).sub(Dd::ONE);
        }
        y
    }

    pub fn log2(self) -> Dd {
        self.ln().div(LN2)
    }

    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let y = Dd::from(self.hi.sqrt());
        y.add(self.sub(y.mul(y)).div(y.mul_f(2.0)))
    }
}

const EPS: f64 = 1e-12;

fn clip(x: f64) -> Dd {
    Dd::from(x.max(EPS))
}

fn kl_dd(p: &[f64], q: &[Dd], log: fn(Dd) -> Dd) -> Dd {
    let mut total = Dd::ZERO;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            let b = if b.hi < EPS { Dd::from(EPS) } else { b };
            total = total.add(Dd::from(a).mul(log(clip(a)).sub(log(b))));
        }
    }
    total
}

pub fn jsd(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<Dd> = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| Dd::from(a).add(Dd::from(b)).mul_f(0.5))
        .collect();
    let div = kl_dd(p, &m, Dd::log2)
        .add(kl_dd(q, &m, Dd::log2))
        .mul_f(0.5);
    if div.hi <= 0.0 {
        0.0
    } else {
        div.sqrt().to_f64()
    }
}

pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    let q: Vec<Dd> = q.iter().map(|&v| Dd::from(v)).collect();
    kl_dd(p, &q, Dd::ln).to_f64()
}

pub fn entropy(p: &[f64]) -> f64 {
    let mut total = Dd::ZERO;
    for &v in p.iter().filter(|&&v| v > 0.0) {
        total = total.sub(Dd::from(v).mul(Dd::from(v).ln()));
    }
    total.to_f64()
}
