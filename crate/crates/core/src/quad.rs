//! Globally adaptive Gauss-Kronrod (7/15) quadrature for complex integrands.

use alloc::collections::BinaryHeap;

use crate::{Error, Result, C64};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-13, rel: 1e-11, max_intervals: 200_000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: C64,
    pub error: f64,
}

struct Panel {
    a: f64,
    b: f64,
    value: C64,
    error: f64,
}

fn kronrod<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += s * WGK[i];
        if i % 2 == 1 {
            g += s * WG[i / 2];
        }
    }
    let k = k * h;
    let g = g * h;
    (k, (k - g).norm())
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error).is_eq()
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over `[a, b]`, starting from `panels` equal sub-intervals and
/// bisecting the panel with the largest error estimate until the summed
/// estimate meets `tol`.
pub fn integrate<F: FnMut(f64) -> C64>(mut f: F, a: f64, b: f64, panels: usize, tol: Tolerance) -> Result<Estimate> {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut heap: BinaryHeap<Panel> = (0..panels)
        .map(|i| {
            let lo = a + width * i as f64;
            let hi = if i + 1 == panels { b } else { lo + width };
            let (value, error) = kronrod(&mut f, lo, hi);
            Panel { a: lo, b: hi, value, error }
        })
        .collect();
    // running sums, refreshed exactly before accepting
    let mut total: C64 = heap.iter().map(|p| p.value).sum();
    let mut err: f64 = heap.iter().map(|p| p.error).sum();
    loop {
        if err <= tol.abs.max(tol.rel * total.norm()) {
            total = heap.iter().map(|p| p.value).sum();
            err = heap.iter().map(|p| p.error).sum();
            if err <= tol.abs.max(tol.rel * total.norm()) {
                return Ok(Estimate { value: total, error: err });
            }
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::Quadrature { achieved: err });
        }
        let p = heap.pop().expect("at least one panel");
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            return Err(Error::Quadrature { achieved: err });
        }
        let (v1, e1) = kronrod(&mut f, p.a, mid);
        let (v2, e2) = kronrod(&mut f, mid, p.b);
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.error;
        heap.push(Panel { a: p.a, b: mid, value: v1, error: e1 });
        heap.push(Panel { a: mid, b: p.b, value: v2, error: e2 });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_oscillatory() {
        let e = integrate(|x| C64::new(x * x * x, 0.0), 0.0, 2.0, 1, Tolerance::default()).unwrap();
        assert!((e.value.re - 4.0).abs() < 1e-13);
        let e = integrate(|x| C64::new((40.0 * x).cos(), x.sin()), 0.0, 3.0, 4, Tolerance::default()).unwrap();
        assert!((e.value.re - 120f64.sin() / 40.0).abs() < 1e-11);
        assert!((e.value.im - (1.0 - 3f64.cos())).abs() < 1e-11);
    }

    #[test]
    fn reports_non_convergence() {
        let tol = Tolerance { abs: 0.0, rel: 0.0, max_intervals: 8 };
        let r = integrate(|x| C64::new(1.0 / (x.abs() + 1e-300).sqrt(), 0.0), 0.0, 1.0, 1, tol);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }
}
