//! Adaptive Gauss–Kronrod quadrature and tabulated cumulative integrals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

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

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod-15 and embedded Gauss-7 estimates of `∫_a^b f`.
pub fn gauss_kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, (&x, &wk)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = h * x;
        let pair = f(c - dx) + f(c + dx);
        kronrod += wk * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, gauss * h)
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub abs_error: f64,
    pub intervals: usize,
}

/// Settings for global adaptive quadrature.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 4000 }
    }
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

impl Quadrature {
    /// Integrates `f` over `[a, b]`, splitting first at every breakpoint
    /// strictly inside the interval (discontinuities of `f` belong there).
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64, breakpoints: &[f64]) -> Result<Estimate> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Numerical { routine: "quadrature", detail: format!("non-finite bounds [{a}, {b}]") });
        }
        if a == b {
            return Ok(Estimate { value: 0.0, abs_error: 0.0, intervals: 0 });
        }
        if a > b {
            let e = self.integrate(f, b, a, breakpoints)?;
            return Ok(Estimate { value: -e.value, ..e });
        }

        let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&p| p > a && p < b).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let mut heap = BinaryHeap::new();
        let mut total = 0.0;
        let mut total_err = 0.0;
        let mut lo = a;
        for hi in cuts.into_iter().chain(std::iter::once(b)) {
            let (k, g) = gauss_kronrod15(&f, lo, hi);
            let err = (k - g).abs();
            total += k;
            total_err += err;
            heap.push(Piece { a: lo, b: hi, value: k, error: err });
            lo = hi;
        }

        while total_err > self.abs_tol.max(self.rel_tol * total.abs()) && heap.len() < self.max_intervals {
            let worst = heap.pop().expect("non-empty heap");
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // Interval at floating-point resolution; nothing more to gain.
                heap.push(worst);
                break;
            }
            let (k1, g1) = gauss_kronrod15(&f, worst.a, mid);
            let (k2, g2) = gauss_kronrod15(&f, mid, worst.b);
            let (e1, e2) = ((k1 - g1).abs(), (k2 - g2).abs());
            total += k1 + k2 - worst.value;
            total_err += e1 + e2 - worst.error;
            heap.push(Piece { a: worst.a, b: mid, value: k1, error: e1 });
            heap.push(Piece { a: mid, b: worst.b, value: k2, error: e2 });
        }

        // Re-sum to shed drift from incremental updates.
        let (value, abs_error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
        if !value.is_finite() {
            return Err(Error::Numerical { routine: "quadrature", detail: "non-finite integrand".into() });
        }
        if abs_error > 1e-8 * value.abs().max(1.0) {
            return Err(Error::Numerical {
                routine: "quadrature",
                detail: format!(
                    "error estimate {abs_error:e} on [{a}, {b}] after {} intervals (value {value})",
                    heap.len()
                ),
            });
        }
        Ok(Estimate { value, abs_error, intervals: heap.len() })
    }
}

/// Integrates with the default settings and returns the value only.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breakpoints: &[f64]) -> Result<f64> {
    Quadrature::default().integrate(f, a, b, breakpoints).map(|e| e.value)
}

/// Running integral `x ↦ ∫_{lo}^{x} f` of a smooth function, tabulated on
/// fixed panels so that repeated queries cost one Kronrod rule each.
///
/// Discontinuities of `f` must be listed as edges when building the table.
pub struct CumulativeTable<F> {
    f: F,
    edges: Vec<f64>,
    cum: Vec<f64>,
}

impl<F: Fn(f64) -> f64> CumulativeTable<F> {
    pub fn new(f: F, lo: f64, hi: f64, panels: usize, extra_edges: &[f64]) -> Self {
        let panels = panels.max(1);
        let width = (hi - lo) / panels as f64;
        let mut edges: Vec<f64> = (0..=panels).map(|i| lo + width * i as f64).collect();
        edges[panels] = hi;
        edges.extend_from_slice(extra_edges);
        Self::with_edges(f, edges)
    }

    /// Table on caller-chosen panel edges; the range is `[min, max]` of the
    /// finite edges.
    pub fn with_edges(f: F, mut edges: Vec<f64>) -> Self {
        edges.retain(|e| e.is_finite());
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        assert!(edges.len() >= 2, "a cumulative table needs at least two distinct edges");

        let mut cum = Vec::with_capacity(edges.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in edges.windows(2) {
            acc += gauss_kronrod15(&f, w[0], w[1]).0;
            cum.push(acc);
        }
        Self { f, edges, cum }
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        *self.edges.last().expect("at least two edges")
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().expect("at least one entry")
    }

    /// `∫_{lo}^{x} f`, with `x` clamped to the tabulated range.
    pub fn upto(&self, x: f64) -> f64 {
        if x <= self.lo() {
            return 0.0;
        }
        if x >= self.hi() {
            return self.total();
        }
        let k = self.edges.partition_point(|&e| e <= x) - 1;
        let start = self.edges[k];
        if x == start {
            return self.cum[k];
        }
        self.cum[k] + gauss_kronrod15(&self.f, start, x).0
    }

    /// `∫_{x}^{hi} f`.
    pub fn from(&self, x: f64) -> f64 {
        self.total() - self.upto(x)
    }
}
