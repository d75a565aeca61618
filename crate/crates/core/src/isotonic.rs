//! Weighted isotonic (non-decreasing) regression by pool-adjacent-violators.

/// Non-decreasing least-squares fit to `values` with positive `weights`,
/// in the given order.
pub fn pav(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len(), "values and weights must have equal length");
    // Blocks of pooled neighbours: (weighted mean, total weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let mut cur = (v, w, 1);
        while let Some(&(pv, pw, pn)) = blocks.last() {
            if pv <= cur.0 {
                break;
            }
            blocks.pop();
            let tw = pw + cur.1;
            cur = ((pv * pw + cur.0 * cur.1) / tw, tw, pn + cur.2);
        }
        blocks.push(cur);
    }
    blocks.into_iter().flat_map(|(v, _, n)| std::iter::repeat_n(v, n)).collect()
}

/// Groups of tied `x` values after sorting: distinct `x` with the count
/// and mean of the corresponding `y`.
#[derive(Debug, Clone)]
pub struct TiedGroups {
    pub x: Vec<f64>,
    pub count: Vec<f64>,
    pub mean: Vec<f64>,
    /// For each sorted position, the group index of that observation.
    pub order: Vec<usize>,
    pub group_of: Vec<usize>,
}

impl TiedGroups {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        assert_eq!(x.len(), y.len(), "x and y must have equal length");
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let mut gx = Vec::new();
        let mut count = Vec::new();
        let mut sum = Vec::new();
        let mut group_of = vec![0; x.len()];
        for &i in &order {
            if gx.last() != Some(&x[i]) {
                gx.push(x[i]);
                count.push(0.0);
                sum.push(0.0);
            }
            let g = gx.len() - 1;
            count[g] += 1.0;
            sum[g] += y[i];
            group_of[i] = g;
        }
        let mean = sum.iter().zip(&count).map(|(s, c)| s / c).collect();
        Self { x: gx, count, mean, order, group_of }
    }

    /// Isotonic fit on the distinct `x` values.
    pub fn fit(&self) -> Vec<f64> {
        pav(&self.mean, &self.count)
    }
}

/// Isotonic regression of `y` on `x` with tied `x` values pooled. Returns
/// the distinct sorted `x` and the fitted values there.
pub fn isotonic_fit(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let groups = TiedGroups::new(x, y);
    let fit = groups.fit();
    (groups.x, fit)
}
