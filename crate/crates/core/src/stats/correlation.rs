use super::{Result, StatsError};

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Average ranks of non-negative counts by histogram, with `extra_zeros`
/// implicit zero entries that are not present in `values`.
///
/// Returns the ranks of `values` and the rank shared by every zero.
pub fn count_ranks(values: &[u32], extra_zeros: usize) -> (Vec<f64>, f64) {
    let table = rank_table(values, extra_zeros);
    (values.iter().map(|&v| table[v as usize]).collect(), table[0])
}

/// Average rank of every count value from 0 to the maximum.
fn rank_table(values: &[u32], extra_zeros: usize) -> Vec<f64> {
    let max = values.iter().copied().max().unwrap_or(0) as usize;
    let mut hist = vec![0usize; max + 1];
    for &v in values {
        hist[v as usize] += 1;
    }
    hist[0] += extra_zeros;
    let mut rank_of = vec![0.0; max + 1];
    let mut below = 0usize;
    for (v, &c) in hist.iter().enumerate() {
        if c > 0 {
            rank_of[v] = (2 * below + c + 1) as f64 / 2.0;
        }
        below += c;
    }
    rank_of
}

fn centered_sums(x: &[f64], y: &[f64], mx: f64, my: f64) -> (f64, f64, f64) {
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy, sxx, syy)
}

fn finish(sxy: f64, sxx: f64, syy: f64) -> Result<f64> {
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson product-moment correlation (two-pass).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFewValues { needed: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (sxy, sxx, syy) = centered_sums(x, y, mx, my);
    finish(sxy, sxx, syy)
}

/// Spearman's rho with tie correction: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFewValues { needed: 2, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    // average ranks always sum to n(n+1)/2
    let mid = (x.len() as f64 + 1.0) / 2.0;
    let (sxy, sxx, syy) = centered_sums(&rx, &ry, mid, mid);
    finish(sxy, sxx, syy)
}

/// Spearman's rho for count data where `shared_zeros` further entries are
/// zero on both sides and omitted from the slices. Equal to [`spearman`] on
/// the full vectors.
pub fn spearman_counts(x: &[u32], y: &[u32], shared_zeros: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len() + shared_zeros;
    if n < 2 {
        return Err(StatsError::TooFewValues { needed: 2, got: n });
    }
    let mid = (n as f64 + 1.0) / 2.0;
    // centre the lookup tables once; the loop is then two loads per pixel
    let tx: Vec<f64> = rank_table(x, shared_zeros).into_iter().map(|r| r - mid).collect();
    let ty: Vec<f64> = rank_table(y, shared_zeros).into_iter().map(|r| r - mid).collect();
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (tx[a as usize], ty[b as usize]);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let (zx, zy) = (tx[0] + mid, ty[0] + mid);
    if shared_zeros > 0 {
        let (dx, dy, k) = (zx - mid, zy - mid, shared_zeros as f64);
        sxy += k * dx * dy;
        sxx += k * dx * dx;
        syy += k * dy * dy;
    }
    finish(sxy, sxx, syy)
}
