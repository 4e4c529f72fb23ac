use statrs::function::beta::beta_reg;

use crate::{Error, Result};

/// 1-based ranks; tied values share the mean of their rank range.
pub fn average_ranks(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("cannot rank NaN"));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j + 2) as f64 / 2.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    Ok(ranks)
}

fn has_ties(x: &[f64]) -> bool {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).any(|w| w[0] == w[1])
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho, or `None` when either input is constant.
///
/// Without ties this is `1 − 6Σd²/(n(n²−1))` evaluated from integer rank
/// differences; otherwise the Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::Misaligned(format!("{} vs {} values", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::invalid(format!("spearman needs n ≥ 3, got {n}")));
    }
    let rx = average_ranks(x)?;
    let ry = average_ranks(y)?;
    if !has_ties(x) && !has_ties(y) {
        let d2: u128 = rx
            .iter()
            .zip(&ry)
            .map(|(a, b)| {
                let d = (*a as i64 - *b as i64).unsigned_abs() as u128;
                d * d
            })
            .sum();
        let n = n as u128;
        return Ok(Some(1.0 - (6 * d2) as f64 / (n * (n * n - 1)) as f64));
    }
    Ok(pearson(&rx, &ry))
}

/// Two-sided p-value of `rho` from `t = rho·sqrt((n−2)/(1−rho²))` against
/// Student's t with `n − 2` degrees of freedom. `|rho| = 1` gives 0.
pub fn spearman_pvalue(rho: f64, n: usize) -> Result<f64> {
    if n < 4 {
        return Err(Error::invalid(format!("p-value needs n ≥ 4, got {n}")));
    }
    if !(rho.abs() <= 1.0) {
        return Err(Error::invalid(format!("rho {rho} is outside [-1, 1]")));
    }
    if rho.abs() == 1.0 {
        return Ok(0.0);
    }
    let df = (n - 2) as f64;
    let t2 = rho * rho * df / (1.0 - rho * rho);
    Ok(beta_reg(df / 2.0, 0.5, df / (df + t2)).clamp(0.0, 1.0))
}

/// Largest `n` for [`permutation_pvalue`].
pub const MAX_PERMUTATION_N: usize = 10;

/// Exact two-sided p-value: the share of all `n!` orderings of `y` whose
/// |rho| reaches the observed one.
pub fn permutation_pvalue(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    if n > MAX_PERMUTATION_N {
        return Err(Error::invalid(format!("exact permutation p-values need n ≤ {MAX_PERMUTATION_N}, got {n}")));
    }
    let observed = spearman(x, y)?.ok_or_else(|| Error::invalid("rho is undefined for constant input"))?;
    let rx = average_ranks(x)?;
    let mut ry = average_ranks(y)?;
    let mean = (n as f64 + 1.0) / 2.0;
    let cx: Vec<f64> = rx.iter().map(|r| r - mean).collect();
    let sx = cx.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sy = ry.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>().sqrt();
    let rho_of = |ry: &[f64]| cx.iter().zip(ry).map(|(a, b)| a * (b - mean)).sum::<f64>() / (sx * sy);
    let threshold = observed.abs() - 1e-12;
    let mut hits = 0u64;
    let mut total = 0u64;
    // Heap's algorithm.
    let mut c = vec![0; n];
    let mut visit = |ry: &[f64]| {
        total += 1;
        if rho_of(ry).abs() >= threshold {
            hits += 1;
        }
    };
    visit(&ry);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                ry.swap(0, i);
            } else {
                ry.swap(c[i], i);
            }
            visit(&ry);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

/// Benjamini–Hochberg adjusted p-values, in input order.
pub fn benjamini_hochberg(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        q[i] = running.min(1.0);
    }
    q
}
