use nalgebra::{DMatrix, DVector};

/// Exact simplex projection by enumerating every support set.
///
/// For a support `S` the equality-constrained least squares solution is
/// `w_S = v_S - (sum(v_S) - 1) / |S|`, zero elsewhere. Among the feasible
/// (non-negative) candidates the closest to `v` wins. Exponential in `K`.
pub fn brute_force_simplex_projection(v: &[f64]) -> Vec<f64> {
    let k = v.len();
    assert!((1..=20).contains(&k), "oracle limited to 1 <= K <= 20");
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1u32 << k) {
        let support: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let shift = (support.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / support.len() as f64;
        let mut w = vec![0.0; k];
        let mut feasible = true;
        for &i in &support {
            w[i] = v[i] - shift;
            if w[i] < -1e-15 {
                feasible = false;
                break;
            }
            w[i] = w[i].max(0.0);
        }
        if !feasible {
            continue;
        }
        let d: f64 = w.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, w));
        }
    }
    best.expect("at least one support is feasible").1
}

/// Minimizes `f` over the grid `{w in simplex : w = j * step}` for `K` in {1, 2, 3}.
///
/// Returns the minimizing grid point and its value.
pub fn grid_search_simplex<F>(k: usize, step: f64, mut f: F) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let n = (1.0 / step).round() as usize;
    let mut best = (vec![], f64::INFINITY);
    let mut consider = |w: Vec<f64>, best: &mut (Vec<f64>, f64)| {
        let val = f(&w);
        if val < best.1 {
            *best = (w, val);
        }
    };
    match k {
        1 => consider(vec![1.0], &mut best),
        2 => {
            for i in 0..=n {
                let a = i as f64 / n as f64;
                consider(vec![a, 1.0 - a], &mut best);
            }
        }
        3 => {
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let a = i as f64 / n as f64;
                    let b = j as f64 / n as f64;
                    consider(vec![a, b, (1.0 - a - b).max(0.0)], &mut best);
                }
            }
        }
        _ => panic!("grid oracle supports K <= 3"),
    }
    best
}

/// `||B w - h||^2` evaluated densely.
pub fn least_squares_loss(b: &DMatrix<f64>, h: &DVector<f64>, w: &[f64]) -> f64 {
    let w = DVector::from_column_slice(w);
    (b * w - h).norm_squared()
}

/// Optimal value of `min ||x||_inf s.t. B^T x = e_row` (one row of a
/// minimum max-entry left inverse with zero bias).
///
/// Solved through the LP dual `max y_row s.t. ||B y||_1 <= 1`. The dual
/// feasible set is the unit ball of the polyhedral norm `y -> ||B y||_1`,
/// whose vertices lie on lines where `K - 1` independent rows of `B` vanish.
/// All such lines are enumerated. Requires `B` to have full column rank.
pub fn min_inf_norm_left_inverse_row(b: &DMatrix<f64>, row: usize) -> f64 {
    let (n, k) = b.shape();
    assert!(row < k);
    if k == 1 {
        let l1: f64 = b.iter().map(|x| x.abs()).sum();
        return 1.0 / l1;
    }
    let mut best = f64::NEG_INFINITY;
    for subset in combinations(n, k - 1) {
        let rows = DMatrix::from_fn(k - 1, k, |r, c| b[(subset[r], c)]);
        let Some(y) = null_vector(&rows) else { continue };
        let l1: f64 = (b * &y).iter().map(|x| x.abs()).sum();
        if l1 <= 1e-14 {
            continue;
        }
        best = best.max((y[row] / l1).abs());
    }
    best
}

fn null_vector(rows: &DMatrix<f64>) -> Option<DVector<f64>> {
    let k = rows.ncols();
    // Pad to square so the SVD exposes the full right singular basis.
    let mut sq = DMatrix::zeros(k, k);
    sq.view_mut((0, 0), (k - 1, k)).copy_from(rows);
    let svd = sq.svd(false, true);
    let v_t = svd.v_t?;
    let sv = &svd.singular_values;
    let (min_idx, _) = sv
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())?;
    let scale = sv.max();
    let rank_ok = sv
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != min_idx)
        .all(|(_, &s)| s > 1e-10 * scale.max(1e-300));
    if !rank_ok {
        return None;
    }
    Some(v_t.row(min_idx).transpose())
}

/// All `r`-element index subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(r);
    fn rec(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    rec(0, n, r, &mut cur, &mut out);
    out
}

/// Prominent topic set by checking every prefix length of the sorted order.
pub fn brute_force_prominent(w: &[f64], mass: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&i, &j| w[j].partial_cmp(&w[i]).unwrap().then(i.cmp(&j)));
    for len in 1..=w.len() {
        let s: f64 = order[..len].iter().map(|&i| w[i]).sum();
        if s >= mass - 1e-12 {
            let mut set = order[..len].to_vec();
            set.sort_unstable();
            return set;
        }
    }
    let mut all = order;
    all.sort_unstable();
    all
}
