//! Euclidean projection onto the probability simplex.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Projects `v` onto `{w : w >= 0, sum(w) = 1}`.
pub fn project_simplex(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; v.len()];
    project_simplex_into(v, &mut out)?;
    Ok(out)
}

/// Sort-and-threshold projection writing into `out`.
///
/// Sorts `v` descending, finds the largest `rho` with
/// `v_(rho) - (sum_{j<=rho} v_(j) - 1) / rho > 0` and clamps `v - theta` at
/// zero. Ties keep their original order.
pub fn project_simplex_into(v: &[f64], out: &mut [f64]) -> Result<()> {
    assert_eq!(v.len(), out.len(), "projection buffer length mismatch");
    if v.is_empty() {
        return Err(Error::Dimension("cannot project an empty vector".into()));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("projection input contains {x}")));
    }
    if v.len() == 1 {
        out[0] = 1.0;
        return Ok(());
    }

    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[j].partial_cmp(&v[i]).unwrap_or(Ordering::Equal));

    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (r, &idx) in order.iter().enumerate() {
        cumsum += v[idx];
        let t = (cumsum - 1.0) / (r + 1) as f64;
        if v[idx] - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }

    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - theta).max(0.0);
    }
    Ok(())
}
