//! Small dense helpers on `&[f64]` points. Dimensions are tiny (N = 2 or 3),
//! so plain slices beat pulling in a linear algebra crate.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn scaled(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn normalized(a: &[f64]) -> Vec<f64> {
    let n = norm(a);
    scaled(a, 1.0 / n)
}

/// `y += s * x`
#[inline]
pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// First unit vector orthogonal to `e`, by Gram-Schmidt on the standard basis.
pub fn first_orthogonal(e: &[f64]) -> Vec<f64> {
    let dim = e.len();
    let mut best: Option<Vec<f64>> = None;
    for k in 0..dim {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        let proj = dot(&v, e) / norm_sq(e);
        axpy(&mut v, -proj, e);
        let len = norm(&v);
        // a basis vector nearly parallel to e is skipped in favor of the next one
        if len > 0.5 {
            return scaled(&v, 1.0 / len);
        }
        if best.as_ref().is_none_or(|b| norm(b) < len) && len > 1e-12 {
            best = Some(v);
        }
    }
    let v = best.expect("dimension >= 2 always has an orthogonal direction");
    normalized(&v)
}
