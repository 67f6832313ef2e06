//! Small least-squares helpers shared by the report builders.

/// Slope and intercept of the least-squares line through `(xs, ys)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Least-squares coefficients (c₁, c₂) of y ≈ c₁·f(x) + c₂·g(x), plus the RMS residual.
pub fn two_term_fit(f: &[f64], g: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&fi, &gi), &yi) in f.iter().zip(g).zip(y) {
        a11 += fi * fi;
        a12 += fi * gi;
        a22 += gi * gi;
        b1 += fi * yi;
        b2 += gi * yi;
    }
    let det = a11 * a22 - a12 * a12;
    if y.len() < 2 || det.abs() <= 1e-14 * a11 * a22 {
        return None;
    }
    let c1 = (b1 * a22 - b2 * a12) / det;
    let c2 = (a11 * b2 - a12 * b1) / det;
    let rss: f64 = f.iter().zip(g).zip(y).map(|((fi, gi), yi)| (yi - c1 * fi - c2 * gi).powi(2)).sum();
    Some((c1, c2, (rss / y.len() as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_lines() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let (s, b) = linear_fit(&xs, &ys).unwrap();
        assert!((s - 2.0).abs() < 1e-14 && (b + 1.0).abs() < 1e-14);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
        let f: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let y: Vec<f64> = xs.iter().map(|x| 3.0 * x * x + 0.5 * x).collect();
        let (c1, c2, r) = two_term_fit(&f, &xs, &y).unwrap();
        assert!((c1 - 3.0).abs() < 1e-12 && (c2 - 0.5).abs() < 1e-12 && r < 1e-12);
    }
}
