use super::Tensor;
use crate::{Error, Result};

/// Renders one gaussian heatmap channel per entry of `channels`.
///
/// Points are `(x, y)` pixel coordinates. Each gaussian peaks at 1 and
/// overlapping gaussians in the same channel are combined by elementwise max.
pub fn gaussian_heatmap(
    channels: &[Vec<(f64, f64)>],
    sigma: f64,
    resolution: (usize, usize),
) -> Result<Tensor> {
    let (h, w) = resolution;
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::config(format!("heatmap sigma must be positive, got {sigma}")));
    }
    if channels.is_empty() || h == 0 || w == 0 {
        return Err(Error::shape("heatmap needs at least one channel and a nonzero resolution"));
    }
    for &(x, y) in channels.iter().flatten() {
        if !(0.0..=(w - 1) as f64).contains(&x) || !(0.0..=(h - 1) as f64).contains(&y) {
            return Err(Error::shape(format!(
                "point ({x}, {y}) outside a {h}x{w} heatmap"
            )));
        }
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut data = vec![0.0; channels.len() * h * w];
    for (c, points) in channels.iter().enumerate() {
        for py in 0..h {
            for px in 0..w {
                let v = points
                    .iter()
                    .map(|&(x, y)| {
                        let dx = px as f64 - x;
                        let dy = py as f64 - y;
                        (-(dx * dx + dy * dy) * inv).exp()
                    })
                    .fold(0.0, f64::max);
                data[(c * h + py) * w + px] = v;
            }
        }
    }
    Tensor::new(vec![channels.len(), h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_channel_is_zero() {
        let t = gaussian_heatmap(&[vec![]], 1.5, (4, 5)).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centered_point_peaks_and_is_symmetric() {
        let t = gaussian_heatmap(&[vec![(3.0, 3.0)]], 1.2, (7, 7)).unwrap();
        let at = |y: usize, x: usize| t.data()[y * 7 + x];
        assert_eq!(at(3, 3), 1.0);
        assert!(t.data().iter().all(|&v| v <= 1.0));
        for (dy, dx) in [(1, 0), (2, 1), (3, 2)] {
            let r = at(3 + dy, 3 + dx);
            assert_eq!(r, at(3 - dy, 3 - dx));
            assert_eq!(r, at(3 + dx, 3 + dy));
            assert_eq!(r, at(3 - dx, 3 + dy));
        }
    }

    #[test]
    fn overlapping_points_combine_by_max() {
        let pts = vec![(1.0, 1.0), (2.5, 1.5)];
        let sigma = 0.9;
        let t = gaussian_heatmap(std::slice::from_ref(&pts), sigma, (4, 5)).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                let g = |px: f64, py: f64| {
                    (-((x as f64 - px).powi(2) + (y as f64 - py).powi(2)) / (2.0 * sigma * sigma)).exp()
                };
                let want = g(1.0, 1.0).max(g(2.5, 1.5));
                assert!((t.data()[y * 5 + x] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_outside_points_and_bad_sigma() {
        assert!(gaussian_heatmap(&[vec![(5.0, 0.0)]], 1.0, (3, 3)).is_err());
        assert!(gaussian_heatmap(&[vec![]], 0.0, (3, 3)).is_err());
    }
}
