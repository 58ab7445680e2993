use crate::image::GrayImage;

/// Level sizes of a pyramid: level 0 is `(width, height)`, each following
/// level is the previous one scaled by `factor` and rounded, and the
/// recurrence stops before any side would drop below `min_size`.
pub fn pyramid_dims(width: usize, height: usize, factor: f64, min_size: usize) -> Vec<(usize, usize)> {
    let mut dims = vec![(width, height)];
    loop {
        let (w, h) = *dims.last().unwrap();
        let nw = (w as f64 * factor).round() as usize;
        let nh = (h as f64 * factor).round() as usize;
        if nw < min_size || nh < min_size || nw >= w || nh >= h {
            break;
        }
        dims.push((nw, nh));
    }
    dims
}

/// Gaussian pyramid, finest level first.
pub fn build_pyramid(img: &GrayImage, factor: f64, min_size: usize) -> Vec<GrayImage> {
    assert!(factor > 0.0 && factor < 1.0, "pyramid factor must lie in (0, 1)");
    let dims = pyramid_dims(img.width(), img.height(), factor, min_size);
    // anti-aliasing width for a `factor` reduction
    let sigma = 0.6 * (1.0 / (factor * factor) - 1.0).sqrt();
    let mut levels = vec![img.clone()];
    for &(w, h) in &dims[1..] {
        let prev = levels.last().unwrap();
        levels.push(prev.gaussian_blur(sigma).resize(w, h));
    }
    levels
}
