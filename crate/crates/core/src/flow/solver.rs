use super::{build_pyramid, FlowField, FlowParams};
use crate::image::GrayImage;
use crate::{Error, Result};

/// Backward warp: `out(x, y) = img(x + u(x, y), y + v(x, y))`, bilinear,
/// clamped at the borders.
pub fn warp_image(img: &GrayImage, flow: &FlowField) -> Result<GrayImage> {
    if img.dims() != flow.dims() {
        return Err(Error::FrameSizeMismatch(
            img.width(),
            img.height(),
            flow.width(),
            flow.height(),
        ));
    }
    Ok(warp(img, flow.u(), flow.v()))
}

fn warp(img: &GrayImage, u: &[f64], v: &[f64]) -> GrayImage {
    let w = img.width();
    GrayImage::from_fn(w, img.height(), |x, y| {
        let i = y * w + x;
        img.sample(x as f64 + u[i], y as f64 + v[i])
    })
}

fn dx(img: &GrayImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        0.5 * (img.get_clamped(x + 1, y) - img.get_clamped(x - 1, y))
    })
}

fn dy(img: &GrayImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        0.5 * (img.get_clamped(x, y + 1) - img.get_clamped(x, y - 1))
    })
}

/// Dense flow from `prev` to `next`, so that `next(p + w(p)) ~ prev(p)`.
///
/// Minimizes `Psi(|I2(p + w) - I1(p)|^2 + gamma |grad I2(p + w) - grad I1(p)|^2)`
/// plus `alpha Psi(|grad u|^2 + |grad v|^2)` with `Psi(s^2) = sqrt(s^2 + eps^2)`. Each pyramid level runs
/// `outer_iterations` warping steps; every warping step solves for a flow
/// increment with `inner_iterations` rounds of lagged robust weights
/// followed by one SOR sweep.
pub fn compute_flow(prev: &GrayImage, next: &GrayImage, params: &FlowParams) -> Result<FlowField> {
    if prev.dims() != next.dims() {
        return Err(Error::FrameSizeMismatch(
            prev.width(),
            prev.height(),
            next.width(),
            next.height(),
        ));
    }
    params.validate()?;
    // `GrayImage` rejects non-finite data at construction; re-check since
    // callers may build frames through `from_fn`.
    if prev.data().iter().chain(next.data()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidImage("non-finite intensity".into()));
    }

    let pyr1 = build_pyramid(&to_8bit_range(prev), params.pyramid_factor, params.min_level_size);
    let pyr2 = build_pyramid(&to_8bit_range(next), params.pyramid_factor, params.min_level_size);

    let (cw, ch) = pyr1.last().unwrap().dims();
    let mut u = vec![0.0; cw * ch];
    let mut v = vec![0.0; cw * ch];
    let mut dims = (cw, ch);

    for (i1, i2) in pyr1.iter().zip(&pyr2).rev() {
        if i1.dims() != dims {
            let (pw, ph) = dims;
            let (w, h) = i1.dims();
            let su = w as f64 / pw as f64;
            let sv = h as f64 / ph as f64;
            u = upsample(&u, pw, ph, w, h, su);
            v = upsample(&v, pw, ph, w, h, sv);
            dims = (w, h);
        }
        solve_level(i1, i2, &mut u, &mut v, params);
    }

    FlowField::new(dims.0, dims.1, u, v)
}

/// The solver weights are calibrated for intensities in `[0, 255]`.
fn to_8bit_range(img: &GrayImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| 255.0 * img.get(x, y))
}

fn upsample(field: &[f64], w: usize, h: usize, nw: usize, nh: usize, scale: f64) -> Vec<f64> {
    let img = GrayImage::new(w, h, field.to_vec()).expect("finite flow");
    img.resize(nw, nh).into_data().into_iter().map(|x| x * scale).collect()
}

/// Warped image terms for one outer iteration.
struct Linearization {
    ix: Vec<f64>,
    iy: Vec<f64>,
    iz: Vec<f64>,
    ixx: Vec<f64>,
    ixy: Vec<f64>,
    iyy: Vec<f64>,
    ixz: Vec<f64>,
    iyz: Vec<f64>,
}

fn solve_level(i1: &GrayImage, i2: &GrayImage, u: &mut [f64], v: &mut [f64], p: &FlowParams) {
    let (w, h) = i1.dims();
    let n = w * h;
    let i1x = dx(i1);
    let i1y = dy(i1);
    let i2x = dx(i2);
    let i2y = dy(i2);
    let i2xx = dx(&i2x);
    let i2xy = dy(&i2x);
    let i2yy = dy(&i2y);

    let eps2 = p.epsilon * p.epsilon;
    let mut du = vec![0.0; n];
    let mut dv = vec![0.0; n];
    let mut psi_data = vec![0.0; n];
    let mut psi_smooth = vec![0.0; n];

    for _ in 0..p.outer_iterations {
        let i2w = warp(i2, u, v);
        let i2xw = warp(&i2x, u, v);
        let i2yw = warp(&i2y, u, v);
        let lin = Linearization {
            iz: sub(&i2w, i1),
            ixz: sub(&i2xw, &i1x),
            iyz: sub(&i2yw, &i1y),
            ix: i2xw.into_data(),
            iy: i2yw.into_data(),
            ixx: warp(&i2xx, u, v).into_data(),
            ixy: warp(&i2xy, u, v).into_data(),
            iyy: warp(&i2yy, u, v).into_data(),
        };
        du.iter_mut().for_each(|x| *x = 0.0);
        dv.iter_mut().for_each(|x| *x = 0.0);

        for _ in 0..p.inner_iterations {
            for i in 0..n {
                let d = lin.iz[i] + lin.ix[i] * du[i] + lin.iy[i] * dv[i];
                let gx = lin.ixz[i] + lin.ixx[i] * du[i] + lin.ixy[i] * dv[i];
                let gy = lin.iyz[i] + lin.ixy[i] * du[i] + lin.iyy[i] * dv[i];
                psi_data[i] = 0.5 / (d * d + p.gamma * (gx * gx + gy * gy) + eps2).sqrt();
            }
            for y in 0..h {
                for x in 0..w {
                    let (ux, uy) = central(u, &du, w, h, x, y);
                    let (vx, vy) = central(v, &dv, w, h, x, y);
                    psi_smooth[y * w + x] =
                        0.5 / (ux * ux + uy * uy + vx * vx + vy * vy + eps2).sqrt();
                }
            }
            sor_sweep(&lin, &psi_data, &psi_smooth, u, v, &mut du, &mut dv, w, h, p);
        }

        for i in 0..n {
            u[i] += du[i];
            v[i] += dv[i];
        }
    }
}

fn sub(a: &GrayImage, b: &GrayImage) -> Vec<f64> {
    a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect()
}

/// Central differences of `f + df` with edge replication.
fn central(f: &[f64], df: &[f64], w: usize, h: usize, x: usize, y: usize) -> (f64, f64) {
    let at = |x: usize, y: usize| f[y * w + x] + df[y * w + x];
    let gx = 0.5 * (at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y));
    let gy = 0.5 * (at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1)));
    (gx, gy)
}

#[allow(clippy::too_many_arguments)]
fn sor_sweep(
    lin: &Linearization,
    psi_data: &[f64],
    psi_smooth: &[f64],
    u: &[f64],
    v: &[f64],
    du: &mut [f64],
    dv: &mut [f64],
    w: usize,
    h: usize,
    p: &FlowParams,
) {
    let omega = p.sor_relaxation;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut wsum = 0.0;
            let mut su = 0.0;
            let mut sv = 0.0;
            let mut neighbor = |j: usize| {
                let wn = p.alpha * 0.5 * (psi_smooth[i] + psi_smooth[j]);
                wsum += wn;
                su += wn * (u[j] + du[j] - u[i]);
                sv += wn * (v[j] + dv[j] - v[i]);
            };
            if x > 0 {
                neighbor(i - 1);
            }
            if x + 1 < w {
                neighbor(i + 1);
            }
            if y > 0 {
                neighbor(i - w);
            }
            if y + 1 < h {
                neighbor(i + w);
            }

            let (pd, pg) = (psi_data[i], p.gamma * psi_data[i]);
            let (ix, iy, iz) = (lin.ix[i], lin.iy[i], lin.iz[i]);
            let (ixx, ixy, iyy) = (lin.ixx[i], lin.ixy[i], lin.iyy[i]);
            let (ixz, iyz) = (lin.ixz[i], lin.iyz[i]);

            let a11 = pd * ix * ix + pg * (ixx * ixx + ixy * ixy) + wsum;
            let a22 = pd * iy * iy + pg * (ixy * ixy + iyy * iyy) + wsum;
            let a12 = pd * ix * iy + pg * (ixx * ixy + ixy * iyy);
            let b1 = -pd * ix * iz - pg * (ixx * ixz + ixy * iyz) + su;
            let b2 = -pd * iy * iz - pg * (ixy * ixz + iyy * iyz) + sv;

            if a11 > 0.0 {
                du[i] = (1.0 - omega) * du[i] + omega * (b1 - a12 * dv[i]) / a11;
            }
            if a22 > 0.0 {
                dv[i] = (1.0 - omega) * dv[i] + omega * (b2 - a12 * du[i]) / a22;
            }
        }
    }
}
