use super::{Domain, Sample};
use crate::error::{Error, Result};

/// Rotates a square row-major image about its centre by `angle_deg`
/// (counter-clockwise as displayed, rows running downwards).
///
/// Each output pixel is read from the inverse-rotated position by bilinear
/// interpolation; source pixels outside the image count as 0.
pub fn rotate_image(pixels: &[f64], side: usize, angle_deg: f64) -> Vec<f64> {
    assert_eq!(pixels.len(), side * side);
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let centre = (side as f64 - 1.0) / 2.0;
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= side as isize || c >= side as isize {
            0.0
        } else {
            pixels[r as usize * side + c as usize]
        }
    };
    let mut out = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            let dx = c as f64 - centre;
            let dy = r as f64 - centre;
            let sx = cos * dx - sin * dy + centre;
            let sy = sin * dx + cos * dy + centre;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            out[r * side + c] = (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1))
                + fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
        }
    }
    out
}

/// Rotates every image of a domain; labels are unchanged.
pub fn rotate_domain(domain: &Domain, angle_deg: f64) -> Result<Domain> {
    let d = domain.feature_dim();
    let side = (d as f64).sqrt().round() as usize;
    if side * side != d {
        return Err(Error::Shape(format!(
            "{d} features do not form a square image"
        )));
    }
    let samples = domain
        .samples
        .iter()
        .map(|s| Sample::new(rotate_image(&s.features, side, angle_deg), s.label))
        .collect();
    Ok(Domain {
        id: domain.id.clone(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIDE: usize = 28;

    fn domain_of(img: Vec<f64>) -> Domain {
        Domain::new("img", vec![Sample::new(img, 4)]).unwrap()
    }

    #[test]
    fn zero_angle_is_identity() {
        let img: Vec<f64> = (0..SIDE * SIDE).map(|i| (i % 17) as f64 / 16.0).collect();
        let dom = domain_of(img);
        assert_eq!(rotate_domain(&dom, 0.0).unwrap(), dom);
    }

    #[test]
    fn constant_image_keeps_interior_and_zero_corners() {
        let dom = domain_of(vec![0.6; SIDE * SIDE]);
        for angle in [15.0, 30.0, 45.0, 75.0, 137.0] {
            let out = &rotate_domain(&dom, angle).unwrap().samples[0];
            assert_eq!(out.label, 4);
            let px = |r: usize, c: usize| out.features[r * SIDE + c];
            // odd side length has no centre pixel; check the central 4x4 block
            for r in 12..16 {
                for c in 12..16 {
                    assert!((px(r, c) - 0.6).abs() < 1e-12, "angle {angle} ({r},{c})");
                }
            }
            if angle % 90.0 != 0.0 {
                for (r, c) in [(0, 0), (0, SIDE - 1), (SIDE - 1, 0), (SIDE - 1, SIDE - 1)] {
                    assert!(px(r, c).abs() < 1e-12, "angle {angle} corner ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn odd_side_centre_pixel_fixed() {
        let side = 5;
        let mut img = vec![0.0; 25];
        img[12] = 1.0;
        for angle in [10.0, 33.0, 90.0, 180.0] {
            let out = rotate_image(&img, side, angle);
            assert!((out[12] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_pixel_matches_tent_oracle() {
        // a lone pixel at (py, px) contributes max(0,1-|sx-px|)*max(0,1-|sy-py|)
        let (py, px) = (9usize, 17usize);
        let mut img = vec![0.0; SIDE * SIDE];
        img[py * SIDE + px] = 1.0;
        let out = rotate_image(&img, SIDE, 15.0);
        let theta = 15f64.to_radians();
        let ctr = 13.5;
        for r in 0..SIDE {
            for c in 0..SIDE {
                let (dx, dy) = (c as f64 - ctr, r as f64 - ctr);
                let sx = theta.cos() * dx - theta.sin() * dy + ctr;
                let sy = theta.sin() * dx + theta.cos() * dy + ctr;
                let want = (1.0 - (sx - px as f64).abs()).max(0.0) * (1.0 - (sy - py as f64).abs()).max(0.0);
                assert!((out[r * SIDE + c] - want).abs() < 1e-6, "({r},{c})");
            }
        }
    }

    #[test]
    fn inverse_rotation_restores_smooth_image() {
        let img: Vec<f64> = (0..SIDE * SIDE)
            .map(|i| {
                let (r, c) = ((i / SIDE) as f64 - 12.0, (i % SIDE) as f64 - 15.0);
                (-(r * r + c * c) / (2.0 * 36.0)).exp()
            })
            .collect();
        // pixels inside the inscribed disc never leave the frame
        let inside = |i: usize| {
            let (r, c) = ((i / SIDE) as f64 - 13.5, (i % SIDE) as f64 - 13.5);
            (r * r + c * c).sqrt() <= 12.5
        };
        for angle in [15.0, 30.0, 60.0] {
            let back = rotate_image(&rotate_image(&img, SIDE, angle), SIDE, -angle);
            let worst = (0..img.len())
                .filter(|&i| inside(i))
                .map(|i| (img[i] - back[i]).abs())
                .fold(0.0, f64::max);
            assert!(worst < 2e-2, "angle {angle}: {worst}");
        }
    }

    #[test]
    fn non_square_is_shape_error() {
        let dom = Domain::new("x", vec![Sample::new(vec![0.0; 10], 0)]).unwrap();
        assert!(matches!(rotate_domain(&dom, 15.0), Err(Error::Shape(_))));
    }
}
