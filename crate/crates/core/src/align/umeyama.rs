use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::geo::RigidTransform2D;

use super::AlignError;

/// Least-squares similarity estimate split into its parts. Only `transform`
/// is applied downstream; `scale` is kept for reporting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UmeyamaFit {
    pub transform: RigidTransform2D,
    pub scale: f64,
}

/// Umeyama's closed-form registration of `source` onto `target` (paired by
/// index). The rotation comes from the SVD of the cross-covariance with the
/// reflection correction; the scale is estimated but not applied, and the
/// translation is the one that is optimal for unit scale, `μy − R μx`.
pub fn umeyama_fit(source: &[[f64; 2]], target: &[[f64; 2]]) -> Result<UmeyamaFit, AlignError> {
    if source.len() != target.len() {
        return Err(AlignError::Argument(format!(
            "point sets differ in size ({} vs {})",
            source.len(),
            target.len()
        )));
    }
    if source.len() < 2 {
        return Err(AlignError::Argument("at least two correspondences are required".into()));
    }
    if source.iter().chain(target).flatten().any(|v| !v.is_finite()) {
        return Err(AlignError::Argument("non-finite coordinate".into()));
    }
    let n = source.len() as f64;
    let mean = |pts: &[[f64; 2]]| {
        pts.iter().fold(Vector2::zeros(), |acc, p| acc + Vector2::new(p[0], p[1])) / n
    };
    let mu_x = mean(source);
    let mu_y = mean(target);

    let mut var_x = 0.0;
    let mut sigma = Matrix2::zeros();
    for (x, y) in source.iter().zip(target) {
        let dx = Vector2::new(x[0], x[1]) - mu_x;
        let dy = Vector2::new(y[0], y[1]) - mu_y;
        var_x += dx.norm_squared();
        sigma += dy * dx.transpose();
    }
    var_x /= n;
    sigma /= n;
    if var_x <= f64::EPSILON * f64::EPSILON * (1.0 + mu_x.norm_squared()) {
        return Err(AlignError::Rank("all source points coincide".into()));
    }

    let svd = sigma.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut s = Matrix2::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        s[(1, 1)] = -1.0;
    }
    let r = u * s * v_t;
    let d = svd.singular_values;
    let scale = (d[0] * s[(0, 0)] + d[1] * s[(1, 1)]) / var_x;
    let t = mu_y - r * mu_x;

    Ok(UmeyamaFit {
        transform: RigidTransform2D {
            rotation: [[r[(0, 0)], r[(0, 1)]], [r[(1, 0)], r[(1, 1)]]],
            translation: [t[0], t[1]],
        },
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sse(t: &RigidTransform2D, src: &[[f64; 2]], dst: &[[f64; 2]]) -> f64 {
        src.iter()
            .zip(dst)
            .map(|(s, d)| {
                let p = t.apply_xy(s[0], s[1]);
                (p[0] - d[0]).powi(2) + (p[1] - d[1]).powi(2)
            })
            .sum()
    }

    #[test]
    fn identity_on_equal_sets() {
        let pts = [[0.0, 0.0], [3.0, 1.0], [-2.0, 5.0]];
        let fit = umeyama_fit(&pts, &pts).unwrap();
        assert!(fit.transform.angle().abs() < 1e-12);
        assert!(fit.transform.translation.iter().all(|v| v.abs() < 1e-12));
        assert!((fit.scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_known_transform() {
        let truth = RigidTransform2D::from_angle(37f64.to_radians(), [5.0, -3.0]);
        let src = [[0.0, 0.0], [10.0, 2.0], [4.0, -7.0], [-3.0, 8.5], [1.0, 1.0]];
        let dst: Vec<[f64; 2]> = src.iter().map(|p| truth.apply_xy(p[0], p[1])).collect();
        let fit = umeyama_fit(&src, &dst).unwrap();
        assert!((fit.transform.angle() - 37f64.to_radians()).abs() < 1e-9);
        assert!((fit.transform.translation[0] - 5.0).abs() < 1e-9);
        assert!((fit.transform.translation[1] + 3.0).abs() < 1e-9);
        assert!((fit.transform.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_points() {
        let truth = RigidTransform2D::from_angle(-2.0, [100.0, 7.0]);
        let src: Vec<[f64; 2]> = (0..6).map(|i| [i as f64 * 1.5, i as f64 * 0.5]).collect();
        let dst: Vec<[f64; 2]> = src.iter().map(|p| truth.apply_xy(p[0], p[1])).collect();
        let fit = umeyama_fit(&src, &dst).unwrap();
        assert!((fit.transform.angle() - (-2.0)).abs() < 1e-9);
        assert!(sse(&fit.transform, &src, &dst) < 1e-18);
    }

    #[test]
    fn reflected_target_still_gives_rotation() {
        let src = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let dst = [[0.0, 0.0], [1.0, 0.0], [0.0, -2.0]];
        let fit = umeyama_fit(&src, &dst).unwrap();
        assert!((fit.transform.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(umeyama_fit(&[[1.0, 1.0]; 4], &[[0.0, 0.0]; 4]), Err(AlignError::Rank(_))));
        assert!(matches!(umeyama_fit(&[[0.0, 0.0]; 3], &[[0.0, 0.0]; 2]), Err(AlignError::Argument(_))));
        assert!(matches!(umeyama_fit(&[[0.0, 0.0]], &[[0.0, 0.0]]), Err(AlignError::Argument(_))));
    }

    proptest! {
        #[test]
        fn fit_never_increases_residual(
            pts in prop::collection::vec((prop::array::uniform2(-100f64..100.0), prop::array::uniform2(-100f64..100.0)), 2..60)
        ) {
            let (src, dst): (Vec<[f64; 2]>, Vec<[f64; 2]>) = pts.into_iter().unzip();
            prop_assume!(src.iter().any(|p| (p[0] - src[0][0]).abs() + (p[1] - src[0][1]).abs() > 1e-3));
            let fit = umeyama_fit(&src, &dst).unwrap();
            let before = sse(&RigidTransform2D::identity(), &src, &dst);
            let after = sse(&fit.transform, &src, &dst);
            prop_assert!(after <= before * (1.0 + 1e-12) + 1e-9);
        }
    }
}
