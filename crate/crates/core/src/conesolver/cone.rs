use serde::{Deserialize, Serialize};

use super::SolverError;

/// A convex cone block of a cone program.
///
/// Second-order cones are stored t-first: `(t, x)` with `||x||_2 <= t`.
/// `Psd(q)` is the cone of symmetric positive semidefinite `q x q` matrices,
/// vectorized column-major (dimension `q * q`). The built-in solver does not
/// project onto it; it exists so that external solvers can be plugged in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dim", rename_all = "lowercase")]
pub enum Cone {
    Zero(usize),
    Nonneg(usize),
    Soc(usize),
    Psd(usize),
}

impl Cone {
    /// Number of rows the cone occupies.
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::Nonneg(d) | Cone::Soc(d) => d,
            Cone::Psd(q) => q * q,
        }
    }

    /// Packing rank: zero, then nonneg, then soc, then psd.
    pub fn rank(&self) -> u8 {
        match self {
            Cone::Zero(_) => 0,
            Cone::Nonneg(_) => 1,
            Cone::Soc(_) => 2,
            Cone::Psd(_) => 3,
        }
    }
}

/// Euclidean projection of `v` onto `cone`.
pub fn project(cone: &Cone, v: &[f64]) -> Result<Vec<f64>, SolverError> {
    if v.len() != cone.dim() {
        return Err(SolverError::Dimension {
            expected: cone.dim(),
            found: v.len(),
        });
    }
    let mut out = v.to_vec();
    project_in_place(cone, &mut out)?;
    Ok(out)
}

pub(crate) fn project_in_place(cone: &Cone, v: &mut [f64]) -> Result<(), SolverError> {
    match cone {
        Cone::Zero(_) => v.iter_mut().for_each(|x| *x = 0.0),
        Cone::Nonneg(_) => v.iter_mut().for_each(|x| *x = x.max(0.0)),
        Cone::Soc(_) => project_soc(v),
        Cone::Psd(_) => return Err(SolverError::Unsupported("psd cone projection".into())),
    }
    Ok(())
}

/// Projection onto the dual cone. Zero's dual is the whole space; the others
/// are self-dual.
pub(crate) fn project_dual_in_place(cone: &Cone, v: &mut [f64]) -> Result<(), SolverError> {
    match cone {
        Cone::Zero(_) => Ok(()),
        other => project_in_place(other, v),
    }
}

fn project_soc(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let t = v[0];
    let norm_x = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_x <= t {
        return;
    }
    if norm_x <= -t {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let scale = 0.5 * (t + norm_x);
    v[0] = scale;
    let ratio = scale / norm_x;
    v[1..].iter_mut().for_each(|x| *x *= ratio);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn nonneg_clips() {
        assert_eq!(project(&Cone::Nonneg(2), &[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn soc_outside_and_boundary() {
        let p = project(&Cone::Soc(3), &[0.0, 3.0, 4.0]).unwrap();
        for (a, b) in p.iter().zip([2.5, 1.5, 2.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(project(&Cone::Soc(3), &[5.0, 3.0, 4.0]).unwrap(), vec![5.0, 3.0, 4.0]);
        assert_eq!(project(&Cone::Soc(3), &[-6.0, 3.0, 4.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn psd_and_dimension_errors() {
        assert!(matches!(
            project(&Cone::Psd(2), &[1.0, 0.0, 0.0, 1.0]),
            Err(SolverError::Unsupported(_))
        ));
        assert!(project(&Cone::Nonneg(3), &[1.0]).is_err());
    }

    fn cone_strategy() -> impl Strategy<Value = (Cone, Vec<f64>, Vec<f64>)> {
        (1usize..6, 0usize..3).prop_flat_map(|(dim, kind)| {
            let cone = match kind {
                0 => Cone::Zero(dim),
                1 => Cone::Nonneg(dim),
                _ => Cone::Soc(dim),
            };
            (
                Just(cone),
                prop::collection::vec(-10.0..10.0f64, dim),
                prop::collection::vec(-10.0..10.0f64, dim),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn projection_idempotent_and_nonexpansive((cone, u, v) in cone_strategy()) {
            let pu = project(&cone, &u).unwrap();
            let ppu = project(&cone, &pu).unwrap();
            for (a, b) in pu.iter().zip(&ppu) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let pv = project(&cone, &v).unwrap();
            let d_proj: Vec<f64> = pu.iter().zip(&pv).map(|(a, b)| a - b).collect();
            let d_raw: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
            prop_assert!(norm(&d_proj) <= norm(&d_raw) + 1e-12);
        }
    }
}
