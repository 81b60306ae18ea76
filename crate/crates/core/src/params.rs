//! Camouflage parameters and the map from generator head outputs to them.

use serde::{Deserialize, Serialize};

use crate::error::{CamoError, Result};

/// Generator head order: noise std, noise mean, filter std, filter kernel,
/// mask-blur std, mask-blur kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    SigmaGn = 0,
    MuGn = 1,
    SigmaGf = 2,
    KGf = 3,
    SigmaBl = 4,
    KBl = 5,
}

pub const NUM_HEADS: usize = 6;

/// Raw head outputs, each in `(0, 1)`.
pub type Heads = [f64; NUM_HEADS];

/// Output ranges for the six parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub mu_gn: (f64, f64),
    pub sigma_gn: (f64, f64),
    pub sigma_gf: (f64, f64),
    pub sigma_bl: (f64, f64),
    /// Allowed filter kernel sizes, odd and ascending.
    pub k_gf: Vec<usize>,
    /// Allowed mask-blur kernel sizes, odd and ascending.
    pub k_bl: Vec<usize>,
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            mu_gn: (-0.05, 0.05),
            sigma_gn: (0.0, 0.10),
            sigma_gf: (0.1, 3.0),
            sigma_bl: (0.5, 16.0),
            k_gf: vec![1, 3, 5, 7],
            k_bl: (3..=31).step_by(2).collect(),
        }
    }
}

impl ParamRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("mu_gn", self.mu_gn),
            ("sigma_gn", self.sigma_gn),
            ("sigma_gf", self.sigma_gf),
            ("sigma_bl", self.sigma_bl),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(CamoError::Config(format!("{name}: need lo < hi, got ({lo}, {hi})")));
            }
        }
        if self.sigma_gn.0 < 0.0 || self.sigma_gf.0 <= 0.0 || self.sigma_bl.0 <= 0.0 {
            return Err(CamoError::Config("standard deviations must be non-negative (filters: positive)".into()));
        }
        for (name, set) in [("k_gf", &self.k_gf), ("k_bl", &self.k_bl)] {
            if set.is_empty() {
                return Err(CamoError::Config(format!("{name}: kernel set is empty")));
            }
            if set.iter().any(|k| k % 2 == 0) {
                return Err(CamoError::Config(format!("{name}: kernel sizes must be odd")));
            }
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CamoError::Config(format!("{name}: kernel sizes must be strictly ascending")));
            }
        }
        Ok(())
    }

    fn kernel_span(set: &[usize]) -> (f64, f64) {
        (set[0] as f64, set[set.len() - 1] as f64)
    }

    pub fn contains(&self, p: &CamouflageParams) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        within(p.mu_gn, self.mu_gn)
            && within(p.sigma_gn, self.sigma_gn)
            && within(p.sigma_gf, self.sigma_gf)
            && within(p.sigma_bl, self.sigma_bl)
            && self.k_gf.contains(&p.k_gf)
            && self.k_bl.contains(&p.k_bl)
    }
}

/// The six camouflage parameters in applied form, plus the head outputs
/// they came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CamouflageParams {
    pub mu_gn: f64,
    pub sigma_gn: f64,
    pub k_gf: usize,
    pub sigma_gf: f64,
    pub k_bl: usize,
    pub sigma_bl: f64,
    /// Head outputs in `[0, 1]`, in [`Head`] order.
    pub continuous: Heads,
}

impl CamouflageParams {
    /// Parameters that leave the image untouched.
    pub fn identity() -> Self {
        Self {
            mu_gn: 0.0,
            sigma_gn: 0.0,
            k_gf: 1,
            sigma_gf: 1.0,
            k_bl: 1,
            sigma_bl: 1.0,
            continuous: [0.0, 0.5, 0.0, 0.0, 1.0, 1.0],
        }
    }

    /// Hand-set parameters; `continuous` records where each value sits inside
    /// `ranges` (clamped to `[0, 1]`).
    pub fn manual(
        ranges: &ParamRanges,
        mu_gn: f64,
        sigma_gn: f64,
        k_gf: usize,
        sigma_gf: f64,
        k_bl: usize,
        sigma_bl: f64,
    ) -> Self {
        let pos = |v: f64, (lo, hi): (f64, f64)| ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        let kpos = |k: usize, set: &[usize]| {
            let (lo, hi) = ParamRanges::kernel_span(set);
            if hi > lo {
                ((k as f64 - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.0
            }
        };
        let mut continuous = [0.0; NUM_HEADS];
        continuous[Head::SigmaGn as usize] = pos(sigma_gn, ranges.sigma_gn);
        continuous[Head::MuGn as usize] = pos(mu_gn, ranges.mu_gn);
        continuous[Head::SigmaGf as usize] = pos(sigma_gf, ranges.sigma_gf);
        continuous[Head::KGf as usize] = kpos(k_gf, &ranges.k_gf);
        continuous[Head::SigmaBl as usize] = pos(sigma_bl, ranges.sigma_bl);
        continuous[Head::KBl as usize] = kpos(k_bl, &ranges.k_bl);
        Self {
            mu_gn,
            sigma_gn,
            k_gf,
            sigma_gf,
            k_bl,
            sigma_bl,
            continuous,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_gn >= 0.0 && self.sigma_gn.is_finite()) || !self.mu_gn.is_finite() {
            return Err(CamoError::ParamDomain(format!(
                "noise (mu {}, sigma {})",
                self.mu_gn, self.sigma_gn
            )));
        }
        for (name, k, s) in [("k_gf", self.k_gf, self.sigma_gf), ("k_bl", self.k_bl, self.sigma_bl)] {
            if k == 0 || k % 2 == 0 {
                return Err(CamoError::ParamDomain(format!("{name} = {k} must be odd and positive")));
            }
            if k > 1 && !(s > 0.0 && s.is_finite()) {
                return Err(CamoError::ParamDomain(format!("{name}: sigma {s} must be positive")));
            }
        }
        Ok(())
    }
}

/// Nearest member of `allowed` (ascending) to `v`; ties go to the smaller.
pub fn quantize_kernel(v: f64, allowed: &[usize]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &k in allowed {
        let d = (v - k as f64).abs();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((k, d));
        }
    }
    best.map(|(k, _)| k)
        .ok_or_else(|| CamoError::Config("empty kernel set".into()))
}

/// Affine map of head outputs onto `ranges`. Kernel heads are mapped onto the
/// span of the allowed set and then quantized.
pub fn map_heads_to_ranges(heads: &Heads, ranges: &ParamRanges) -> Result<CamouflageParams> {
    if let Some(h) = heads.iter().find(|h| !h.is_finite()) {
        return Err(CamoError::ModelState(format!("non-finite head output {h}")));
    }
    let affine = |h: f64, (lo, hi): (f64, f64)| lo + h * (hi - lo);
    let kernel = |h: f64, set: &[usize]| -> Result<usize> {
        if set.is_empty() {
            return Err(CamoError::Config("empty kernel set".into()));
        }
        quantize_kernel(affine(h, ParamRanges::kernel_span(set)), set)
    };
    Ok(CamouflageParams {
        mu_gn: affine(heads[Head::MuGn as usize], ranges.mu_gn),
        sigma_gn: affine(heads[Head::SigmaGn as usize], ranges.sigma_gn),
        k_gf: kernel(heads[Head::KGf as usize], &ranges.k_gf)?,
        sigma_gf: affine(heads[Head::SigmaGf as usize], ranges.sigma_gf),
        k_bl: kernel(heads[Head::KBl as usize], &ranges.k_bl)?,
        sigma_bl: affine(heads[Head::SigmaBl as usize], ranges.sigma_bl),
        continuous: *heads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantize_examples() {
        let set = [1, 3, 5, 7];
        assert_eq!(quantize_kernel(4.0, &set).unwrap(), 3);
        assert_eq!(quantize_kernel(6.9, &set).unwrap(), 7);
        assert_eq!(quantize_kernel(1.2, &set).unwrap(), 1);
        assert!(matches!(quantize_kernel(1.0, &[]), Err(CamoError::Config(_))));
    }

    #[test]
    fn midpoint_heads_give_midpoint_params() {
        let r = ParamRanges::default();
        let p = map_heads_to_ranges(&[0.5; 6], &r).unwrap();
        assert!((p.mu_gn - 0.0).abs() < 1e-15);
        assert!((p.sigma_gn - 0.05).abs() < 1e-15);
        assert!((p.sigma_gf - 1.55).abs() < 1e-15);
        assert!((p.sigma_bl - 8.25).abs() < 1e-15);
        assert_eq!(p.continuous, [0.5; 6]);
    }

    #[test]
    fn kernel_heads_hit_set_boundaries() {
        let r = ParamRanges::default();
        let mut h = [0.5; 6];
        h[Head::KGf as usize] = 0.0;
        h[Head::KBl as usize] = 0.0;
        let p = map_heads_to_ranges(&h, &r).unwrap();
        assert_eq!((p.k_gf, p.k_bl), (1, 3));
        h[Head::KGf as usize] = 0.999;
        h[Head::KBl as usize] = 0.999;
        let p = map_heads_to_ranges(&h, &r).unwrap();
        assert_eq!((p.k_gf, p.k_bl), (7, 31));
    }

    #[test]
    fn non_finite_heads_fail_fast() {
        let mut h = [0.5; 6];
        h[2] = f64::NAN;
        assert!(matches!(
            map_heads_to_ranges(&h, &ParamRanges::default()),
            Err(CamoError::ModelState(_))
        ));
    }

    #[test]
    fn ranges_validation() {
        assert!(ParamRanges::default().validate().is_ok());
        let mut r = ParamRanges::default();
        r.k_gf = vec![1, 4];
        assert!(r.validate().is_err());
        let mut r = ParamRanges::default();
        r.sigma_gf = (2.0, 1.0);
        assert!(r.validate().is_err());
        let mut r = ParamRanges::default();
        r.k_bl.clear();
        assert!(r.validate().is_err());
    }

    #[test]
    fn manual_params_record_positions() {
        let r = ParamRanges::default();
        let p = CamouflageParams::manual(&r, 0.0, 0.08, 7, 2.5, 5, 1.0);
        assert!((p.continuous[Head::SigmaGn as usize] - 0.8).abs() < 1e-12);
        assert_eq!(p.continuous[Head::KGf as usize], 1.0);
        assert!(r.contains(&p));
        assert!(p.validate().is_ok());
    }

    proptest! {
        #[test]
        fn mapped_params_stay_in_range(h in proptest::array::uniform6(0.0f64..1.0)) {
            let r = ParamRanges::default();
            let p = map_heads_to_ranges(&h, &r).unwrap();
            prop_assert!(r.contains(&p));
            prop_assert!(p.validate().is_ok());
        }
    }
}
