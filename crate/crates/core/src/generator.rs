//! The configuration generator G: a CNN backbone with six sigmoid heads
//! whose outputs are mapped onto [`ParamRanges`].

use camo_nn::{Architecture, Network};

use crate::checkpoint::{Checkpoint, CheckpointHeader, ModelRole};
use crate::discriminators::sigmoid;
use crate::error::{CamoError, Result};
use crate::image::ImageF;
use crate::params::{map_heads_to_ranges, CamouflageParams, Head, Heads, ParamRanges, NUM_HEADS};

/// Sign of each head inside the visual-constraint loss: blur and noise heads
/// enter positively, blend heads negatively, `μ_gn` not at all.
pub const LOSS_VC_SIGNS: Heads = [1.0, 0.0, 1.0, 1.0, -1.0, -1.0];

/// `log(h_σgf·h_kgf) + log h_σgn − log(h_σbl·h_kbl)` with every head floored
/// at `eps`.
pub fn loss_vc_from_heads(heads: &Heads, eps: f64) -> f64 {
    heads
        .iter()
        .zip(LOSS_VC_SIGNS)
        .map(|(h, s)| if s == 0.0 { 0.0 } else { s * h.max(eps).ln() })
        .sum()
}

/// Anything that maps an image to head outputs through a flat parameter
/// vector θ and can differentiate the visual-constraint loss.
pub trait ParamGenerator {
    fn ranges(&self) -> &ParamRanges;
    fn theta(&self) -> &[f64];
    fn theta_mut(&mut self) -> &mut [f64];
    fn heads(&self, img: &ImageF) -> Result<Heads>;
    /// Adds `scale·∇θ L_vc(img)` to `grads` and returns `L_vc(img)`.
    fn accumulate_loss_vc_grad(&self, img: &ImageF, eps: f64, scale: f64, grads: &mut [f64]) -> Result<f64>;
    /// Adds `scale·∇θ (weight·μ_gn²)` to `grads`.
    fn accumulate_mu_pull_grad(&self, img: &ImageF, weight: f64, scale: f64, grads: &mut [f64]) -> Result<()>;

    fn generate_params(&self, img: &ImageF) -> Result<CamouflageParams> {
        map_heads_to_ranges(&self.heads(img)?, self.ranges())
    }
}

#[derive(Clone, Debug)]
pub struct GeneratorModel {
    net: Network,
    ranges: ParamRanges,
}

impl GeneratorModel {
    pub fn new(arch: Architecture, ranges: ParamRanges, seed: u64) -> Result<Self> {
        let mut net = Network::new(arch, seed)?;
        // Small output weights keep every head near 0.5 at initialisation.
        net.scale_output_layer(0.1);
        Self::from_network(net, ranges)
    }

    pub fn from_network(net: Network, ranges: ParamRanges) -> Result<Self> {
        ranges.validate()?;
        let a = net.architecture();
        if a.outputs != NUM_HEADS || a.channels != 3 {
            return Err(CamoError::Config(format!(
                "generator '{}' needs 3 input channels and {NUM_HEADS} outputs, has {} and {}",
                a.name, a.channels, a.outputs
            )));
        }
        Ok(Self { net, ranges })
    }

    /// Loads a generator, refusing architecture or range mismatches.
    pub fn from_checkpoint(
        ckpt: &Checkpoint,
        architecture: Option<&Architecture>,
        ranges: Option<&ParamRanges>,
    ) -> Result<Self> {
        ckpt.expect(ModelRole::Generator, architecture, ranges)?;
        let r = ckpt
            .header
            .ranges
            .clone()
            .ok_or_else(|| CamoError::Checkpoint("generator checkpoint without ranges".into()))?;
        Self::from_network(ckpt.network()?, r)
    }

    pub fn to_checkpoint(&self, name: &str, provenance: &str) -> Checkpoint {
        Checkpoint::new(
            CheckpointHeader {
                role: ModelRole::Generator,
                name: name.into(),
                provenance: provenance.into(),
                architecture: self.net.architecture().clone(),
                ranges: Some(self.ranges.clone()),
                gradient_access: true,
                param_count: self.net.param_count(),
            },
            self.net.params().to_vec(),
        )
        .expect("network parameters match their architecture")
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    fn input(&self, img: &ImageF) -> Result<Vec<f64>> {
        let a = self.net.architecture();
        if img.dims() != (a.height, a.width) {
            return Err(CamoError::shape(
                format!("{}x{}", a.height, a.width),
                format!("{}x{}", img.height(), img.width()),
            ));
        }
        Ok(img.to_chw().into_iter().map(|v| v - 0.5).collect())
    }

    fn forward_heads(&self, img: &ImageF) -> Result<(camo_nn::Trace, Heads)> {
        let trace = self.net.forward(&self.input(img)?)?;
        let mut heads = [0.0; NUM_HEADS];
        for (h, z) in heads.iter_mut().zip(trace.outputs()) {
            *h = sigmoid(*z);
        }
        if let Some(z) = trace.outputs().iter().find(|z| !z.is_finite()) {
            return Err(CamoError::ModelState(format!("non-finite generator output {z}")));
        }
        Ok((trace, heads))
    }
}

impl ParamGenerator for GeneratorModel {
    fn ranges(&self) -> &ParamRanges {
        &self.ranges
    }

    fn theta(&self) -> &[f64] {
        self.net.params()
    }

    fn theta_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }

    fn heads(&self, img: &ImageF) -> Result<Heads> {
        Ok(self.forward_heads(img)?.1)
    }

    fn accumulate_loss_vc_grad(&self, img: &ImageF, eps: f64, scale: f64, grads: &mut [f64]) -> Result<f64> {
        let (trace, heads) = self.forward_heads(img)?;
        // d log(max(h, eps)) / dz = (1 − h) above the floor, 0 below it.
        let d_out: Vec<f64> = heads
            .iter()
            .zip(LOSS_VC_SIGNS)
            .map(|(&h, s)| if h >= eps { scale * s * (1.0 - h) } else { 0.0 })
            .collect();
        self.net.backward(&trace, &d_out, grads, false)?;
        Ok(loss_vc_from_heads(&heads, eps))
    }

    fn accumulate_mu_pull_grad(&self, img: &ImageF, weight: f64, scale: f64, grads: &mut [f64]) -> Result<()> {
        if weight == 0.0 {
            return Ok(());
        }
        let (trace, heads) = self.forward_heads(img)?;
        let i = Head::MuGn as usize;
        let (lo, hi) = self.ranges.mu_gn;
        let mu = lo + heads[i] * (hi - lo);
        let mut d_out = [0.0; NUM_HEADS];
        d_out[i] = scale * 2.0 * weight * mu * (hi - lo) * heads[i] * (1.0 - heads[i]);
        self.net.backward(&trace, &d_out, grads, false)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::generator_arch;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(size: usize, seed: u64) -> ImageF {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..size * size * 3).map(|_| rng.random::<f64>()).collect();
        ImageF::new(size, size, data).unwrap()
    }

    #[test]
    fn fresh_model_gives_open_unit_heads_and_valid_params() {
        let g = GeneratorModel::new(generator_arch(32), ParamRanges::default(), 3).unwrap();
        let img = random_image(32, 1);
        let h = g.heads(&img).unwrap();
        assert!(h.iter().all(|v| *v > 0.0 && *v < 1.0));
        let p = g.generate_params(&img).unwrap();
        assert!(ParamRanges::default().contains(&p));
        assert_eq!(p, g.generate_params(&img).unwrap());
    }

    #[test]
    fn loss_vc_closed_forms() {
        assert!((loss_vc_from_heads(&[0.5; 6], 1e-6) - 0.5f64.ln()).abs() < 1e-12);
        let strong = [1.0, 0.5, 1.0, 1.0, 0.0, 0.0];
        assert!((loss_vc_from_heads(&strong, 1e-6) - 2.0 * 1e6f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn wrong_input_size_is_a_shape_error() {
        let g = GeneratorModel::new(generator_arch(32), ParamRanges::default(), 3).unwrap();
        assert!(matches!(g.heads(&random_image(16, 1)), Err(CamoError::Shape { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn applied_params_stay_in_range(seed in 0u64..1000, scale in 0.0f64..20.0) {
            let mut g = GeneratorModel::new(generator_arch(16), ParamRanges::default(), seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for p in g.theta_mut() {
                *p += scale * (rng.random::<f64>() - 0.5);
            }
            let p = g.generate_params(&random_image(16, seed + 1)).unwrap();
            prop_assert!(ParamRanges::default().contains(&p));
        }
    }
}
