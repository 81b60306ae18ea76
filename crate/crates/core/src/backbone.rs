//! Desk-scale network presets.

use camo_nn::{Architecture, ConvSpec};

/// Frozen detector: full resolution, last block at stride 1 so Grad-CAM
/// maps are 16×16 for 128×128 inputs.
pub fn detector_arch(size: usize) -> Architecture {
    Architecture {
        name: "desk-detector-v1".into(),
        channels: 3,
        height: size,
        width: size,
        input_pool: 1,
        convs: vec![
            ConvSpec::new(16, 3, 2),
            ConvSpec::new(32, 3, 2),
            ConvSpec::new(32, 3, 2),
            ConvSpec::new(32, 3, 1),
        ],
        outputs: 1,
    }
}

/// Visual discriminator: same family as the detector.
pub fn visual_arch(size: usize) -> Architecture {
    Architecture {
        name: "desk-visual-v1".into(),
        ..detector_arch(size)
    }
}

/// Generator backbone: 4 stride-2 blocks on a 2× pooled input, six heads.
pub fn generator_arch(size: usize) -> Architecture {
    Architecture {
        name: "desk-generator-v1".into(),
        channels: 3,
        height: size,
        width: size,
        input_pool: 2,
        convs: vec![
            ConvSpec::new(8, 3, 2),
            ConvSpec::new(16, 3, 2),
            ConvSpec::new(32, 3, 2),
            ConvSpec::new(32, 3, 2),
        ],
        outputs: crate::params::NUM_HEADS,
    }
}
