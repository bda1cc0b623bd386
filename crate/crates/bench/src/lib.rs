//! Fixtures shared by the criterion benches.

use echokit_core::synth::{synth_suite, SynthOutput};

/// One noisy synthetic clip from the standard suite geometry.
pub fn suite_clip(seed: u64) -> SynthOutput {
    synth_suite(1, seed)
        .expect("suite generation")
        .pop()
        .expect("one clip")
}
