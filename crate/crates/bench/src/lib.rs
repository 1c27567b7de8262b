//! Shared fixtures for benchmarks: the reference training scenario, its
//! frames and features, and a quickly trained profile.

use goosewatch_core::codec::{encode_frame, GooseFrame};
use goosewatch_core::config::RunConfig;
use goosewatch_core::detector::Profile;
use goosewatch_core::features::{FeatureMatrix, Scope, View};
use goosewatch_core::pipeline::{extract_features, train_profile};
use goosewatch_core::synth::{run_scenario, Scenario};
use goosewatch_core::window::WindowConfig;

const TRAIN_SCENARIO: &str = include_str!("../../core/tests/fixtures/reference_train.json");

pub struct Fixture {
    pub frames: Vec<GooseFrame>,
    pub encoded: Vec<Vec<u8>>,
    pub window: WindowConfig,
    pub features: FeatureMatrix,
    pub profile: Profile,
}

/// Builds the fixture with `epochs` of training per view.
pub fn fixture(epochs: usize) -> Fixture {
    let scenario = Scenario::from_json(TRAIN_SCENARIO).expect("bundled scenario parses");
    let frames = run_scenario(&scenario).expect("bundled scenario runs").frames;
    let encoded = frames.iter().map(|f| encode_frame(f).expect("synthetic frames encode")).collect();
    let cfg = RunConfig {
        t_w: 0.5,
        epochs,
        ..RunConfig::default()
    };
    let window = cfg.window_config().expect("valid window");
    let (features, _) = extract_features(&frames, None, &window, Scope::Train).expect("features");
    let profile = train_profile(&features, &View::BOTH, &cfg).expect("profile trains");
    Fixture {
        frames,
        encoded,
        window,
        features,
        profile,
    }
}
