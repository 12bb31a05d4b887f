#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use startrack::catalog::{bundled_catalog, StarDatabase, DEFAULT_PAIR_MARGIN};
use startrack::simulator::{generate_frame, random_attitude, FrameOptions, SimFrame, SpikeCount};
use startrack::{pyramid_identify, CameraModel, PyramidConfig, UnitVec3};

/// The bundled magnitude-5 database, built once per test binary.
pub fn db() -> &'static StarDatabase {
    static DB: OnceLock<StarDatabase> = OnceLock::new();
    DB.get_or_init(|| {
        let camera = CameraModel::default();
        StarDatabase::build(bundled_catalog(5.0).unwrap(), camera.fov_diagonal(), DEFAULT_PAIR_MARGIN)
    })
}

pub fn camera() -> CameraModel {
    CameraModel::default()
}

/// Simulated frame with a random attitude and `0..=max_spikes` false stars.
pub fn random_frame<R: Rng>(rng: &mut R, noise: bool, max_spikes: u32) -> SimFrame {
    let c = random_attitude(rng);
    let spikes = rng.random_range(0..=max_spikes);
    let opts = FrameOptions {
        noise,
        spikes: SpikeCount::Exactly(spikes),
    };
    generate_frame(db(), &camera(), &c, 0.0, &opts, rng)
}

/// Pyramid outcomes over many frames, scored against ground truth.
#[derive(Debug, Default, Clone, Copy)]
pub struct PyramidTally {
    pub frames: usize,
    /// Frames with fewer than three catalog stars on the detector.
    pub unidentifiable: usize,
    pub failures: usize,
    pub identified: usize,
    /// Observations assigned a star other than the one behind them,
    /// including spikes assigned a star.
    pub misidentified: usize,
    /// Frames holding at least one misidentification.
    pub frames_misidentified: usize,
}

impl PyramidTally {
    pub fn misid_rate(&self) -> f64 {
        self.misidentified as f64 / self.identified.max(1) as f64
    }
}

pub fn pyramid_tally(n: usize, noise: bool, seed: u64) -> PyramidTally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = PyramidConfig::default();
    let mut t = PyramidTally::default();
    for _ in 0..n {
        let sim = random_frame(&mut rng, noise, 10);
        t.frames += 1;
        if sim.n_stars() < 3 {
            t.unidentifiable += 1;
        }
        let Ok(id) = pyramid_identify(&sim.frame, db(), &cfg) else {
            t.failures += 1;
            continue;
        };
        let bad = id.identified().filter(|&(o, s)| sim.truth[o] != Some(s)).count();
        t.identified += id.n_identified;
        t.misidentified += bad;
        t.frames_misidentified += (bad > 0) as usize;
    }
    t
}

/// Direct reading of the matching rule: an observation is matched to expected
/// star `i` when `i` is the only cone containing it and no other observation
/// has `i` as its only cone.
pub fn eq2_oracle(expected: &[UnitVec3], observed: &[UnitVec3], eps: f64) -> Vec<(usize, usize)> {
    let inside = |b: &UnitVec3, e: &UnitVec3| b.angle_to(e) < eps;
    let sole: Vec<Option<usize>> = observed
        .iter()
        .map(|b| {
            let cones: Vec<usize> = (0..expected.len()).filter(|&i| inside(b, &expected[i])).collect();
            (cones.len() == 1).then(|| cones[0])
        })
        .collect();
    let mut owners: HashMap<usize, Vec<usize>> = HashMap::new();
    for (j, s) in sole.iter().enumerate() {
        if let Some(i) = s {
            owners.entry(*i).or_default().push(j);
        }
    }
    let mut out: Vec<(usize, usize)> = owners
        .into_iter()
        .filter(|(_, js)| js.len() == 1)
        .map(|(i, js)| (js[0], i))
        .collect();
    out.sort();
    out
}
