//! Monte Carlo campaigns over the simulated scenarios and the timing
//! benchmarks comparing recursive identification with Pyramid.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attitude::{solve_wahba, AngularVelocity, UnitVec3};
use crate::camera::CameraModel;
use crate::catalog::StarDatabase;
use crate::pipeline::{run, Pipeline, PipelineConfig, RunReport, StopCriteria};
use crate::pyramid::{pyramid_identify, Frame, PyramidConfig};
use crate::quatera::OmegaEstimate;
use crate::rsi::{rsi_identify, RsiConfig, RsiState};
use crate::simulator::{generate_frame, random_attitude, random_unit, run_scenario, FrameOptions, ScenarioConfig, SimError, SpikeCount};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Per-epoch statistics across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub t: f64,
    pub n_trials: usize,
    pub axis_err_mean_arcsec: Option<f64>,
    pub axis_err_std_arcsec: Option<f64>,
    /// Mean `|Ω̂ − |ω||`, arcsec/s.
    pub rate_err_mean_arcsec_s: Option<f64>,
    /// Fraction of trials in which Pyramid ran at this epoch.
    pub pyramid_fraction: f64,
    pub window_n_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub scenario: ScenarioConfig,
    pub n_trials: usize,
    pub epochs: Vec<EpochStats>,
    /// Recursive aborts over recursive attempts, percent.
    pub fallback_percent: f64,
    /// Pyramid calls over all processed frames, percent.
    pub pyramid_percent: f64,
    pub trials: Vec<RunReport>,
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (Some(m), Some(v.sqrt()))
}

/// Runs one trial of the pipeline over a simulated scenario.
pub fn run_trial(
    scenario: &ScenarioConfig,
    trial: u64,
    db: &StarDatabase,
    cfg: &PipelineConfig,
) -> Result<RunReport, SimError> {
    let samples = run_scenario(scenario, trial, db, &cfg.camera)?;
    let mut p = Pipeline::new(db, *cfg);
    Ok(run(
        &mut p,
        samples.iter().map(|s| (&s.sim.frame, Some(s.omega))),
        &StopCriteria::default(),
    ))
}

pub fn run_campaign(
    scenario: &ScenarioConfig,
    n_trials: usize,
    db: &StarDatabase,
    cfg: &PipelineConfig,
) -> Result<CampaignReport, SimError> {
    scenario.validate()?;
    let trials: Vec<RunReport> = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| run_trial(scenario, i, db, cfg))
        .collect::<Result<_, _>>()?;

    let times = scenario.sample_times();
    let epochs = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let rows: Vec<_> = trials.iter().filter_map(|r| r.rows.get(i)).collect();
            let axis: Vec<f64> = rows.iter().filter_map(|r| r.axis_err_arcsec).collect();
            let rate: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.rate_err.map(|e| e * crate::attitude::ARCSEC_PER_RAD))
                .collect();
            let (am, asd) = mean_std(&axis);
            let n = rows.len().max(1) as f64;
            EpochStats {
                t,
                n_trials: rows.len(),
                axis_err_mean_arcsec: am,
                axis_err_std_arcsec: asd,
                rate_err_mean_arcsec_s: mean_std(&rate).0,
                pyramid_fraction: rows.iter().filter(|r| r.pyramid_called).count() as f64 / n,
                window_n_mean: rows.iter().map(|r| r.window_n as f64).sum::<f64>() / n,
            }
        })
        .collect();

    let (mut aborts, mut attempts, mut pyr, mut frames) = (0usize, 0usize, 0usize, 0usize);
    for r in &trials {
        aborts += r.stats.rsi_aborts;
        attempts += r.stats.rsi_calls;
        pyr += r.stats.pyramid_calls;
        frames += r.rows.len() - r.stats.frames_skipped;
    }
    let pct = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
    Ok(CampaignReport {
        scenario: *scenario,
        n_trials,
        epochs,
        fallback_percent: pct(aborts, attempts),
        pyramid_percent: pct(pyr, frames),
        trials,
    })
}

impl CampaignReport {
    pub fn write<W: Write>(&self, out: W, format: OutputFormat) -> std::io::Result<()> {
        match format {
            OutputFormat::Json => {
                #[derive(Serialize)]
                struct Summary<'a> {
                    scenario: &'a ScenarioConfig,
                    n_trials: usize,
                    fallback_percent: f64,
                    pyramid_percent: f64,
                    epochs: &'a [EpochStats],
                }
                serde_json::to_writer_pretty(
                    out,
                    &Summary {
                        scenario: &self.scenario,
                        n_trials: self.n_trials,
                        fallback_percent: self.fallback_percent,
                        pyramid_percent: self.pyramid_percent,
                        epochs: &self.epochs,
                    },
                )
                .map_err(std::io::Error::other)
            }
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(out);
                for e in &self.epochs {
                    w.serialize(e).map_err(std::io::Error::other)?;
                }
                w.flush()
            }
        }
    }

    /// Per-frame rows of every trial, tagged with the trial index.
    pub fn write_frames<W: Write>(&self, out: W, format: OutputFormat) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            trial: usize,
            #[serde(flatten)]
            row: &'a crate::pipeline::FrameRow,
        }
        let rows = self
            .trials
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.rows.iter().map(move |row| Row { trial: i, row }));
        match format {
            OutputFormat::Json => serde_json::to_writer(out, &rows.collect::<Vec<_>>()).map_err(std::io::Error::other),
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record([
                    "trial",
                    "t",
                    "method",
                    "n_identified",
                    "n_spikes_discarded",
                    "axis_err_arcsec",
                    "rate_err",
                    "window_n",
                ])?;
                for r in rows {
                    // csv cannot flatten; write the fields explicitly.
                    w.write_record([
                        r.trial.to_string(),
                        r.row.t.to_string(),
                        format!("{:?}", r.row.method).to_lowercase(),
                        r.row.n_identified.to_string(),
                        r.row.n_spikes_discarded.to_string(),
                        r.row.axis_err_arcsec.map(|v| v.to_string()).unwrap_or_default(),
                        r.row.rate_err.map(|v| v.to_string()).unwrap_or_default(),
                        r.row.window_n.to_string(),
                    ])?;
                }
                w.flush()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub n_spikes: u32,
    pub pyramid_mean_us: f64,
    pub recursive_mean_us: f64,
    /// `pyramid_mean_us / recursive_mean_us`.
    pub ratio: f64,
    pub pyramid_trimmed_us: f64,
    pub recursive_trimmed_us: f64,
    pub n_runs: usize,
    /// Set when a single run makes the mean meaningless as an average.
    pub high_variance: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchCase {
    /// Zero rate: every star of the new frame was identified in the last one.
    Best,
    /// The rate estimate is orthogonal to the truth, so nothing recurs and
    /// the recursive attempt always falls back to Pyramid.
    Worst,
}

/// A pair of frames at one attitude with the first already identified.
struct BenchPair {
    state: RsiState,
    frame: Frame,
}

const POOL_SIZE: usize = 200;

fn bench_pool(db: &StarDatabase, camera: &CameraModel, case: BenchCase, n_spikes: u32, seed: u64) -> Vec<BenchPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n_spikes as u64) << 32);
    let pcfg = PyramidConfig::default();
    let mut pool = Vec::with_capacity(POOL_SIZE);
    while pool.len() < POOL_SIZE {
        let c = random_attitude(&mut rng);
        let first = generate_frame(
            db,
            camera,
            &c,
            0.0,
            &FrameOptions {
                noise: true,
                spikes: SpikeCount::Exactly(0),
            },
            &mut rng,
        );
        if first.frame.len() <= 3 {
            continue;
        }
        let Ok(id) = pyramid_identify(&first.frame, db, &pcfg) else { continue };
        let (obs, refs): (Vec<UnitVec3>, Vec<UnitVec3>) = id
            .identified()
            .map(|(o, s)| (first.frame.observations[o], *db.direction(s)))
            .unzip();
        let Ok(sol) = solve_wahba(&obs, &refs, &vec![1.0; obs.len()]) else { continue };
        let omega = match case {
            BenchCase::Best => AngularVelocity::new(UnitVec3::z_axis(), 0.0),
            BenchCase::Worst => {
                // Any axis off the boresight moves every star by about a degree.
                let mut a = random_unit(&mut rng);
                while a.as_vector().z.abs() > 0.5 {
                    a = random_unit(&mut rng);
                }
                AngularVelocity::new(a, 1f64.to_radians())
            }
        };
        let est = OmegaEstimate {
            axis: omega.axis,
            magnitude: omega.rate,
            phi0: 0.0,
            covariance: [[0.0; 2]; 2],
            window_n: 2,
            degenerate_covariance: false,
            window_at_floor: false,
        };
        let second = generate_frame(
            db,
            camera,
            &c,
            1.0,
            &FrameOptions {
                noise: true,
                spikes: SpikeCount::Exactly(n_spikes),
            },
            &mut rng,
        );
        if second.frame.len() <= 3 {
            continue;
        }
        let state = RsiState::new(&first.frame, &id, sol.attitude(), est);
        pool.push(BenchPair {
            state,
            frame: second.frame,
        });
    }
    pool
}

fn trimmed_mean(xs: &mut [f64], frac: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let cut = ((xs.len() as f64) * frac).floor() as usize;
    let s = &xs[cut..xs.len() - cut];
    s.iter().sum::<f64>() / s.len() as f64
}

/// Times Pyramid alone against the recursive path on identical frames.
/// Calls are interleaved so drift in machine load affects both equally.
/// Wall clock is `std::time::Instant` (monotonic); trimmed means drop 5%
/// at each end.
pub fn bench(
    db: &StarDatabase,
    camera: &CameraModel,
    case: BenchCase,
    n_runs: usize,
    spikes: impl IntoIterator<Item = u32>,
    seed: u64,
) -> Vec<BenchmarkRecord> {
    let pcfg = PyramidConfig::default();
    let rcfg = RsiConfig::default();
    let mut out = Vec::new();
    if n_runs == 0 {
        return out;
    }
    for s in spikes {
        let pool = bench_pool(db, camera, case, s, seed);
        let mut tp = Vec::with_capacity(n_runs);
        let mut tr = Vec::with_capacity(n_runs);
        for i in 0..n_runs {
            let pair = &pool[i % pool.len()];
            let go_pyr = |tp: &mut Vec<f64>| {
                let t0 = Instant::now();
                black_box(pyramid_identify(black_box(&pair.frame), db, &pcfg).ok());
                tp.push(t0.elapsed().as_secs_f64() * 1e6);
            };
            let go_rec = |tr: &mut Vec<f64>| {
                let t0 = Instant::now();
                let r = rsi_identify(black_box(&pair.state), black_box(&pair.frame), &rcfg, db, camera);
                if r.is_err() {
                    black_box(pyramid_identify(&pair.frame, db, &pcfg).ok());
                }
                black_box(r.ok());
                tr.push(t0.elapsed().as_secs_f64() * 1e6);
            };
            if i % 2 == 0 {
                go_pyr(&mut tp);
                go_rec(&mut tr);
            } else {
                go_rec(&mut tr);
                go_pyr(&mut tp);
            }
        }
        let pm = tp.iter().sum::<f64>() / n_runs as f64;
        let rm = tr.iter().sum::<f64>() / n_runs as f64;
        out.push(BenchmarkRecord {
            n_spikes: s,
            pyramid_mean_us: pm,
            recursive_mean_us: rm,
            ratio: pm / rm,
            pyramid_trimmed_us: trimmed_mean(&mut tp, 0.05),
            recursive_trimmed_us: trimmed_mean(&mut tr, 0.05),
            n_runs,
            high_variance: n_runs == 1,
        });
    }
    out
}

pub fn write_bench<W: Write>(records: &[BenchmarkRecord], out: W, format: OutputFormat) -> std::io::Result<()> {
    match format {
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                clock: &'static str,
                trimmed_fraction: f64,
                records: &'a [BenchmarkRecord],
            }
            serde_json::to_writer_pretty(
                out,
                &Doc {
                    clock: "std::time::Instant (monotonic), per-call, interleaved",
                    trimmed_fraction: 0.05,
                    records,
                },
            )
            .map_err(std::io::Error::other)
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in records {
                w.serialize(r).map_err(std::io::Error::other)?;
            }
            w.flush()
        }
    }
}
