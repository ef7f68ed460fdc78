//! The five experiment commands. Each is a pure function of
//! (configuration, seeds): re-running writes byte-identical CSVs and
//! images for any worker count. Wall-clock timings and progress lines go
//! to stdout only.
//!
//! Deterministic stream lanes keep trajectories independent of scheduling
//! order: trajectory `i` draws its paired initial noise from stream `3i`,
//! its target-resolution loop noise from `3i+1`, and its trained-resolution
//! loop noise from `3i+2`. Sweep projections use the dedicated stream
//! [`PROJECTION_STREAM`], so every cell sees identical directions.

use std::fs;
use std::time::Instant;

use rayon::prelude::*;

use ug_core::error::{Error, Result};
use ug_core::field::Field;
use ug_core::guidance::{guidance_scale, GuidanceConfig, RunStats};
use ug_core::metrics::{moment_report, radial_power_spectrum, sliced_wasserstein, SampleSet};
use ug_core::predictors::Predictor;
use ug_core::resample::downsample_box;
use ug_core::rng::RngStream;
use ug_core::sampler::{init_noise_pair, sample_batch, sample_loop, Trajectory};
use ug_core::schedule::NoiseSchedule;
use ug_core::textures;

use crate::config::{DatasetKind, ExperimentConfig};
use crate::output::{image_ext, image_stem, res_string, write_csv, write_image, write_pgm_plane};

/// Stream id for sliced-Wasserstein projection draws, far away from the
/// per-trajectory lanes.
const PROJECTION_STREAM: u64 = u64::MAX;

fn init_stream(i: usize) -> u64 {
    3 * i as u64
}

fn hi_stream(i: usize) -> u64 {
    3 * i as u64 + 1
}

fn low_stream(i: usize) -> u64 {
    3 * i as u64 + 2
}

/// CSV cell for a float: Rust's shortest round-trip decimal, byte-stable
/// across runs.
fn cell(v: f64) -> String {
    format!("{v}")
}

fn require_two_axes(cfg: &ExperimentConfig, command: &str) -> Result<()> {
    if cfg.dims.len() != 2 {
        return Err(Error::InvalidConfig(format!(
            "{command} emits two-axis images, but dims has {} axes; use `temporal` for frame stacks",
            cfg.dims.len()
        )));
    }
    Ok(())
}

fn collect_results<T: Send>(jobs: Vec<Result<T>>) -> Result<Vec<T>> {
    jobs.into_iter().collect()
}

/// Guided trajectories at the target resolution. The initial state comes
/// from the paired-noise construction so runs line up with the trained-
/// resolution arm drawn from the same lanes.
fn run_target_arm(
    cfg: &ExperimentConfig,
    p: &dyn Predictor,
    gcfg: &GuidanceConfig,
    schedule: &NoiseSchedule,
) -> Result<Vec<Trajectory>> {
    let plan = cfg.scale_plan()?;
    let scfg = cfg.sampler_config(1);
    let jobs: Vec<Result<Trajectory>> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|i| {
            let mut init_rng = RngStream::new(cfg.seed, init_stream(i));
            let (x_hi, _) = init_noise_pair(cfg.channels, &cfg.dims, &plan, &mut init_rng)?;
            let mut rng = RngStream::new(cfg.seed, hi_stream(i));
            sample_loop(p, gcfg, &scfg, schedule, cfg.label, x_hi, &mut rng)
        })
        .collect();
    collect_results(jobs)
}

/// Unguided trajectories at the trained resolution, from the coarse halves
/// of the same paired initial draws.
fn run_trained_arm(
    cfg: &ExperimentConfig,
    p: &dyn Predictor,
    schedule: &NoiseSchedule,
) -> Result<Vec<Trajectory>> {
    let plan = cfg.scale_plan()?;
    let gcfg = cfg.plain_guidance();
    let scfg = cfg.sampler_config(1);
    let jobs: Vec<Result<Trajectory>> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|i| {
            let mut init_rng = RngStream::new(cfg.seed, init_stream(i));
            let (_, z_low) = init_noise_pair(cfg.channels, &cfg.dims, &plan, &mut init_rng)?;
            let mut rng = RngStream::new(cfg.seed, low_stream(i));
            sample_loop(p, &gcfg, &scfg, schedule, cfg.label, z_low, &mut rng)
        })
        .collect();
    collect_results(jobs)
}

fn fold_stats(runs: &[Trajectory]) -> RunStats {
    let mut stats = RunStats::default();
    for tr in runs {
        stats.absorb(&tr.stats);
    }
    stats
}

/// Emits the `(t, τ, α_t, α_τ, P)` table for the configured schedule and
/// scale plan, validating monotonicity before writing.
pub fn cmd_tau_table(cfg: &ExperimentConfig) -> Result<()> {
    let schedule = cfg.schedule()?;
    let plan = cfg.scale_plan()?;
    let n = plan.n();
    let mut rows = Vec::with_capacity(schedule.len());
    let mut prev = 0usize;
    for t in 0..schedule.len() {
        let tau = schedule.adjusted_time(t, n)?;
        if tau > t || tau < prev {
            return Err(Error::NumericCheck(format!(
                "adjusted time must satisfy tau <= t and be nondecreasing; tau({t}) = {tau}, previous {prev}"
            )));
        }
        prev = tau;
        rows.push(format!(
            "{t},{tau},{},{},{}",
            cell(schedule.alpha(t)?),
            cell(schedule.alpha(tau)?),
            cell(schedule.power_factor(t, n)?)
        ));
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join(format!("tau_table_n{n}_T{}.csv", schedule.len()));
    write_csv(&path, "t,tau,alpha_t,alpha_tau,power_factor", &rows)?;
    println!("wrote {} ({} rows)", path.display(), schedule.len());
    Ok(())
}

/// Paired sampling: guided trajectories at the target resolution plus
/// unguided trajectories at the trained resolution, both image sets, and a
/// per-trajectory stats CSV.
pub fn cmd_sample(cfg: &ExperimentConfig) -> Result<()> {
    require_two_axes(cfg, "sample")?;
    let schedule = cfg.schedule()?;
    let p = cfg.build_predictor(&schedule)?;
    let gcfg = cfg.guidance(cfg.theta, cfg.eta)?;
    let low_dims = cfg.low_dims()?;

    let t_hi = Instant::now();
    let hi = run_target_arm(cfg, p.as_ref(), &gcfg, &schedule)?;
    let hi_wall = t_hi.elapsed().as_secs_f64();
    let t_low = Instant::now();
    let low = run_trained_arm(cfg, p.as_ref(), &schedule)?;
    let low_wall = t_low.elapsed().as_secs_f64();

    fs::create_dir_all(&cfg.out_dir)?;
    let ext = image_ext(cfg.channels);
    let hi_stem = image_stem("sample_high", cfg.theta, cfg.eta, cfg.seed, &cfg.dims);
    let low_stem = image_stem("sample_low", 0.0, cfg.eta, cfg.seed, &low_dims);
    let mut rows = Vec::with_capacity(2 * cfg.trajectories);
    for (i, tr) in hi.iter().enumerate() {
        write_image(&cfg.out_dir.join(format!("{hi_stem}_traj{i:03}.{ext}")), &tr.final_state)?;
    }
    for (i, tr) in low.iter().enumerate() {
        write_image(&cfg.out_dir.join(format!("{low_stem}_traj{i:03}.{ext}")), &tr.final_state)?;
    }
    for (arm, runs, dims) in
        [("high", &hi, &cfg.dims), ("low", &low, &low_dims)]
    {
        for (i, tr) in runs.iter().enumerate() {
            let (mean, var) = tr.final_state.moments();
            rows.push(format!(
                "{i},{arm},{},{},{},{},{},{}",
                res_string(dims),
                tr.stats.hi_calls,
                tr.stats.low_calls,
                cell(tr.stats.overhead_fraction()),
                cell(mean),
                cell(var)
            ));
        }
    }
    let csv_path = cfg.out_dir.join(format!(
        "{}_stats.csv",
        image_stem("sample", cfg.theta, cfg.eta, cfg.seed, &cfg.dims)
    ));
    write_csv(
        &csv_path,
        "trajectory,arm,resolution,hi_calls,low_calls,overhead_fraction,final_mean,final_variance",
        &rows,
    )?;

    // Call accounting: the gate opens on the visited transitions whose
    // guidance weight is nonzero; with conditioning each open transition
    // costs two low-resolution calls (unconditional + conditional).
    let step_list = cfg.sampler_config(1).steps.steps_for(schedule.len())?;
    let transitions = step_list.len() - 1;
    let per_call = if cfg.label.is_some() { 2 } else { 1 };
    let gate_open = step_list[..transitions]
        .iter()
        .filter(|&&t| guidance_scale(t, schedule.len(), cfg.theta, cfg.eta) != 0.0)
        .count();
    println!(
        "high-resolution phase: {} trajectories in {hi_wall:.3}s ({} predictor calls each)",
        cfg.trajectories,
        hi[0].stats.hi_calls
    );
    println!("low-resolution phase: {} trajectories in {low_wall:.3}s", cfg.trajectories);
    println!(
        "low-res predictor calls per guided trajectory: {} (gate-open transitions = {}, ceil(eta x {transitions}) = {})",
        hi[0].stats.low_calls,
        gate_open * per_call,
        (cfg.eta * transitions as f64).ceil() as u64 * per_call as u64
    );
    println!(
        "wrote {} images and {} to {}",
        2 * cfg.trajectories,
        csv_path.file_name().unwrap().to_string_lossy(),
        cfg.out_dir.display()
    );
    Ok(())
}

struct CellResult {
    theta: f64,
    eta: f64,
    sw: f64,
    row: String,
}

/// Metric grid over (θ, η): each cell samples at the target resolution,
/// downsamples, and scores against a trained-resolution reference set.
/// Every cell uses the same seeds and the same projection stream, so the
/// θ = 0 rows reproduce the unguided baseline exactly.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let schedule = cfg.schedule()?;
    let p = cfg.build_predictor(&schedule)?;
    let plan = cfg.scale_plan()?;
    let low_dims = cfg.low_dims()?;

    let reference_fields: Vec<Field> = match cfg.dataset {
        DatasetKind::PgmDir => {
            let (items, _) = cfg.dataset_items()?;
            items.iter().map(|f| downsample_box(f, &plan)).collect::<Result<_>>()?
        }
        _ => textures::texture_set(
            &cfg.spectrum(),
            cfg.channels,
            &low_dims,
            cfg.reference_count,
            &mut RngStream::new(cfg.dataset_seed, 1),
        )?,
    };
    let reference = SampleSet::reference(reference_fields)?;
    let ref_spectrum = radial_power_spectrum(&reference)?;

    let cells: Vec<(f64, f64)> = cfg
        .theta_list
        .iter()
        .flat_map(|&th| cfg.eta_list.iter().map(move |&e| (th, e)))
        .collect();
    let t0 = Instant::now();
    let jobs: Vec<Result<CellResult>> = cells
        .par_iter()
        .map(|&(theta, eta)| {
            let gcfg = cfg.guidance(theta, eta)?;
            let scfg = cfg.sampler_config(cfg.samples_per_cell);
            let runs =
                sample_batch(p.as_ref(), &gcfg, &scfg, &schedule, cfg.label, cfg.channels, &cfg.dims)?;
            let stats = fold_stats(&runs);
            let down: Vec<Field> = runs
                .iter()
                .map(|tr| downsample_box(&tr.final_state, &plan))
                .collect::<Result<_>>()?;
            let set = SampleSet::generated(down)?;
            let mut proj_rng = RngStream::new(cfg.seed, PROJECTION_STREAM);
            let sw = sliced_wasserstein(&set, &reference, cfg.projections, &mut proj_rng)?;
            let gap = radial_power_spectrum(&set)?.max_rel_gap(&ref_spectrum)?;
            let m = moment_report(&set);
            let row = format!(
                "{},{},{},{},{},{},{},{},{},{}",
                cell(theta),
                cell(eta),
                cfg.seed,
                cfg.samples_per_cell,
                cell(sw),
                cell(gap),
                cell(m.global_mean),
                cell(m.global_variance),
                stats.low_calls,
                cell(stats.overhead_fraction())
            );
            Ok(CellResult { theta, eta, sw, row })
        })
        .collect();
    let results = collect_results(jobs)?;
    let wall = t0.elapsed().as_secs_f64();

    fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg
        .out_dir
        .join(format!("sweep_seed{}_{}.csv", cfg.seed, res_string(&cfg.dims)));
    let rows: Vec<String> = results.iter().map(|r| r.row.clone()).collect();
    write_csv(
        &path,
        "theta,eta,seed,samples,sliced_wasserstein,spectrum_max_rel_gap,sample_mean,sample_variance,low_calls,overhead_fraction",
        &rows,
    )?;

    let best = results
        .iter()
        .min_by(|a, b| a.sw.total_cmp(&b.sw))
        .expect("validated non-empty grid");
    println!("{} cells ({} samples each) in {wall:.3}s", results.len(), cfg.samples_per_cell);
    println!(
        "minimum sliced Wasserstein {} at theta = {}, eta = {} (reported, not asserted)",
        cell(best.sw),
        cell(best.theta),
        cell(best.eta)
    );
    println!("wrote {}", path.display());
    Ok(())
}

/// Four runs from identical seeds toggling the two adjustments, with
/// per-run images and the low-resolution input-variance diagnostic.
pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<()> {
    require_two_axes(cfg, "ablate")?;
    let schedule = cfg.schedule()?;
    let p = cfg.build_predictor(&schedule)?;
    let ext = image_ext(cfg.channels);
    const VARIANTS: [(&str, bool, bool); 4] = [
        ("both", false, false),
        ("no-time-adjust", true, false),
        ("no-power-adjust", false, true),
        ("neither", true, true),
    ];

    fs::create_dir_all(&cfg.out_dir)?;
    let mut summary = Vec::with_capacity(4);
    for (name, no_tau, no_power) in VARIANTS {
        let mut gcfg = cfg.guidance(cfg.theta, cfg.eta)?;
        gcfg.ablate_time_adjust = no_tau;
        gcfg.ablate_power_adjust = no_power;
        let t0 = Instant::now();
        let runs = run_target_arm(cfg, p.as_ref(), &gcfg, &schedule)?;
        let wall = t0.elapsed().as_secs_f64();

        let dir = cfg.out_dir.join(name);
        fs::create_dir_all(&dir)?;
        let stem = image_stem(&format!("ablate_{name}"), cfg.theta, cfg.eta, cfg.seed, &cfg.dims);
        for (i, tr) in runs.iter().enumerate() {
            write_image(&dir.join(format!("{stem}_traj{i:03}.{ext}")), &tr.final_state)?;
        }

        // The diagnostic the mechanism lives in: variance of the field
        // actually fed to the trained-resolution predictor, per open step.
        let mut diag = Vec::new();
        let mut devs = Vec::new();
        for (i, tr) in runs.iter().enumerate() {
            for &(t, v) in &tr.stats.low_input_variance {
                let alpha = schedule.alpha(t)?;
                diag.push(format!("{i},{t},{},{}", cell(alpha), cell(v)));
                if alpha < 0.5 {
                    devs.push((v - 1.0).abs());
                }
            }
        }
        write_csv(&dir.join("low_input_variance.csv"), "trajectory,t,alpha_t,variance", &diag)?;
        let (mean_dev, max_dev) = if devs.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (
                devs.iter().sum::<f64>() / devs.len() as f64,
                devs.iter().fold(0.0f64, |a, &b| a.max(b)),
            )
        };
        let stats = fold_stats(&runs);
        summary.push(format!(
            "{name},{},{},{},{}",
            stats.low_calls,
            cell(stats.overhead_fraction()),
            cell(mean_dev),
            cell(max_dev)
        ));
        println!(
            "{name}: {} trajectories in {wall:.3}s; low-input |variance - 1| at alpha < 0.5: mean {mean_dev:.4}, max {max_dev:.4}",
            cfg.trajectories
        );
    }
    let path = cfg.out_dir.join("ablate_summary.csv");
    write_csv(
        &path,
        "run,low_calls,overhead_fraction,mean_abs_variance_dev,max_abs_variance_dev",
        &summary,
    )?;
    println!("wrote 4 run directories and {} to {}", "ablate_summary.csv", cfg.out_dir.display());
    Ok(())
}

/// Frame-to-frame mean squared differences down a frame stack.
fn frame_diff_energy(plane: &[f64], frames: usize, frame_len: usize) -> Vec<f64> {
    (0..frames.saturating_sub(1))
        .map(|k| {
            let a = &plane[k * frame_len..(k + 1) * frame_len];
            let b = &plane[(k + 1) * frame_len..(k + 2) * frame_len];
            a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>() / frame_len as f64
        })
        .collect()
}

/// Frame-stack sampling with a temporal scale plan: guided and unguided
/// arms at the target frame count plus the trained-scale arm, emitted as
/// per-frame PGM sequences with a frame-difference-energy CSV.
pub fn cmd_temporal(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.dims.len() != 3 {
        return Err(Error::InvalidConfig(format!(
            "temporal needs three axes [frames, height, width], got {:?}",
            cfg.dims
        )));
    }
    if cfg.channels != 1 {
        return Err(Error::InvalidConfig(
            "temporal emits grayscale frames; set channels = 1".into(),
        ));
    }
    let schedule = cfg.schedule()?;
    let p = cfg.build_predictor(&schedule)?;
    let plan = cfg.scale_plan()?;
    let low_dims = cfg.low_dims()?;
    println!("scale plan {:?}: n = {}", cfg.plan, plan.n());

    let gcfg = cfg.guidance(cfg.theta, cfg.eta)?;
    let scfg = cfg.sampler_config(1);
    let plain_low = cfg.plain_guidance();

    // The baseline arm replays the guided arm's exact initial state and
    // loop noise (same streams) with the gate strength at zero, so the two
    // frame sequences differ only through the guidance term.
    let run_hi = |gcfg: &GuidanceConfig| -> Result<Vec<Trajectory>> {
        let jobs: Vec<Result<Trajectory>> = (0..cfg.trajectories)
            .into_par_iter()
            .map(|i| {
                let mut init_rng = RngStream::new(cfg.seed, init_stream(i));
                let (x_hi, _) = init_noise_pair(cfg.channels, &cfg.dims, &plan, &mut init_rng)?;
                let mut rng = RngStream::new(cfg.seed, hi_stream(i));
                sample_loop(p.as_ref(), gcfg, &scfg, &schedule, cfg.label, x_hi, &mut rng)
            })
            .collect();
        collect_results(jobs)
    };
    let t0 = Instant::now();
    let guided = run_hi(&gcfg)?;
    let baseline = run_hi(&cfg.guidance(0.0, cfg.eta)?)?;
    let trained: Vec<Trajectory> = {
        let jobs: Vec<Result<Trajectory>> = (0..cfg.trajectories)
            .into_par_iter()
            .map(|i| {
                let mut init_rng = RngStream::new(cfg.seed, init_stream(i));
                let (_, z_low) = init_noise_pair(cfg.channels, &cfg.dims, &plan, &mut init_rng)?;
                let mut rng = RngStream::new(cfg.seed, low_stream(i));
                sample_loop(p.as_ref(), &plain_low, &scfg, &schedule, cfg.label, z_low, &mut rng)
            })
            .collect();
        collect_results(jobs)?
    };
    let wall = t0.elapsed().as_secs_f64();

    fs::create_dir_all(&cfg.out_dir)?;
    let arms: [(&str, f64, &[usize], &Vec<Trajectory>); 3] = [
        ("guided", cfg.theta, &cfg.dims, &guided),
        ("baseline", 0.0, &cfg.dims, &baseline),
        ("trained", 0.0, &low_dims, &trained),
    ];
    let mut diff_rows = Vec::new();
    let mut mean_energy = Vec::new();
    for (arm, theta, dims, runs) in arms {
        let (frames, h, w) = (dims[0], dims[1], dims[2]);
        let stem = image_stem(&format!("temporal_{arm}"), theta, cfg.eta, cfg.seed, dims);
        let mut total = 0.0;
        for (i, tr) in runs.iter().enumerate() {
            let plane = tr.final_state.channel(0);
            for k in 0..frames {
                let path = cfg.out_dir.join(format!("{stem}_traj{i:02}_frame{k:03}.pgm"));
                write_pgm_plane(&path, &plane[k * h * w..(k + 1) * h * w], h, w)?;
            }
            for (k, e) in frame_diff_energy(plane, frames, h * w).into_iter().enumerate() {
                diff_rows.push(format!("{arm},{i},{k},{}", cell(e)));
                total += e;
            }
        }
        mean_energy.push((arm, total / (runs.len() * (frames - 1)) as f64));
    }
    let diff_path = cfg.out_dir.join(format!("temporal_diff_energy_seed{}.csv", cfg.seed));
    write_csv(&diff_path, "arm,trajectory,frame,diff_energy", &diff_rows)?;

    println!(
        "frames per trajectory: {} at target scale vs {} at trained scale",
        cfg.dims[0], low_dims[0]
    );
    let energies: Vec<String> =
        mean_energy.iter().map(|(arm, e)| format!("{arm} {:.5}", e)).collect();
    println!("mean frame-to-frame difference energy: {}", energies.join(", "));
    println!(
        "{} trajectories per arm in {wall:.3}s; wrote frames and {} to {}",
        cfg.trajectories,
        diff_path.file_name().unwrap().to_string_lossy(),
        cfg.out_dir.display()
    );
    Ok(())
}
