//! End-to-end tests of the `ug` binary: every command runs as a child
//! process against small configurations, and the outputs are checked with
//! independent readers (the `image` crate for PGM/PPM payloads).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ug_core::field::Field;
use ug_core::predictors::ConvDenoiser;
use ug_core::rng::RngStream;
use ug_core::schedule::NoiseSchedule;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ug"))
}

fn write_named_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn write_cfg(dir: &Path, text: &str) -> PathBuf {
    write_named_cfg(dir, "experiment.cfg", text)
}

/// Runs a subcommand to completion and returns stdout; panics on failure.
fn run_ok(subcommand: &str, cfg: &Path, out: &Path, extra: &[&str]) -> String {
    let output = bin()
        .arg(subcommand)
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(extra)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{subcommand} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn run_raw(subcommand: &str, cfg: &Path, out: &Path) -> Output {
    bin()
        .arg(subcommand)
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap()
}

fn csv_lines(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    assert!(text.ends_with('\n'), "{}: missing trailing newline", path.display());
    assert!(!text.contains('\r'), "{}: CR found; rows must be LF-terminated", path.display());
    text.lines().map(str::to_owned).collect()
}

fn sorted_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

const SAMPLE_CFG: &str = "steps = 41\ndims = 16,16\nk0 = 2\ntrajectories = 2\n\
                          sampler = deterministic\ntheta = 1.0\neta = 0.6\nseed = 5\n";

#[test]
fn tau_table_is_identity_for_unit_plans_and_reruns_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "plan = 1,1\nsteps = 200\n");
    run_ok("tau-table", &cfg, &tmp.path().join("a"), &[]);
    run_ok("tau-table", &cfg, &tmp.path().join("b"), &[]);
    let table = tmp.path().join("a/tau_table_n1_T200.csv");
    let lines = csv_lines(&table);
    assert_eq!(lines[0], "t,tau,alpha_t,alpha_tau,power_factor");
    assert_eq!(lines.len(), 201);
    for (t, row) in lines[1..].iter().enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[0], t.to_string());
        assert_eq!(cols[1], t.to_string(), "unit plan must leave times unchanged");
        assert_eq!(cols[2], cols[3], "alpha columns must agree when tau = t");
        assert_eq!(cols[4], "1", "unit plan must leave power unchanged");
    }
    assert_eq!(
        fs::read(&table).unwrap(),
        fs::read(tmp.path().join("b/tau_table_n1_T200.csv")).unwrap(),
        "re-running must reproduce the table byte for byte"
    );
}

#[test]
fn tau_table_adjusts_strictly_downward_for_the_default_plan() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "");
    run_ok("tau-table", &cfg, tmp.path(), &[]);
    let lines = csv_lines(&tmp.path().join("tau_table_n4_T1000.csv"));
    assert_eq!(lines.len(), 1001, "one row per schedule step");
    let mut prev = 0i64;
    for (t, row) in lines[1..].iter().enumerate() {
        let tau: i64 = row.split(',').nth(1).unwrap().parse().unwrap();
        if t == 0 {
            assert_eq!(tau, 0);
        } else {
            assert!(tau < t as i64, "tau({t}) = {tau} must drop below t");
        }
        assert!(tau >= prev, "tau must be nondecreasing");
        prev = tau;
    }
}

#[test]
fn sample_emits_decodable_images_stats_and_call_accounting() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SAMPLE_CFG);
    let out = tmp.path().join("out");
    let stdout = run_ok("sample", &cfg, &out, &[]);
    assert!(
        stdout.contains("low-res predictor calls per guided trajectory: 24"),
        "call accounting missing from:\n{stdout}"
    );
    assert!(stdout.contains("total wall time:"), "timings must go to stdout");

    for (name, edge) in [
        ("sample_high_theta1.00_eta0.60_seed5_16x16_traj000.pgm", 16),
        ("sample_high_theta1.00_eta0.60_seed5_16x16_traj001.pgm", 16),
        ("sample_low_theta0.00_eta0.60_seed5_8x8_traj000.pgm", 8),
        ("sample_low_theta0.00_eta0.60_seed5_8x8_traj001.pgm", 8),
    ] {
        let img = image::open(out.join(name)).unwrap().to_luma8();
        assert_eq!((img.width(), img.height()), (edge, edge), "{name}");
    }
    let lines = csv_lines(&out.join("sample_theta1.00_eta0.60_seed5_16x16_stats.csv"));
    assert_eq!(
        lines[0],
        "trajectory,arm,resolution,hi_calls,low_calls,overhead_fraction,final_mean,final_variance"
    );
    assert_eq!(lines.len(), 5, "two trajectories per arm");
    let high: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&high[..6], &["0", "high", "16x16", "40", "24", "0.15"]);
    let low: Vec<&str> = lines[3].split(',').collect();
    assert_eq!(&low[..5], &["0", "low", "8x8", "40", "0"]);
}

#[test]
fn image_writers_agree_with_an_independent_reader() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = RngStream::new(99, 0);
    let gray = Field::gaussian(1, &[5, 7], &mut rng).unwrap();
    let color = Field::gaussian(3, &[4, 6], &mut rng).unwrap();

    let gray_path = tmp.path().join("gray.pgm");
    ug_cli::output::write_image(&gray_path, &gray).unwrap();
    let decoded = image::open(&gray_path).unwrap().to_luma8();
    assert_eq!((decoded.height(), decoded.width()), (5, 7));
    for (i, px) in decoded.pixels().enumerate() {
        assert_eq!(px.0[0], ug_cli::output::quantize(gray.data()[i]), "gray pixel {i}");
    }

    let color_path = tmp.path().join("color.ppm");
    ug_cli::output::write_image(&color_path, &color).unwrap();
    let decoded = image::open(&color_path).unwrap().to_rgb8();
    assert_eq!((decoded.height(), decoded.width()), (4, 6));
    for (i, px) in decoded.pixels().enumerate() {
        for c in 0..3 {
            assert_eq!(
                px.0[c],
                ug_cli::output::quantize(color.channel(c)[i]),
                "color pixel {i} channel {c}"
            );
        }
    }
}

#[test]
fn gate_zero_strength_reproduces_plain_sampling_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let base = "steps = 41\ndims = 16,16\nk0 = 2\ntrajectories = 1\n\
                sampler = deterministic\nseed = 5\ntheta = 0\n";
    let cfg_a = write_named_cfg(tmp.path(), "a.cfg", &format!("{base}eta = 0.2\n"));
    let cfg_b = write_named_cfg(tmp.path(), "b.cfg", &format!("{base}eta = 0.9\n"));
    let cfg_g = write_named_cfg(tmp.path(), "g.cfg", SAMPLE_CFG);
    let (out_a, out_b, out_g) =
        (tmp.path().join("oa"), tmp.path().join("ob"), tmp.path().join("og"));
    run_ok("sample", &cfg_a, &out_a, &[]);
    run_ok("sample", &cfg_b, &out_b, &[]);
    run_ok("sample", &cfg_g, &out_g, &[]);

    let img_a = fs::read(out_a.join("sample_high_theta0.00_eta0.20_seed5_16x16_traj000.pgm")).unwrap();
    let img_b = fs::read(out_b.join("sample_high_theta0.00_eta0.90_seed5_16x16_traj000.pgm")).unwrap();
    let img_g = fs::read(out_g.join("sample_high_theta1.00_eta0.60_seed5_16x16_traj000.pgm")).unwrap();
    assert_eq!(img_a, img_b, "zero strength must ignore the gate width entirely");
    assert_ne!(img_a, img_g, "nonzero strength must change the samples");
}

#[test]
fn sweep_grid_is_ordered_complete_and_scheduler_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "steps = 31\ndims = 8,8\nk0 = 2\nsamples_per_cell = 8\n\
         reference_count = 16\nprojections = 8\nseed = 3\n",
    );
    run_ok("sweep", &cfg, &tmp.path().join("a"), &[]);
    run_ok("sweep", &cfg, &tmp.path().join("b"), &[]);
    run_ok("sweep", &cfg, &tmp.path().join("c"), &["--workers", "2"]);

    let csv = tmp.path().join("a/sweep_seed3_8x8.csv");
    let lines = csv_lines(&csv);
    assert_eq!(lines.len(), 13, "4 x 3 grid plus header");
    let mut expected = Vec::new();
    for th in ["0", "0.5", "1", "1.5"] {
        for eta in ["0.2", "0.6", "1"] {
            expected.push((th.to_owned(), eta.to_owned()));
        }
    }
    let got: Vec<(String, String)> = lines[1..]
        .iter()
        .map(|row| {
            let c: Vec<&str> = row.split(',').collect();
            (c[0].to_owned(), c[1].to_owned())
        })
        .collect();
    assert_eq!(got, expected, "rows must follow the configured grid order");

    // The gate never opens at zero strength, so all three eta cells in the
    // first block are the same baseline; only the eta column may differ.
    let strip_eta = |row: &String| {
        let mut c: Vec<&str> = row.split(',').collect();
        c[1] = "-";
        c.join(",")
    };
    assert_eq!(strip_eta(&lines[1]), strip_eta(&lines[2]));
    assert_eq!(strip_eta(&lines[1]), strip_eta(&lines[3]));
    assert!(lines[1].split(',').nth(8) == Some("0"), "baseline must make no low-res calls");

    let bytes = fs::read(&csv).unwrap();
    assert_eq!(bytes, fs::read(tmp.path().join("b/sweep_seed3_8x8.csv")).unwrap());
    assert_eq!(bytes, fs::read(tmp.path().join("c/sweep_seed3_8x8.csv")).unwrap());
}

#[test]
fn ablate_toggles_write_four_runs_and_the_variance_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "steps = 41\nbeta_end = 0.08\ndims = 16,16\nk0 = 2\ntrajectories = 2\n\
                sampler = deterministic\ntheta = 1.0\neta = 0.6\nseed = 5\n";
    let cfg = write_cfg(tmp.path(), text);
    let out = tmp.path().join("ab");
    run_ok("ablate", &cfg, &out, &[]);
    assert_eq!(
        sorted_names(&out),
        vec!["ablate_summary.csv", "both", "neither", "no-power-adjust", "no-time-adjust"]
    );
    for name in ["both", "neither", "no-power-adjust", "no-time-adjust"] {
        let files = sorted_names(&out.join(name));
        assert_eq!(files.len(), 3, "{name}: two images plus the diagnostic");
        assert_eq!(files[2], "low_input_variance.csv");
        let diag = csv_lines(&out.join(name).join("low_input_variance.csv"));
        assert_eq!(diag[0], "trajectory,t,alpha_t,variance");
        assert_eq!(diag.len(), 1 + 2 * 24, "one row per open step per trajectory");
    }

    let summary = csv_lines(&out.join("ablate_summary.csv"));
    assert_eq!(summary[0], "run,low_calls,overhead_fraction,mean_abs_variance_dev,max_abs_variance_dev");
    let mean_dev = |row: &String| -> f64 { row.split(',').nth(3).unwrap().parse().unwrap() };
    let both = mean_dev(&summary[1]);
    let no_power = mean_dev(&summary[3]);
    assert!(summary[1].starts_with("both,") && summary[3].starts_with("no-power-adjust,"));
    assert!(
        no_power > both,
        "dropping the power rescale must push the low-res input variance \
         further from 1 (both {both}, no-power {no_power})"
    );

    // The untouched variant is the guided sample arm under another name.
    let sample_out = tmp.path().join("sample");
    run_ok("sample", &cfg, &sample_out, &[]);
    for i in 0..2 {
        let a = out.join(format!("both/ablate_both_theta1.00_eta0.60_seed5_16x16_traj{i:03}.pgm"));
        let b = sample_out.join(format!("sample_high_theta1.00_eta0.60_seed5_16x16_traj{i:03}.pgm"));
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "trajectory {i}");
    }
}

#[test]
fn temporal_emits_three_frame_sequences_and_difference_energies() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "steps = 21\ndims = 8,8,8\nplan = 2,1,1\nk0 = 2\ntrajectories = 1\n\
         sampler = deterministic\ntheta = 1.0\neta = 0.6\nseed = 9\n",
    );
    let out = tmp.path().join("tm");
    let stdout = run_ok("temporal", &cfg, &out, &[]);
    assert!(stdout.contains("n = 2"), "scale factor missing from:\n{stdout}");
    assert!(stdout.contains("8 at target scale vs 4 at trained scale"));

    let names = sorted_names(&out);
    let count = |prefix: &str| names.iter().filter(|n| n.starts_with(prefix)).count();
    assert_eq!(count("temporal_guided_"), 8);
    assert_eq!(count("temporal_baseline_"), 8);
    assert_eq!(count("temporal_trained_"), 4);

    let img = image::open(out.join("temporal_guided_theta1.00_eta0.60_seed9_8x8x8_traj00_frame003.pgm"))
        .unwrap()
        .to_luma8();
    assert_eq!((img.width(), img.height()), (8, 8));
    assert!(out.join("temporal_trained_theta0.00_eta0.60_seed9_4x8x8_traj00_frame003.pgm").exists());

    let lines = csv_lines(&out.join("temporal_diff_energy_seed9.csv"));
    assert_eq!(lines[0], "arm,trajectory,frame,diff_energy");
    assert_eq!(lines.len(), 1 + 7 + 7 + 3, "frame transitions per arm");
}

#[test]
fn config_errors_exit_2_with_the_offending_key_named() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for (text, needle) in [
        ("frobnicate = 1\n", "frobnicate"),
        ("eta = 1.5\n", "eta"),
        ("dims = 9,9\n", "not divisible"),
    ] {
        let cfg = write_cfg(tmp.path(), text);
        let output = run_raw("sample", &cfg, &out);
        assert_eq!(output.status.code(), Some(2), "config: {text:?}");
        let stderr = String::from_utf8_lossy(&output.stderr);
        assert!(stderr.contains(needle), "stderr must name the problem, got: {stderr}");
    }
    assert!(!out.exists(), "rejected configs must not produce output files");
}

#[test]
fn numeric_blowups_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "steps = 41\nbeta_end = 0.08\ndims = 16,16\nk0 = 2\ntrajectories = 1\n\
         theta = 1e12\neta = 1.0\nseed = 5\n",
    );
    let output = run_raw("sample", &cfg, &tmp.path().join("out"));
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains("non-finite"));
}

#[test]
fn conv_predictor_loads_parameters_and_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let schedule = NoiseSchedule::make_linear_beta(21, 1e-4, 0.05).unwrap();
    let net = ConvDenoiser::new_random(schedule, &mut RngStream::new(31, 0));
    let params = tmp.path().join("net.ugcd");
    net.save(&params).unwrap();

    let cfg = write_cfg(
        tmp.path(),
        &format!(
            "steps = 21\ndims = 8,8\npredictor = conv\nconv_params = {}\n\
             trajectories = 1\nsampler = deterministic\ntheta = 1.0\neta = 0.6\nseed = 2\n",
            params.display()
        ),
    );
    let out = tmp.path().join("out");
    run_ok("sample", &cfg, &out, &[]);
    assert!(out.join("sample_high_theta1.00_eta0.60_seed2_8x8_traj000.pgm").exists());
    assert!(out.join("sample_low_theta0.00_eta0.60_seed2_4x4_traj000.pgm").exists());
}

#[test]
fn seed_flag_overrides_the_configured_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SAMPLE_CFG);
    let out = tmp.path().join("out");
    run_ok("sample", &cfg, &out, &["--seed", "7"]);
    assert!(out.join("sample_high_theta1.00_eta0.60_seed7_16x16_traj000.pgm").exists());
    assert!(!out.join("sample_high_theta1.00_eta0.60_seed5_16x16_traj000.pgm").exists());
}

#[test]
fn pgm_directory_datasets_round_trip_into_sampling() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    fs::create_dir(&data_dir).unwrap();
    let mut rng = RngStream::new(123, 0);
    for i in 0..4 {
        let item = Field::gaussian(1, &[8, 8], &mut rng).unwrap();
        ug_cli::output::write_image(&data_dir.join(format!("item{i}.pgm")), &item).unwrap();
    }
    let cfg = write_cfg(
        tmp.path(),
        &format!(
            "steps = 21\ndims = 8,8\npredictor = dataset\ndataset = pgm-dir\n\
             dataset_dir = {}\ntrajectories = 1\nsampler = deterministic\n\
             theta = 1.0\neta = 0.6\nseed = 4\n",
            data_dir.display()
        ),
    );
    let out = tmp.path().join("out");
    run_ok("sample", &cfg, &out, &[]);
    assert!(out.join("sample_high_theta1.00_eta0.60_seed4_8x8_traj000.pgm").exists());
}

#[test]
fn two_class_conditioning_doubles_gate_open_calls() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "steps = 21\ndims = 8,8\npredictor = dataset\ndataset = two-class\nk0 = 2\n\
         label = 1\ncfg_w = 1.5\ntrajectories = 1\nsampler = deterministic\n\
         theta = 1.0\neta = 1.0\nseed = 6\n",
    );
    let out = tmp.path().join("out");
    let stdout = run_ok("sample", &cfg, &out, &[]);
    assert!(
        stdout.contains("low-res predictor calls per guided trajectory: 40"),
        "conditioned runs pay two low-res calls per open transition:\n{stdout}"
    );
    let lines = csv_lines(&out.join("sample_theta1.00_eta1.00_seed6_8x8_stats.csv"));
    let high: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&high[..5], &["0", "high", "8x8", "40", "40"]);
}
