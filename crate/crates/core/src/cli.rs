//! Command-line front end: `simulate`, `image`, `verify`, `presets` and
//! `write-config`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::formats;
use crate::forward::{self, MultiFreqDataset};
use crate::geometry::Point;
use crate::imaging::{self, IndicatorField, SamplingGrid, VoxelMask};
use crate::scenario::{self, presets, Scenario};
use crate::verify::{self, VerificationReport};

/// Environment variable that fixes the worker thread count.
pub const THREADS_ENV: &str = "MSM_THREADS";

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;

pub const CHECKS: [&str; 4] = ["factorization", "coercivity", "psf", "symmetries"];
pub const FACTORIZATION_TRIALS: usize = 20;
pub const COERCIVITY_TRIALS: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "msm", version, about = "Multi-frequency sampling: simulate, image and verify")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a (noisy) multi-frequency dataset.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output dataset path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the normalized indicator, mid-plane slices and masks.
    Image {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Dataset written by `simulate`.
        #[arg(long)]
        data: PathBuf,
        /// Output prefix; files are `<prefix>.field`, `<prefix>_x{1,2,3}.csv`, `<prefix>_iso<v>.mask`.
        #[arg(long)]
        out: String,
        /// Image even if the dataset was made from a different scenario.
        #[arg(long)]
        force: bool,
    },
    /// Run the numerical certificates and print reports.
    Verify {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Run a single check.
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(CHECKS))]
        only: Option<String>,
    },
    /// List built-in presets.
    Presets,
    /// Print or write the canonical config of a scenario.
    WriteConfig {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario config file (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    pub preset: Option<String>,
    /// Override the noise / test-function seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the relative noise level
    #[arg(long)]
    pub noise: Option<f64>,
    /// Sampling grid resolution per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Iso-values, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub iso: Option<Vec<f64>>,
}

impl ScenarioArgs {
    pub fn load(&self) -> Result<Scenario> {
        let mut s = match (&self.config, &self.preset) {
            (Some(path), _) => scenario::parse_config(path)?,
            (None, Some(name)) => presets::get(name).ok_or_else(|| {
                Error::config("preset", format!("unknown preset `{name}`; known: {}", presets::NAMES.join(", ")))
            })?,
            (None, None) => return Err(Error::config("config", "either --config or --preset is required")),
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(noise) = self.noise {
            s.noise_level = noise;
        }
        if let Some(n) = self.grid {
            s.sampling =
                SamplingGrid::new(s.sampling.bounds, [n; 3]).map_err(|e| Error::config("grid", e.to_string()))?;
        }
        if let Some(iso) = &self.iso {
            s.iso_values = iso.clone();
        }
        s.validate()?;
        Ok(s)
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Format { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

/// Clean data with the scenario's noise applied.
pub fn simulate(scenario: &Scenario) -> Result<(MultiFreqDataset, MultiFreqDataset)> {
    let clean = forward::generate_dataset(scenario)?;
    let noisy = forward::add_noise(&clean, scenario.noise_level, scenario.seed)?;
    Ok((clean, noisy))
}

pub fn run_simulate(scenario: &Scenario, out: &Path) -> Result<String> {
    let (clean, noisy) = simulate(scenario)?;
    formats::write_dataset(out, &noisy, &scenario.hash())?;
    Ok(format!(
        "wrote {}\n  scenario: {}\n  sensors L = {}, J = {}, columns = {}\n  |clean| = {:.6e}, |noisy| = {:.6e}, |noise| = {:.6e}\n",
        out.display(),
        scenario.summary(),
        noisy.sensor_count(),
        noisy.grid.count(),
        noisy.grid.difference_count(),
        clean.frobenius_norm(),
        noisy.frobenius_norm(),
        clean.values().iter().zip(noisy.values()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt(),
    ))
}

/// Everything `image` computes.
#[derive(Debug, Clone)]
pub struct ImageProducts {
    pub field: IndicatorField,
    pub masks: Vec<VoxelMask>,
    pub files: Vec<PathBuf>,
}

fn iso_tag(iso: f64) -> String {
    format!("{iso}").replace('.', "p")
}

fn describe_point(p: &Point) -> String {
    format!("({:.4}, {:.4}, {:.4})", p[0], p[1], p[2])
}

pub fn run_image(dataset: &Path, scenario: &Scenario, prefix: &str, force: bool) -> Result<(ImageProducts, String)> {
    let (data, hash) = formats::read_dataset(dataset)?;
    let expected = scenario.hash();
    if hash != expected && !force {
        return Err(Error::Precondition(format!(
            "dataset {} was made from scenario {hash}, current scenario is {expected}; pass --force to image anyway",
            dataset.display()
        )));
    }
    if data.kind != scenario.kind() {
        return Err(Error::KindMismatch { expected: scenario.kind().as_str(), found: data.kind.as_str() });
    }
    let field = imaging::normalize(&imaging::indicator(&data, &scenario.sampling)?)?;
    let mut files = Vec::new();
    let mut log = String::new();
    let field_path = PathBuf::from(format!("{prefix}.field"));
    formats::write_field(&field_path, &field, &expected)?;
    files.push(field_path);
    let center = field.grid.bounds.min + field.grid.bounds.extents() * 0.5;
    for axis in 1..=3 {
        let slice = imaging::cross_section(&field, axis, center[axis - 1])?;
        let path = PathBuf::from(format!("{prefix}_x{axis}.csv"));
        std::fs::write(&path, formats::encode_slice_csv(&slice, &expected)).map_err(|e| Error::io(&path, e))?;
        files.push(path);
    }
    let mut masks = Vec::new();
    for &iso in &scenario.iso_values {
        let mask = imaging::threshold_mask(&field, iso)?;
        let path = PathBuf::from(format!("{prefix}_iso{}.mask", iso_tag(iso)));
        std::fs::write(&path, formats::encode_mask(&mask, &expected)).map_err(|e| Error::io(&path, e))?;
        let comps = mask.components();
        log.push_str(&format!(
            "iso {iso}: {} voxels, centroid {}, {} component(s)\n",
            mask.count(),
            mask.centroid().as_ref().map_or("none".into(), describe_point),
            comps.len()
        ));
        for (i, c) in comps.iter().take(4).enumerate() {
            log.push_str(&format!("  component {i}: {} voxels at {}\n", c.voxels.len(), describe_point(&c.centroid)));
        }
        files.push(path);
        masks.push(mask);
    }
    let peak = field.grid.center(field.argmax());
    log.insert_str(
        0,
        &format!("{}\n  grid {:?}, peak at {}\n", scenario.summary(), field.grid.resolution, describe_point(&peak)),
    );
    for f in &files {
        log.push_str(&format!("wrote {}\n", f.display()));
    }
    Ok((ImageProducts { field, masks, files }, log))
}

/// One entry of `verify` output: a report, or the error that stopped a check.
#[derive(Debug)]
pub enum CheckOutcome {
    Report(VerificationReport),
    Failed { check: String, error: Error },
}

pub fn run_verify(scenario: &Scenario, only: Option<&str>) -> Vec<CheckOutcome> {
    let wanted = |c: &str| only.is_none_or(|o| o == c);
    let mut out = Vec::new();
    let mut push = |check: &str, r: Result<VerificationReport>| {
        out.push(match r {
            Ok(rep) => CheckOutcome::Report(rep),
            Err(error) => CheckOutcome::Failed { check: check.to_string(), error },
        })
    };
    let sensors = scenario.sensors.len();
    if wanted("factorization") {
        match verify::check_factorization_all(scenario, FACTORIZATION_TRIALS, verify::FACTORIZATION_TOL) {
            Ok(reports) => reports.into_iter().for_each(|r| push("factorization", Ok(r))),
            Err(e) => push("factorization", Err(e)),
        }
    }
    if wanted("coercivity") {
        for l in 0..sensors {
            push("coercivity", verify::check_coercivity(scenario, l, COERCIVITY_TRIALS));
            if scenario.noise_level != 0.0 {
                break;
            }
        }
    }
    if wanted("psf") {
        push("psf", verify::check_psf(&scenario.frequencies, &verify::psf_samples(100.0, 10_001)));
    }
    if wanted("symmetries") {
        push("symmetries", simulate(scenario).and_then(|(_, noisy)| verify::check_symmetries(&noisy)));
    }
    out
}

/// Text rendering of `verify` output and its exit code.
pub fn render_verify(outcomes: &[CheckOutcome]) -> (String, u8) {
    let mut code = EXIT_OK;
    let mut records = Vec::new();
    for o in outcomes {
        match o {
            CheckOutcome::Report(r) => {
                if !r.passed && code == EXIT_OK {
                    code = EXIT_CHECK_FAILED;
                }
                records.push(r.to_string());
            }
            CheckOutcome::Failed { check, error } => {
                code = code.max(exit_code(error));
                records.push(format!("check: {check}\nerror: {error}\n"));
            }
        }
    }
    (records.join("\n"), code)
}

fn list_presets() -> String {
    presets::all().iter().map(|s| format!("{:<14} {}\n", s.name, s.summary())).collect()
}

/// Runs a parsed command; returns stdout text and exit code.
pub fn execute(cli: &Cli) -> Result<(String, u8)> {
    match &cli.command {
        Command::Simulate { scenario, out } => Ok((run_simulate(&scenario.load()?, out)?, EXIT_OK)),
        Command::Image { scenario, data, out, force } => {
            let (_, log) = run_image(data, &scenario.load()?, out, *force)?;
            Ok((log, EXIT_OK))
        }
        Command::Verify { scenario, only } => Ok(render_verify(&run_verify(&scenario.load()?, only.as_deref()))),
        Command::Presets => Ok((list_presets(), EXIT_OK)),
        Command::WriteConfig { scenario, out } => {
            let text = scenario::write_config(&scenario.load()?);
            match out {
                Some(path) => {
                    std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
                    Ok((format!("wrote {}\n", path.display()), EXIT_OK))
                }
                None => Ok((text, EXIT_OK)),
            }
        }
    }
}

/// Sizes the global thread pool from [`THREADS_ENV`] if set.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| Error::config(THREADS_ENV, format!("expected a thread count, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::config(THREADS_ENV, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::MeasurementKind;

    fn args(preset: &str) -> ScenarioArgs {
        ScenarioArgs { config: None, preset: Some(preset.into()), seed: None, noise: None, grid: None, iso: None }
    }

    #[test]
    fn overrides_apply() {
        let mut a = args("ball_pt14");
        a.seed = Some(7);
        a.noise = Some(0.0);
        a.grid = Some(10);
        a.iso = Some(vec![0.5, 0.6]);
        let s = a.load().unwrap();
        assert_eq!((s.seed, s.noise_level, s.sampling.resolution), (7, 0.0, [10; 3]));
        assert_eq!(s.iso_values, vec![0.5, 0.6]);
        assert!(matches!(args("nope").load(), Err(Error::Config { .. })));
        let mut bad = args("ball_pt1");
        bad.iso = Some(vec![1.2]);
        assert!(bad.load().is_err());
    }

    #[test]
    fn cli_parses() {
        let cli = Cli::try_parse_from([
            "msm", "image", "--preset", "ball_pt1", "--data", "d", "--out", "o", "--iso", "0.7,0.8",
        ])
        .unwrap();
        match cli.command {
            Command::Image { scenario, .. } => assert_eq!(scenario.iso, Some(vec![0.7, 0.8])),
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["msm", "verify", "--preset", "a", "--only", "bogus"]).is_err());
        assert!(Cli::try_parse_from(["msm", "simulate", "--out", "x"]).is_err());
        assert!(Cli::try_parse_from(["msm", "simulate", "--preset", "a", "--config", "c", "--out", "x"]).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::io("x", std::io::Error::other("boom"))), EXIT_IO);
        assert_eq!(exit_code(&Error::config("k", "m")), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Precondition("p".into())), EXIT_USAGE);
    }

    #[test]
    fn verify_noisy_scenario_surfaces_error() {
        let mut s = presets::get("ball_pt1").unwrap();
        s.quadrature_h = 0.2;
        let outcomes = run_verify(&s, Some("factorization"));
        assert_eq!(outcomes.len(), 1);
        let (text, code) = render_verify(&outcomes);
        assert_eq!(code, EXIT_USAGE);
        assert!(text.contains("noiseless"), "{text}");
        let (_, code) = render_verify(&run_verify(&s, Some("psf")));
        assert_eq!(code, EXIT_OK);
    }

    #[test]
    fn verify_noiseless_passes() {
        let mut s = presets::get("ball_pt1").unwrap().noiseless();
        s.quadrature_h = 0.2;
        let outcomes = run_verify(&s, None);
        assert_eq!(outcomes.len(), 4);
        let (text, code) = render_verify(&outcomes);
        assert_eq!(code, EXIT_OK, "{text}");
        assert_eq!(verify::parse_reports(&text).unwrap().len(), 4);
    }

    #[test]
    fn simulate_and_image_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = presets::get("ball_pt14").unwrap();
        s.quadrature_h = 0.2;
        s.sampling = SamplingGrid::cube(3.0, 12).unwrap();
        let data = dir.path().join("d.msm");
        run_simulate(&s, &data).unwrap();
        let prefix = dir.path().join("img").to_string_lossy().into_owned();
        let (products, _) = run_image(&data, &s, &prefix, false).unwrap();
        assert_eq!(products.files.len(), 4 + s.iso_values.len());
        assert!(products.files.iter().all(|f| f.exists()));
        assert!(dir.path().join("img_iso0p7.mask").exists());
        let (field, hash) = formats::read_field(&products.files[0]).unwrap();
        assert_eq!(field, products.field);
        assert_eq!(hash, s.hash());

        let mut other = s.clone();
        other.seed = 99;
        assert!(matches!(run_image(&data, &other, &prefix, false), Err(Error::Precondition(_))));
        assert!(run_image(&data, &other, &prefix, true).is_ok());

        let mut far = presets::get("ball_far14").unwrap();
        far.quadrature_h = 0.2;
        assert_eq!(far.kind(), MeasurementKind::Far);
        assert!(matches!(run_image(&data, &far, &prefix, true), Err(Error::KindMismatch { .. })));

        let empty = dir.path().join("empty.msm");
        std::fs::write(&empty, b"").unwrap();
        let err = run_image(&empty, &s, &prefix, false).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_IO);
    }
}
