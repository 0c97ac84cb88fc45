//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use impactfit_core::Vec3;

#[derive(Debug, Parser)]
#[command(name = "impactfit", version, about = "Reconstruct rigid collisions from sparse pose annotations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one annotated collision. Exit 0 when reliable, 2 when flagged, 1 on error.
    Reconstruct(ReconstructArgs),
    /// Run the synthetic benchmark and print a TSV table.
    Evaluate(EvaluateArgs),
    /// Simulate a scene and write its sparse annotation.
    Simulate(SimulateArgs),
    /// Build and edit composed scenes.
    #[command(subcommand)]
    Compose(ComposeCommand),
    /// Serve a scene over local HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Seed of the impulse initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Frame rate replacing the one in the annotation.
    #[arg(long)]
    pub fps_override: Option<f64>,
    /// One body against a static plane.
    #[arg(long)]
    pub single_body: bool,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, default_value = "0,0,0", requires = "single_body")]
    pub plane_point: Vec3,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, default_value = "0,1,0", requires = "single_body")]
    pub plane_normal: Vec3,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Seeded scenes per (interval, noise) cell.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Sampling intervals: a list `5,10,19` or an inclusive range `1..19`.
    #[arg(long, default_value = "5,10,19")]
    pub interval_range: String,
    /// Noise levels as fractions, e.g. `0,0.05,0.1`.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub noise: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write every trial as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    TwoBox,
    Drop,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "two-box")]
    pub preset: Preset,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Frames between annotations.
    #[arg(long, default_value_t = 5.0)]
    pub interval: f64,
    /// Unannotated frames around the contact; twice the interval by default.
    #[arg(long)]
    pub gap: Option<f64>,
    /// Uniform noise level as a fraction.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Restitution of the drop preset.
    #[arg(long, default_value_t = 0.75)]
    pub restitution: f64,
    /// Angular speed at contact of the drop preset, rad/s.
    #[arg(long, default_value_t = 0.0)]
    pub spin: f64,
    /// Annotation file.
    #[arg(long)]
    pub output: PathBuf,
    /// Ground-truth file.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ComposeCommand {
    /// New scene from solution files, all placed at the origin.
    New(ComposeNewArgs),
    /// Change the placement of one pair.
    Place(ComposePlaceArgs),
    /// Predict cross-pair collisions.
    Predict(ComposePredictArgs),
    /// Export per-body keyframes.
    Keyframes(ComposeKeyframesArgs),
}

#[derive(Debug, Args)]
pub struct ComposeNewArgs {
    /// Solution files, one per pair, in order.
    #[arg(long = "solution", required = true)]
    pub solutions: Vec<PathBuf>,
    /// Reference mass of body a: one value for every pair or one per pair.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub reference_mass: Vec<f64>,
    /// Time each pair against the previous one.
    #[arg(long)]
    pub auto_time: bool,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ComposePlaceArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub pair: usize,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    pub translation: Option<Vec3>,
    /// Rotation about the gravity axis, rad.
    #[arg(long, allow_hyphen_values = true)]
    pub rotation: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub time_offset: Option<f64>,
    #[arg(long)]
    pub reference_mass: Option<f64>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ComposePredictArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ComposeKeyframesArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Keyframe rate; the scene rate by default.
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long)]
    pub scene: PathBuf,
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("'{v}' is not a number")))
        .collect()
}

pub fn parse_vec3(s: &str) -> Result<Vec3, String> {
    match parse_list(s)?.as_slice() {
        &[x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err(format!("expected x,y,z, got '{s}'")),
    }
}

/// `a..b` is every integer frame count from `a` to `b` inclusive.
pub fn parse_interval_range(s: &str) -> Result<Vec<f64>, String> {
    let v = match s.split_once("..") {
        Some((a, b)) => {
            let a: u32 = a.trim().parse().map_err(|_| format!("invalid range start '{a}'"))?;
            let b: u32 = b.trim().trim_start_matches('=').parse().map_err(|_| format!("invalid range end '{b}'"))?;
            (a..=b).map(f64::from).collect()
        }
        None => parse_list(s)?,
    };
    if v.is_empty() || v.iter().any(|&i| i.is_nan() || i <= 0.0) {
        return Err(format!("intervals must be positive and non-empty, got '{s}'"));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_ranges() {
        assert_eq!(parse_interval_range("1..4").unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(parse_interval_range("2..=3").unwrap(), vec![2.0, 3.0]);
        assert_eq!(parse_interval_range("5, 10,19").unwrap(), vec![5.0, 10.0, 19.0]);
        assert!(parse_interval_range("4..2").is_err());
        assert!(parse_interval_range("0,5").is_err());
        assert!(parse_interval_range("a").is_err());
    }

    #[test]
    fn vectors() {
        assert_eq!(parse_vec3("-1,0.5,2").unwrap(), Vec3::new(-1.0, 0.5, 2.0));
        assert!(parse_vec3("1,2").is_err());
    }

    #[test]
    fn command_line_parses() {
        let cli = Cli::try_parse_from(["impactfit", "evaluate", "--noise", "0,0.05", "--interval-range", "1..19"]).unwrap();
        let Command::Evaluate(a) = cli.command else { panic!() };
        assert_eq!(a.noise, vec![0.0, 0.05]);
        let cli = Cli::try_parse_from(["impactfit", "compose", "place", "--scene", "s", "--pair", "0", "--translation", "-1,0,0", "--rotation", "-0.5", "--output", "o"]).unwrap();
        let Command::Compose(ComposeCommand::Place(a)) = cli.command else { panic!() };
        assert_eq!(a.rotation, Some(-0.5));
        assert!(Cli::try_parse_from(["impactfit", "reconstruct", "--input", "a", "--output", "b", "--plane-point", "0,0,0"]).is_err());
    }
}
