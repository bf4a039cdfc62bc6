//! `mapfusion`: georeference and conflate a Lanelet2 map from the command
//! line, or serve a review session.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mapfusion_core::pipeline::{
    cmd_align, cmd_conflate, cmd_evaluate, cmd_georeference, Overrides, PipelineConfig, PipelineError,
};
use mapfusion_review::{Service, Session, SessionInputs};

#[derive(Parser, Debug)]
#[command(name = "mapfusion", version, about = "HD-map georeferencing and OSM attribute conflation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit SLAM to GNSS (rigid, then rubber sheet) and transform the maps.
    Align,
    /// Match the aligned map against OSM and transfer attributes.
    Conflate,
    /// Express the latest map in geodetic coordinates.
    Georeference,
    /// Deviation and matching metrics from the stored reports.
    Evaluate,
    /// Start the review service.
    Serve {
        /// Address to bind, overriding `review.bind`.
        #[arg(long)]
        bind: Option<String>,
        #[arg(long, default_value = "default")]
        session: String,
    },
}

#[derive(Args, Debug)]
struct Flags {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, default_value = "mapfusion.toml")]
    config: PathBuf,
    #[arg(long, global = true)]
    control_points: Option<PathBuf>,
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    /// Initial buffer half-width in meters.
    #[arg(long, global = true)]
    buffer_init: Option<f64>,
    #[arg(long, global = true)]
    buffer_growth: Option<f64>,
    #[arg(long, global = true)]
    score_threshold: Option<f64>,
    /// Polylines up to this length (m) are left out of the metrics.
    #[arg(long, global = true)]
    length_threshold: Option<f64>,
    /// Replace attributes the map already has.
    #[arg(long, global = true)]
    overwrite_attrs: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            control_points: self.control_points.clone(),
            labels: self.labels.clone(),
            buffer_init: self.buffer_init,
            buffer_growth: self.buffer_growth,
            score_threshold: self.score_threshold,
            length_threshold: self.length_threshold,
            overwrite_attrs: self.overwrite_attrs,
            out: self.out.clone(),
        }
    }
}

fn config(flags: &Flags) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load(&flags.config)?;
    cfg.apply(&flags.overrides());
    cfg.validate()?;
    Ok(cfg)
}

fn print(v: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&v).expect("summary serializes"));
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let cfg = config(&cli.flags)?;
    match cli.command {
        Command::Align => {
            let a = cmd_align(&cfg)?;
            let s = &a.summary;
            print(json!({
                "correspondences": s.correspondences,
                "rotation_deg": s.rigid.angle_deg,
                "translation": s.rigid.translation,
                "control_points": s.control_points,
                "triangles": s.triangles,
                "mean_deviation": s.deviation.mean_deviation,
                "std_deviation": s.deviation.std_deviation,
                "rmse": s.deviation.rmse,
            }));
        }
        Command::Conflate => {
            let c = cmd_conflate(&cfg)?;
            let r = &c.report;
            print(json!({
                "reference_polylines": r.reference_polylines,
                "match_rate": r.metrics.match_rate,
                "precision": r.metrics.precision,
                "recall": r.metrics.recall,
                "fragments_proposed": r.fragments.proposed,
                "fragments_deleted": r.fragments.deleted,
            }));
        }
        Command::Georeference => {
            let g = cmd_georeference(&cfg)?;
            print(json!({
                "points": g.vector_map.points.len(),
                "point_cloud": g.point_cloud.as_ref().map(|c| c.len()),
                "slam_poses": g.slam.as_ref().map(|t| t.len()),
            }));
        }
        Command::Evaluate => print(serde_json::to_value(cmd_evaluate(&cfg)?).expect("evaluation serializes")),
        Command::Serve { bind, session } => {
            let bind = bind.unwrap_or_else(|| cfg.review.bind.clone());
            let s = Session::new(session, SessionInputs::from_config(&cfg)?)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| PipelineError::Config(e.to_string()))?;
            rt.block_on(mapfusion_review::serve(Service::new([s]), &bind))
                .map_err(|e| PipelineError::Config(format!("{bind}: {e}")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("mapfusion: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
