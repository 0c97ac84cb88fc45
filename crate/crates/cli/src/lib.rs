//! Command-line front end and local HTTP service of impactfit.

pub mod args;
pub mod edit;
pub mod server;

use std::io::Write;

use impactfit_core::composer::{export_keyframes, place_pair, predict_secondary, AxisAngle, SceneComposition};
use impactfit_core::evaluation::{evaluate, EvalConfig};
use impactfit_core::io::{read, write, AnnotationFile, KeyframeFile, SceneFile, SolutionFile, TruthFile};
use impactfit_core::residuals::Plane;
use impactfit_core::simulator::{add_noise, drop_scene, sample_observations, simulate, two_box_scene, DropOptions, TwoBoxOptions};
use impactfit_core::solver::{reconstruct, reconstruct_single_body, SolutionRecord, SolveConfig};
use impactfit_core::{Error, Result, Vec3};

use args::{Cli, Command, ComposeCommand, Preset};
use edit::{best_auto_time, PairEdit};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_FLAGGED: u8 = 2;

/// Runs one command, writing reports to `out` and errors to stderr, and
/// returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> u8 {
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<u8> {
    match cli.command {
        Command::Reconstruct(a) => cmd_reconstruct(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Compose(c) => match c {
            ComposeCommand::New(a) => cmd_compose_new(a, out),
            ComposeCommand::Place(a) => cmd_compose_place(a, out),
            ComposeCommand::Predict(a) => cmd_compose_predict(a, out),
            ComposeCommand::Keyframes(a) => cmd_compose_keyframes(a, out),
        },
        Command::Serve(a) => cmd_serve(a),
    }
}

fn emit(out: &mut dyn Write, text: std::fmt::Arguments) -> Result<()> {
    out.write_fmt(text)
        .map_err(|e| Error::Io { path: "<stdout>".into(), message: e.to_string() })
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v}"))
}

/// Report lines of a solution: `m_ba`, `c`, `t_c` and the raised flags.
pub fn summary(r: &SolutionRecord) -> String {
    let f = r.flags;
    let raised: Vec<&str> = [
        (f.mass_at_bound, "mass_at_bound"),
        (f.restitution_out_of_range, "restitution_out_of_range"),
        (f.non_converged, "non_converged"),
    ]
    .into_iter()
    .filter_map(|(on, name)| on.then_some(name))
    .collect();
    let flags = if raised.is_empty() { "none".to_string() } else { raised.join(",") };
    format!("m_ba\t{}\nc\t{}\nt_c\t{}\nflags\t{flags}\n", opt(r.mass_ratio), opt(r.restitution), r.t_c)
}

fn cmd_reconstruct(a: args::ReconstructArgs, out: &mut dyn Write) -> Result<u8> {
    let mut obs = read::<AnnotationFile>(&a.input)?.observations();
    if let Some(fps) = a.fps_override {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::InvalidArgument(format!("fps override must be positive, got {fps}")));
        }
        obs.fps = fps;
    }
    let config = SolveConfig { seed: a.seed, ..SolveConfig::default() };
    let r = if a.single_body {
        reconstruct_single_body(&obs, Plane { point: a.plane_point, normal: a.plane_normal }, &config)?
    } else {
        reconstruct(&obs, &config)?
    };
    write(&a.output, &SolutionFile::new(r.clone()))?;
    emit(out, format_args!("{}", summary(&r)))?;
    Ok(if r.flags.any() { EXIT_FLAGGED } else { EXIT_OK })
}

fn cmd_evaluate(a: args::EvaluateArgs, out: &mut dyn Write) -> Result<u8> {
    let intervals = args::parse_interval_range(&a.interval_range).map_err(Error::InvalidArgument)?;
    let cfg = EvalConfig { scenes: a.trials, intervals, noise_levels: a.noise, seed: a.seed, ..EvalConfig::default() };
    let report = evaluate(&cfg)?;
    let table = report.to_tsv();
    match &a.output {
        Some(p) => std::fs::write(p, &table).map_err(|e| io_error(p, e))?,
        None => emit(out, format_args!("{table}"))?,
    }
    if let Some(p) = &a.json {
        let text = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Schema { path: "report".into(), message: e.to_string() })?;
        std::fs::write(p, text + "\n").map_err(|e| io_error(p, e))?;
    }
    Ok(EXIT_OK)
}

fn io_error(p: &std::path::Path, e: std::io::Error) -> Error {
    Error::Io { path: p.display().to_string(), message: e.to_string() }
}

fn cmd_simulate(a: args::SimulateArgs, out: &mut dyn Write) -> Result<u8> {
    let scene = match a.preset {
        Preset::TwoBox => two_box_scene(a.seed, &TwoBoxOptions::default())?,
        Preset::Drop => {
            drop_scene(a.seed, &DropOptions { restitution: a.restitution, spin: a.spin, ..DropOptions::default() })?
        }
    };
    let truth = simulate(&scene)?;
    let gap = a.gap.unwrap_or(2.0 * a.interval);
    let obs = add_noise(&sample_observations(&truth, a.interval, gap)?, a.noise, a.seed)?;
    write(&a.output, &AnnotationFile::new(&obs))?;
    let event = truth.first_event()?;
    emit(out, format_args!("contact_frame\t{}\nc\t{}\n", event.frame, event.restitution))?;
    if let Ok(m) = truth.mass_ratio() {
        emit(out, format_args!("m_ba\t{m}\n"))?;
    }
    if let Some(p) = &a.truth {
        write(p, &TruthFile::new(scene, truth))?;
    }
    Ok(EXIT_OK)
}

fn reference_masses(given: &[f64], n: usize) -> Result<Vec<f64>> {
    match given.len() {
        1 => Ok(vec![given[0]; n]),
        k if k == n => Ok(given.to_vec()),
        k => Err(Error::InvalidArgument(format!("{k} reference masses for {n} pairs"))),
    }
}

fn cmd_compose_new(a: args::ComposeNewArgs, out: &mut dyn Write) -> Result<u8> {
    let masses = reference_masses(&a.reference_mass, a.solutions.len())?;
    let pairs = a
        .solutions
        .iter()
        .zip(masses)
        .map(|(p, m)| place_pair(read::<SolutionFile>(p)?.solution, Vec3::zero(), AxisAngle::about_gravity(0.0), 0.0, m))
        .collect::<Result<Vec<_>>>()?;
    let mut scene = SceneComposition::new(pairs)?;
    if a.auto_time {
        for late in 1..scene.pairs.len() {
            let (eb, lb, t) = best_auto_time(&scene, late - 1, late)?;
            let edit = PairEdit { time_offset: Some(scene.pairs[late].time_offset + t.shift), ..PairEdit::default() };
            edit.apply(&mut scene, late)?;
            emit(
                out,
                format_args!(
                    "pair {late}\tbody {lb} after pair {} body {eb}\tshift {}\tdistance {}\t{}\n",
                    late - 1,
                    t.shift,
                    t.distance,
                    if t.coincident { "coincident" } else { "not coincident" }
                ),
            )?;
        }
    }
    write(&a.output, &SceneFile::new(scene))?;
    Ok(EXIT_OK)
}

fn cmd_compose_place(a: args::ComposePlaceArgs, _out: &mut dyn Write) -> Result<u8> {
    let mut file = read::<SceneFile>(&a.scene)?;
    let edit = PairEdit {
        translation: a.translation,
        rotation: None,
        rotation_about_gravity: a.rotation,
        time_offset: a.time_offset,
        reference_mass: a.reference_mass,
    };
    if edit.is_empty() {
        return Err(Error::InvalidArgument("nothing to change".into()));
    }
    edit.apply(&mut file.scene, a.pair)?;
    file.revision += 1;
    write(&a.output, &file)?;
    Ok(EXIT_OK)
}

fn cmd_compose_predict(a: args::ComposePredictArgs, out: &mut dyn Write) -> Result<u8> {
    let mut file = read::<SceneFile>(&a.scene)?;
    file.scene = predict_secondary(&file.scene)?;
    file.revision += 1;
    for e in &file.scene.predicted_events {
        let [p, q] = e.bodies;
        emit(
            out,
            format_args!(
                "event\tframe {}\tpair {} body {} with pair {} body {}\t|jn| {}\n",
                e.frame,
                p.pair,
                p.body,
                q.pair,
                q.body,
                e.jn.norm()
            ),
        )?;
    }
    for w in &file.scene.warnings {
        eprintln!("warning: {w}");
    }
    write(&a.output, &file)?;
    Ok(EXIT_OK)
}

fn cmd_compose_keyframes(a: args::ComposeKeyframesArgs, _out: &mut dyn Write) -> Result<u8> {
    let file = read::<SceneFile>(&a.scene)?;
    let fps = a
        .fps
        .or(file.scene.fps())
        .ok_or_else(|| Error::InvalidArgument("an empty scene needs --fps".into()))?;
    write(&a.output, &KeyframeFile::new(export_keyframes(&file.scene, fps)?, file.revision))?;
    Ok(EXIT_OK)
}

fn cmd_serve(a: args::ServeArgs) -> Result<u8> {
    let scene = read::<SceneFile>(&a.scene)?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Io { path: "runtime".into(), message: e.to_string() })?;
    let addr = std::net::SocketAddr::new(a.host, a.port);
    rt.block_on(server::serve(scene, addr))
        .map_err(|e| Error::Io { path: addr.to_string(), message: e.to_string() })?;
    Ok(EXIT_OK)
}
