//! Command-line surface for box-program inference and program-guided
//! editing.
//!
//! Exit codes: 0 success, 1 usage error, 2 inference failure (the failing
//! stage is named on stderr), 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use boxprog::cues::{detect_cues, load_cues, save_cues, CueSet};
use boxprog::dsl::{parse_program, print_program, BoxProgram, CameraStmt};
use boxprog::edits::{extrapolate, far_plane_depth, inpaint, synthesize_view, EditConfig};
use boxprog::geometry::CameraModel;
use boxprog::imaging::{
    load_indexed_png, load_mask_png, load_png, save_indexed_png, save_mask_png, save_png,
    ImageBuffer, Mask,
};
use boxprog::induction::{infer_box_program, infer_inner, infer_outer, Inference, SearchConfig};
use boxprog::metrics::{best_match_iou, l1_mean, psnr_luma, ssim_luma};
use boxprog::synth::{generate_scene, SceneSpec};

#[derive(Parser)]
#[command(
    name = "boxprog",
    about = "Infer box programs from single images and edit images through them",
    version
)]
struct Cli {
    /// Cap on worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect line segments and a vanishing point in an image.
    Detect {
        img: PathBuf,
        /// Output cue JSON path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Infer a box program from an image (and optionally precomputed cues).
    Infer {
        img: PathBuf,
        /// Cue JSON produced by `detect` or written by hand; detected from
        /// the image when absent.
        #[arg(long)]
        cues: Option<PathBuf>,
        /// Force the view family instead of dispatching on the cues.
        #[arg(long, value_enum, default_value_t = Mode::Auto)]
        mode: Mode,
        /// Output path; `.json` gets the JSON form, anything else the text
        /// form (default: text to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-plane diagnostics CSV.
        #[arg(long)]
        diag: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Segment an image into plane masks under an inferred program.
    Segment {
        img: PathBuf,
        #[arg(long)]
        cues: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Auto)]
        mode: Mode,
        /// Indexed label PNG (0 = unassigned, then one label per plane in
        /// program order, far plane last for inner views).
        #[arg(long, default_value = "masks.png")]
        out: PathBuf,
        /// Far-plane quad JSON (inner views only).
        #[arg(long)]
        out_far: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fill a hole mask using the program's repeated structure.
    Inpaint {
        img: PathBuf,
        /// Hole mask PNG (>= 128 = hole).
        #[arg(long)]
        hole: PathBuf,
        /// Program JSON or text; inferred from the undamaged pixels when
        /// absent.
        #[arg(long)]
        prog: Option<PathBuf>,
        /// Weight of the lattice guidance term.
        #[arg(long)]
        lambda_reg: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "inpainted.png")]
        out: PathBuf,
    },
    /// Extend the planes' lattices into a target region.
    Extrapolate {
        img: PathBuf,
        /// Source-region mask; an all-black mask allows the whole frame.
        #[arg(long)]
        subject: PathBuf,
        /// Region to fill.
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        prog: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "extrapolated.png")]
        out: PathBuf,
    },
    /// Render the program from new cameras along a trajectory.
    Viewsynth {
        img: PathBuf,
        #[arg(long)]
        prog: PathBuf,
        /// Trajectory JSON: a list of waypoints
        /// `{"translate":[x,y,z],"pan_deg":p,"tilt_deg":t}` relative to the
        /// program's camera. Resampled to `--frames` when counts differ.
        #[arg(long, conflicts_with = "preset")]
        trajectory: Option<PathBuf>,
        /// Named trajectory: step-into (forward by 0.2 of scene depth),
        /// step-back (back by 0.25 of scene depth), or step-back-pan-tilt
        /// (step-back plus pan 10 deg, tilt 5 deg).
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long, default_value_t = 1)]
        frames: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for frame_K.png and frame_K_valid.png.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Generate a synthetic scene with ground truth.
    Synth {
        /// Scene spec JSON; use --standard for a built-in spec.
        #[arg(long, conflicts_with = "standard")]
        spec: Option<PathBuf>,
        #[arg(long, value_enum)]
        standard: Option<StdScene>,
        #[arg(long, default_value_t = 320)]
        width: u32,
        #[arg(long, default_value_t = 240)]
        height: u32,
        /// Output directory for the bundle.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compare predictions against ground truth; CSV on stdout.
    Eval {
        #[command(subcommand)]
        what: EvalCmd,
    },
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Best-match mean IoU between two indexed label PNGs.
    Iou {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Mask PNG of pixels excluded from the comparison (e.g. the far
        /// plane).
        #[arg(long)]
        exclude: Option<PathBuf>,
    },
    /// L1 / PSNR / SSIM between two images.
    Recon {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Auto,
    Inner,
    Outer,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    StepInto,
    StepBack,
    StepBackPanTilt,
}

#[derive(Clone, Copy, ValueEnum)]
enum StdScene {
    Inner,
    Outer,
}

#[derive(serde::Serialize, serde::Deserialize, Clone, Copy)]
struct Waypoint {
    translate: [f64; 3],
    #[serde(default)]
    pan_deg: f64,
    #[serde(default)]
    tilt_deg: f64,
}

enum AppError {
    Usage(String),
    /// Stage name plus message, reported as "stage: message".
    Inference(&'static str, String),
    Io(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Inference(..) => 2,
            AppError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Usage(m) => write!(f, "usage: {m}"),
            AppError::Inference(stage, m) => write!(f, "{stage}: {m}"),
            AppError::Io(m) => write!(f, "io: {m}"),
        }
    }
}

fn io_err<E: std::fmt::Display>(e: E) -> AppError {
    AppError::Io(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version requests are not errors
            use clap::error::ErrorKind::*;
            if matches!(e.kind(), DisplayHelp | DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}

fn load_image(path: &Path) -> Result<ImageBuffer, AppError> {
    load_png(path).map_err(io_err)
}

fn load_hole(path: &Path, w: u32, h: u32) -> Result<Mask, AppError> {
    let m = load_mask_png(path).map_err(io_err)?;
    if (m.width, m.height) != (w, h) {
        return Err(AppError::Usage(format!(
            "mask {} is {}x{}, image is {w}x{h}",
            path.display(),
            m.width,
            m.height
        )));
    }
    Ok(m)
}

fn get_cues(
    img: &ImageBuffer,
    cues: &Option<PathBuf>,
    seed: u64,
) -> Result<CueSet, AppError> {
    match cues {
        Some(p) => load_cues(p, img.width, img.height)
            .map_err(|e| AppError::Inference("cues", e.to_string())),
        None => Ok(detect_cues(img, seed)),
    }
}

fn run_inference(img: &ImageBuffer, cues: &CueSet, mode: Mode) -> Result<Inference, AppError> {
    let cfg = SearchConfig::default();
    let res = match mode {
        Mode::Auto => infer_box_program(img, cues, &cfg),
        Mode::Inner => infer_inner(img, cues, &cfg),
        Mode::Outer => infer_outer(img, cues, &cfg),
    };
    res.map_err(|e| AppError::Inference("induction", e.to_string()))
}

fn load_program(path: &Path) -> Result<BoxProgram, AppError> {
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    let prog = if path.extension().is_some_and(|e| e == "json") {
        BoxProgram::from_json(&text)
    } else {
        parse_program(&text)
    };
    prog.map_err(|e| AppError::Inference("program", e.to_string()))
}

/// Program given on the command line, or inferred from the image.
fn get_program(
    img: &ImageBuffer,
    prog: &Option<PathBuf>,
    seed: u64,
) -> Result<BoxProgram, AppError> {
    match prog {
        Some(p) => load_program(p),
        None => {
            let cues = detect_cues(img, seed);
            Ok(run_inference(img, &cues, Mode::Auto)?.program)
        }
    }
}

fn write_program(prog: &BoxProgram, out: &Option<PathBuf>) -> Result<(), AppError> {
    match out {
        Some(p) => {
            let text = if p.extension().is_some_and(|e| e == "json") {
                prog.to_json()
            } else {
                print_program(prog)
            };
            std::fs::write(p, text).map_err(io_err)
        }
        None => {
            print!("{}", print_program(prog));
            Ok(())
        }
    }
}

fn diag_csv(inf: &Inference) -> String {
    let mut csv = String::from("plane,class_x,class_y,period_x,period_y,fitness\n");
    for r in &inf.reports {
        let (px, py) = match &r.lattice {
            Some(l) => (
                format!("{:.3}", (l.d1.0 * l.d1.0 + l.d1.1 * l.d1.1).sqrt()),
                l.d2
                    .map(|d| format!("{:.3}", (d.0 * d.0 + d.1 * d.1).sqrt()))
                    .unwrap_or_default(),
            ),
            None => (String::new(), String::new()),
        };
        csv.push_str(&format!(
            "{},{:?},{:?},{},{},{:.6}\n",
            r.label, r.class_x, r.class_y, px, py, r.fitness
        ));
    }
    csv
}

/// Forward direction for a pan/tilt pair in the y-down camera frame
/// (positive tilt looks up).
fn waypoint_camera(w: &Waypoint) -> CameraStmt {
    let pan = w.pan_deg.to_radians();
    let tilt = w.tilt_deg.to_radians();
    let fwd = [
        pan.sin() * tilt.cos(),
        -tilt.sin(),
        pan.cos() * tilt.cos(),
    ];
    CameraStmt {
        pos: w.translate,
        point_to: [
            w.translate[0] + fwd[0],
            w.translate[1] + fwd[1],
            w.translate[2] + fwd[2],
        ],
    }
}

/// Piecewise-linear resampling of a waypoint list to `frames` entries. A
/// single waypoint is interpolated from the identity pose.
fn resample_trajectory(points: &[Waypoint], frames: u32) -> Vec<Waypoint> {
    let identity = Waypoint {
        translate: [0.0; 3],
        pan_deg: 0.0,
        tilt_deg: 0.0,
    };
    let pts: Vec<Waypoint> = if points.len() == 1 {
        vec![identity, points[0]]
    } else {
        points.to_vec()
    };
    if frames as usize == points.len() {
        return points.to_vec();
    }
    let mut out = Vec::with_capacity(frames as usize);
    for f in 0..frames {
        let u = if frames == 1 {
            1.0
        } else {
            f as f64 / (frames - 1) as f64
        } * (pts.len() - 1) as f64;
        let i = (u.floor() as usize).min(pts.len() - 2);
        let a = &pts[i];
        let b = &pts[i + 1];
        let t = u - i as f64;
        let lerp = |x: f64, y: f64| x + t * (y - x);
        out.push(Waypoint {
            translate: [
                lerp(a.translate[0], b.translate[0]),
                lerp(a.translate[1], b.translate[1]),
                lerp(a.translate[2], b.translate[2]),
            ],
            pan_deg: lerp(a.pan_deg, b.pan_deg),
            tilt_deg: lerp(a.tilt_deg, b.tilt_deg),
        });
    }
    out
}

fn run(cmd: Command) -> Result<(), AppError> {
    match cmd {
        Command::Detect { img, out, seed } => {
            let image = load_image(&img)?;
            let cues = detect_cues(&image, seed);
            match out {
                Some(p) => save_cues(&cues, &p).map_err(io_err)?,
                None => print!("{}", boxprog::cues::cues_to_json(&cues)),
            }
            Ok(())
        }
        Command::Infer {
            img,
            cues,
            mode,
            out,
            diag,
            seed,
        } => {
            let image = load_image(&img)?;
            let cueset = get_cues(&image, &cues, seed)?;
            let inf = run_inference(&image, &cueset, mode)?;
            if let Some(p) = diag {
                std::fs::write(&p, diag_csv(&inf)).map_err(io_err)?;
            }
            write_program(&inf.program, &out)
        }
        Command::Segment {
            img,
            cues,
            mode,
            out,
            out_far,
            seed,
        } => {
            let image = load_image(&img)?;
            let cueset = get_cues(&image, &cues, seed)?;
            let inf = run_inference(&image, &cueset, mode)?;
            let masks: Vec<Mask> = inf.masks.iter().map(|(_, m)| m.clone()).collect();
            save_indexed_png(&masks, image.width, image.height, &out).map_err(io_err)?;
            if let Some(p) = out_far {
                let quad = inf.program.far_plane;
                std::fs::write(&p, serde_json::to_string(&quad).map_err(io_err)?)
                    .map_err(io_err)?;
            }
            Ok(())
        }
        Command::Inpaint {
            img,
            hole,
            prog,
            lambda_reg,
            seed,
            out,
        } => {
            let image = load_image(&img)?;
            let hole = load_hole(&hole, image.width, image.height)?;
            let program = get_program(&image, &prog, seed)?;
            let cam = CameraModel::new(image.width, image.height);
            let mut cfg = EditConfig::default();
            cfg.pm.seed = seed;
            if let Some(l) = lambda_reg {
                cfg.pm.lambda_reg = l;
            }
            let result = inpaint(&image, &hole, &program, &cam, &cfg)
                .map_err(|e| AppError::Inference("inpaint", e.to_string()))?;
            save_png(&result, &out).map_err(io_err)
        }
        Command::Extrapolate {
            img,
            subject,
            target,
            prog,
            seed,
            out,
        } => {
            let image = load_image(&img)?;
            let subject = load_hole(&subject, image.width, image.height)?;
            let target = load_hole(&target, image.width, image.height)?;
            let program = get_program(&image, &prog, seed)?;
            let cam = CameraModel::new(image.width, image.height);
            let mut cfg = EditConfig::default();
            cfg.pm.seed = seed;
            let result = extrapolate(&image, &subject, &target, &program, &cam, &cfg)
                .map_err(|e| AppError::Inference("extrapolate", e.to_string()))?;
            save_png(&result, &out).map_err(io_err)
        }
        Command::Viewsynth {
            img,
            prog,
            trajectory,
            preset,
            frames,
            seed,
            out,
        } => {
            let image = load_image(&img)?;
            let program = load_program(&prog)?;
            let cam = CameraModel::new(image.width, image.height);
            let points: Vec<Waypoint> = match (&trajectory, preset) {
                (Some(p), _) => {
                    let text = std::fs::read_to_string(p).map_err(io_err)?;
                    serde_json::from_str(&text)
                        .map_err(|e| AppError::Usage(format!("trajectory: {e}")))?
                }
                (None, Some(preset)) => {
                    // scene scale: far-plane depth for corridors, a fixed
                    // 8 m stand-in for facades
                    let depth = far_plane_depth(&program, &cam).unwrap_or(8.0);
                    let wp = |z: f64, pan: f64, tilt: f64| Waypoint {
                        translate: [0.0, 0.0, z],
                        pan_deg: pan,
                        tilt_deg: tilt,
                    };
                    vec![match preset {
                        Preset::StepInto => wp(0.2 * depth, 0.0, 0.0),
                        Preset::StepBack => wp(-0.25 * depth, 0.0, 0.0),
                        Preset::StepBackPanTilt => wp(-0.25 * depth, 10.0, 5.0),
                    }]
                }
                (None, None) => vec![Waypoint {
                    translate: [0.0; 3],
                    pan_deg: 0.0,
                    tilt_deg: 0.0,
                }],
            };
            if points.is_empty() {
                return Err(AppError::Usage("trajectory has no waypoints".into()));
            }
            std::fs::create_dir_all(&out).map_err(io_err)?;
            let mut cfg = EditConfig::default();
            cfg.pm.seed = seed;
            for (i, w) in resample_trajectory(&points, frames).iter().enumerate() {
                let new_cam = waypoint_camera(w);
                let frame = synthesize_view(&image, &program, &cam, &new_cam, &cfg)
                    .map_err(|e| AppError::Inference("viewsynth", e.to_string()))?;
                save_png(&frame.image, &out.join(format!("frame_{i:03}.png")))
                    .map_err(io_err)?;
                save_mask_png(
                    &frame.validity,
                    &out.join(format!("frame_{i:03}_valid.png")),
                )
                .map_err(io_err)?;
            }
            Ok(())
        }
        Command::Synth {
            spec,
            standard,
            width,
            height,
            out,
        } => {
            let scene_spec = match (&spec, standard) {
                (Some(p), _) => {
                    let text = std::fs::read_to_string(p).map_err(io_err)?;
                    SceneSpec::from_json(&text)
                        .map_err(|e| AppError::Usage(format!("spec: {e}")))?
                }
                (None, Some(StdScene::Inner)) => SceneSpec::standard_inner(width, height),
                (None, Some(StdScene::Outer)) => SceneSpec::standard_outer(width, height),
                (None, None) => {
                    return Err(AppError::Usage(
                        "synth needs --spec or --standard".into(),
                    ))
                }
            };
            let scene = generate_scene(&scene_spec)
                .map_err(|e| AppError::Inference("synth", e.to_string()))?;
            std::fs::create_dir_all(&out).map_err(io_err)?;
            save_png(&scene.image, &out.join("image.png")).map_err(io_err)?;
            std::fs::write(&out.join("program.json"), scene.program.to_json())
                .map_err(io_err)?;
            std::fs::write(&out.join("program.txt"), print_program(&scene.program))
                .map_err(io_err)?;
            save_cues(&scene.cues, &out.join("cues.json")).map_err(io_err)?;
            std::fs::write(&out.join("spec.json"), scene_spec.to_json()).map_err(io_err)?;
            let masks: Vec<Mask> = scene.masks.iter().map(|(_, m)| m.clone()).collect();
            save_indexed_png(
                &masks,
                scene.image.width,
                scene.image.height,
                &out.join("masks.png"),
            )
            .map_err(io_err)?;
            let names: Vec<&str> = scene.masks.iter().map(|(n, _)| n.as_str()).collect();
            std::fs::write(
                &out.join("mask_names.json"),
                serde_json::to_string(&names).map_err(io_err)?,
            )
            .map_err(io_err)?;
            for (name, m) in &scene.masks {
                save_mask_png(m, &out.join(format!("mask_{name}.png"))).map_err(io_err)?;
            }
            Ok(())
        }
        Command::Eval { what } => match what {
            EvalCmd::Iou { pred, gt, exclude } => {
                let pred = load_indexed_png(&pred).map_err(io_err)?;
                let gt = load_indexed_png(&gt).map_err(io_err)?;
                let excl = match exclude {
                    Some(p) => Some(load_mask_png(&p).map_err(io_err)?),
                    None => None,
                };
                let iou = best_match_iou(&pred, &gt, excl.as_ref());
                println!("metric,value");
                println!("mean_iou,{iou:.6}");
                Ok(())
            }
            EvalCmd::Recon { pred, gt } => {
                let a = load_image(&pred)?;
                let b = load_image(&gt)?;
                if (a.width, a.height) != (b.width, b.height) {
                    return Err(AppError::Usage("image dimensions differ".into()));
                }
                println!("metric,value");
                println!("l1,{:.6}", l1_mean(&a, &b));
                let p = psnr_luma(&a, &b);
                if p.is_finite() {
                    println!("psnr,{p:.6}");
                } else {
                    println!("psnr,inf");
                }
                println!("ssim,{:.6}", ssim_luma(&a, &b));
                Ok(())
            }
        },
    }
}
