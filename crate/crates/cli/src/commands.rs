use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use eincm::config::RunConfig;
use eincm::data::{
    generate_scene, load_events_text, read_flow, split_windows, write_events_text, write_flow, write_flow_png,
    DisplacementField, Pattern, Sample, SceneSpec, UNKNOWN_FLOW,
};
use eincm::edges::{extract_edges, read_gray, write_edge_pgm, write_gray_pgm, GrayImage};
use eincm::metrics::{evaluate as eval_flow, fwl, write_report, ReportRow};
use eincm::optimizer::multiscale_estimate;
use eincm::{Error, EventSet, FlowField, IweConfig, SensorGeometry};

use crate::{ConfigArgs, EdgesArgs, EstimateArgs, EvaluateArgs, SynthArgs};

/// Command failure, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Solver(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Solver(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Solver(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Usage(m),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn io_at(path: &Path) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, Failure> {
    let cfg = match (&args.config, &args.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => RunConfig::default(),
    };
    Ok(cfg)
}

pub fn synth(args: &SynthArgs) -> CmdResult {
    let mut spec = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            toml::from_str::<SceneSpec>(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
        }
        None => SceneSpec::default(),
    };
    if let Some(p) = &args.pattern {
        spec.pattern = match p.as_str() {
            "bar" => Pattern::Bar,
            "checkerboard" => Pattern::Checkerboard,
            "texture" => Pattern::Texture,
            other => return Err(Failure::Usage(format!("unknown pattern {other:?}"))),
        };
    }
    if let Some(v) = args.vx {
        spec.velocity.0 = v;
    }
    if let Some(v) = args.vy {
        spec.velocity.1 = v;
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = args.$flag { spec.$field = v; })*
        };
    }
    set!(duration => duration, threshold => contrast_threshold, width => width,
         height => height, seed => seed, noise_rate => noise_rate);
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let sample = generate_scene(&spec)?;
    let frames_dir = args.out.join("frames");
    fs::create_dir_all(&frames_dir).map_err(io_at(&frames_dir))?;
    write_events_text(&args.out.join("events.txt"), &sample.events)?;

    let mut index = String::new();
    for (i, f) in sample.frames.iter().enumerate() {
        let name = format!("frame_{i:03}.pgm");
        write_gray_pgm(&frames_dir.join(&name), f)?;
        index.push_str(&format!("{} {name}\n", f.t));
    }
    fs::write(frames_dir.join("images.txt"), index).map_err(io_at(&frames_dir))?;

    // ground truth is only scored where the pattern has texture and events fired
    let gt = sample.gt.as_ref().expect("synthetic samples carry ground truth");
    let mut active = vec![false; sample.geometry.pixel_count()];
    for e in sample.events.events() {
        active[e.y as usize * sample.geometry.width + e.x as usize] = true;
    }
    let mut field = gt.displacement.clone();
    for (i, keep) in gt.mask.iter().zip(&active).map(|(m, a)| *m && *a).enumerate() {
        if !keep {
            field.u[i] = UNKNOWN_FLOW;
            field.v[i] = UNKNOWN_FLOW;
        }
    }
    write_flow(&args.out.join("gt.flo"), &field)?;

    let echo = serde_json::json!({
        "spec": spec,
        "n_events": sample.events.len(),
        "t0": sample.events.t0(),
        "t1": sample.events.t1(),
        "displacement": [gt.displacement.u[0], gt.displacement.v[0]],
    });
    let text = serde_json::to_string_pretty(&echo).map_err(|e| Failure::Data(e.to_string()))?;
    fs::write(args.out.join("scene.json"), text + "\n").map_err(io_at(&args.out))?;
    eprintln!(
        "wrote {} events and {} frames to {}",
        sample.events.len(),
        sample.frames.len(),
        args.out.display()
    );
    Ok(())
}

/// Reads `images.txt` (`t relative/path` per line) and every frame it lists.
fn load_frames(dir: &Path) -> Result<Vec<GrayImage>, Failure> {
    let index = dir.join("images.txt");
    let text = fs::read_to_string(&index).map_err(io_at(&index))?;
    let mut frames = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Failure::Data(format!("{}:{}: expected `t path`", index.display(), n + 1));
        let (t, rel) = line.split_once(char::is_whitespace).ok_or_else(bad)?;
        let t: f64 = t.parse().map_err(|_| bad())?;
        frames.push(read_gray(&dir.join(rel.trim()), t)?);
    }
    if frames.iter().any(|f| (f.width, f.height) != (frames[0].width, frames[0].height)) {
        return Err(Failure::Data(format!("{}: frames differ in size", index.display())));
    }
    Ok(frames)
}

fn infer_geometry(events: &EventSet) -> Result<SensorGeometry, Failure> {
    let (mut w, mut h) = (0.0f64, 0.0f64);
    for e in events.events() {
        w = w.max(e.x);
        h = h.max(e.y);
    }
    Ok(SensorGeometry::new(w.floor() as usize + 1, h.floor() as usize + 1)?)
}

fn displacement_over(flow: &FlowField, events: &EventSet) -> DisplacementField {
    DisplacementField::from_velocity(flow, events.t1() - events.t0())
}

fn max_magnitude(d: &DisplacementField) -> f64 {
    let m = d
        .u
        .iter()
        .zip(&d.v)
        .map(|(u, v)| (*u as f64).hypot(*v as f64))
        .fold(0.0, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

pub fn estimate(args: &EstimateArgs) -> CmdResult {
    let mut cfg = load_config(&args.cfg)?;
    if let Some(p) = &args.events {
        cfg.paths.events = Some(p.clone());
    }
    if let Some(p) = &args.frames {
        cfg.paths.frames = Some(p.clone());
    }
    if let Some(p) = &args.out {
        cfg.paths.out = Some(p.clone());
    }
    if let Some(n) = args.n_events {
        cfg.n_events = n;
    }
    cfg.viz |= args.viz;
    if args.events_only {
        cfg.objective.beta = 0.0;
        cfg.paths.frames = None;
    }
    cfg.validate()?;
    let events_path = cfg.paths.events.clone().ok_or_else(|| Failure::Usage("--events is required".into()))?;
    let out = cfg.paths.out.clone().ok_or_else(|| Failure::Usage("--out is required".into()))?;
    if !events_path.is_file() {
        return Err(Failure::Data(format!("{}: events file not found", events_path.display())));
    }

    let frames = match &cfg.paths.frames {
        Some(dir) if cfg.objective.beta != 0.0 => load_frames(dir)?,
        _ => Vec::new(),
    };
    let geometry = match (cfg.geometry(), frames.first()) {
        (Some(g), _) => Some(g),
        (None, Some(f)) => Some(SensorGeometry::new(f.width, f.height)?),
        (None, None) => None,
    };
    let events = load_events_text(&events_path, geometry)?;
    let geometry = match geometry {
        Some(g) => g,
        None => infer_geometry(&events)?,
    };

    let flow_dir = out.join("flow");
    fs::create_dir_all(&flow_dir).map_err(io_at(&flow_dir))?;
    let diag_path = out.join("diagnostics.jsonl");
    let mut diag = BufWriter::new(fs::File::create(&diag_path).map_err(io_at(&diag_path))?);
    let est_cfg = cfg.estimator();

    let windows = split_windows(&events, cfg.n_events)?;
    let mut previous: Option<FlowField> = None;
    let mut failures = Vec::new();
    for (i, window) in windows.into_iter().enumerate() {
        let id = format!("{i:06}");
        let mut sample = Sample::from_events(window, geometry).with_frames(frames.clone())?;
        sample.extract_edges(&cfg.edges)?;
        let est = match multiscale_estimate(&sample, previous.as_ref(), &est_cfg) {
            Ok(e) => e,
            Err(e) => {
                eprintln!("sample {id}: {e}");
                failures.push(id);
                previous = None;
                continue;
            }
        };
        est.write_diagnostics(&mut diag, &id)?;
        let disp = displacement_over(&est.sensor, &sample.events);
        write_flow(&flow_dir.join(format!("{id}.flo")), &disp)?;
        if cfg.viz {
            write_flow_png(&flow_dir.join(format!("{id}.png")), &disp, max_magnitude(&disp))?;
        }
        let mean = |c: &[f64]| c.iter().sum::<f64>() / c.len() as f64;
        eprintln!(
            "sample {id}: {} events, {} frames, mean velocity ({:.3}, {:.3}) px/s{}{}",
            sample.events.len(),
            sample.frames.len(),
            mean(&est.grid.vx),
            mean(&est.grid.vy),
            if est.events_only { ", events only" } else { "" },
            if est.failed { ", solver failed" } else { "" },
        );
        if est.failed {
            failures.push(id);
        }
        previous = Some(est.grid);
    }
    diag.flush().map_err(io_at(&diag_path))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Solver(format!("solver failed on samples {}", failures.join(", "))))
    }
}

/// `.flo` files keyed by file stem; a single file is its own set.
fn flow_files(path: &Path) -> Result<BTreeMap<String, PathBuf>, Failure> {
    let stem = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut out = BTreeMap::new();
    if path.is_dir() {
        for entry in fs::read_dir(path).map_err(io_at(path))? {
            let p = entry.map_err(io_at(path))?.path();
            if p.extension().is_some_and(|e| e == "flo") {
                out.insert(stem(&p), p);
            }
        }
    } else if path.is_file() {
        out.insert(stem(path), path.to_path_buf());
    } else {
        return Err(Failure::Data(format!("{}: not found", path.display())));
    }
    Ok(out)
}

fn pair_samples(pred: &Path, gt: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>, Failure> {
    let p = flow_files(pred)?;
    let g = flow_files(gt)?;
    if p.len() == 1 && g.len() == 1 && (pred.is_file() || gt.is_file()) {
        let (id, pp) = p.into_iter().next().unwrap();
        let (_, gp) = g.into_iter().next().unwrap();
        return Ok(vec![(id, pp, gp)]);
    }
    let unmatched: Vec<&String> = p
        .keys()
        .filter(|k| !g.contains_key(*k))
        .chain(g.keys().filter(|k| !p.contains_key(*k)))
        .collect();
    if !unmatched.is_empty() {
        let list: Vec<&str> = unmatched.iter().map(|s| s.as_str()).collect();
        return Err(Failure::Data(format!("unmatched sample ids: {}", list.join(", "))));
    }
    if p.is_empty() {
        return Err(Failure::Data("no flow files to evaluate".into()));
    }
    Ok(p.into_iter().map(|(id, pp)| {
        let gp = g[&id].clone();
        (id, pp, gp)
    }).collect())
}

pub fn evaluate(args: &EvaluateArgs) -> CmdResult {
    let pairs = pair_samples(&args.pred, &args.gt)?;
    let windows = match &args.events {
        Some(p) => Some(split_windows(&load_events_text(p, None)?, args.n_events)?),
        None => None,
    };
    let mut rows = Vec::with_capacity(pairs.len());
    for (i, (id, pp, gp)) in pairs.into_iter().enumerate() {
        let pred = read_flow(&pp)?;
        let gt = read_flow(&gp)?;
        let e = eval_flow(&pred, &gt, &gt.known_mask())?;
        let fwl_value = match windows.as_ref().and_then(|w| w.get(i)) {
            Some(ev) => {
                let dt = ev.t1() - ev.t0();
                let to_vel = |c: &[f32]| c.iter().map(|&d| d as f64 / dt).collect::<Vec<_>>();
                let flow = FlowField::new(pred.width, pred.height, to_vel(&pred.u), to_vel(&pred.v))?;
                let g = SensorGeometry::new(pred.width, pred.height)?;
                Some(fwl(ev, &flow, g, &IweConfig::default(), ev.t0())?)
            }
            None => None,
        };
        rows.push(ReportRow {
            sample_id: id,
            aee: e.aee,
            outlier_pct: e.outlier_pct,
            fwl: fwl_value,
            n_valid: e.n_valid,
        });
    }
    match &args.out {
        Some(p) => write_report(BufWriter::new(fs::File::create(p).map_err(io_at(p))?), &rows)?,
        None => write_report(io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn image_files(path: &Path) -> Result<Vec<PathBuf>, Failure> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(io_at(path))? {
        let p = entry.map_err(io_at(path))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("pgm" | "png" | "jpg" | "jpeg")) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub fn edges(args: &EdgesArgs) -> CmdResult {
    let cfg = load_config(&args.cfg)?;
    let files = image_files(&args.frames)?;
    if files.is_empty() {
        return Err(Failure::Data(format!("{}: no images found", args.frames.display())));
    }
    fs::create_dir_all(&args.out).map_err(io_at(&args.out))?;
    let mut failed = Vec::new();
    for f in &files {
        let stem = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let result = read_gray(f, 0.0)
            .and_then(|img| extract_edges(&img, &cfg.edges))
            .and_then(|e| write_edge_pgm(&args.out.join(format!("{stem}.pgm")), &e));
        if let Err(e) = result {
            eprintln!("{}: {e}", f.display());
            failed.push(f.display().to_string());
        }
    }
    eprintln!("wrote {} edge images to {}", files.len() - failed.len(), args.out.display());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Data(format!("could not process {}", failed.join(", "))))
    }
}
