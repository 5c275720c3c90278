//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero on any failure.

use std::process::ExitCode;
use std::time::Instant;

use eincm::data::{
    generate_sequence, load_events_text, read_flow, write_events_text, write_flow, DisplacementField,
    SceneSpec, UNKNOWN_FLOW,
};
use eincm::edges::{canny, EdgeConfig, EdgeImage, GrayImage};
use eincm::metrics::{aee, evaluate, fwl, outlier_pct};
use eincm::objectives::{
    relative_contrast, relative_correlation, HybridObjective, ObjectiveConfig, ReferenceTimes,
};
use eincm::optimizer::{
    downscale_lanczos3, handover, multiscale_estimate, solve_handover_weight, upscale_bilinear_to_sensor,
    upscale_repeat, Estimate, EstimatorConfig, PipelineStep, SolverConfig,
};
use eincm::{Event, EventSet, FlowField, IweConfig, SensorGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Recovery {
    samples: Vec<eincm::data::Sample>,
    bimodal: Vec<Estimate>,
    seconds: f64,
}

/// Pixels that fired at least one event and carry ground truth.
fn eval_mask(sample: &eincm::data::Sample) -> Vec<bool> {
    let g = sample.geometry;
    let mut active = vec![false; g.pixel_count()];
    for e in sample.events.events() {
        active[e.y as usize * g.width + e.x as usize] = true;
    }
    let gt = sample.gt.as_ref().expect("synthetic ground truth");
    active.iter().zip(&gt.mask).map(|(a, b)| *a && *b).collect()
}

fn predicted(sample: &eincm::data::Sample, est: &Estimate) -> DisplacementField {
    DisplacementField::from_velocity(&est.sensor, sample.gt.as_ref().unwrap().dt)
}

/// Two consecutive windows of the translating texture; the second window
/// receives the first window's solution through handover.
fn run_recovery() -> Recovery {
    let mut samples = generate_sequence(&SceneSpec::default(), 2).expect("scene");
    for s in &mut samples {
        s.extract_edges(&EdgeConfig::default()).expect("edges");
    }
    let cfg = EstimatorConfig::default();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let bimodal = pool.install(|| {
        let first = multiscale_estimate(&samples[0], None, &cfg).expect("estimate");
        let second = multiscale_estimate(&samples[1], Some(&first.grid), &cfg).expect("estimate");
        vec![first, second]
    });
    Recovery {
        samples,
        bimodal,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn criterion_1(r: &Recovery) -> Outcome {
    let mut ok = r.seconds <= 120.0;
    let mut parts = Vec::new();
    for (i, (s, est)) in r.samples.iter().zip(&r.bimodal).enumerate() {
        let gt = s.gt.as_ref().unwrap();
        let e = evaluate(&predicted(s, est), &gt.displacement, &eval_mask(s)).map_err(|e| e.to_string())?;
        let n = s.events.len();
        ok &= e.aee <= 0.5 && e.outlier_pct == 0.0 && (15_000..=25_000).contains(&n) && !est.failed;
        parts.push(format!(
            "window {i}: {n} events, AEE {:.4} px, outliers {:.2}% over {} px",
            e.aee, e.outlier_pct, e.n_valid
        ));
    }
    let handovers = r.bimodal[1]
        .trace
        .iter()
        .filter(|s| matches!(s, PipelineStep::Handover(_)))
        .count();
    ok &= handovers == 5;
    parts.push(format!("{handovers} handovers in window 1, {:.1} s single-threaded", r.seconds));
    check(ok, parts.join("; "))
}

fn criterion_2(r: &Recovery) -> Outcome {
    let s = &r.samples[0];
    let iwe = IweConfig::default();
    let t0 = s.events.t0();
    let rec = fwl(&s.events, &r.bimodal[0].sensor, s.geometry, &iwe, t0).map_err(|e| e.to_string())?;
    let zero = fwl(&s.events, &FlowField::zeros(s.geometry.width, s.geometry.height), s.geometry, &iwe, t0)
        .map_err(|e| e.to_string())?;
    check(
        rec >= 1.05 && zero == 1.0 && rec >= zero,
        format!("FWL recovered {rec:.4}, zero flow {zero}"),
    )
}

fn criterion_3(r: &Recovery) -> Outcome {
    let s = &r.samples[0];
    let mut cfg = EstimatorConfig::default();
    cfg.objective.beta = 0.0;
    let eo = multiscale_estimate(s, None, &cfg).map_err(|e| e.to_string())?;
    let gt = s.gt.as_ref().unwrap();
    let mask = eval_mask(s);
    let a_eo = aee(&predicted(s, &eo), &gt.displacement, &mask).map_err(|e| e.to_string())?;
    let a_bi = aee(&predicted(s, &r.bimodal[0]), &gt.displacement, &mask).map_err(|e| e.to_string())?;
    check(
        eo.events_only && a_eo <= 2.0 * a_bi && a_bi <= a_eo + 0.1,
        format!("AEE events-only {a_eo:.4} px, bi-modal {a_bi:.4} px"),
    )
}

fn random_events(rng: &mut ChaCha8Rng, n: usize, g: SensorGeometry) -> EventSet {
    let mut t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.05)).collect();
    t.sort_by(f64::total_cmp);
    let ev = t
        .into_iter()
        .map(|t| {
            Event::new(
                rng.random_range(0..g.width) as f64,
                rng.random_range(0..g.height) as f64,
                t,
                if rng.random::<bool>() { 1 } else { -1 },
            )
        })
        .collect();
    EventSet::new(ev).unwrap()
}

fn random_edges(rng: &mut ChaCha8Rng, events: &EventSet, g: SensorGeometry) -> Vec<EdgeImage> {
    [events.t0(), events.t_mid(), events.t1()]
        .iter()
        .map(|&t| EdgeImage {
            width: g.width,
            height: g.height,
            pixels: (0..g.pixel_count()).map(|_| rng.random::<f64>()).collect(),
            t,
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let g = SensorGeometry::new(32, 24).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = (0.0f64, 0.0f64);
    let mut ok = true;
    for _ in 0..5 {
        let n = rng.random_range(50..2000);
        let events = random_events(&mut rng, n, g);
        let edges = random_edges(&mut rng, &events, g);
        let refs = ReferenceTimes::for_window(&events, &edges);
        let zero = FlowField::zeros(4, 4);
        let f = relative_contrast(&events, &zero, &refs, g, &IweConfig::default()).map_err(|e| e.to_string())?;
        let gr = relative_correlation(&events, &zero, &refs, g, &IweConfig::default()).map_err(|e| e.to_string())?;
        ok &= f == 1.0 && gr == -1.0;
        worst = (worst.0.max((f - 1.0).abs()), worst.1.max((gr + 1.0).abs()));
    }
    check(
        ok,
        format!("5 event sets, max |f_rel(0) - 1| = {:e}, max |g_rel(0) + 1| = {:e}", worst.0, worst.1),
    )
}

fn criterion_5(r: &Recovery) -> Outcome {
    let s = &r.samples[0];
    let refs = ReferenceTimes::for_window(&s.events, &s.edges);
    let obj = HybridObjective::new(&s.events, &refs, s.geometry, ObjectiveConfig::default())
        .map_err(|e| e.to_string())?;
    let grid = obj.on_grid(4, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-3;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let n = 16;
        let vx: Vec<f64> = (0..n).map(|_| 60.0 + rng.random_range(-30.0..30.0)).collect();
        let vy: Vec<f64> = (0..n).map(|_| -40.0 + rng.random_range(-30.0..30.0)).collect();
        let theta = FlowField::new(4, 4, vx, vy).unwrap();
        let (_, g) = grid.value_and_gradient(&theta).map_err(|e| e.to_string())?;
        let analytic = g.to_vector();
        let x = theta.to_vector();
        let mut fd = vec![0.0; x.len()];
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fp = grid.value(&FlowField::from_vector(4, 4, &xp).unwrap()).unwrap().total;
            let fm = grid.value(&FlowField::from_vector(4, 4, &xm).unwrap()).unwrap().total;
            fd[i] = (fp - fm) / (2.0 * h);
        }
        let num: f64 = analytic.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    check(worst <= 1e-3, format!("10 random flows on a 4x4 grid, worst relative L2 error {worst:.2e}"))
}

fn criterion_6(r: &Recovery) -> Outcome {
    let s = &r.samples[0];
    let refs = ReferenceTimes::for_window(&s.events, &s.edges);
    let obj = HybridObjective::new(&s.events, &refs, s.geometry, ObjectiveConfig::default())
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let solver = SolverConfig::default();
    let (mut converged, mut ok, mut worst_gap) = (0, true, f64::INFINITY);
    for &n in &[1usize, 2, 4, 8, 16] {
        let grid = obj.on_grid(n, n);
        for _ in 0..2 {
            let mut field = |spread: f64| {
                let c = n * n;
                FlowField::new(
                    n,
                    n,
                    (0..c).map(|_| 60.0 + rng.random_range(-spread..spread)).collect(),
                    (0..c).map(|_| -40.0 + rng.random_range(-spread..spread)).collect(),
                )
                .unwrap()
            };
            let current = field(20.0);
            let previous = field(40.0);
            let sol = solve_handover_weight(&current, &previous, &grid, &solver, false).map_err(|e| e.to_string())?;
            if sol.converged {
                converged += 1;
                let f_w = grid.value(&handover(&current, &previous, sol.w).unwrap()).unwrap().total;
                let f0 = grid.value(&current).unwrap().total;
                let f1 = grid.value(&previous).unwrap().total;
                let gap = f_w - f0.max(f1);
                worst_gap = worst_gap.min(gap);
                ok &= gap >= -1e-9;
            }
            let h0 = handover(&current, &previous, 0.0).unwrap();
            let h1 = handover(&current, &previous, 1.0).unwrap();
            let bits = |f: &FlowField| f.to_vector().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            ok &= bits(&h0) == bits(&current) && bits(&h1) == bits(&previous);
        }
    }
    ok &= converged > 0;
    check(
        ok,
        format!("{converged}/10 solves converged, min F(w*) - max(F(0), F(1)) = {worst_gap:.3e}; w=0/1 bit-exact"),
    )
}

fn criterion_7() -> Outcome {
    let mut worst = 0.0f64;
    let c = FlowField::constant(16, 16, 5.0, -2.5);
    for t in 1..=16 {
        let d = downscale_lanczos3(&c, t, t).map_err(|e| e.to_string())?;
        worst = d.vx.iter().map(|v| (v - 5.0).abs()).chain(d.vy.iter().map(|v| (v + 2.5).abs())).fold(worst, f64::max);
    }
    for (w, h) in [(1, 1), (2, 2), (4, 4), (8, 8)] {
        let base = FlowField::constant(w, h, 5.0, -2.5);
        for f in [2, 3] {
            let u = upscale_repeat(&base, f).map_err(|e| e.to_string())?;
            worst = u.vx.iter().map(|v| (v - 5.0).abs()).fold(worst, f64::max);
        }
    }
    for (w, h) in [(64, 64), (346, 260), (37, 23)] {
        let g = SensorGeometry::new(w, h).unwrap();
        let u = upscale_bilinear_to_sensor(&c, g);
        worst = u.vx.iter().map(|v| (v - 5.0).abs()).chain(u.vy.iter().map(|v| (v + 2.5).abs())).fold(worst, f64::max);
    }
    let f = FlowField::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![-1.0, -2.0, -3.0, -4.0]).unwrap();
    let u = upscale_repeat(&f, 2).map_err(|e| e.to_string())?;
    let block = (0..16).all(|i| {
        let (x, y) = (i % 4, i / 4);
        let src = (y / 2) * 2 + x / 2;
        u.vx[i] == f.vx[src] && u.vy[i] == f.vy[src]
    });
    check(
        worst <= 1e-6 && block,
        format!("max constant-field deviation {worst:.2e}; 2x2 -> 4x4 repeat block-exact: {block}"),
    )
}

fn criterion_8() -> Outcome {
    let zero = DisplacementField::constant(8, 8, 0.0, 0.0);
    let mask = vec![true; 64];
    let a = aee(&DisplacementField::constant(8, 8, 3.0, 4.0), &zero, &mask).map_err(|e| e.to_string())?;
    let o = outlier_pct(&DisplacementField::constant(8, 8, 5.0, 0.0), &zero, &mask, 3.0).map_err(|e| e.to_string())?;
    let g = SensorGeometry::new(16, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ev = random_events(&mut rng, 300, g);
    let w = fwl(&ev, &FlowField::zeros(16, 16), g, &IweConfig::default(), ev.t0()).map_err(|e| e.to_string())?;
    check(
        a == 5.0 && o == 100.0 && w == 1.0,
        format!("AEE (3,4) = {a}, outliers at 5 px = {o}%, FWL(0) = {w}"),
    )
}

fn criterion_9() -> Outcome {
    let (w, h, sq) = (64usize, 64usize, 8usize);
    let px: Vec<f64> = (0..w * h)
        .map(|i| if ((i % w) / sq + (i / w) / sq) % 2 == 0 { 40.0 } else { 210.0 })
        .collect();
    let img = GrayImage::new(w, h, px, 0.0).unwrap();
    let map = canny(&img, 100.0, 200.0).map_err(|e| e.to_string())?;
    // pixels touching an interior square boundary
    let on_boundary = |x: usize, y: usize| {
        let near = |c: usize, n: usize| (c.is_multiple_of(sq) && c > 0) || (c % sq == sq - 1 && c + 1 < n);
        near(x, w) || near(y, h)
    };
    let within1 = |x: usize, y: usize, pred: &dyn Fn(usize, usize) -> bool| {
        (x.saturating_sub(1)..=(x + 1).min(w - 1))
            .any(|xx| (y.saturating_sub(1)..=(y + 1).min(h - 1)).any(|yy| pred(xx, yy)))
    };
    let (mut n_edge, mut stray, mut n_bnd, mut covered) = (0, 0, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if map.get(x, y) {
                n_edge += 1;
                if !within1(x, y, &on_boundary) {
                    stray += 1;
                }
            }
            if on_boundary(x, y) {
                n_bnd += 1;
                if within1(x, y, &|a, b| map.get(a, b)) {
                    covered += 1;
                }
            }
        }
    }
    let recall = covered as f64 / n_bnd as f64;
    let flat = canny(&GrayImage::filled(w, h, 128.0, 0.0), 100.0, 200.0).map_err(|e| e.to_string())?;
    check(
        n_edge > 0 && stray == 0 && recall >= 0.95 && flat.count() == 0,
        format!(
            "{n_edge} edge pixels, {stray} off-boundary, boundary coverage {:.1}%, constant image edges {}",
            100.0 * recall,
            flat.count()
        ),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut flow_ok, mut ev_ok) = (0, 0);
    for trial in 0..100 {
        let (w, h) = (rng.random_range(1..24), rng.random_range(1..24));
        let sample = |rng: &mut ChaCha8Rng| -> f32 {
            match rng.random_range(0..10) {
                0 => UNKNOWN_FLOW,
                1 => f32::from_bits(rng.random::<u32>() & 0x7f7f_ffff),
                _ => rng.random_range(-500.0..500.0),
            }
        };
        let u: Vec<f32> = (0..w * h).map(|_| sample(&mut rng)).collect();
        let v: Vec<f32> = (0..w * h).map(|_| sample(&mut rng)).collect();
        let field = DisplacementField::new(w, h, u, v).unwrap();
        let p = dir.path().join(format!("{trial}.flo"));
        write_flow(&p, &field).map_err(|e| e.to_string())?;
        let back = read_flow(&p).map_err(|e| e.to_string())?;
        let bits = |f: &DisplacementField| {
            f.u.iter().chain(&f.v).map(|x| x.to_bits()).collect::<Vec<_>>()
        };
        if (back.width, back.height) == (w, h) && bits(&back) == bits(&field) {
            flow_ok += 1;
        }

        let n = rng.random_range(1..300);
        let mut t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        t.sort_by(f64::total_cmp);
        let ev: Vec<Event> = t
            .into_iter()
            .map(|t| {
                let x = if rng.random::<bool>() { rng.random_range(0..640) as f64 } else { rng.random_range(0.0..640.0) };
                Event::new(x, rng.random_range(0..480) as f64, t, if rng.random::<bool>() { 1 } else { -1 })
            })
            .collect();
        let set = EventSet::new(ev).unwrap();
        let p = dir.path().join(format!("{trial}.txt"));
        write_events_text(&p, &set).map_err(|e| e.to_string())?;
        let back = load_events_text(&p, Some(SensorGeometry::new(640, 480).unwrap())).map_err(|e| e.to_string())?;
        let same = back.len() == set.len()
            && back.events().iter().zip(set.events()).all(|(a, b)| {
                a.x.to_bits() == b.x.to_bits() && a.y.to_bits() == b.y.to_bits() && a.t.to_bits() == b.t.to_bits() && a.p == b.p
            });
        if same {
            ev_ok += 1;
        }
    }
    check(
        flow_ok == 100 && ev_ok == 100,
        format!("flow files {flow_ok}/100 bit-exact, event files {ev_ok}/100 bit-exact"),
    )
}

fn main() -> ExitCode {
    println!("running acceptance criteria");
    let recovery = run_recovery();
    let results: Vec<(&str, Outcome)> = vec![
        ("synthetic recovery", criterion_1(&recovery)),
        ("sharpening", criterion_2(&recovery)),
        ("baseline ordering", criterion_3(&recovery)),
        ("zero-flow identities", criterion_4()),
        ("gradient check", criterion_5(&recovery)),
        ("handover properties", criterion_6(&recovery)),
        ("resampling", criterion_7()),
        ("metrics", criterion_8()),
        ("edge pipeline", criterion_9()),
        ("format round trips", criterion_10()),
    ];
    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(d) => println!("criterion {:>2} {name}: PASS ({d})", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({d})", i + 1)
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
