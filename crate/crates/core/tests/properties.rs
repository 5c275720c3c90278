use eincm::data::{DisplacementField, UNKNOWN_FLOW};
use eincm::edges::EdgeImage;
use eincm::event::{build_iwe, warp_events};
use eincm::metrics::{aee, outlier_pct};
use eincm::objectives::{relative_contrast, relative_correlation, tv_regularizer, ReferenceTimes};
use eincm::optimizer::{downscale_lanczos3, handover, upscale_bilinear_to_sensor, upscale_repeat};
use eincm::{Event, EventSet, FlowField, IweConfig, SensorGeometry};
use proptest::prelude::*;

const W: usize = 24;
const H: usize = 20;

fn geometry() -> SensorGeometry {
    SensorGeometry::new(W, H).unwrap()
}

fn event_set() -> impl Strategy<Value = EventSet> {
    prop::collection::vec((0..W, 0..H, 0.0..1.0f64, any::<bool>()), 1..200).prop_map(|raw| {
        let mut ev: Vec<Event> = raw
            .into_iter()
            .map(|(x, y, t, p)| Event::new(x as f64, y as f64, t, if p { 1 } else { -1 }))
            .collect();
        ev.sort_by(|a, b| a.t.total_cmp(&b.t));
        EventSet::new(ev).unwrap()
    })
}

fn grid(max_side: usize) -> impl Strategy<Value = FlowField> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        (
            prop::collection::vec(-50.0..50.0f64, w * h),
            prop::collection::vec(-50.0..50.0f64, w * h),
        )
            .prop_map(move |(vx, vy)| FlowField::new(w, h, vx, vy).unwrap())
    })
}

fn displacement(n: usize) -> impl Strategy<Value = DisplacementField> {
    (
        prop::collection::vec(-10.0..10.0f32, n),
        prop::collection::vec(-10.0..10.0f32, n),
    )
        .prop_map(|(u, v)| DisplacementField::new(4, 4, u, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn warp_is_linear_in_flow(events in event_set(), vx in -20.0..20.0f64, vy in -20.0..20.0f64, c in -3.0..3.0f64) {
        let base = FlowField::constant(W, H, vx, vy);
        let t_ref = events.t_mid();
        let a = warp_events(&events, &base, t_ref).unwrap();
        let b = warp_events(&events, &base.scaled(c), t_ref).unwrap();
        for ((e, p), q) in events.events().iter().zip(&a).zip(&b) {
            prop_assert!(((q.0 - e.x) - c * (p.0 - e.x)).abs() < 1e-9);
            prop_assert!(((q.1 - e.y) - c * (p.1 - e.y)).abs() < 1e-9);
        }
    }

    #[test]
    fn events_at_reference_time_stay_put(events in event_set(), vx in -20.0..20.0f64) {
        let t_ref = events.t0();
        let flow = FlowField::constant(W, H, vx, -vx);
        let coords = warp_events(&events, &flow, t_ref).unwrap();
        for (e, c) in events.events().iter().zip(&coords) {
            if e.t == t_ref {
                prop_assert_eq!(*c, (e.x, e.y));
            }
        }
    }

    #[test]
    fn interior_splat_conserves_mass(xs in prop::collection::vec((4.0..(W as f64 - 5.0), 4.0..(H as f64 - 5.0)), 1..50)) {
        let img = build_iwe(&xs, geometry(), &IweConfig::default(), 0.0);
        prop_assert!((img.sum() - xs.len() as f64).abs() < 1e-9 * xs.len() as f64);
        prop_assert!(img.pixels.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn splat_mass_never_exceeds_event_count(xs in prop::collection::vec((-10.0..40.0f64, -10.0..40.0f64), 1..50)) {
        let img = build_iwe(&xs, geometry(), &IweConfig::default(), 0.0);
        prop_assert!(img.sum() <= xs.len() as f64 + 1e-9);
    }

    #[test]
    fn zero_flow_identities(events in event_set(), seed in any::<u64>()) {
        let g = geometry();
        let edges: Vec<EdgeImage> = [events.t0(), events.t_mid(), events.t1()]
            .iter()
            .enumerate()
            .map(|(k, &t)| EdgeImage {
                width: W,
                height: H,
                pixels: (0..W * H).map(|i| ((i as u64 ^ seed).wrapping_mul(k as u64 + 7) % 97) as f64 / 96.0).collect(),
                t,
            })
            .collect();
        let refs = ReferenceTimes::for_window(&events, &edges);
        let zero = FlowField::zeros(3, 2);
        prop_assert_eq!(relative_contrast(&events, &zero, &refs, g, &IweConfig::default()).unwrap(), 1.0);
        prop_assert_eq!(relative_correlation(&events, &zero, &refs, g, &IweConfig::default()).unwrap(), -1.0);
    }

    #[test]
    fn tv_is_nonpositive_and_zero_on_constants(f in grid(8), c in -50.0..50.0f64) {
        prop_assert!(tv_regularizer(&f) <= 0.0);
        prop_assert_eq!(tv_regularizer(&FlowField::constant(f.width_cells, f.height_cells, c, -c)), 0.0);
    }

    #[test]
    fn repeat_upscale_copies_blocks(f in grid(6), factor in 1usize..4) {
        let up = upscale_repeat(&f, factor).unwrap();
        prop_assert_eq!(&downscale_lanczos3(&f, f.width_cells, f.height_cells).unwrap(), &f);
        prop_assert_eq!(up.width_cells, f.width_cells * factor);
        for (a, b) in up.vx.iter().enumerate() {
            let (x, y) = (a % up.width_cells / factor, a / up.width_cells / factor);
            prop_assert_eq!(*b, f.vx[y * f.width_cells + x]);
        }
    }

    #[test]
    fn bilinear_stays_within_range(f in grid(6)) {
        let up = upscale_bilinear_to_sensor(&f, geometry());
        let lo = f.vx.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = f.vx.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(up.vx.iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
    }

    #[test]
    fn handover_endpoints_and_midpoint(a in grid(4), w in -1.0..2.0f64, seed in any::<u32>()) {
        let b = FlowField::new(
            a.width_cells,
            a.height_cells,
            a.vx.iter().map(|v| v + (seed % 13) as f64).collect(),
            a.vy.iter().map(|v| v - (seed % 7) as f64).collect(),
        )
        .unwrap();
        prop_assert_eq!(&handover(&a, &b, 0.0).unwrap(), &a);
        prop_assert_eq!(&handover(&a, &b, 1.0).unwrap(), &b);
        let m = handover(&a, &b, w).unwrap();
        for i in 0..a.cell_count() {
            prop_assert!((m.vx[i] - (w * b.vx[i] + (1.0 - w) * a.vx[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn aee_is_symmetric(p in displacement(16), q in displacement(16)) {
        let m = vec![true; 16];
        prop_assert!((aee(&p, &q, &m).unwrap() - aee(&q, &p, &m).unwrap()).abs() < 1e-12);
        prop_assert_eq!(aee(&p, &p, &m).unwrap(), 0.0);
    }

    #[test]
    fn outliers_fall_as_threshold_grows(p in displacement(16), q in displacement(16), t in 0.0..10.0f64) {
        let m = vec![true; 16];
        let lo = outlier_pct(&p, &q, &m, t).unwrap();
        let hi = outlier_pct(&p, &q, &m, t + 1.0).unwrap();
        prop_assert!(hi <= lo);
        prop_assert!((0.0..=100.0).contains(&lo));
    }

    #[test]
    fn unknown_flow_is_excluded_from_known_mask(p in displacement(16), k in 0usize..16) {
        let mut u = p.u.clone();
        u[k] = UNKNOWN_FLOW;
        let f = DisplacementField::new(4, 4, u, p.v.clone()).unwrap();
        let mask = f.known_mask();
        prop_assert!(!mask[k]);
        prop_assert_eq!(mask.iter().filter(|&&b| b).count(), 15);
    }
}
