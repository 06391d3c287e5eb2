use proptest::prelude::*;
use sgin_core::channel::LinkParams;
use sgin_core::geometry::{self, comm_radius, ConstellationSpec, WalkerPattern};
use sgin_core::topology::{build_snapshot, LinkKind, TimeStructure};

fn spec_strategy() -> impl Strategy<Value = ConstellationSpec<f64>> {
    (2u32..8, 6u32..25, 0u32..4, 400f64..1500.0, 30f64..100.0, any::<bool>()).prop_map(|(p, s, f, h, i, delta)| {
        let pattern = if delta {
            WalkerPattern::Delta
        } else {
            WalkerPattern::Star
        };
        ConstellationSpec::walker(p * s, p, f % p, h, i, pattern).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn orbit_radius_is_constant(spec in spec_strategy(), t in 0f64..20_000.0) {
        let r = spec.orbit_radius_km();
        for e in geometry::propagate(&spec, t).unwrap() {
            let p = e.position_km;
            let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            prop_assert!((norm - r).abs() < 1e-6 * r);
        }
    }

    #[test]
    fn propagation_is_periodic(spec in spec_strategy(), t in 0f64..10_000.0) {
        let a = geometry::propagate(&spec, t).unwrap();
        let b = geometry::propagate(&spec, t + spec.orbital_period_s()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(geometry::distance_km(&x.position_km, &y.position_km) < 1e-6);
        }
    }

    #[test]
    fn feasible_links_are_symmetric_and_in_range(spec in spec_strategy(), t in 0f64..10_000.0) {
        let eph = geometry::propagate(&spec, t).unwrap();
        let links = geometry::feasible_links(&eph, &spec);
        let reach = comm_radius(spec.altitude_km);
        for &(i, j) in &links {
            prop_assert!(i < j);
            prop_assert!(
                geometry::isl_feasible(&eph[i], &eph[j], &eph, &spec)
                    || geometry::isl_feasible(&eph[j], &eph[i], &eph, &spec)
            );
            // ring neighbours are linked at any distance; cross-orbit links need range
            if eph[i].id.orbit != eph[j].id.orbit {
                prop_assert!(geometry::distance_km(&eph[i].position_km, &eph[j].position_km) <= reach);
            }
        }
        if spec.sats_per_orbit > 2 {
            for v in 0..eph.len() {
                let same = links
                    .iter()
                    .filter(|&&(a, b)| (a == v || b == v) && eph[a].id.orbit == eph[b].id.orbit)
                    .count();
                prop_assert_eq!(same, 2);
            }
        }
    }

    #[test]
    fn snapshot_invariants(spec in spec_strategy(), slot in 0u32..10) {
        let params = LinkParams::<f64> { frames_per_slot: 3, ..LinkParams::default() };
        let n = spec.total_sats();
        let powers = vec![1.0; n];
        let time = TimeStructure::from_slot_length(spec.orbital_period_s(), 250.0, 3).unwrap();
        let t0 = time.slot_start_s(slot);
        let g = build_snapshot(&spec, &params, &powers, &time, slot, t0).unwrap();
        prop_assert_eq!(g.nodes.len(), n + 1);
        prop_assert_eq!(g.links.iter().filter(|l| l.kind == LinkKind::Uplink).count(), n);
        for l in &g.links {
            prop_assert!(l.src != l.dst);
            if l.kind != LinkKind::Uplink {
                // ISLs come in both directions
                prop_assert!(g.link_index(l.dst, l.src).is_some());
            }
        }
        for f in &g.frames {
            prop_assert!(f.energy_j.iter().all(|e| e.is_finite() && *e > 0.0));
            prop_assert!(f.outage_prob.iter().all(|p| (0.0..=1.0).contains(p)));
        }
        for rho in [0.0, 0.5, 1.0] {
            let (r, dropped) = g.robust_weights(rho).unwrap();
            prop_assert_eq!(r.links.len() + dropped, g.links.len());
            prop_assert!(r.frames.iter().all(|f| f.weight.iter().all(|w| w.is_finite() && *w >= 0.0)));
        }
    }
}

#[test]
fn serving_satellites_cover_every_cluster() {
    use rand::SeedableRng;
    let spec = ConstellationSpec::walker(80, 4, 1, 500.0, 45.0, WalkerPattern::Delta).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let clusters = geometry::random_clusters::<f64, _>(41, &mut rng);
    geometry::validate_cluster_weights(&clusters).unwrap();
    let eph = geometry::propagate(&spec, 1234.0).unwrap();
    for c in &clusters {
        let id = geometry::serving_satellite(c, &eph, true).unwrap();
        // no other satellite is strictly closer to the cluster's ground point
        let g = c.direction_at(1234.0, true);
        let cos = |p: [f64; 3]| {
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            (g[0] * p[0] + g[1] * p[1] + g[2] * p[2]) / n
        };
        let best = eph.iter().map(|e| cos(e.position_km)).fold(f64::MIN, f64::max);
        assert_eq!(cos(eph[spec.index_of(id)].position_km), best);
    }
}

#[test]
fn f32_constellation_tracks_f64() {
    let a = ConstellationSpec::walker(80u32, 4, 1, 700.0f64, 99.5, WalkerPattern::Star).unwrap();
    let b = ConstellationSpec::walker(80u32, 4, 1, 700.0f32, 99.5, WalkerPattern::Star).unwrap();
    let pa = geometry::propagate(&a, 600.0).unwrap();
    let pb = geometry::propagate(&b, 600.0f32).unwrap();
    for (x, y) in pa.iter().zip(&pb) {
        for k in 0..3 {
            assert!((x.position_km[k] - y.position_km[k] as f64).abs() < 1.0);
        }
    }
}
