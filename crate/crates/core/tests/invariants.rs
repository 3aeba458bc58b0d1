use proptest::prelude::*;

use icl_core::decay::{effective_weight, DecayConfig};
use icl_core::scenario::default_scenario;
use icl_core::{CategoryNetwork, Engine, FeatureVector, NetworkConfig};

fn samples() -> impl Strategy<Value = Vec<(u8, Vec<f64>)>> {
    prop::collection::vec((0u8..4, prop::collection::vec(-5.0f64..5.0, 4)), 1..60)
}

proptest! {
    /// Without fading every view adds exactly one unit of weight to its
    /// label, and every centroid is a convex combination of that label's
    /// views.
    #[test]
    fn weight_is_conserved_and_centroids_stay_in_hull(s in samples(), tau in 0.0001f64..0.9) {
        let frozen = DecayConfig::with_alpha(0.0);
        let mut net = CategoryNetwork::new(4, NetworkConfig::with_tau(tau)).unwrap();
        for (l, x) in &s {
            net.learn_one(&format!("l{l}"), &FeatureVector::new(x.clone()).unwrap(), 0.0, &frozen).unwrap();
        }
        for l in 0u8..4 {
            let label = format!("l{l}");
            let views: Vec<&Vec<f64>> = s.iter().filter(|(k, _)| *k == l).map(|(_, x)| x).collect();
            let clusters: Vec<_> = net.clusters().iter().filter(|c| c.label == label).collect();
            let total: f64 = clusters.iter().map(|c| c.raw_weight).sum();
            prop_assert!((total - views.len() as f64).abs() < 1e-9);
            prop_assert!(clusters.len() <= views.len());
            for c in clusters {
                for (d, v) in c.centroid.as_slice().iter().enumerate() {
                    let lo = views.iter().map(|x| x[d]).fold(f64::INFINITY, f64::min);
                    let hi = views.iter().map(|x| x[d]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9);
                }
            }
        }
    }

    /// Fading never amplifies a trace and never reverses with age.
    #[test]
    fn fading_is_monotone_and_bounded(
        raw in 0.1f64..50.0,
        events in prop::collection::vec(0.0f64..100.0, 1..20),
        t1 in 0.0f64..200.0,
        dt in 0.0f64..200.0,
        alpha in 0.0f64..20.0,
    ) {
        let cfg = DecayConfig::with_alpha(alpha);
        let newest = events.iter().copied().fold(0.0, f64::max);
        let now = newest + t1;
        let a = effective_weight(raw, &events, now, &cfg).unwrap();
        let b = effective_weight(raw, &events, now + dt, &cfg).unwrap();
        prop_assert!(a <= raw * (1.0 + 1e-12));
        prop_assert!(b <= a * (1.0 + 1e-12));
        prop_assert!(b >= 0.0);
    }
}

#[test]
fn default_scenario_roundtrips_through_json() {
    let s = default_scenario();
    s.validate().unwrap();
    let back = icl_core::ScenarioScript::from_json(&s.to_json()).unwrap();
    assert_eq!(back, s);
}

/// A freshly taught home: every queried object is looked for where it is.
#[test]
fn first_increment_locates_every_object() {
    let s = default_scenario();
    let mut e = Engine::new(s.config.clone(), s.world.clone(), 1).unwrap();
    let first = &s.increments[0];
    for t in &first.teach_objects {
        e.teach_object(&t.instance, t.label.as_deref(), t.n_views).unwrap();
    }
    for c in &first.teach_contexts {
        for _ in 0..c.n_views {
            e.teach_context(&c.name, c.location, &c.scene).unwrap();
        }
    }
    for t in &first.teach_objects {
        let label = t.label.clone().unwrap_or_else(|| t.instance.clone());
        let want = e.world().locations_of_label(&label);
        let got = e.locate(&label).unwrap().location;
        assert!(want.contains(&got), "{label}: {got} not in {want:?}");
    }
}

/// A snapshot serialised to JSON and loaded into a fresh engine answers
/// queries exactly as the original does.
#[test]
fn snapshot_survives_json_and_reload() {
    let s = default_scenario();
    let mut e = Engine::new(s.config.clone(), s.world.clone(), 3).unwrap();
    for inc in &s.increments[..3] {
        for t in &inc.teach_objects {
            e.teach_object(&t.instance, t.label.as_deref(), t.n_views).unwrap();
        }
        for c in &inc.teach_contexts {
            e.teach_context(&c.name, c.location, &c.scene).unwrap();
        }
    }
    e.advance_clock(4.0).unwrap();
    let json = serde_json::to_string(&e.snapshot()).unwrap();

    let mut fresh = Engine::new(s.config.clone(), s.world.clone(), 3).unwrap();
    fresh.load_snapshot(serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(fresh.summary(), e.summary());
    for label in e.index().labels().to_vec() {
        assert_eq!(fresh.locate(&label).unwrap(), e.locate(&label).unwrap());
    }
}
