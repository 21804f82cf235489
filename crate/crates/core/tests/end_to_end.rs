use disj_core::dist::{generate, seeded_stream, Dist, GeneratorSpec};
use disj_core::harness::{
    evaluate_exact, sweep, EpsList, EvalMode, ExperimentConfig, FamilyKind, FamilySpec,
};
use disj_core::protocol::{Answer, ProtocolParams};
use disj_core::{Protocol, SubsetMask};

fn uniform(n: u32) -> Dist {
    generate(&GeneratorSpec::UniformAll { n }, &mut seeded_stream(0, 0))
        .unwrap()
        .into_dist()
        .unwrap()
}

#[test]
fn uniform_product_n10_within_eps() {
    let u = uniform(10);
    let rep = evaluate_exact(&u, &u, ProtocolParams::new(0.25, 0)).unwrap();
    assert!(rep.weighted_error <= 0.25, "error {}", rep.weighted_error);
}

#[test]
fn disjoint_declarations_are_never_wrong_on_support() {
    // a level only declares NotDisjoint; Disjoint comes from the exact base case
    let n = 12;
    let (da, db) = FamilySpec::new(FamilyKind::RandomSparse { support: 30 })
        .instantiate(n, 9, 0)
        .unwrap();
    let p = Protocol::new(da.clone(), db.clone(), ProtocolParams::new(0.25, 9)).unwrap();
    for &(a, _) in da.support() {
        for &(b, _) in db.support() {
            let o = p.run_protocol(a, b).unwrap();
            if o.answer == Answer::Disjoint {
                assert!(a.is_disjoint(b));
            }
            assert_eq!(o.cost_bits, o.transcript.total_bits());
        }
    }
}

#[test]
fn transcript_replays_from_alice_side() {
    let n = 10;
    let (da, db) = FamilySpec::new(FamilyKind::PerElementIndependent { p: Some(0.2) })
        .instantiate(n, 4, 0)
        .unwrap();
    let p = Protocol::new(da, db, ProtocolParams::new(0.3, 4)).unwrap();
    let a: SubsetMask = "{1,4,7}".parse().unwrap();
    let b: SubsetMask = "{2,5}".parse().unwrap();
    let o = p.run_protocol(a, b).unwrap();
    let replay = p.replay_alice(a, &o.transcript).unwrap();
    assert_eq!(replay, o.transcript);
}

// (3/4)^n ≤ eps/2 from n = 10 on, so larger uniform products are declared
// intersecting after the two threshold bits; n = 8 is a full base case.
#[test]
fn uniform_product_cost_drops_once_almost_empty() {
    let cfg = ExperimentConfig {
        seed: 1,
        eps: EpsList::One(0.25),
        n_range: vec![8, 12, 16],
        families: vec![FamilySpec::new(FamilyKind::UniformAll)],
        eval_mode: EvalMode::Sampled { num_samples: 2000 },
        c: 2.0,
        out: None,
        keep_going: false,
    };
    let rows = sweep(&cfg).unwrap().rows;
    let costs: Vec<u64> = rows
        .iter()
        .map(|r| r.report.as_ref().unwrap().max_cost_bits)
        .collect();
    assert_eq!(costs, vec![8, 2, 2]);
    for r in &rows[1..] {
        let rep = r.report.as_ref().unwrap();
        assert_eq!(
            rep.stop_histogram.keys().collect::<Vec<_>>(),
            vec!["almost-empty"]
        );
        assert!(rep.weighted_error <= 0.75f64.powi(r.n as i32) + 0.02);
    }
}
