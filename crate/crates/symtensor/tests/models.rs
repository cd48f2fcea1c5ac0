use symtensor::gamma::GammaCache;
use symtensor::models::{blocked_chain_gate, exact_diag, exact_diag_dense, mera_build, mera_optimize, with_multiplicities, MeraConfig};

#[test]
fn blocked_and_dense_spectra_agree() {
    for l in 2..=10 {
        for periodic in [false, true] {
            let blocked = with_multiplicities(&exact_diag(l, periodic, None).unwrap());
            let dense = exact_diag_dense(l, periodic).unwrap();
            assert_eq!(blocked.len(), dense.len());
            let worst = blocked.iter().zip(&dense).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(worst < 1e-9, "L={l} periodic={periodic}: {worst}");
        }
    }
}

#[test]
fn even_rings_have_singlet_ground_states() {
    for l in [4, 6, 8, 10] {
        let s = exact_diag(l, true, None).unwrap();
        let ground = s.iter().filter_map(|x| x.energies.first().map(|&e| (e, x.twice_j))).min_by(|a, b| a.0.partial_cmp(&b.0).unwrap()).unwrap();
        assert_eq!(ground.1, 0, "L={l}");
    }
}

#[test]
fn mera_short_run_is_monotone_and_variational() {
    let (mut st, _) = mera_build(1, &[MeraConfig::chi4()], 0, 1, 3).unwrap();
    let gate = blocked_chain_gate().unwrap();
    let cache = GammaCache::new();
    let t0 = std::time::Instant::now();
    let r = mera_optimize(&mut st, &gate, 5, 0.0, &cache).unwrap();
    eprintln!("5 sweeps in {:?}: {:?}", t0.elapsed(), r.trace.iter().map(|s| (s.energy, s.new_networks)).collect::<Vec<_>>());
    let e0 = exact_diag(12, true, Some(&[0])).unwrap()[0].energies[0];
    eprintln!("ED ground {e0}");
    for w in r.trace.windows(2) {
        assert!(w[1].energy <= w[0].energy + 1e-8);
    }
    assert!(r.energy >= e0 - 1e-9);
}
