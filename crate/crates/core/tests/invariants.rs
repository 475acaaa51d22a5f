//! Physical invariants of the cluster-pair force path on random systems.

use proptest::prelude::*;
use proptest::strategy::ValueTree;

use cpmd::gridder::{build_cluster_grid, CellSizing};
use cpmd::kernels::{compute_nonbonded, standard_layouts, ClusterAttributes, KernelLayout};
use cpmd::model::{norm2, wrap_position, LjTable, NonbondedParams, ParticleSystem, SimBox, Vec3};
use cpmd::oracle::{brute_force_nonbonded, max_relative_force_error, relative_error};
use cpmd::pairlist::build_pair_list;
use cpmd::ForcesEnergies;

fn two_type_table() -> LjTable {
    LjTable::from_rows(vec![
        vec![(0.996, 0.34), (0.6, 0.31)],
        vec![(0.6, 0.31), (0.4, 0.28)],
    ])
    .unwrap()
}

fn params(shift: bool) -> NonbondedParams {
    NonbondedParams::new(0.9, 1.0, two_type_table()).shifted(shift)
}

/// Random positions with no pair closer than 0.25 nm.
fn arb_system() -> impl Strategy<Value = ParticleSystem> {
    (2.2f64..3.5, 2.2f64..3.5, 2.2f64..3.5, 2usize..70, any::<u64>()).prop_map(|(lx, ly, lz, n, seed)| {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let sim_box = SimBox::new([lx, ly, lz]);
        let mut s = ParticleSystem::empty(sim_box);
        let mut tries = 0;
        while s.len() < n && tries < 20 * n {
            tries += 1;
            let p: Vec3 = [rng.random_range(0.0..lx), rng.random_range(0.0..ly), rng.random_range(0.0..lz)];
            let clear = s.positions.iter().all(|q| {
                let d = cpmd::model::minimum_image(cpmd::model::sub(p, *q), &sim_box);
                norm2(d) >= 0.25 * 0.25
            });
            if clear {
                s.positions.push(p);
                s.velocities.push([0.0; 3]);
                s.masses.push(39.948);
                s.charges.push(rng.random_range(-0.5..0.5));
                s.lj_type.push(rng.random_range(0..2));
            }
        }
        s
    })
}

fn arb_layout() -> impl Strategy<Value = KernelLayout> {
    prop::sample::select(standard_layouts())
}

fn cluster_forces(system: &ParticleSystem, params: &NonbondedParams, layout: KernelLayout, sc: usize) -> ForcesEnergies {
    let grid = build_cluster_grid(system, layout.m, CellSizing::default()).unwrap();
    let list = build_pair_list(&grid, &system.sim_box, params.r_list, layout.n_lane, sc).unwrap();
    let attrs = ClusterAttributes::gather(&grid, system);
    compute_nonbonded(&list, &grid, &grid.clustered_positions, &attrs, params, &system.sim_box, layout)
        .unwrap()
        .to_original(&grid)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_oracle(s in arb_system(), layout in arb_layout(), sc in prop::sample::select(vec![1usize, 8]), shift: bool) {
        let p = params(shift);
        let got = cluster_forces(&s, &p, layout, sc);
        let want = brute_force_nonbonded(&s, &p).unwrap();
        prop_assert!(max_relative_force_error(&got.forces, &want.forces) <= 1e-10);
        prop_assert!(relative_error(got.e_lj, want.e_lj) <= 1e-12);
        prop_assert!(relative_error(got.e_coulomb, want.e_coulomb) <= 1e-12);
    }

    #[test]
    fn newtons_third_law(s in arb_system(), layout in arb_layout()) {
        let f = cluster_forces(&s, &params(false), layout, 1);
        let scale = f.forces.iter().map(|v| norm2(*v).sqrt()).fold(1.0, f64::max);
        let net = f.net_force();
        prop_assert!(norm2(net).sqrt() <= 1e-12 * scale * s.len() as f64, "net {net:?}");
    }

    #[test]
    fn translation_invariance(s in arb_system(), layout in arb_layout(), shift in prop::array::uniform3(-5.0f64..5.0)) {
        let p = params(true);
        let a = cluster_forces(&s, &p, layout, 8);
        let mut moved = s.clone();
        for x in &mut moved.positions {
            *x = wrap_position([x[0] + shift[0], x[1] + shift[1], x[2] + shift[2]], &s.sim_box);
        }
        let b = cluster_forces(&moved, &p, layout, 8);
        prop_assert!(max_relative_force_error(&b.forces, &a.forces) <= 1e-10);
        let scale = a.e_lj.abs() + a.e_coulomb.abs();
        prop_assert!((b.potential() - a.potential()).abs() <= 1e-10 * scale.max(1e-300));
    }
}

#[test]
fn forces_are_the_negative_energy_gradient() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let h = 1e-6;
    let p = params(true);
    for _ in 0..12 {
        let s = arb_system().new_tree(&mut runner).unwrap().current();
        let layout = KernelLayout::new(4, 4).unwrap();
        let f = cluster_forces(&s, &p, layout, 1);
        let scale = f.forces.iter().map(|v| norm2(*v).sqrt()).fold(0.0, f64::max).max(1.0);
        for i in 0..s.len().min(6) {
            for d in 0..3 {
                let energy_at = |delta: f64| {
                    let mut t = s.clone();
                    t.positions[i][d] += delta;
                    t.positions[i] = wrap_position(t.positions[i], &t.sim_box);
                    cluster_forces(&t, &p, layout, 1).potential()
                };
                let fd = -(energy_at(h) - energy_at(-h)) / (2.0 * h);
                let err = (fd - f.forces[i][d]).abs() / scale;
                assert!(err <= 1e-5, "particle {i} dim {d}: fd {fd} vs {} (err {err:e})", f.forces[i][d]);
            }
        }
    }
}
