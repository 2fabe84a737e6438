//! Property tests for tables, layouts, transport and the distributed matvec.

use entwave_core::transport::{balanced_split, parallel_transpose, ColumnBlock, Communicator, Phase, Schedule};
use entwave_core::{
    build_block_operator, make_layout, Bipartition, BlockWavefunction, EntanglementCut, HamiltonianEngine, ModelSpec,
    QuantumNumber,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn binomial(n: usize, k: i64) -> usize {
    if k < 0 || k as usize > n {
        return 0;
    }
    let k = k as usize;
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn model_strategy() -> impl Strategy<Value = ModelSpec> {
    prop_oneof![
        (2usize..=9, 0.2f64..2.0).prop_map(|(s, j)| ModelSpec::heisenberg(s, j)),
        (2usize..=5, 0.2f64..2.0, -8.0f64..8.0, -1.0f64..1.0).prop_map(|(s, t, u, v)| ModelSpec::hubbard(s, t, u, v)),
        (2usize..=5, -4.0f64..4.0).prop_map(|(s, u)| ModelSpec::impurity(s, u)),
    ]
}

/// Model, spatial cut position and a target offset into the allowed range.
fn problem_strategy() -> impl Strategy<Value = (ModelSpec, EntanglementCut, QuantumNumber)> {
    (model_strategy(), any::<prop::sample::Index>(), any::<prop::sample::Index>(), any::<prop::sample::Index>(), any::<bool>())
        .prop_map(|(model, pos, a, b, spin_space)| {
            let s = model.sites();
            let cut = if spin_space && model.is_fermionic() {
                EntanglementCut::spin_space(s)
            } else {
                EntanglementCut::spatial(s, pos.index(s + 1)).unwrap()
            };
            let target = if model.is_fermionic() {
                QuantumNumber::new(vec![a.index(s + 1) as i32, b.index(s + 1) as i32])
            } else {
                QuantumNumber::new(vec![2 * a.index(s + 1) as i32 - s as i32])
            };
            (model, cut, target)
        })
}

fn transpose_blocks<T: entwave_core::Scalar>(
    comm: &Communicator,
    blocks: Vec<ColumnBlock<T>>,
    rows: usize,
    cols: usize,
) -> Vec<ColumnBlock<T>> {
    parallel_transpose(comm, Phase::Boundary, blocks, rows, cols).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn table_covers_the_sector((model, cut, target) in problem_strategy()) {
        let bip = Bipartition::new(&model, &cut).unwrap();
        let table = bip.table(&target).unwrap();
        let s = model.sites();
        let expected = if model.is_fermionic() {
            let q = target.components();
            binomial(s, q[0] as i64) * binomial(s, q[1] as i64)
        } else {
            let up = (target.components()[0] + s as i32) / 2;
            binomial(s, up as i64)
        };
        prop_assert_eq!(table.dimension(), expected);
        for w in table.pairs().windows(2) {
            prop_assert!(w[0].left < w[1].left);
        }
        for p in table.pairs() {
            prop_assert_eq!(p.left.compose(&p.right).unwrap(), target.clone());
            prop_assert!(p.d_left > 0 && p.d_right > 0);
        }
    }

    #[test]
    fn transpose_is_an_involution(p in 1usize..10, rows in 0usize..12, cols in 0usize..12, seed in any::<u64>()) {
        let comm = Communicator::new(p, if seed % 2 == 0 { Schedule::RoundRobin } else { Schedule::Parallel });
        let mut x = seed;
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (x >> 11) as f64 / (1u64 << 53) as f64
        };
        let blocks: Vec<ColumnBlock<Complex64>> = balanced_split(cols, p)
            .into_iter()
            .map(|n| ColumnBlock { rows, cols: n, data: (0..rows * n).map(|_| Complex64::new(next(), next())).collect() })
            .collect();
        let t = transpose_blocks(&comm, blocks.clone(), rows, cols);
        let back = transpose_blocks(&comm, t, cols, rows);
        prop_assert_eq!(back, blocks);
        let c = comm.snapshot().phase(Phase::Boundary);
        prop_assert_eq!(c.calls, 2);
        let one = (p * (p - 1) * cols.div_ceil(p) * rows.div_ceil(p)) as u64;
        let other = (p * (p - 1) * rows.div_ceil(p) * cols.div_ceil(p)) as u64;
        prop_assert_eq!(c.elements_padded, one + other);
    }

    #[test]
    fn layout_independent_state_algebra((model, cut, target) in problem_strategy(), p in 2usize..9, seed in any::<u64>()) {
        let bip = Bipartition::new(&model, &cut).unwrap();
        let table = bip.table(&target).unwrap();
        prop_assume!(table.dimension() > 0);
        let serial = Communicator::serial();
        let many = Communicator::new(p, Schedule::RoundRobin);
        let l1 = make_layout(table.clone(), 1).unwrap();
        let lp = make_layout(table, p).unwrap();

        let a1 = BlockWavefunction::<f64>::random(&l1, seed, &serial);
        let ap = BlockWavefunction::<f64>::random(&lp, seed, &many);
        let full = a1.gather_vector(&serial).unwrap();
        prop_assert_eq!(&ap.gather_vector(&many).unwrap(), &full);

        let back = BlockWavefunction::scatter(&lp, &full, &many).unwrap();
        prop_assert_eq!(&back, &ap);
        prop_assert_eq!(&a1.redistribute(&lp, &serial, &many).unwrap(), &ap);

        let b1 = BlockWavefunction::<f64>::random(&l1, seed ^ 0x5555, &serial);
        let bp = BlockWavefunction::<f64>::random(&lp, seed ^ 0x5555, &many);
        prop_assert_eq!(a1.dot(&b1, &serial).unwrap().to_bits(), ap.dot(&bp, &many).unwrap().to_bits());
    }

    #[test]
    fn matvec_is_rank_independent_and_hermitian((model, cut, target) in problem_strategy(), p in 2usize..9, seed in any::<u64>()) {
        let bip = Bipartition::new(&model, &cut).unwrap();
        let table = bip.table(&target).unwrap();
        prop_assume!(table.dimension() > 0);
        let op = build_block_operator(&bip, &table).unwrap();
        let e1 = HamiltonianEngine::new(op.clone(), make_layout(table.clone(), 1).unwrap()).unwrap();
        let ep = HamiltonianEngine::new(op, make_layout(table, p).unwrap()).unwrap();
        let serial = Communicator::serial();
        let many = Communicator::new(p, Schedule::Parallel);

        let x1 = BlockWavefunction::<Complex64>::random(e1.layout(), seed, &serial);
        let xp = BlockWavefunction::<Complex64>::random(ep.layout(), seed, &many);
        let y1 = BlockWavefunction::<Complex64>::random(e1.layout(), !seed, &serial);
        let hx1 = e1.apply(&x1, &serial).unwrap();
        let hxp = ep.apply(&xp, &many).unwrap();
        prop_assert_eq!(hx1.gather_vector(&serial).unwrap(), hxp.gather_vector(&many).unwrap());

        // <y|Hx> = conj(<x|Hy>)
        let hy1 = e1.apply(&y1, &serial).unwrap();
        let a = y1.dot(&hx1, &serial).unwrap();
        let b = x1.dot(&hy1, &serial).unwrap().conj();
        prop_assert!((a - b).norm() <= 1e-10 * (1.0 + a.norm()));
    }
}
