//! The core kernels are generic over the real scalar; exercise the f32
//! instantiation end to end at loose single-precision tolerances.

use eigengreedy::affine::chebyshev_grid;
use eigengreedy::eigensolve::{dense_eig, solve_clustered, ClusterTol, EigOptions};
use eigengreedy::generators;
use eigengreedy::lowerbounds::MuEval;
use eigengreedy::subspace::RomState;

#[test]
fn f32_bound_machinery_runs() {
    let fam = generators::example1_family::<f32>();
    let grid = chebyshev_grid(fam.domain(), &[7]).unwrap();
    let opts = EigOptions::<f32> {
        tol: 1e-6,
        cluster: ClusterTol {
            abs: 1e-6,
            rel: 1e-4,
        },
        ..Default::default()
    };
    let mut st = RomState::new(&fam, 2, opts.cluster, 1).unwrap();
    for mu in grid.points.iter().take(3) {
        let solve = solve_clustered(&fam, mu, 2, &opts).unwrap();
        st.insert_snapshot(&fam, mu, &solve).unwrap();
    }
    for mu in &grid.points {
        let ev = MuEval::new(&st, mu).unwrap();
        let sr = ev.srange(1).unwrap();
        let slb = ev.slb(1, sr).unwrap();
        let exact = dense_eig(&fam.assemble(mu).unwrap()).unwrap();
        let scale = 1.0f32 + exact.values[0].abs();
        assert!(slb <= exact.values[0] + 1e-4 * scale, "slb {slb} at {mu:?}");
        assert!(exact.values[0] <= ev.sub(1) + 1e-5 * scale);
    }
}

#[test]
fn f32_spin_generators_match_f64() {
    let f32_fam = generators::xxz_family::<f32>(3).unwrap();
    let f64_fam = generators::xxz_family::<f64>(3).unwrap();
    let a32 = f32_fam.assemble(&[0.5, 1.0]).unwrap();
    let a64 = f64_fam.assemble(&[0.5, 1.0]).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            let d = (a32[(i, j)].re as f64 - a64[(i, j)].re).abs();
            assert!(d < 1e-6, "entry ({i},{j}) differs by {d}");
        }
    }
}
