use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use qsure::gexpect::{g_expect, Functional, MonteCarloConfig};
use qsure::measures::{generate_batch, sample_driver, MeasureFamily, Member, PathStream, TimeGrid, VolatilitySpec};
use qsure::sde::builtin_coefficients;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn batches_and_estimates_ignore_thread_count() {
    let grid = Arc::new(TimeGrid::<f64>::new(1.0, 50).unwrap());
    let fam = MeasureFamily::new(vec![
        Member::new("rs", VolatilitySpec::regime_switching(vec![1.0, 4.0], 0.2).unwrap()),
        Member::new("c2", VolatilitySpec::constant(2.0).unwrap()),
    ])
    .unwrap();
    let coeffs = builtin_coefficients("gbm", &BTreeMap::new()).unwrap();
    let f = Functional::terminal("X_T", |x| x);
    let cfg = MonteCarloConfig::new(grid.clone(), 5000, 77);
    let run = || {
        let paths = generate_batch(&fam.members()[0], &grid, 77, 3000);
        let g = g_expect(&fam, Some(&coeffs), 1.0, &f, &cfg).unwrap();
        (paths, g.per_measure.iter().map(|e| (e.mean.to_bits(), e.stderr.to_bits())).collect::<Vec<_>>())
    };
    let (p1, e1) = in_pool(1, run);
    let (p8, e8) = in_pool(8, run);
    assert_eq!(p1, p8);
    assert_eq!(e1, e8);
}

proptest! {
    #[test]
    fn driver_regeneration_is_bitwise(seed in any::<u64>(), idx in any::<u64>(), p in 0.0f64..1.0) {
        let grid = Arc::new(TimeGrid::new(0.5, 20).unwrap());
        let spec = VolatilitySpec::mixture(
            VolatilitySpec::constant(1.0).unwrap(),
            VolatilitySpec::regime_switching(vec![1.0, 3.0], p).unwrap(),
            0.5,
        ).unwrap();
        let a = sample_driver(&spec, &grid, &mut PathStream::new(seed, "m", idx));
        let b = sample_driver(&spec, &grid, &mut PathStream::new(seed, "m", idx));
        prop_assert_eq!(&a, &b);
        let c = sample_driver(&spec, &grid, &mut PathStream::new(seed, "m", idx.wrapping_add(1)));
        prop_assert_ne!(a.values(), c.values());
    }
}
