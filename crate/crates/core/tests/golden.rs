//! Reference values produced by the brute-force oracle.
//!
//! Regenerate with `QRULER_REGEN_GOLDEN=1 cargo test -p qruler-core --test golden -- --ignored`.

use std::path::PathBuf;

use qruler_core::ion::build_dimensionless_model;
use qruler_core::lattice::{build_mode_basis, RulerConfig};
use qruler_core::measurement::{build_box_spec, cstar, cstar_from_kernels, doubled_kernels};
use qruler_core::oracle::{oracle_cstar, oracle_kernel_value, GridSpec, MIN_MC_SAMPLES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
struct KernelPoint {
    m: u8,
    m_prime: u8,
    u4: [f64; 4],
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct KernelGolden {
    n: usize,
    lambda: f64,
    s: f64,
    i1: i64,
    i2: i64,
    seed: u64,
    grid: GridSpec,
    points: Vec<KernelPoint>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CStarGolden {
    n: usize,
    lambda: f64,
    s: f64,
    c: f64,
    i1: i64,
    i2: i64,
    seed: u64,
    samples: usize,
    value: f64,
    std_error: f64,
}

fn path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn load<T: for<'de> Deserialize<'de>>(name: &str) -> T {
    let text = std::fs::read_to_string(path(name)).expect("golden file present");
    serde_json::from_str(&text).expect("golden file parses")
}

#[test]
#[ignore]
fn regenerate_golden_files() {
    if std::env::var_os("QRULER_REGEN_GOLDEN").is_none() {
        eprintln!("QRULER_REGEN_GOLDEN not set, leaving golden files alone");
        return;
    }
    let basis = build_mode_basis(&RulerConfig::dimensionless(5, 0.0)).unwrap();
    let model = build_dimensionless_model(&basis, 1.0).unwrap();
    let (amps, _) = doubled_kernels(-1, 1, &model, &basis).unwrap();
    let spec = build_box_spec(1.0, -1, 1, &amps, &basis).unwrap();
    let seed = 31;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = GridSpec::default();
    let mut points = Vec::new();
    for (m, mp) in [(1u8, 1u8), (1, 2), (2, 1), (2, 2), (1, 2), (2, 2)] {
        let mut u4 = [0.0; 4];
        for (d, slot) in u4.iter_mut().enumerate() {
            let (l, br) = if d < 2 { (d, m as usize - 1) } else { (d - 2, mp as usize - 1) };
            *slot = spec.centers[l][br] + spec.halfwidths[l] * rng.random_range(-1.0..1.0);
        }
        let value = oracle_kernel_value(m, mp, -1, 1, u4, &model, &basis, &grid).unwrap();
        points.push(KernelPoint { m, m_prime: mp, u4, value });
    }
    let kernel = KernelGolden { n: 5, lambda: 1.0, s: 0.0, i1: -1, i2: 1, seed, grid, points };
    std::fs::write(path("kernel_n5.json"), serde_json::to_string_pretty(&kernel).unwrap()).unwrap();

    let basis = build_mode_basis(&RulerConfig::dimensionless(7, 0.0)).unwrap();
    let model = build_dimensionless_model(&basis, 1.0).unwrap();
    let seed = 20_261_016;
    let est = oracle_cstar(-1, 1, 0.1, &model, &basis, MIN_MC_SAMPLES, seed).unwrap();
    let golden = CStarGolden {
        n: 7,
        lambda: 1.0,
        s: 0.0,
        c: 0.1,
        i1: -1,
        i2: 1,
        seed,
        samples: est.samples,
        value: est.value,
        std_error: est.std_error,
    };
    std::fs::write(path("cstar_n7.json"), serde_json::to_string_pretty(&golden).unwrap()).unwrap();
}

#[test]
fn kernel_values_match_golden() {
    let g: KernelGolden = load("kernel_n5.json");
    let basis = build_mode_basis(&RulerConfig::dimensionless(g.n, g.s)).unwrap();
    let model = build_dimensionless_model(&basis, g.lambda).unwrap();
    let (_, kernels) = doubled_kernels(g.i1, g.i2, &model, &basis).unwrap();
    for p in &g.points {
        let v = kernels[p.m as usize - 1][p.m_prime as usize - 1].eval(&p.u4);
        assert!((v - p.value).abs() < 1e-6 * p.value, "{p:?}: main path {v}");
    }
}

#[test]
fn cstar_matches_golden() {
    let g: CStarGolden = load("cstar_n7.json");
    let basis = build_mode_basis(&RulerConfig::dimensionless(g.n, g.s)).unwrap();
    let model = build_dimensionless_model(&basis, g.lambda).unwrap();
    let main = cstar(g.i1, g.i2, g.c, &model, &basis).unwrap().cstar;
    assert!((main - g.value).abs() <= 3.0 * g.std_error, "main {main} vs golden {g:?}");
    // Same answer through the kernel-level entry point.
    let (amps, kernels) = doubled_kernels(g.i1, g.i2, &model, &basis).unwrap();
    let spec = build_box_spec(g.c, g.i1, g.i2, &amps, &basis).unwrap();
    assert_eq!(cstar_from_kernels(g.i1, g.i2, &kernels, &spec).unwrap().cstar, main);
}
