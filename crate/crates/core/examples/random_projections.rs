//! The projection generators and the JL dimension bound.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spar::projection::{gen_cw, gen_gaussian, gen_haar, gen_sparse, jl_min_dim};

fn main() -> spar::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (m, q) = (4, 12);

    let omega: Vec<f64> = (0..q).map(|j| 1.0 / (j + 1) as f64).collect();
    let mats = [
        ("gaussian", gen_gaussian(m, q, &mut rng)),
        ("sparse", gen_sparse(m, q, 1.0 / 3.0, &mut rng)?),
        ("cw", gen_cw(m, q, false, None, &mut rng)?),
        ("cw data", gen_cw(m, q, true, Some(&omega), &mut rng)?),
        ("haar", gen_haar(m, q, &mut rng)?),
    ];
    for (name, phi) in &mats {
        let dense = phi.to_dense();
        let nnz = dense.iter().filter(|v| **v != 0.0).count();
        println!("{name:<9} {m}x{q}, {nnz:>2} nonzeros");
    }
    if let Some(rows) = mats[3].1.cw_rows() {
        println!("cw data rows: {rows:?}");
    }
    for n in [50, 1000, 100_000] {
        println!("JL dimension for {n} points at distortion 0.5: {}", jl_min_dim(n, 0.5, 1.0)?);
    }
    Ok(())
}
