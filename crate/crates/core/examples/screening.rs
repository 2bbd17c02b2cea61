//! Screening coefficients and how index sets are drawn from them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spar::data::{generate_synthetic, SyntheticSpec};
use spar::ensemble::standardize;
use spar::screening::{compute_screening, select_screened};
use spar::{FamilySpec, Plugins, ScreenSpec, SelectionType};

fn main() -> spar::Result<()> {
    let spec = SyntheticSpec {
        n: 100,
        p: 400,
        n_active: 10,
        sigma2: 4.0,
        ..SyntheticSpec::default()
    };
    let (d, truth) = generate_synthetic(&spec, 3)?;
    let (x, y, _) = standardize(&d.x, &d.y, FamilySpec::gaussian())?;

    for screen in [ScreenSpec::cor(), ScreenSpec::marglik(), ScreenSpec::ridge()] {
        let sr = compute_screening(&x, &y, FamilySpec::gaussian(), &screen, &Plugins::new())?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let top = select_screened(&sr, 40, SelectionType::Fixed, &mut rng);
        let drawn = select_screened(&sr, 40, SelectionType::Prob, &mut rng);
        let found = |idx: &[usize]| truth.active.iter().filter(|j| idx.contains(j)).count();
        println!(
            "{:<8} top-40 holds {:>2}/10 true predictors, a probabilistic draw holds {:>2}/10",
            sr.method.to_string(),
            found(&top),
            found(&drawn)
        );
    }
    Ok(())
}
