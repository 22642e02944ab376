//! Averages many reports of one client. The estimate converges to the
//! memoized permanent output, not to the clean filter.

use ldprec::attacks;
use ldprec::bloom::BloomParams;
use ldprec::perturb::PrivacyParams;

fn main() -> anyhow::Result<()> {
    let bloom = BloomParams::new(144, 4, 27, 0.1, 4)?;
    let privacy = PrivacyParams::new(0.5, 0.5, 0.75, bloom.k)?;
    let values = ["Horror", "Techno", "Sport11"];
    for observations in [10, 100, 1000, 100_000] {
        let o = attacks::run_averaging_game(&values, &privacy, &bloom, observations, 17)?;
        println!(
            "{observations:>7} reports: distance to clean filter {:>3}, to permanent output {:>3} ({:?})",
            o.hamming_to_clean, o.hamming_to_permanent, o.verdict
        );
    }
    Ok(())
}
