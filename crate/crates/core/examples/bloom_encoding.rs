//! Sizes a Bloom filter for the preference universe, encodes a profile and
//! checks membership and false-positive behaviour.

use ldprec::bloom::{self, BloomParams};
use ldprec::profile::{self, BuiltinTaxonomy, Profile};

fn main() -> anyhow::Result<()> {
    let tax = profile::builtin_taxonomy(BuiltinTaxonomy::Preference);
    let n = tax.total_classes();
    let params = BloomParams::optimal(n, 0.1, 11)?;
    println!("n = {n}, f_p = 0.1 -> m = {}, k = {}", params.m, params.k);
    println!("k for m = 144: {}", bloom::optimal_k(144, n)?);

    let profile = Profile::new(vec![0, 4, 2]);
    let values = profile.values(&tax);
    let bv = bloom::encode(values.iter().copied(), &params)?;
    println!("{values:?} -> {} bits set", bv.count_ones());
    println!("hex: {bv}");

    let universe = tax.universe();
    let mut false_positives = 0;
    for v in &universe {
        let hit = bloom::contains(&bv, v, &params)?;
        let member = values.contains(&v.as_str());
        assert!(!member || hit, "Bloom filters have no false negatives");
        if hit && !member {
            false_positives += 1;
        }
    }
    println!("false positives among the other {} classes: {false_positives}", universe.len() - values.len());
    Ok(())
}
