//! Elbow scan over K on clean archetype profiles, then the matched accuracy
//! between the clean clustering and the clustering of a noisy copy.

use ldprec::clustering::{self, KmeansOptions};
use ldprec::profile::{self, ArchetypeMixture, BuiltinTaxonomy, Profile};
use ldprec::rng;
use rand::Rng;

fn main() -> anyhow::Result<()> {
    let tax = profile::builtin_taxonomy(BuiltinTaxonomy::Preference);
    let mixture = ArchetypeMixture::spread(&tax, 4, 0.85)?;
    let (data, _) = profile::generate_archetype_dataset(&tax, &mixture, 2000, None, 21)?;
    let features = data
        .profiles
        .iter()
        .map(|p| clustering::one_hot(&tax, p))
        .collect::<Result<Vec<_>, _>>()?;

    let opts = KmeansOptions::default();
    let scan = clustering::elbow_scan(&features, 1, 8, 5, &opts)?;
    for (k, w) in &scan {
        println!("K = {k}: WCSS {w:.1}");
    }
    println!("elbow at K = {:?}", clustering::elbow_point(&scan));

    // swap one category's class for 15% of the profiles
    let mut r = rng::substream(8, &[]);
    let noisy = data
        .profiles
        .iter()
        .map(|p| {
            let mut sel = p.selections.clone();
            if r.gen_bool(0.15) {
                let c = r.gen_range(0..sel.len());
                sel[c] = r.gen_range(0..tax.class_counts()[c]);
            }
            clustering::one_hot(&tax, &Profile::new(sel))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let outcome = clustering::clustering_utility(&features, &noisy, 4, 5, &opts)?;
    println!("matched accuracy with 15% noisy profiles: {:.3}", outcome.matched_accuracy);
    Ok(())
}
