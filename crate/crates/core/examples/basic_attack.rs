//! The Bayesian single-preference adversary over a grid of budgets and hash
//! counts, with the exact two-round channel and the single-round abstraction.

use ldprec::attacks::{self, AttackSetup, ChannelModel};
use ldprec::bloom::BloomParams;
use ldprec::perturb::PrivacyParams;
use ldprec::profile::{self, BuiltinTaxonomy};

fn main() -> anyhow::Result<()> {
    let tax = profile::builtin_taxonomy(BuiltinTaxonomy::Preference);
    let universe = tax.category("music").expect("built-in category").1.classes.clone();
    println!("chance level 1/{} = {:.3}", universe.len(), 1.0 / universe.len() as f64);
    println!("{:>5} {:>3} {:>8} {:>9}", "eps", "k", "exact", "abstract");
    for k in [3, 5, 7] {
        let bloom = BloomParams::new(144, k, tax.total_classes(), 0.1, 9)?;
        for eps in [0.1, 0.5, 0.85, 2.0, 8.0] {
            let privacy = PrivacyParams::from_epsilon1(eps, 0.5, 0.75, k)?;
            let setup = AttackSetup::new(universe.clone(), bloom, privacy)?;
            let exact = attacks::run_basic_game(&setup, 3000, 1)?;
            let abstracted = setup.with_model(ChannelModel::Abstract { epsilon: eps, delta: k });
            let approx = attacks::run_basic_game(&abstracted, 3000, 1)?;
            println!("{eps:>5} {k:>3} {:>8.3} {:>9.3}", exact.success_rate, approx.success_rate);
        }
    }
    Ok(())
}
