//! The learning adversary: trains the decoder on labeled perturbed reports
//! of the music category and decodes fresh ones. Prints success rates and
//! the confusion matrix at the last budget.

use ldprec::attacks::{self, AdvancedGame};
use ldprec::bloom::BloomParams;
use ldprec::decoder::MlpConfig;
use ldprec::perturb::PrivacyParams;
use ldprec::profile::{self, BuiltinTaxonomy};

fn main() -> anyhow::Result<()> {
    let tax = profile::builtin_taxonomy(BuiltinTaxonomy::Preference);
    let classes = tax.category("music").expect("built-in category").1.classes.clone();
    let bloom = BloomParams::new(144, 4, tax.total_classes(), 0.1, 2)?;
    let game = AdvancedGame {
        category: "music".into(),
        train_size: 4000,
        test_size: 2000,
        class_weights: None,
    };
    let mut last = None;
    for eps in [0.1, 1.2, 2.4, 6.0] {
        let privacy = PrivacyParams::from_epsilon1(eps, 0.5, 0.75, bloom.k)?;
        let outcome = attacks::run_advanced_game(&tax, &game, &privacy, &bloom, &MlpConfig::new(bloom.m, 2, 0), 13)?;
        println!("eps1 = {eps:>4}: success {:.3}", outcome.result.success_rate);
        last = Some(outcome);
    }
    if let Some(outcome) = last {
        print!("\n{}", outcome.report.confusion_csv(&classes));
    }
    Ok(())
}
