//! Trains the per-category classifier on perturbed reports and prints its
//! classification report, then saves and reloads the model.

use ldprec::attacks;
use ldprec::bloom::BloomParams;
use ldprec::decoder::{self, MlpConfig, MlpModel};
use ldprec::perturb::PrivacyParams;
use ldprec::profile::{self, BuiltinTaxonomy};

fn main() -> anyhow::Result<()> {
    let eps: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(4.0);
    let tax = profile::builtin_taxonomy(BuiltinTaxonomy::Preference);
    let (cat, movies) = tax.category("movies").expect("built-in category");
    let bloom = BloomParams::new(144, 4, tax.total_classes(), 0.1, 5)?;
    let privacy = PrivacyParams::from_epsilon1(eps, 0.5, 0.75, bloom.k)?;

    let train = attacks::labeled_reports(&tax, cat, 4000, None, &bloom, &privacy, 1)?;
    let test = attacks::labeled_reports(&tax, cat, 1000, None, &bloom, &privacy, 2)?;
    let config = MlpConfig::new(bloom.m, movies.classes.len(), 3);
    let (model, history) = decoder::train_with_history(&train, &config)?;
    println!(
        "eps1 = {eps}: training loss {:.4} -> {:.4}",
        history.epoch_losses.first().unwrap_or(&f64::NAN),
        history.epoch_losses.last().unwrap_or(&f64::NAN)
    );

    let report = decoder::evaluate(&model, &test)?;
    println!("{:<10} {:>9} {:>7} {:>7} {:>7}", "class", "precision", "recall", "f1", "support");
    for (i, name) in movies.classes.iter().enumerate() {
        println!(
            "{name:<10} {:>9.2} {:>7.2} {:>7.2} {:>7}",
            report.precision[i], report.recall[i], report.f1[i], report.support[i]
        );
    }
    println!("accuracy {:.3}, weighted f1 {:.3}", report.accuracy, report.weighted_f1());

    let text = model.to_text()?;
    let reloaded = MlpModel::from_text(text.as_bytes())?;
    assert_eq!(reloaded, model);
    println!("model round-trips through {} bytes of text", text.len());
    Ok(())
}
