use std::io::BufReader;

use ldprec::attacks::{self, AttackResult};
use ldprec::bloom::{self, BitVector, BloomParams};
use ldprec::clustering;
use ldprec::decoder::{self, MlpConfig, MlpModel};
use ldprec::perturb::{ClientState, PrivacyParams, ReportRecord};
use ldprec::profile::{self, BuiltinTaxonomy, LabeledDataset};

#[test]
fn dataset_file_round_trip_through_disk() {
    let tax = profile::builtin_taxonomy(BuiltinTaxonomy::Flight);
    let data = profile::generate_dataset(&tax, 50, None, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.txt");
    data.write_to(std::fs::File::create(&path).unwrap()).unwrap();
    let back = LabeledDataset::read_from(BufReader::new(std::fs::File::open(&path).unwrap()), None).unwrap();
    assert_eq!(back, data);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# taxonomy=flight seed=3\n"));
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn bitvector_hex_is_length_prefixed_and_lsb_first() {
    let bv = BitVector::from_indices(10, [3, 6]);
    assert_eq!(bv.to_hex_string(), "10:4800");
    assert_eq!("10:4800".parse::<BitVector>().unwrap(), bv);
    assert!("10:4804".parse::<BitVector>().is_err(), "padding bits must be zero");
    assert!("12:48".parse::<BitVector>().is_err());
    let json = serde_json::to_string(&bv).unwrap();
    assert_eq!(json, "\"10:4800\"");
}

#[test]
fn report_jsonl_replays_bit_exactly() {
    let bloom = BloomParams::new(64, 3, 27, 0.1, 1).unwrap();
    let privacy = PrivacyParams::new(0.4, 0.3, 0.8, 3).unwrap();
    let state = ClientState::new(5);
    let mut lines = String::new();
    let mut originals = Vec::new();
    for i in 0..20 {
        let id = format!("c{i}");
        let r = state.perturb_report(&id, &["Jazz", "Drama"], &bloom, &privacy).unwrap();
        let rec = ReportRecord::new(&id, &r, &bloom, &privacy).unwrap();
        lines.push_str(&rec.to_line().unwrap());
        lines.push('\n');
        originals.push(rec);
    }
    let parsed: Vec<ReportRecord> = lines.lines().map(|l| ReportRecord::from_line(l).unwrap()).collect();
    assert_eq!(parsed, originals);
    let v: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    for key in ["client_id", "bits", "m", "k", "f", "p", "q", "epsilon1", "epsilon2", "session_counter"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(ReportRecord::from_line("{\"client_id\":1}").is_err());
}

#[test]
fn noiseless_report_serializes_unbounded_budgets() {
    let bloom = BloomParams::new(32, 2, 27, 0.1, 1).unwrap();
    let privacy = PrivacyParams::noiseless(2);
    let r = ClientState::new(1).perturb_report("x", &["Rock"], &bloom, &privacy).unwrap();
    let line = ReportRecord::new("x", &r, &bloom, &privacy).unwrap().to_line().unwrap();
    assert!(line.contains("\"epsilon1\":\"unbounded\""), "{line}");
    assert_eq!(r.bits, bloom::encode(["Rock"], &bloom).unwrap());
    let back = ReportRecord::from_line(&line).unwrap();
    assert!(back.epsilon1.is_infinite());
}

#[test]
fn model_text_round_trip_preserves_predictions() {
    let tax = profile::builtin_taxonomy(BuiltinTaxonomy::Preference);
    let bloom = BloomParams::new(64, 2, 27, 0.1, 1).unwrap();
    let privacy = PrivacyParams::from_epsilon1(3.0, 0.5, 0.75, 2).unwrap();
    let data = attacks::labeled_reports(&tax, 1, 200, None, &bloom, &privacy, 4).unwrap();
    let cfg = MlpConfig {
        epochs: 3,
        ..MlpConfig::new(64, 8, 2)
    };
    let model = decoder::train(&data, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.txt");
    std::fs::write(&path, model.to_text().unwrap()).unwrap();
    let back = MlpModel::from_text(BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    for (bv, _) in &data {
        assert_eq!(decoder::predict(&back, bv).unwrap(), decoder::predict(&model, bv).unwrap());
    }
    assert!(MlpModel::from_text("garbage\n".as_bytes()).is_err());
}

#[test]
fn clustering_csv_layout() {
    let pts = vec![vec![0.0], vec![0.1], vec![5.0], vec![5.1]];
    let res = clustering::kmeans(&pts, 2, 1, 100, 1e-9).unwrap();
    let csv = res.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "K,wcss,iterations");
    assert!(lines[1].starts_with("2,"));
    assert_eq!(lines[2], "index,assignment");
    assert_eq!(lines.len(), 3 + pts.len());
}

#[test]
fn attack_csv_layout() {
    let r = AttackResult::from_log(vec![(0, 0), (1, 2), (3, 3), (1, 1)]);
    let csv = attacks::attack_grid_csv(&[(0.5, 3, &r)]);
    assert_eq!(csv, "epsilon,k,trials,successes,success_rate\n0.5,3,4,3,0.75\n");
}
