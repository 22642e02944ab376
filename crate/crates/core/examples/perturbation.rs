//! Permanent and instantaneous randomized response on one client's filter,
//! the resulting budgets, and the memoization that keeps the permanent
//! output fixed across sessions.

use ldprec::bloom::{self, BloomParams};
use ldprec::perturb::{self, ClientState, PrivacyParams, ReportRecord};

fn main() -> anyhow::Result<()> {
    let bloom = BloomParams::new(144, 4, 27, 0.1, 3)?;

    println!("{:>6} {:>8} {:>8} {:>8} {:>8}", "eps1", "f", "eps2", "p'", "q'");
    for eps in [0.1, 0.5, 0.8, 2.0, 4.0] {
        let privacy = PrivacyParams::from_epsilon1(eps, 0.5, 0.75, bloom.k)?;
        let b = privacy.budget()?;
        println!(
            "{eps:>6} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            privacy.f, b.epsilon2, b.p_prime, b.q_prime
        );
    }

    let privacy = PrivacyParams::new(0.5, 0.5, 0.75, bloom.k)?;
    let values = ["Drama", "Jazz", "Sport03"];
    let clean = bloom::encode(values, &bloom)?;
    let client = ClientState::new(99);
    let mut reports = Vec::new();
    for _ in 0..3 {
        reports.push(client.perturb_report("alice", &values, &bloom, &privacy)?);
    }
    let permanent = client.memoized("alice", &values, &bloom).expect("memoized after first report");
    println!("\nclean filter      {clean}");
    println!("permanent output  {permanent}  ({} bits differ)", clean.hamming(&permanent));
    for r in &reports {
        println!("session {} report {}", r.session_counter, r.bits);
    }
    println!("\n{}", ReportRecord::new("alice", &reports[0], &bloom, &privacy)?.to_line()?);

    let (p_prime, q_prime) = perturb::channel_probs(0.5, 0.5, 0.75);
    println!("f = 0.5, p = 0.5, q = 0.75: p' = {p_prime}, q' = {q_prime}");
    Ok(())
}
