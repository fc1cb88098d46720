use golden_sd::decoder::{decode, exhaustive_ml};
use golden_sd::fxp::FxpConfig;
use golden_sd::harness::{compare_fxp_float, draw_trial, json_summary, run_sweep, trial_seed, SweepConfig, SweepStats};
use golden_sd::model::{snr_to_n0, Constellation, Mode, DIM};

fn qam(size: u32) -> Constellation {
    Constellation::from_qam(size).unwrap()
}

#[test]
fn mean_nodes_non_increasing_in_snr() {
    for (size, mode) in [(4, Mode::Golden2x2), (16, Mode::Golden2x2), (16, Mode::Uncoded4x4)] {
        let snrs: Vec<f64> = (0..=8).map(|k| 4.0 * k as f64).collect();
        let stats = run_sweep(&SweepConfig::new(mode, qam(size), snrs, 10_000, 31)).unwrap();
        for w in stats.points.windows(2) {
            // Sample means carry roughly 1% noise at 10^4 trials.
            assert!(
                w[1].mean_nodes <= w[0].mean_nodes * 1.01,
                "{size}-QAM {mode}: {} dB -> {:.3}, {} dB -> {:.3}",
                w[0].snr_db,
                w[0].mean_nodes,
                w[1].snr_db,
                w[1].mean_nodes
            );
        }
    }
}

#[test]
fn high_snr_nodes_approach_single_path() {
    // One root-to-leaf descent costs n evaluations; the n - 1 rejected
    // siblings on the way back up bring the floor to 2n - 1.
    let stats = run_sweep(&SweepConfig::new(Mode::Golden2x2, qam(4), vec![30.0, 40.0], 20_000, 3)).unwrap();
    let floor = (2 * DIM - 1) as f64;
    for p in &stats.points {
        assert!(p.cer < 1e-3, "CER {} at {} dB", p.cer, p.snr_db);
        assert!(p.mean_nodes >= floor);
        assert!((p.mean_nodes - floor) / floor < 0.30, "mean nodes {}", p.mean_nodes);
        assert_eq!(p.p95_nodes, 2 * DIM as u64 - 1);
    }
}

#[test]
fn visited_nodes_lower_bound_and_exactness() {
    for (size, mode) in [(4, Mode::Uncoded4x4), (16, Mode::Uncoded4x4)] {
        let c = qam(size);
        for (k, snr) in [0.0, 12.0, 24.0].into_iter().enumerate() {
            let n0 = snr_to_n0(snr, &c, mode);
            for t in 0..300 {
                let tr = draw_trial(mode, &c, n0, trial_seed(9, k, t));
                let fast = decode(&tr.y, &tr.factors, &c);
                let slow = exhaustive_ml(&tr.y, &tr.factors, &c).unwrap();
                assert!(fast.visited_nodes >= DIM as u64);
                assert!(fast.visited_nodes <= slow.visited_nodes);
                assert!((fast.metric - slow.metric).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn ber_falls_with_snr() {
    let stats = run_sweep(&SweepConfig::new(Mode::Golden2x2, qam(16), vec![8.0, 14.0, 20.0], 5000, 8)).unwrap();
    for w in stats.points.windows(2) {
        assert!(w[1].ber < w[0].ber);
    }
    for p in &stats.points {
        let bits = p.trials * DIM as u64 * 2;
        assert_eq!(p.ber, p.bit_errors as f64 / bits as f64);
        assert!(p.cer >= p.ber / bits as f64);
        assert!(p.cer <= 1.0);
    }
}

#[test]
fn wide_format_never_diverges() {
    let mut cfg = SweepConfig::new(Mode::Golden2x2, qam(16), vec![5.0, 15.0, 25.0], 1000, 12);
    cfg.fxp = Some(FxpConfig::new("Q12.20".parse().unwrap()));
    let stats = compare_fxp_float(&cfg).unwrap();
    for p in &stats.points {
        assert_eq!(p.divergent, 0, "at {} dB", p.snr_db);
        assert_eq!(p.float.bit_errors, p.fxp.bit_errors);
    }
}

#[test]
fn twelve_bit_sixteen_qam_keeps_node_count() {
    let mut cfg = SweepConfig::new(Mode::Golden2x2, qam(16), vec![16.0, 22.0], 20_000, 13);
    cfg.fxp = Some(FxpConfig::new("Q5.7".parse().unwrap()));
    let stats = compare_fxp_float(&cfg).unwrap();
    for p in &stats.points {
        let rel = (p.fxp.mean_nodes - p.float.mean_nodes).abs() / p.float.mean_nodes;
        assert!(rel < 0.05, "{} dB: {:.2} vs {:.2}", p.snr_db, p.float.mean_nodes, p.fxp.mean_nodes);
        assert!(p.divergence_fraction < 0.05);
    }
}

#[test]
fn fourteen_bit_sixty_four_qam_tracks_float() {
    let mut cfg = SweepConfig::new(Mode::Golden2x2, qam(64), vec![29.0], 50_000, 14);
    cfg.fxp = Some(FxpConfig::new("Q6.8".parse().unwrap()));
    let p = &compare_fxp_float(&cfg).unwrap().points[0];
    assert!(p.fxp.ber <= 1.2 * p.float.ber + 1e-4, "{} vs {}", p.fxp.ber, p.float.ber);
}

#[test]
fn early_stop_across_workers() {
    let mut cfg = SweepConfig::new(Mode::Golden2x2, qam(64), vec![10.0, 20.0, 30.0], 4000, 15);
    cfg.target_errors = Some(50);
    let mut runs = Vec::new();
    for workers in [1, 4] {
        cfg.workers = workers;
        runs.push(run_sweep(&cfg).unwrap());
    }
    let strip = |s: &SweepStats| -> Vec<(u64, u64, u64, f64)> {
        s.points
            .iter()
            .map(|p| (p.trials, p.bit_errors, p.codeword_errors, p.mean_nodes))
            .collect()
    };
    assert_eq!(strip(&runs[0]), strip(&runs[1]));
    for p in &runs[0].points {
        assert!(p.trials <= 4000);
        assert!(p.codeword_errors >= 50 || p.trials == 4000);
    }
}

#[test]
fn json_summary_round_trips() {
    let mut cfg = SweepConfig::new(Mode::Uncoded4x4, qam(64), vec![10.0, 20.0], 200, 16);
    cfg.fxp = Some(FxpConfig::new("Q6.8".parse().unwrap()));
    let stats = run_sweep(&cfg).unwrap();
    let text = json_summary(&stats).unwrap();
    assert!(text.contains("\"uncoded_4x4\""));
    assert!(text.contains("\"Q6.8\""));
    let back: SweepStats = serde_json::from_str(&text).unwrap();
    assert_eq!(back.config, cfg);
    assert_eq!(back.points.len(), 2);
}
