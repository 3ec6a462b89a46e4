use cellfree_core::channel::{equivalent_gains, EquivalentGains};
use cellfree_core::montecarlo::{
    estimate_appendix_terms, estimate_sinr, estimate_sinr_multi, McOptions, Receiver, Sampler,
};
use cellfree_core::numerics::{RMatrix, SimRng};
use cellfree_core::precoding::PrecoderKind;
use cellfree_core::scenario::{place_uniform, NominalPowers, PowerAllocation, Scenario, SystemConfig};

fn small() -> (SystemConfig, Scenario, PowerAllocation) {
    let cfg = SystemConfig {
        n_raus: 2,
        antennas_per_rau: 8,
        n_unicast: 2,
        group_sizes: vec![2, 1],
        pilot_length: 4,
        noise_ul: 0.2,
        noise_dl: 0.2,
        ..Default::default()
    };
    let beta = RMatrix::from_fn(2, 2, |n, u| [[1.2, 0.3], [0.4, 0.9]][n][u]);
    let eta = vec![
        RMatrix::from_fn(2, 2, |n, k| [[0.8, 0.2], [0.5, 1.1]][n][k]),
        RMatrix::from_fn(2, 1, |n, _| [0.6, 0.35][n]),
    ];
    let scn = Scenario::from_gains(beta, eta).unwrap();
    let alloc = PowerAllocation {
        p_ul: vec![0.5, 0.3],
        q_ul: vec![vec![0.4, 0.25], vec![0.5]],
        p_dl: vec![1.0, 0.6],
        q_dl: vec![0.8, 0.4],
        tau: 4,
    };
    (cfg, scn, alloc)
}

/// Exact finite-size MRT moments for one receiver.
///
/// With `g` the receiver channel and `a_j` the unnormalized estimate of stream
/// `j`, both zero-mean circular Gaussian and independent across antennas,
/// `E|g^H a_j|^2 = |E g^H a_j|^2 + L sum_n var(g_n) var(a_jn)`. Only the own
/// stream correlates with `g`: `E[g_n^* a_n]` is `lambda_n` for a unicast user
/// and `kappa_n sqrt(tau q_k) eta_nk` for a multicast user, where
/// `kappa_n = S_n / (S_n + sigma^2)` is the group filter.
struct MrtOracle {
    signal: f64,
    stream_power: Vec<f64>,
    sinr: f64,
}

fn mrt_oracle(
    cfg: &SystemConfig,
    scn: &Scenario,
    alloc: &PowerAllocation,
    g: &EquivalentGains,
    rx: Receiver,
) -> MrtOracle {
    let n = cfg.n_raus;
    let l = cfg.antennas_per_rau as f64;
    let tau = alloc.tau as f64;
    let s2 = cfg.noise_ul;
    let channel: Vec<f64> = match rx {
        Receiver::Unicast(k) => scn.beta.column(k),
        Receiver::Multicast(m, k) => scn.eta[m].column(k),
    };
    let mut streams: Vec<(Vec<f64>, f64, f64)> =
        (0..cfg.n_unicast).map(|u| (g.lambda.column(u), g.theta[u], alloc.p_dl[u])).collect();
    for m in 0..cfg.n_groups() {
        streams.push((g.mu.column(m), g.upsilon[m], alloc.q_dl[m]));
    }
    let (own, corr): (usize, Vec<f64>) = match rx {
        Receiver::Unicast(k) => (k, g.lambda.column(k)),
        Receiver::Multicast(m, k) => {
            let eta = &scn.eta[m];
            let c = (0..n)
                .map(|r| {
                    let s: f64 = (0..eta.cols()).map(|j| tau * alloc.q_ul[m][j] * eta.get(r, j)).sum();
                    s / (s + s2) * (tau * alloc.q_ul[m][k]).sqrt() * eta.get(r, k)
                })
                .collect();
            (cfg.n_unicast + m, c)
        }
    };
    let mut stream_power = Vec::new();
    let mut signal = 0.0;
    for (j, (var, total, power)) in streams.iter().enumerate() {
        let scale2 = power / (l * total);
        let spread: f64 = (0..n).map(|r| channel[r] * var[r]).sum::<f64>() * l;
        let mean = if j == own { l * corr.iter().sum::<f64>() } else { 0.0 };
        if j == own {
            signal = scale2.sqrt() * mean;
        }
        stream_power.push(scale2 * (mean * mean + spread));
    }
    let total: f64 = stream_power.iter().sum();
    let s = signal * signal;
    MrtOracle { signal, stream_power, sinr: s / (cfg.noise_dl + total - s) }
}

#[test]
fn mrt_matches_exact_finite_size_moments() {
    let (cfg, scn, alloc) = small();
    let gains = equivalent_gains(&scn, &alloc, &cfg).unwrap();
    let rep = estimate_sinr(PrecoderKind::Mrt, &scn, &alloc, &cfg, McOptions::new(20_000), &SimRng::new(11)).unwrap();
    for rx in &rep.receivers {
        let want = mrt_oracle(&cfg, &scn, &alloc, &gains, rx.receiver);
        let label = rx.receiver.label();
        assert!(
            (rx.signal_re.mean - want.signal).abs() <= 4.0 * rx.signal_re.half_width_95,
            "{label} signal {} vs {}",
            rx.signal_re.mean,
            want.signal
        );
        assert!(rx.signal_im.mean.abs() <= 3.0 * rx.signal_im.half_width_95, "{label} imaginary part");
        for (j, (mc, w)) in rx.stream_power.iter().zip(&want.stream_power).enumerate() {
            assert!((mc.mean - w).abs() <= 4.0 * mc.half_width_95, "{label} stream {j}: {} vs {w}", mc.mean);
        }
        assert!(
            (rx.sinr.mean - want.sinr).abs() <= 4.0 * rx.sinr.half_width_95,
            "{label} sinr {} ± {} vs {}",
            rx.sinr.mean,
            rx.sinr.half_width_95,
            want.sinr
        );
    }
}

#[test]
fn mrt_signal_mean_at_table_scale() {
    let cfg = SystemConfig::default();
    let scn = place_uniform(&cfg, &mut SimRng::new(1)).unwrap();
    let alloc = PowerAllocation::uniform(&cfg, &NominalPowers::default());
    let terms =
        estimate_appendix_terms(&[PrecoderKind::Mrt], &scn, &alloc, &cfg, McOptions::new(10_000), &SimRng::new(2))
            .unwrap();
    let gains = equivalent_gains(&scn, &alloc, &cfg).unwrap();
    let l = cfg.antennas_per_rau as f64;
    for t in terms.iter().filter(|t| t.term == "signal") {
        if let Receiver::Unicast(k) = t.receiver {
            let want = (l * alloc.p_dl[k] * gains.theta[k]).sqrt();
            assert_eq!(t.closed_form, want);
            assert!(t.rel_err <= 0.03, "user {k}: {} vs {want}", t.mc.mean);
        }
    }
}

#[test]
fn confidence_interval_shrinks_with_sample_count() {
    let (cfg, scn, alloc) = small();
    let rng = SimRng::new(21);
    let a = estimate_sinr(PrecoderKind::Zf, &scn, &alloc, &cfg, McOptions::new(4_000), &rng).unwrap();
    let b = estimate_sinr(PrecoderKind::Zf, &scn, &alloc, &cfg, McOptions::new(8_000), &rng).unwrap();
    for (x, y) in a.receivers.iter().zip(&b.receivers) {
        let ratio = y.sinr.half_width_95 / x.sinr.half_width_95;
        let want = std::f64::consts::FRAC_1_SQRT_2;
        assert!((ratio - want).abs() <= 0.15 * want, "{}: ratio {ratio}", x.receiver.label());
    }
}

#[test]
fn pilot_and_statistical_samplers_agree() {
    let (cfg, scn, alloc) = small();
    let stat =
        estimate_sinr_multi(&PrecoderKind::ALL, &scn, &alloc, &cfg, McOptions::new(10_000), &SimRng::new(31)).unwrap();
    let opts = McOptions { n_real: 10_000, sampler: Sampler::Pilot };
    let pilot = estimate_sinr_multi(&PrecoderKind::ALL, &scn, &alloc, &cfg, opts, &SimRng::new(32)).unwrap();
    for (s, p) in stat.iter().zip(&pilot) {
        for (a, b) in s.receivers.iter().zip(&p.receivers) {
            assert!(
                (a.sinr.mean - b.sinr.mean).abs() <= a.sinr.half_width_95 + b.sinr.half_width_95,
                "{} {}: {} vs {}",
                s.kind,
                a.receiver.label(),
                a.sinr.mean,
                b.sinr.mean
            );
        }
    }
}

#[test]
fn identical_seed_is_bit_identical() {
    let (cfg, scn, alloc) = small();
    let run = || {
        estimate_sinr(PrecoderKind::Mmse, &scn, &alloc, &cfg, McOptions::new(500), &SimRng::new(9))
            .unwrap()
            .receivers
            .iter()
            .map(|r| (r.sinr.mean.to_bits(), r.sinr.half_width_95.to_bits()))
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
#[ignore = "the closed-form cross terms scale as 1/(NL) while the exact ones do not, so the gap grows with L"]
fn appendix_error_decreases_with_antennas() {
    let mut errs = Vec::new();
    for l in [10, 30, 100] {
        let cfg = SystemConfig { antennas_per_rau: l, ..Default::default() };
        let scn = place_uniform(&cfg, &mut SimRng::new(1)).unwrap();
        let alloc = PowerAllocation::uniform(&cfg, &NominalPowers::default());
        let kinds = [PrecoderKind::Mrt, PrecoderKind::Zf, PrecoderKind::Mmse];
        let kinds: Vec<PrecoderKind> =
            kinds.into_iter().filter(|k| *k == PrecoderKind::Mrt || cfg.zf_dimension() > 0).collect();
        let terms =
            estimate_appendix_terms(&kinds, &scn, &alloc, &cfg, McOptions::new(2_000), &SimRng::new(2)).unwrap();
        errs.push(terms.iter().map(|t| t.rel_err).sum::<f64>() / terms.len() as f64);
    }
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "mean relative errors {errs:?}");
}
