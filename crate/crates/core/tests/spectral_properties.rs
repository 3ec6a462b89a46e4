use cellfree_core::numerics::RMatrix;
use cellfree_core::precoding::PrecoderKind;
use cellfree_core::scenario::{PowerAllocation, Scenario, SystemConfig};
use cellfree_core::spectral::{closed_form_report, j_factor, se_from_sinr, sinr_jacobian, SeReport};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Case {
    cfg: SystemConfig,
    scn: Scenario,
    alloc: PowerAllocation,
}

fn case() -> impl Strategy<Value = Case> {
    (1usize..6, 1usize..40, 1usize..5, prop::collection::vec(1usize..4, 0..3), 1e-3f64..1.0)
        .prop_filter("ZF needs N*L > M+U", |(n, l, u, g, _)| n * l > u + g.len())
        .prop_flat_map(|(n, l, u, groups, noise)| {
            let k_total: usize = groups.iter().sum();
            let m = groups.len();
            (
                Just((n, l, u, groups, noise)),
                prop::collection::vec(1e-2f64..10.0, n * (u + k_total)),
                prop::collection::vec(1e-2f64..1.0, u + k_total),
                prop::collection::vec(1e-2f64..5.0, u + m),
            )
        })
        .prop_map(|((n, l, u, groups, noise), gains, ul, dl)| {
            let m = groups.len();
            let cfg = SystemConfig {
                n_raus: n,
                antennas_per_rau: l,
                n_unicast: u,
                group_sizes: groups.clone(),
                pilot_length: u + m,
                noise_ul: noise,
                noise_dl: noise,
                ..Default::default()
            };
            let beta = RMatrix::from_fn(n, u, |r, c| gains[r * u + c]);
            let mut off = n * u;
            let mut eta = Vec::new();
            let mut q_ul = Vec::new();
            let mut ul_off = u;
            for &k in &groups {
                eta.push(RMatrix::from_fn(n, k, |r, c| gains[off + r * k + c]));
                off += n * k;
                q_ul.push(ul[ul_off..ul_off + k].to_vec());
                ul_off += k;
            }
            let scn = Scenario::from_gains(beta, eta).unwrap();
            let alloc = PowerAllocation {
                p_ul: ul[..u].to_vec(),
                q_ul,
                p_dl: dl[..u].to_vec(),
                q_dl: dl[u..].to_vec(),
                tau: u + m,
            };
            Case { cfg, scn, alloc }
        })
}

fn all_sinr(r: &SeReport) -> Vec<f64> {
    r.sinr_unicast.iter().chain(r.sinr_multicast.iter().flatten()).copied().collect()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn precoder_ordering_follows_j(c in case()) {
        let mrt = all_sinr(&closed_form_report(PrecoderKind::Mrt, &c.scn, &c.alloc, &c.cfg).unwrap());
        let zf = all_sinr(&closed_form_report(PrecoderKind::Zf, &c.scn, &c.alloc, &c.cfg).unwrap());
        let mmse = all_sinr(&closed_form_report(PrecoderKind::Mmse, &c.scn, &c.alloc, &c.cfg).unwrap());
        let a = c.cfg.zf_dimension();
        let l = c.cfg.antennas_per_rau as i64;
        let j_mrt = j_factor(PrecoderKind::Mrt, &c.cfg).unwrap();
        let j_zf = j_factor(PrecoderKind::Zf, &c.cfg).unwrap();
        let j_mmse = j_factor(PrecoderKind::Mmse, &c.cfg).unwrap();
        let nl = c.cfg.total_antennas() as f64;
        prop_assert!(j_mmse > nl && nl > j_zf && j_mmse > j_mrt);
        for i in 0..mrt.len() {
            prop_assert!(mmse[i] >= zf[i]);
            prop_assert_eq!(zf[i] >= mrt[i], a >= l);
            prop_assert!(rel_close(zf[i] / mrt[i], j_zf / j_mrt, 1e-12));
            prop_assert!(rel_close(mmse[i] / zf[i], j_mmse / j_zf, 1e-12));
        }
    }

    #[test]
    fn ray_invariance(c in case(), scale in 1e-3f64..1e3) {
        let base = all_sinr(&closed_form_report(PrecoderKind::Zf, &c.scn, &c.alloc, &c.cfg).unwrap());
        let mut alloc = c.alloc.clone();
        alloc.p_dl.iter_mut().chain(alloc.q_dl.iter_mut()).for_each(|p| *p *= scale);
        let cfg = SystemConfig { noise_dl: c.cfg.noise_dl * scale, ..c.cfg.clone() };
        let scaled = all_sinr(&closed_form_report(PrecoderKind::Zf, &c.scn, &alloc, &cfg).unwrap());
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!(rel_close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn se_monotone_in_downlink_powers(c in case(), bump in 1e-2f64..2.0, stream_seed in any::<usize>()) {
        let u = c.cfg.n_unicast;
        let streams = u + c.cfg.n_groups();
        let s = stream_seed % streams;
        let base = closed_form_report(PrecoderKind::Mrt, &c.scn, &c.alloc, &c.cfg).unwrap();
        let mut alloc = c.alloc.clone();
        if s < u { alloc.p_dl[s] += bump } else { alloc.q_dl[s - u] += bump }
        let after = closed_form_report(PrecoderKind::Mrt, &c.scn, &alloc, &c.cfg).unwrap();
        for k in 0..u {
            if s == k {
                prop_assert!(after.se_unicast[k] > base.se_unicast[k]);
            } else {
                prop_assert!(after.se_unicast[k] <= base.se_unicast[k]);
            }
        }
        for (m, (a, b)) in after.se_multicast.iter().zip(&base.se_multicast).enumerate() {
            for (x, y) in a.iter().zip(b) {
                if s == u + m { prop_assert!(x > y) } else { prop_assert!(x <= y) }
            }
        }
    }

    #[test]
    fn prelog_identity(c in case(), extra in 0usize..400) {
        let t = c.alloc.tau + 1 + extra;
        let cfg = SystemConfig { coherence_length: t, ..c.cfg.clone() };
        let base = closed_form_report(PrecoderKind::Mmse, &c.scn, &c.alloc, &c.cfg).unwrap();
        let r = closed_form_report(PrecoderKind::Mmse, &c.scn, &c.alloc, &cfg).unwrap();
        prop_assert_eq!(&r.sinr_unicast, &base.sinr_unicast);
        for (s, se) in r.sinr_unicast.iter().zip(&r.se_unicast) {
            let want = (1.0 - c.alloc.tau as f64 / t as f64) * (1.0 + s).log2();
            prop_assert!((se - want).abs() <= 1e-15 * want.max(1.0));
            prop_assert_eq!(*se, se_from_sinr(*s, c.alloc.tau, t).unwrap());
        }
    }

    #[test]
    fn jacobian_matches_central_differences(c in case(), kind_ix in 0usize..3) {
        let kind = PrecoderKind::ALL[kind_ix];
        let genes = c.alloc.to_genes();
        let sj = sinr_jacobian(kind, &c.scn, &c.alloc, &c.cfg).unwrap();
        let base = all_sinr(&closed_form_report(kind, &c.scn, &c.alloc, &c.cfg).unwrap());
        prop_assert_eq!(&sj.sinr, &base);
        for g in 0..genes.len() {
            let h = 1e-6 * genes[g].max(1e-3);
            let eval = |delta: f64| {
                let mut x = genes.clone();
                x[g] += delta;
                let a = PowerAllocation::from_genes(&c.cfg, &x, c.alloc.tau).unwrap();
                all_sinr(&closed_form_report(kind, &c.scn, &a, &c.cfg).unwrap())
            };
            let (plus, minus) = (eval(h), eval(-h));
            for o in 0..base.len() {
                let fd = (plus[o] - minus[o]) / (2.0 * h);
                let an = sj.jacobian.get(o, g);
                let scale = base[o].abs() / genes[g].max(1e-3) + an.abs();
                prop_assert!((fd - an).abs() <= 1e-5 * scale, "gene {} output {}: fd {} analytic {}", g, o, fd, an);
            }
        }
    }
}
