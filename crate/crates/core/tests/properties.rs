use airbeam_core::im::ImLayout;
use airbeam_core::model::{
    dbm_to_watts, psk_demodulate, psk_modulate, sample_rayleigh, substream, watts_to_dbm,
};
use airbeam_core::linalg::identity;
use airbeam_core::mu::{sum_rate, zf_precoder, zf_sinr};
use airbeam_core::stats::wilson_interval;
use num_complex::Complex64;
use proptest::prelude::*;

fn layout() -> impl Strategy<Value = ImLayout> {
    (1usize..=3, 0u32..=2, 0u32..=2)
        .prop_map(|(t, m, r)| ImLayout::new(t, 1 << (m + 1), 1 << r).unwrap())
}

proptest! {
    #[test]
    fn dbm_roundtrip(p in -200.0f64..60.0) {
        prop_assert!((watts_to_dbm(dbm_to_watts(p)) - p).abs() < 1e-9);
    }

    #[test]
    fn psk_roundtrip(log_m in 1u32..6, seed in any::<u64>()) {
        let m = 1usize << log_m;
        let index = (seed % m as u64) as usize;
        let point = psk_modulate(index, m).unwrap();
        prop_assert!((point.norm() - 1.0).abs() < 1e-12);
        prop_assert_eq!(psk_demodulate(point * 3.0, m).unwrap(), index);
    }

    #[test]
    fn im_bits_roundtrip(layout in layout(), seed in any::<u64>()) {
        let bits: Vec<u8> = (0..layout.bits()).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
        let frame = layout.map_bits(&bits).unwrap();
        prop_assert!((frame.x.norm_squared() - 1.0).abs() < 1e-12);
        prop_assert!(frame.r < layout.r_x);
        prop_assert_eq!(layout.unmap_frame(frame.r, &frame.x).unwrap(), bits);
    }

    #[test]
    fn sum_rate_grows_with_any_sinr(base in proptest::collection::vec(0.0f64..1e3, 1..6), bump in 1e-6f64..10.0, at in 0usize..6) {
        let mut more = base.clone();
        let i = at % base.len();
        more[i] += bump;
        prop_assert!(sum_rate(&more).unwrap() > sum_rate(&base).unwrap());
    }

    #[test]
    fn wilson_brackets_the_rate(successes in 0u64..500, extra in 0u64..500) {
        let trials = successes + extra.max(1);
        let i = wilson_interval(successes, trials);
        prop_assert!(0.0 <= i.low && i.low <= i.estimate && i.estimate <= i.high && i.high <= 1.0);
    }

    #[test]
    fn zero_forcing_diagonalizes(k in 1usize..5, extra in 0usize..3, seed in any::<u64>(), p in 1e-3f64..10.0) {
        let f = sample_rayleigh(k, k + extra, &mut substream(seed, 0, 0));
        let pre = zf_precoder(&f, p).unwrap();
        let fw = &f * &pre.w;
        let target = identity(k) * Complex64::from(pre.zeta.sqrt());
        prop_assert!((fw - target).norm() <= 1e-8 * pre.zeta.sqrt());
        prop_assert!((pre.w.norm_squared() - p).abs() <= 1e-9 * p);
        let sinrs = zf_sinr(&f, &pre, 1e-3).unwrap();
        prop_assert!(sinrs.iter().all(|s| (s - pre.zeta / 1e-3).abs() <= 1e-8 * s));
    }
}
