use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::REPORT_HEADER;
use super::*;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-3.0..3.0))
}

fn periodic(len: usize, period_days: usize, spd: usize, seed: u64) -> GridSeries<f64> {
    let p = period_days * spd;
    let base = random(&[p, 2, 2, 3], seed);
    let frame = 12;
    let values = Tensor::from_fn([len, 2, 2, 3], |i| base.data()[((i / frame) % p) * frame + i % frame]);
    GridSeries::new(values, spd).unwrap()
}

#[test]
fn ha_examples() {
    let c = Tensor::<f64>::full([5, 2, 2, 2], 4.25);
    assert_eq!(ha_forecast(&c, 3).unwrap(), Tensor::full([3, 2, 2, 2], 4.25));
    let x = Tensor::<f64>::from_fn([2, 1, 1, 3], |i| if i < 3 { 0.0 } else { 2.0 });
    assert_eq!(ha_forecast(&x, 4).unwrap(), Tensor::full([4, 1, 1, 3], 1.0));

    let x = random(&[7, 2, 3, 2], 1);
    let y = ha_forecast(&x, 5).unwrap();
    for v in 0..12 {
        let mean = (0..7).map(|t| x.data()[t * 12 + v]).sum::<f64>() / 7.0;
        for t in 0..5 {
            assert_eq!(y.data()[t * 12 + v], mean);
        }
    }
}

#[test]
fn periodic_baselines_are_exact_on_periodic_series() {
    let g = periodic(200, 1, 6, 2);
    let start = 150;
    let truth = g.window(start, 20).unwrap();
    assert_eq!(dh_forecast(&g, start, 20).unwrap(), truth);
    let g = periodic(200, 7, 2, 3);
    assert_eq!(wh_forecast(&g, start, 40).unwrap(), g.window(start, 40).unwrap());
}

#[test]
fn periodic_baseline_needs_one_period() {
    let g = periodic(100, 1, 10, 4);
    assert!(matches!(dh_forecast(&g, 9, 5), Err(Error::InsufficientHistory { .. })));
    assert!(dh_forecast(&g, 10, 5).is_ok());
    assert!(matches!(wh_forecast(&g, 69, 5), Err(Error::InsufficientHistory { .. })));
}

#[test]
fn long_horizons_wrap_onto_last_period() {
    let g = GridSeries::new(random(&[30, 1, 1, 2], 5), 4).unwrap();
    let y = dh_forecast(&g, 20, 10).unwrap();
    for k in 0..10 {
        assert_eq!(&y.data()[k * 2..k * 2 + 2], g.frame(16 + k % 4));
    }
}

proptest! {
    #[test]
    fn dh_wh_zero_error_on_random_periodic(seed in 0u64..1000, spd in 1usize..5, offset in 0usize..1000, horizon in 1usize..40) {
        let g = periodic(12 * 7 * spd, 1, spd, seed);
        let week = 7 * spd;
        let start = week + offset % (g.len() - week - horizon);
        let truth = g.window(start, horizon).unwrap();
        prop_assert_eq!(dh_forecast(&g, start, horizon).unwrap(), truth.clone());
        prop_assert_eq!(wh_forecast(&g, start, horizon).unwrap(), truth);
    }

    #[test]
    fn mae_never_exceeds_rmse(seed in 0u64..1000) {
        let p = random(&[4, 3], seed);
        let t = random(&[4, 3], seed + 1);
        prop_assert!(mae(&p, &t).unwrap() <= rmse(&p, &t).unwrap() + 1e-12);
    }
}

fn nlinear_with(weight: Tensor<f64>) -> (Nlinear, ParamStore<f64>) {
    let (t, h) = (weight.shape()[0], weight.shape()[1]);
    let (m, mut store) = Nlinear::init::<f64>(t, h, 0);
    store.set_value(m.weight, weight);
    (m, store)
}

#[test]
fn nlinear_zero_weight_repeats_last_value() {
    let (m, store) = nlinear_with(Tensor::zeros([6, 3]));
    let x = random(&[2, 6, 1, 2, 2], 6);
    let y = m.predict(&store, &x).unwrap();
    for b in 0..2 {
        for t in 0..3 {
            for v in 0..4 {
                assert_eq!(y.data()[(b * 3 + t) * 4 + v], x.data()[(b * 6 + 5) * 4 + v]);
            }
        }
    }
}

#[test]
fn nlinear_matches_per_variable_evaluation() {
    let w = random(&[6, 3], 7);
    let (m, store) = nlinear_with(w.clone());
    let x = random(&[1, 6, 2, 1, 2], 8);
    let y = m.predict(&store, &x).unwrap();
    for v in 0..4 {
        let series: Vec<f64> = (0..6).map(|t| x.data()[t * 4 + v]).collect();
        let last = series[5];
        for k in 0..3 {
            let expect = series.iter().enumerate().map(|(t, s)| (s - last) * w.at(&[t, k])).sum::<f64>() + last;
            assert!((y.data()[k * 4 + v] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn nlinear_shift_equivariance_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // dyadic weights and integer inputs keep every intermediate exact
    let w = Tensor::from_fn([8, 4], |_| rng.random_range(-16i32..16) as f64 / 8.0);
    let (m, store) = nlinear_with(w);
    let x = Tensor::from_fn([3, 8, 1, 2, 2], |_| rng.random_range(-50i32..50) as f64);
    let y = m.predict(&store, &x).unwrap();
    for c in [-7.0, 3.0, 1024.0] {
        let shifted = m.predict(&store, &x.map(|v| v + c)).unwrap();
        assert_eq!(shifted, y.map(|v| v + c));
    }
}

#[test]
fn metric_examples() {
    let t = random(&[3, 4], 10);
    assert_eq!((mae(&t, &t).unwrap(), rmse(&t, &t).unwrap()), (0.0, 0.0));
    let p = t.map(|v| v + 1.0);
    assert!((mae(&p, &t).unwrap() - 1.0).abs() < 1e-12);
    assert!((rmse(&p, &t).unwrap() - 1.0).abs() < 1e-12);
    let p = Tensor::from_fn([3, 4], |i| t.data()[i] + if i % 2 == 0 { 0.0 } else { 2.0 });
    assert!((mae(&p, &t).unwrap() - 1.0).abs() < 1e-12);
    assert!((rmse(&p, &t).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert!(mae(&t, &Tensor::zeros([4, 3])).is_err());
}

#[test]
fn pooled_accumulation() {
    let (a, b) = (random(&[5], 11), random(&[5], 12));
    let (c, d) = (random(&[7], 13), random(&[7], 14));
    let mut acc = ErrorAccumulator::default();
    acc.add(&a, &b).unwrap();
    acc.add(&c, &d).unwrap();
    let joined_p = Tensor::new([12], a.data().iter().chain(c.data()).copied().collect()).unwrap();
    let joined_t = Tensor::new([12], b.data().iter().chain(d.data()).copied().collect()).unwrap();
    assert!((acc.mae() - mae(&joined_p, &joined_t).unwrap()).abs() < 1e-12);
    assert!((acc.rmse() - rmse(&joined_p, &joined_t).unwrap()).abs() < 1e-12);
}

#[test]
fn report_csv() {
    let mut acc = ErrorAccumulator::default();
    acc.add(&Tensor::<f64>::from_vec([2], vec![1.0, 3.0]), &Tensor::zeros([2])).unwrap();
    let r = ForecastReport::new("HA", 128, 64, &acc);
    assert_eq!(r.csv_row(), "HA,128-64,2.000,2.236");
    let mut out = Vec::new();
    write_reports_csv(&mut out, &[r]).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), format!("{REPORT_HEADER}\nHA,128-64,2.000,2.236\n"));
}
