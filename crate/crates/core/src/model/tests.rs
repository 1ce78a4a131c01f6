use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::embedding::TubeGeometry;
use crate::numerics::{finite_diff_grad, max_rel_error, Gradients};
use crate::tvf::TemporalKind;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

fn desk(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        input_len: 64,
        horizon: 32,
        channels: 2,
        height: 4,
        width: 4,
        d_model: 16,
        depth: 3,
        g: 4,
        heads: 2,
        d_qkv: 8,
        dropout: 0.0,
        ..ModelConfig::default()
    }
}

#[test]
fn variant_table() {
    use Mechanism::*;
    let rows = [
        ("AD", TemporalKind::Attention, Dictionary),
        ("MD", TemporalKind::Mixer, Dictionary),
        ("AL", TemporalKind::Attention, LowRank),
        ("AA", TemporalKind::Attention, Additive),
        ("AF", TemporalKind::Attention, Full),
        ("TS", TemporalKind::None, Dictionary),
        ("ViT", TemporalKind::Attention, Dictionary),
    ];
    for (name, temporal, mech) in rows {
        let spec = name.parse::<Variant>().unwrap().spec();
        assert_eq!((spec.temporal, spec.mechanism), (temporal, mech), "{name}");
        assert_eq!(spec.joint_tokens, name == "TS");
        assert_eq!(spec.tokenization == Tokenization::Tube, name == "ViT");
    }
    assert!(matches!("XX".parse::<Variant>(), Err(Error::UnknownVariant(_))));
    assert_eq!("SUMformer-ad".parse::<Variant>().unwrap(), Variant::Ad);
}

#[test]
fn ts_allocates_no_temporal_block() {
    let (model, _) = Model::init::<f32>(&desk(Variant::Ts), 0).unwrap();
    for l in model.layers() {
        assert!(l.block.temporal.is_none());
        assert!(matches!(l.block.inter_series(), crate::tvf::InterSeries::Joint(_)));
    }
    let (model, _) = Model::init::<f32>(&desk(Variant::Ad), 0).unwrap();
    assert!(model.layers().iter().all(|l| l.block.temporal.is_some()));
}

#[test]
fn default_trace_and_text_roundtrip() {
    let cfg = ModelConfig::default();
    assert_eq!(cfg.n_seg_trace().unwrap(), [8, 4, 2, 1, 1]);
    assert_eq!(cfg.keep_bins(), 33);
    let mut other = desk(Variant::Vit);
    other.keep_bins = Some(7);
    other.dropout = 0.25;
    for c in [cfg, other] {
        assert_eq!(ModelConfig::from_text(&c.to_text()).unwrap(), c);
    }
    assert!(ModelConfig::from_text("variant = AD\ncolour = red\n").is_err());
    assert!(ModelConfig::from_text("variant = QQ\n").is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = desk(Variant::Ad);
    c.input_len = 60;
    assert!(matches!(c.validate(), Err(Error::Divisibility { .. })));
    let mut c = desk(Variant::Ad);
    c.input_len = 48;
    c.l_seg = 16;
    assert!(c.validate().is_err(), "3 patches cannot merge in pairs");
    let mut c = desk(Variant::Vit);
    c.l_spatial = 3;
    assert!(c.validate().is_err());
    let mut c = desk(Variant::Ad);
    c.keep_bins = Some(40);
    assert!(c.validate().is_err());
}

#[test]
fn forecast_shape_for_full_grid() {
    let cfg = ModelConfig {
        d_model: 8,
        g: 8,
        heads: 1,
        d_qkv: 8,
        ..ModelConfig::default()
    };
    let (model, store) = Model::init::<f32>(&cfg, 1).unwrap();
    let window = Tensor::full([128, 2, 32, 32], 0.5f32);
    let y = model.predict(&store, &window).unwrap();
    assert_eq!(y.shape(), &[128, 2, 32, 32]);
    assert!(y.all_finite());
    let bad = Tensor::full([64, 2, 32, 32], 0.5f32);
    assert!(model.predict(&store, &bad).is_err());
}

#[test]
fn zero_parameters_forecast_zero() {
    for v in Variant::ALL {
        let (model, mut store) = Model::init::<f64>(&desk(v), 2).unwrap();
        for p in store.iter_mut() {
            p.value = Tensor::zeros(p.value.shape().to_vec());
        }
        let y = model.predict(&store, &random(&[64, 2, 4, 4], 3)).unwrap();
        assert_eq!(y.max_abs(), 0.0, "{v}");
    }
}

#[test]
fn every_variant_forecasts_and_backpropagates() {
    for v in Variant::ALL {
        let cfg = desk(v);
        let (model, mut store) = Model::init::<f32>(&cfg, 4).unwrap();
        let x = random(&[2, 64, 2, 4, 4], 5).cast::<f32>();
        let target = random(&[2, 32, 2, 4, 4], 6).cast::<f32>();
        let mut tape = Tape::training(7);
        let y = model.forward(&mut tape, &store, &x).unwrap();
        assert_eq!(tape.shape(y), &[2, 32, 2, 4, 4], "{v}");
        let t = tape.constant(target);
        let loss = tape.mse(y, t).unwrap();
        let grads = tape.backward(loss).unwrap();
        let got: Vec<_> = grads.params().map(|(id, g)| (id, g.max_abs())).collect();
        for p in store.iter() {
            let g = got.iter().find(|(id, _)| *id == p.id()).map(|(_, g)| *g);
            assert!(g.is_some_and(|g| g > 0.0), "{v}: {} has no gradient", p.name());
        }
        store.accumulate(&grads, 1.0);
    }
}

#[test]
fn param_counts() {
    let taxibj = ModelConfig::default();
    let (_, store) = Model::init::<f32>(&taxibj, 0).unwrap();
    assert_eq!(store.by_name("embed.w_pos").unwrap().value.len(), 2_097_152);
    assert_eq!(Model::param_count(&taxibj).unwrap(), store.scalar_count());

    let mut prev = 0;
    for d in [8, 16, 32, 64] {
        let n = Model::param_count(&ModelConfig { d_model: d, ..desk(Variant::Ad) }).unwrap();
        assert!(n > prev);
        prev = n;
    }

    let ad = desk(Variant::Ad);
    let af = desk(Variant::Af);
    let (d, w) = (ad.d_model, ad.heads * ad.d_qkv);
    let mhsa = 3 * d * w + w * d + d;
    let dictionary_extra = ad.g * d + mhsa;
    assert_eq!(
        Model::param_count(&ad).unwrap() - Model::param_count(&af).unwrap(),
        ad.depth * dictionary_extra
    );
}

#[test]
fn full_equals_identity_low_rank_model() {
    let af_cfg = desk(Variant::Af);
    let al_cfg = ModelConfig {
        variant: Variant::Al,
        g: af_cfg.variables(),
        ..af_cfg.clone()
    };
    let (af, af_store) = Model::init::<f64>(&af_cfg, 8).unwrap();
    let (al, mut al_store) = Model::init::<f64>(&al_cfg, 8).unwrap();
    let names: Vec<String> = al_store.iter().map(|p| p.name().to_string()).collect();
    for name in names {
        let id = al_store.by_name(&name).unwrap().id();
        let value = match af_store.by_name(&name) {
            Some(p) => p.value.clone(),
            None => {
                assert!(name.ends_with("w_lin"), "{name}");
                Tensor::eye(af_cfg.variables())
            }
        };
        al_store.set_value(id, value);
    }
    let x = random(&[64, 2, 4, 4], 9);
    let a = af.predict(&af_store, &x).unwrap();
    let b = al.predict(&al_store, &x).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-9, "{}", a.max_abs_diff(&b));
}

#[test]
fn permuting_variables_with_their_parameters() {
    let g = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut perm: Vec<usize> = (0..g).collect();
    for i in (1..g).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    for v in [Variant::Ad, Variant::Md, Variant::Al, Variant::Aa, Variant::Af] {
        let cfg = desk(v);
        let (model, store) = Model::init::<f64>(&cfg, 11).unwrap();
        let mut permuted = store.clone();
        let pos = store.by_name("embed.w_pos").unwrap();
        let row = pos.value.len() / g;
        let moved = Tensor::from_fn(pos.value.shape().to_vec(), |i| pos.value.data()[perm[i / row] * row + i % row]);
        permuted.set_value(pos.id(), moved);
        for p in store.iter().filter(|p| p.name().ends_with("w_lin")) {
            let w = &p.value;
            let moved = Tensor::from_fn(w.shape().to_vec(), |i| w.data()[(i / g) * g + perm[i % g]]);
            permuted.set_value(p.id(), moved);
        }
        let x = random(&[64, g], 12);
        let xp = Tensor::from_fn([64, g], |i| x.data()[(i / g) * g + perm[i % g]]);
        let y = model.predict(&store, &x.reshape([64, 2, 4, 4]).unwrap()).unwrap();
        let yp = model.predict(&permuted, &xp.reshape([64, 2, 4, 4]).unwrap()).unwrap();
        for t in 0..32 {
            for (i, &p) in perm.iter().enumerate() {
                let (a, b) = (yp.data()[t * g + i], y.data()[t * g + p]);
                assert!((a - b).abs() < 1e-5, "{v}");
            }
        }
    }
}

#[test]
fn tube_tokens_match_geometry() {
    let cfg = desk(Variant::Vit);
    let (model, _) = Model::init::<f64>(&cfg, 0).unwrap();
    let frames = random(&[64, 2, 4, 4], 13);
    let batch = frames.clone().reshape([1, 64, 2, 4, 4]).unwrap();
    let tokens = model.tokenize(&batch).unwrap();
    let geo = TubeGeometry::new(2, 4, 4, 2, 16).unwrap();
    let expected = geo.tubes(&frames).unwrap();
    assert_eq!(tokens.data(), expected.data());
    assert_eq!(cfg.tokens(), 4);
    let single = ModelConfig { l_spatial: 1, ..cfg };
    assert_eq!(single.tokenization(), Tokenization::SuperMv);
}

#[test]
fn whole_model_gradients() {
    let cfg = ModelConfig {
        variant: Variant::Ad,
        input_len: 8,
        horizon: 3,
        channels: 3,
        height: 1,
        width: 1,
        l_seg: 4,
        d_model: 4,
        depth: 2,
        r_win: 2,
        g: 2,
        heads: 2,
        d_qkv: 2,
        keep_bins: None,
        l_spatial: 1,
        dropout: 0.0,
    };
    let (model, mut store) = Model::init::<f64>(&cfg, 14).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for p in store.iter_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
    }
    let x = random(&[1, 8, 3, 1, 1], 16);
    let target = random(&[1, 3, 3, 1, 1], 17);
    let loss = |store: &ParamStore<f64>, x: &Tensor<f64>| {
        let mut tape = Tape::new();
        let y = model.forward(&mut tape, store, x).unwrap();
        let t = tape.constant(target.clone());
        let l = tape.mse(y, t).unwrap();
        (tape, l)
    };
    let (tape, l) = loss(&store, &x);
    let grads: Gradients<f64> = tape.backward(l).unwrap();
    let analytic: Vec<_> = grads.params().map(|(id, g)| (id, g.clone())).collect();
    let ids: Vec<_> = store.iter().map(|p| (p.id(), p.name().to_string())).collect();
    for (id, name) in ids {
        let numeric = finite_diff_grad(&mut store, id, 1e-5, |s| {
            let (t, l) = loss(s, &x);
            t.value(l).data()[0]
        });
        let a = &analytic.iter().find(|(i, _)| *i == id).unwrap().1;
        let err = max_rel_error(a, &numeric);
        assert!(err < 1e-4, "{name}: {err:e}");
    }
}

#[test]
fn checkpoint_roundtrip_is_byte_exact() {
    let cfg = desk(Variant::Md);
    let (model, store) = Model::init::<f32>(&cfg, 18).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &cfg, &store).unwrap();
    assert_eq!(&bytes[..4], b"SUMF");
    let (loaded, loaded_store) = read_checkpoint::<f32>(bytes.as_slice()).unwrap();
    assert_eq!(loaded.config(), &cfg);
    let mut again = Vec::new();
    write_checkpoint(&mut again, loaded.config(), &loaded_store).unwrap();
    assert_eq!(bytes, again);
    let x = random(&[64, 2, 4, 4], 19).cast::<f32>();
    assert_eq!(model.predict(&store, &x).unwrap(), loaded.predict(&loaded_store, &x).unwrap());

    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"XXXX");
    assert!(matches!(read_checkpoint::<f32>(bad.as_slice()), Err(Error::BadMagic { .. })));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(read_checkpoint::<f32>(bad.as_slice()), Err(Error::VersionMismatch { .. })));
    let short = &bytes[..bytes.len() - 3];
    assert!(matches!(read_checkpoint::<f32>(short), Err(Error::Truncated { .. })));
}

#[test]
fn attention_export() {
    let cfg = desk(Variant::Af);
    let (model, store) = Model::init::<f64>(&cfg, 20).unwrap();
    let x = random(&[64, 2, 4, 4], 21);
    for (layer, patch) in [(0, 0), (0, 3), (1, 1), (2, 0)] {
        let row = model.export_attention(&store, &x, 5, layer, patch).unwrap();
        assert_eq!(row.len(), 32);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
    assert!(model.export_attention(&store, &x, 5, 0, 4).is_err());
    assert!(model.export_attention(&store, &x, 32, 0, 0).is_err());
    let (ad, ad_store) = Model::init::<f64>(&desk(Variant::Ad), 20).unwrap();
    assert!(matches!(
        ad.export_attention(&ad_store, &x, 0, 0, 0),
        Err(Error::UnsupportedMechanism(_))
    ));
}

#[test]
fn initialisation_is_seeded() {
    let cfg = desk(Variant::Ad);
    let (_, a) = Model::init::<f32>(&cfg, 22).unwrap();
    let (_, b) = Model::init::<f32>(&cfg, 22).unwrap();
    let (_, c) = Model::init::<f32>(&cfg, 23).unwrap();
    let same = a.iter().zip(b.iter()).all(|(p, q)| p.value == q.value);
    let differs = a.iter().zip(c.iter()).any(|(p, q)| p.value != q.value);
    assert!(same && differs);
    let (_, d) = Model::init::<f64>(&cfg, 22).unwrap();
    for (p, q) in a.iter().zip(d.iter()) {
        assert_eq!(p.value, q.value.cast::<f32>());
    }
}
