use dyted::autodiff::{grad_check_many, Tape, Tensor};
use dyted::encoder::Encoder;
use dyted::graph::{generate_planted, DynamicGraph, PlantedConfig, Snapshot};
use dyted::train::{
    extract_representations, generator_loss, train, train_baseline, DiscSamples, DytedModel,
    IterationSamples, NegativeMode, Pretext, TrainConfig, Trainer,
};
use dyted::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy_graph() -> DynamicGraph {
    let snaps = [
        vec![(0, 1), (1, 2), (2, 3), (4, 5)],
        vec![(0, 2), (3, 4), (4, 5), (1, 5)],
        vec![(0, 5), (1, 2), (2, 4), (3, 5)],
        vec![(0, 1), (2, 3), (3, 4)],
    ];
    DynamicGraph::new(
        6,
        snaps
            .iter()
            .map(|e| Snapshot::from_edges(6, e.iter().copied()))
            .collect(),
    )
    .unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        d: 8,
        n: 3,
        n_prime: 32,
        epochs: 6,
        seed: 11,
        ..Default::default()
    }
}

fn planted() -> DynamicGraph {
    generate_planted(&PlantedConfig::default()).unwrap().graph
}

#[test]
fn fixed_seed_reproduces_history_bitwise() {
    let g = toy_graph();
    let (m1, h1) = train(&small_config(), &g).unwrap();
    let (m2, h2) = train(&small_config(), &g).unwrap();
    assert_eq!(h1, h2);
    assert_eq!(m1, m2);
    let other = TrainConfig {
        seed: 12,
        ..small_config()
    };
    assert_ne!(train(&other, &g).unwrap().1, h1);
}

#[test]
fn zero_weights_reduce_to_the_pretext_trajectory() {
    // With every weight at zero the discriminator, its sample count and the
    // number of its steps must not touch the generator trajectory.
    let g = toy_graph();
    let base = TrainConfig {
        lambda1: 0.0,
        lambda2: 0.0,
        lambda3: 0.0,
        epochs: 8,
        ..small_config()
    };
    let a = train(&TrainConfig { k_d: 0, ..base.clone() }, &g).unwrap();
    let b = train(
        &TrainConfig {
            k_d: 3,
            n_prime: 7,
            ..base.clone()
        },
        &g,
    )
    .unwrap();
    let lv = |h: &dyted::train::History| h.rows.iter().map(|r| (r.l_v, r.total, r.alpha)).collect::<Vec<_>>();
    assert_eq!(lv(&a.1), lv(&b.1));
    assert_eq!(a.0.invariant, b.0.invariant);
    assert_eq!(a.0.varying, b.0.varying);
    for r in &a.1.rows {
        assert_eq!(r.total, r.l_v);
    }
    // and with the weights back on, the trajectory does change
    let c = train(&TrainConfig { lambda1: 0.5, ..base }, &g).unwrap();
    assert_ne!(lv(&a.1), lv(&c.1));
}

#[test]
fn generator_loss_passes_grad_check_on_toy_graph() {
    let g = toy_graph();
    let cfg = TrainConfig {
        d: 4,
        n: 2,
        n_prime: 6,
        tau_g: 1.0,
        lambda1: 0.7,
        lambda2: 0.4,
        lambda3: 0.05,
        // width 2 leaves whole ReLU columns dead, parking pre-activations on
        // the kink at exactly zero, where one-sided differences disagree
        hidden: 4,
        seed: 5,
        ..Default::default()
    };
    let model = DytedModel::init(&cfg, 6);
    let mut trainer = Trainer::with_model(cfg.clone(), &g, model.clone()).unwrap();
    let samples = loop {
        let s = trainer.sample_iteration().unwrap();
        if s.draw.len >= 3 {
            break s;
        }
    };
    let adj = trainer.adjacency().to_vec();
    let shape = model.invariant.shape();
    let mut inputs: Vec<Tensor> = model.invariant.tensors().to_vec();
    inputs.extend(model.varying.tensors().iter().cloned());
    inputs.push(Tensor::scalar(model.alpha_raw));
    let k = model.invariant.tensors().len();
    let disc = model.discriminator.clone();
    let err = grad_check_many(
        |tape: &Tape, v| {
            let gi = Encoder::from_vars(shape, v[..k].to_vec())?;
            let gv = Encoder::from_vars(shape, v[k..2 * k].to_vec())?;
            let d = disc.bind_frozen(tape);
            Ok(generator_loss(&cfg, &adj, &gi, &gv, &d, v[2 * k], &samples)?.total)
        },
        &inputs,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn regularizer_covers_generators_only() {
    let g = toy_graph();
    let cfg = small_config();
    let model = DytedModel::init(&cfg, 6);
    let mut trainer = Trainer::with_model(cfg.clone(), &g, model.clone()).unwrap();
    let samples = trainer.sample_iteration().unwrap();
    let tape = Tape::new();
    let gi = model.invariant.bind(&tape);
    let gv = model.varying.bind(&tape);
    let d = model.discriminator.bind(&tape);
    let alpha = tape.param(&Tensor::scalar(model.alpha_raw));
    let terms = generator_loss(&cfg, trainer.adjacency(), &gi, &gv, &d, alpha, &samples).unwrap();
    let reg = terms.reg.item();
    assert!((reg - model.generator_sum_squares()).abs() < 1e-9 * reg);
    let grads = tape.backward(terms.reg).unwrap();
    for w in gi.vars().iter().chain(gv.vars()) {
        let expect = w.value().map(|x| 2.0 * x);
        let got = grads.get(*w).expect("generator tensor has a gradient");
        assert_eq!(got.data(), expect.data());
    }
    for w in d.vars() {
        assert!(grads.get(*w).is_none());
    }
    assert!(grads.get(alpha).is_none());
}

#[test]
fn discriminator_step_raises_v() {
    let g = toy_graph();
    for seed in [11, 12, 13] {
        // a fresh trainer per seed, so each check is the optimiser's first step
        let cfg = TrainConfig {
            learning_rate: 1e-4,
            seed,
            ..small_config()
        };
        let mut trainer = Trainer::new(cfg, &g).unwrap();
        let samples = trainer.sample_iteration().unwrap();
        let gen = trainer.generator_step(&samples, false).unwrap();
        let ds: DiscSamples = trainer.sample_disc().unwrap();
        let before = trainer.discriminator_objective(&gen.s, &gen.d, &ds).unwrap();
        let loss_d = trainer.discriminator_step(&gen.s, &gen.d, &ds).unwrap();
        assert_eq!(loss_d, -before);
        let after = trainer.discriminator_objective(&gen.s, &gen.d, &ds).unwrap();
        assert!(after > before, "seed {seed}: {before} -> {after}");
    }
}

#[test]
fn generator_step_lowers_its_loss() {
    let g = toy_graph();
    let cfg = TrainConfig {
        learning_rate: 1e-4,
        ..small_config()
    };
    let mut trainer = Trainer::new(cfg, &g).unwrap();
    for _ in 0..3 {
        let samples: IterationSamples = trainer.sample_iteration().unwrap();
        let before = trainer.generator_step(&samples, true).unwrap().total;
        let after = trainer.generator_step(&samples, false).unwrap().total;
        assert!(after < before, "{before} -> {after}");
    }
}

#[test]
fn sampler_parameter_receives_gradient_after_training() {
    let g = toy_graph();
    let cfg = TrainConfig {
        tau_g: 0.5,
        ..small_config()
    };
    let (model, _) = train(&cfg, &g).unwrap();
    let mut trainer = Trainer::with_model(cfg, &g, model).unwrap();
    let mut seen = 0;
    for _ in 0..10 {
        let s = trainer.sample_iteration().unwrap();
        if s.draw.len < 2 {
            continue;
        }
        let step = trainer.generator_step(&s, false).unwrap();
        assert!(step.alpha_grad.is_finite());
        if step.alpha_grad != 0.0 {
            seen += 1;
        }
    }
    assert!(seen > 0);
}

#[test]
fn uniform_lengths_leave_alpha_alone() {
    let g = toy_graph();
    let cfg = TrainConfig {
        clip_sampling: dyted::sampler::ClipSampling::UniformLength,
        ..small_config()
    };
    let (model, hist) = train(&cfg, &g).unwrap();
    assert_eq!(model.alpha_raw, DytedModel::init(&cfg, 6).alpha_raw);
    assert!(hist.rows.iter().all(|r| r.alpha == hist.rows[0].alpha));
}

#[test]
fn non_finite_loss_names_the_term() {
    let g = toy_graph();
    let cfg = small_config();
    let mut model = DytedModel::init(&cfg, 6);
    model.discriminator.tensors_mut()[0].data_mut()[0] = f64::NAN;
    let mut trainer = Trainer::with_model(cfg, &g, model).unwrap();
    match trainer.step() {
        Err(Error::NonFinite { term, iter }) => {
            assert_eq!(term, "V");
            assert_eq!(iter, 0);
        }
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}

#[test]
fn link_pretext_and_full_negatives_train() {
    let g = toy_graph();
    let cfg = TrainConfig {
        pretext: Pretext::LinkPrediction,
        negative_mode: NegativeMode::Full,
        ..small_config()
    };
    let (_, h) = train(&cfg, &g).unwrap();
    assert_eq!(h.rows.len(), cfg.epochs);
    assert!(h.rows.iter().all(|r| r.total.is_finite()));
}

#[test]
fn extracted_shapes_and_budget() {
    let g = toy_graph();
    let cfg = small_config();
    let (model, _) = train(&cfg, &g).unwrap();
    let reps = extract_representations(&model, &g).unwrap();
    let s = reps.s.as_ref().unwrap();
    assert_eq!(s.shape(), &[6, cfg.d / 2]);
    assert_eq!(reps.d.len(), g.len());
    assert!(reps.d.iter().all(|d| d.shape() == [6, cfg.d / 2]));
    assert_eq!(reps.combined(2).cols(), cfg.d);
    assert_eq!(reps.stored_per_node(), (g.len() + 1) * cfg.d / 2);

    let (base, _) = train_baseline(&cfg, &g).unwrap();
    let b = dyted::train::baseline_representations(&base, &g).unwrap();
    assert_eq!(b.stored_per_node(), g.len() * cfg.d);
}

#[test]
fn s_ignores_discriminator_steps() {
    let g = toy_graph();
    let mut trainer = Trainer::new(small_config(), &g).unwrap();
    let samples = trainer.sample_iteration().unwrap();
    let gen = trainer.generator_step(&samples, true).unwrap();
    let before = extract_representations(trainer.model(), &g).unwrap();
    for _ in 0..3 {
        let ds = trainer.sample_disc().unwrap();
        trainer.discriminator_step(&gen.s, &gen.d, &ds).unwrap();
    }
    let after = extract_representations(trainer.model(), &g).unwrap();
    assert_eq!(before, after);
}

#[test]
fn generator_loss_decreases_on_planted_graph() {
    let g = planted();
    let cfg = TrainConfig {
        seed: 3,
        ..Default::default()
    };
    let mut trainer = Trainer::new(cfg, &g).unwrap();
    // same random inputs every step, so the trajectory reflects optimisation alone
    let samples = trainer.sample_iteration().unwrap();
    let mut last = f64::INFINITY;
    for i in 0..20 {
        let total = trainer.generator_step(&samples, true).unwrap().total;
        assert!(total < last, "iteration {i}: {last} -> {total}");
        last = total;
    }
}

#[test]
fn history_csv_header() {
    let g = toy_graph();
    let (_, h) = train(&TrainConfig { epochs: 2, ..small_config() }, &g).unwrap();
    let mut buf = Vec::new();
    h.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iter,L_v,L_i,V,loss_D,alpha,total"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn disc_samples_pair_distinct_nodes() {
    let s = DiscSamples::sample(5, 4, 200, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert!(s.t.windows(2).all(|w| w[0] <= w[1]));
    assert!(s.v.iter().zip(&s.u).all(|(v, u)| v != u));
    assert!(s.t.iter().all(|&t| t < 4));
}
