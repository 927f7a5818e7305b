use garment_gan_core::data::AttributeVector;
use garment_gan_core::losses::AdversarialLoss;
use garment_gan_core::models::{DiscCls, Generator, ModelConfig};
use garment_gan_core::params::ParamStore;
use garment_gan_core::rng::{stream, Domain};
use garment_gan_core::tensor::{Shape, Tensor};
use garment_gan_core::training::*;
use rand::Rng;

fn tiny_config() -> TrainConfig {
    let mut model = ModelConfig::new(8, 1, 2, 3);
    model.disc_blocks = Some(1);
    model.head_hidden = 0;
    model.init_std = 0.3;
    let mut cfg = TrainConfig::new(Schedule::DesignSplit, model, 1);
    cfg.batch_size = 3;
    cfg
}

fn tiny_batch(seed: u64) -> StepBatch<f64> {
    let mut rng = stream(seed, Domain::Oracle, 99);
    let shape = Shape::new(3, 3, 8, 8);
    let x = Tensor::from_vec(shape, (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let bits = |rng: &mut rand_chacha::ChaCha8Rng| {
        AttributeVector::new((0..3).map(|_| rng.random_range(0..2u8)).collect()).unwrap()
    };
    let a = (0..3).map(|_| bits(&mut rng)).collect();
    let b = (0..3).map(|_| bits(&mut rng)).collect();
    StepBatch { x, a, b }
}

fn rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1e-8)
}

fn check(analytic: &ParamStore<f64>, params: &ParamStore<f64>, eval: impl Fn(&ParamStore<f64>) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut p = params.clone();
    for i in 0..params.num_elements() {
        let v = params.flat_get(i);
        p.flat_set(i, v + h);
        let up = eval(&p);
        p.flat_set(i, v - h);
        let down = eval(&p);
        p.flat_set(i, v);
        let fd = (up - down) / (2.0 * h);
        let e = rel_err(analytic.flat_get(i), fd);
        if e > worst {
            worst = e;
            if e > 1e-4 {
                eprintln!("{:?} analytic {} fd {}", params.locate(i), analytic.flat_get(i), fd);
            }
        }
    }
    worst
}

fn generator_check(objective: GeneratorObjective, cfg: &TrainConfig) -> f64 {
    let state = TrainState::<f64>::new(cfg).unwrap();
    let batch = tiny_batch(1);
    let pass = generator_gradients(&state.generator, &state.disc, cfg, &batch, objective).unwrap();
    let g = &state.generator;
    check(&pass.grads, &g.params, |p| {
        let gen = Generator::from_parts(*g.config(), p.clone(), g.buffers.clone()).unwrap();
        generator_gradients(&gen, &state.disc, cfg, &batch, objective)
            .unwrap()
            .value
    })
}

#[test]
fn generator_objectives_match_finite_differences() {
    let cfg = tiny_config();
    for obj in [
        GeneratorObjective::Rec,
        GeneratorObjective::RecAdv,
        GeneratorObjective::Cls,
        GeneratorObjective::Joint,
    ] {
        let e = generator_check(obj, &cfg);
        assert!(e <= 1e-4, "{obj:?}: {e}");
    }
}

#[test]
fn disc_objective_matches_finite_differences() {
    for adversarial in [
        AdversarialLoss::Vanilla,
        AdversarialLoss::WassersteinGp { penalty_weight: 10.0 },
    ] {
        let mut cfg = tiny_config();
        cfg.adversarial = adversarial;
        let state = TrainState::<f64>::new(&cfg).unwrap();
        let batch = tiny_batch(2);
        let fakes = generate_fakes(&state.generator, &batch).unwrap();
        let (_, grads, _) = disc_cls_gradients(&state.disc, &cfg, &batch.x, &batch.a, &fakes, 0, 0).unwrap();
        let d = &state.disc;
        let e = check(&grads, &d.params, |p| {
            let disc = DiscCls::from_parts(*d.config(), p.clone()).unwrap();
            disc_cls_gradients(&disc, &cfg, &batch.x, &batch.a, &fakes, 0, 0)
                .unwrap()
                .0
        });
        assert!(e <= 1e-4, "{adversarial:?}: {e}");
    }
}

use garment_gan_core::data::{generate_glyphs, Dataset, GlyphConfig};

fn glyph_data(count: usize) -> Dataset {
    generate_glyphs(&GlyphConfig::six_attributes(count, 8, 0.3), 5).unwrap()
}

fn glyph_config(schedule: Schedule, steps: u64) -> TrainConfig {
    let mut model = ModelConfig::new(8, 2, 4, 6);
    model.head_hidden = 8;
    let mut cfg = TrainConfig::new(schedule, model, steps);
    cfg.batch_size = 4;
    cfg.seed = 11;
    cfg
}

#[derive(Default)]
struct Counter {
    dc: usize,
    phases: Vec<GeneratorPhase>,
    logs: usize,
    checkpoints: Vec<u64>,
    violations: usize,
    last: Option<TrainState<f32>>,
}

impl Observer<f32> for Counter {
    fn on_dc_update(&mut self, state: &TrainState<f32>, _: &DcReport) {
        self.dc += 1;
        if let Some(prev) = &self.last {
            let g = &state.generator;
            if !g.params.bitwise_eq(&prev.generator.params) || !g.buffers.bitwise_eq(&prev.generator.buffers) {
                self.violations += 1;
            }
        }
        self.last = Some(state.clone());
    }
    fn on_generator_update(&mut self, phase: GeneratorPhase, state: &TrainState<f32>, _: &GReport) {
        self.phases.push(phase);
        if let Some(prev) = &self.last {
            if !state.disc.params.bitwise_eq(&prev.disc.params) {
                self.violations += 1;
            }
        }
        self.last = Some(state.clone());
    }
    fn on_log(&mut self, _: &LossRecord) -> garment_gan_core::Result<()> {
        self.logs += 1;
        Ok(())
    }
    fn on_checkpoint(&mut self, state: &TrainState<f32>) -> garment_gan_core::Result<()> {
        self.checkpoints.push(state.step);
        Ok(())
    }
}

#[test]
fn loop_accounting_and_phase_isolation() {
    let data = glyph_data(16);
    let mut cfg = glyph_config(Schedule::DesignSplit, 3);
    cfg.log_every = 2;
    cfg.checkpoint_every = 2;
    let mut obs = Counter::default();
    let state = train(&cfg, &data, &mut obs).unwrap();
    assert_eq!(obs.dc, 15);
    assert_eq!(state.dc_updates, 15);
    assert_eq!(state.generator_phases, 3);
    assert_eq!(obs.phases.len(), 6);
    assert_eq!(obs.violations, 0);
    assert_eq!(obs.logs, 2);
    assert_eq!(obs.checkpoints, vec![2, 3]);
}

#[test]
fn resume_matches_uninterrupted() {
    let data = glyph_data(16);
    let full_cfg = glyph_config(Schedule::AttganJoint, 6);
    let full = train::<f32>(&full_cfg, &data, &mut Silent).unwrap();
    let half = train::<f32>(&glyph_config(Schedule::AttganJoint, 3), &data, &mut Silent).unwrap();
    let resumed = resume(half, &full_cfg, &data, &mut Silent).unwrap();
    assert!(full.bitwise_eq(&resumed));
    let again = train::<f32>(&full_cfg, &data, &mut Silent).unwrap();
    assert!(full.bitwise_eq(&again));
}

#[test]
fn split_without_second_update_equals_joint_without_cls() {
    let data = glyph_data(16);
    let mut joint_cfg = glyph_config(Schedule::AttganJoint, 3);
    joint_cfg.weights.lambda2 = 0.0;
    let split_cfg = glyph_config(Schedule::DesignSplit, 3);
    let mut a = TrainState::<f32>::new(&joint_cfg).unwrap();
    let mut b = TrainState::<f32>::new(&split_cfg).unwrap();
    let mut ta = Trainer::new(&joint_cfg, &data).unwrap();
    let mut tb = Trainer::new(&split_cfg, &data).unwrap();
    for step in 0..3 {
        let batch = ta.batch::<f32>(step).unwrap();
        for _ in 0..joint_cfg.inner_dc_steps {
            dc_step(&mut a, &joint_cfg, &batch).unwrap();
            dc_step(&mut b, &split_cfg, &tb.batch(step).unwrap()).unwrap();
        }
        g_step_joint(&mut a, &joint_cfg, &batch).unwrap();
        g_step_rec_adv(&mut b, &split_cfg, &batch).unwrap();
        assert!(a.generator.params.bitwise_eq(&b.generator.params));
        assert!(a.generator.buffers.bitwise_eq(&b.generator.buffers));
        assert!(a.disc.params.bitwise_eq(&b.disc.params));
    }
}

#[test]
fn rec_adv_update_ignores_lambda2_and_zero_lambda2_is_a_noop() {
    let data = glyph_data(16);
    let mut lo = glyph_config(Schedule::DesignSplit, 1);
    lo.weights.lambda2 = 1.0;
    let mut hi = lo.clone();
    hi.weights.lambda2 = 100.0;
    let batch = Trainer::new(&lo, &data).unwrap().batch::<f32>(0).unwrap();
    let mut a = TrainState::<f32>::new(&lo).unwrap();
    let mut b = a.clone();
    g_step_rec_adv(&mut a, &lo, &batch).unwrap();
    g_step_rec_adv(&mut b, &hi, &batch).unwrap();
    assert!(a.bitwise_eq(&b));

    let mut zero = lo.clone();
    zero.weights.lambda2 = 0.0;
    let before = a.generator.params.clone();
    g_step_cls(&mut a, &zero, &batch).unwrap();
    assert!(a.generator.params.bitwise_eq(&before));
}

#[test]
fn adv_only_joint_gradient_equals_adv_gradient() {
    let mut cfg = tiny_config();
    cfg.weights.lambda1 = 0.0;
    cfg.weights.lambda2 = 0.0;
    let state = TrainState::<f64>::new(&cfg).unwrap();
    let batch = tiny_batch(3);
    let joint = generator_gradients(&state.generator, &state.disc, &cfg, &batch, GeneratorObjective::Joint).unwrap();
    let adv = generator_gradients(&state.generator, &state.disc, &cfg, &batch, GeneratorObjective::Adv).unwrap();
    for (x, y) in joint.grads.flat_values().iter().zip(adv.grads.flat_values()) {
        assert!((x - y).abs() <= 1e-12);
    }
}

#[test]
fn repeated_steps_decrease_their_objectives() {
    let cfg = tiny_config();
    let batch = tiny_batch(4);
    let mut state = TrainState::<f64>::new(&cfg).unwrap();
    let fakes = generate_fakes(&state.generator, &batch).unwrap();
    let eval_dc = |s: &TrainState<f64>| {
        disc_cls_gradients(&s.disc, &cfg, &batch.x, &batch.a, &fakes, 0, 0)
            .unwrap()
            .0
    };
    let mut prev = eval_dc(&state);
    for _ in 0..20 {
        dc_step(&mut state, &cfg, &batch).unwrap();
        let now = eval_dc(&state);
        assert!(now < prev, "{now} !< {prev}");
        prev = now;
    }

    let eval_g = |s: &TrainState<f64>| {
        generator_gradients(&s.generator, &s.disc, &cfg, &batch, GeneratorObjective::Joint)
            .unwrap()
            .value
    };
    let start = eval_g(&state);
    for _ in 0..20 {
        g_step_joint(&mut state, &cfg, &batch).unwrap();
    }
    assert!(eval_g(&state) < start);
}

#[test]
fn dc_step_leaves_generator_untouched() {
    let cfg = tiny_config();
    let batch = tiny_batch(5);
    let mut state = TrainState::<f64>::new(&cfg).unwrap();
    let before = state.generator.clone();
    dc_step(&mut state, &cfg, &batch).unwrap();
    assert!(state.generator.params.bitwise_eq(&before.params));
    assert!(state.generator.buffers.bitwise_eq(&before.buffers));
}
