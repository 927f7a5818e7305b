use garment_gan_core::data::{
    generate_glyphs, AnnotatedImage, AttributeSchema, AttributeVector, Dataset, GlyphConfig, Image, Provenance,
};
use garment_gan_core::eval::*;
use garment_gan_core::losses::reconstruction_loss;
use garment_gan_core::models::{Generator, ModelConfig};
use garment_gan_core::nn::Mode;
use garment_gan_core::rng::{stream, Domain};
use garment_gan_core::tensor::{Shape, Tensor};
use garment_gan_core::Error;

fn glyphs(count: usize, seed: u64) -> Dataset {
    generate_glyphs(&GlyphConfig::six_attributes(count, 16, 0.3), seed).unwrap()
}

fn quick_oracle(data: &Dataset) -> OracleClassifier {
    let cfg = OracleConfig {
        blocks: 2,
        steps: 400,
        ..OracleConfig::default()
    };
    train_oracle(data, &cfg, 1).unwrap()
}

fn generator(seed: u64) -> Generator<f32> {
    let mut m = ModelConfig::new(16, 2, 4, 6);
    m.init_std = 0.2;
    Generator::new(m, &mut stream(seed, Domain::Init, 0)).unwrap()
}

#[test]
fn oracle_is_deterministic_and_accurate_on_glyphs() {
    let data = generate_glyphs(&GlyphConfig::six_attributes(500, 32, 0.3), 3).unwrap();
    let a = train_oracle(&data, &OracleConfig::default(), 1).unwrap();
    let b = train_oracle(&data, &OracleConfig::default(), 1).unwrap();
    assert_eq!(a, b);
    assert!(
        a.holdout_accuracy.iter().all(|&x| x >= 0.95),
        "{:?}",
        a.holdout_accuracy
    );
}

#[test]
fn degenerate_attribute_is_rejected() {
    let mut cfg = GlyphConfig::six_attributes(50, 16, 0.3);
    cfg.attributes[3].rate = 0.0;
    let data = generate_glyphs(&cfg, 1).unwrap();
    let err = train_oracle(&data, &OracleConfig::default(), 0).unwrap_err();
    assert_eq!(err, Error::DegenerateAttribute("stripe".into()));
}

#[test]
fn under_trained_oracle_is_refused() {
    let data = glyphs(100, 4);
    let cfg = OracleConfig {
        blocks: 1,
        steps: 1,
        ..OracleConfig::default()
    };
    assert!(matches!(
        train_oracle(&data, &cfg, 0),
        Err(Error::OracleUnderTrained { .. })
    ));
    let mut lax = cfg;
    lax.required_accuracy = 0.0;
    let mut weak = train_oracle(&data, &lax, 0).unwrap();
    weak.required_accuracy = 0.95;
    let g = generator(0);
    assert!(matches!(
        edit_success_rate(&g, &weak, &data, 0, true),
        Err(Error::OracleUnderTrained { .. })
    ));
}

/// Per-image loop over the test set, written independently of the library.
fn brute_force(g: &Generator<f32>, oracle: &OracleClassifier, test: &Dataset) -> (Vec<[f64; 2]>, Vec<f64>, f64) {
    let schema = test.schema();
    let n = schema.len();
    let mut hits = vec![[0.0; 2]; n];
    let mut pres = vec![(0.0, 0.0); n];
    let mut rec = 0.0;
    for (i, item) in test.items().iter().enumerate() {
        let (x, a) = test.batch::<f32>(&[i]);
        let a = &a[0];
        rec += reconstruction_loss(&x, &g.edit(&x, std::slice::from_ref(a), Mode::Eval).unwrap()).unwrap() as f64;
        let before = oracle.predict(&x).unwrap().remove(0);
        for j in 0..n {
            for v in [false, true] {
                let mut b = a.clone();
                b.set(j, v);
                if v {
                    for p in schema.exclusive_peers(j) {
                        b.set(p, false);
                    }
                }
                let after = oracle
                    .predict(&g.edit(&x, std::slice::from_ref(&b), Mode::Eval).unwrap())
                    .unwrap()
                    .remove(0);
                if after[j] == v {
                    hits[j][v as usize] += 1.0;
                }
                if item.attrs.get(j) != v {
                    let kept: Vec<usize> = (0..n).filter(|&k| k != j && a.get(k) == b.get(k)).collect();
                    if !kept.is_empty() {
                        pres[j].0 += kept.iter().filter(|&&k| before[k] == after[k]).count() as f64 / kept.len() as f64;
                        pres[j].1 += 1.0;
                    }
                }
            }
        }
    }
    let m = test.len() as f64;
    (
        hits.iter().map(|h| [h[0] / m, h[1] / m]).collect(),
        pres.iter().map(|p| p.0 / p.1).collect(),
        rec / m,
    )
}

#[test]
fn metrics_equal_brute_force_loops() {
    let data = glyphs(600, 5);
    let (train, test) = data.split(0.1, 2).unwrap();
    let oracle = quick_oracle(&train);
    let g = generator(7);
    let report = evaluate(&g, &oracle, &test, "x".into()).unwrap();
    let (hits, pres, rec) = brute_force(&g, &oracle, &test);
    assert_eq!(report.test_count, test.len());
    assert!((report.reconstruction_l1 - rec).abs() < 1e-9);
    assert!((reconstruction_metrics(&g, &test).unwrap() - rec).abs() < 1e-9);
    for (j, a) in report.attributes.iter().enumerate() {
        assert_eq!(a.success_to_zero, hits[j][0]);
        assert_eq!(a.success_to_one, hits[j][1]);
        assert_eq!(edit_success_rate(&g, &oracle, &test, j, true).unwrap(), hits[j][1]);
        assert_eq!(edit_success_rate(&g, &oracle, &test, j, false).unwrap(), hits[j][0]);
        assert!((a.preservation - pres[j]).abs() < 1e-12);
        assert!((preservation_rate(&g, &oracle, &test, j).unwrap() - pres[j]).abs() < 1e-12);
        for r in [a.success_to_one, a.success_to_zero, a.preservation] {
            assert!((0.0..=1.0).contains(&r));
        }
    }
}

#[test]
fn reconstruction_of_constant_output() {
    let mut g = generator(1);
    for p in g.params.iter_mut().filter(|p| p.name.starts_with("dec.1.deconv")) {
        p.data.iter_mut().for_each(|v| *v = 0.0);
    }
    let schema = AttributeSchema::new((0..6).map(|i| format!("a{i}")).collect()).unwrap();
    let items = (0..3)
        .map(|i| AnnotatedImage {
            id: format!("c{i}"),
            pixels: Image::new(16, 16, vec![0.5; 16 * 16 * 3]).unwrap(),
            attrs: AttributeVector::zeros(6),
        })
        .collect();
    let data = Dataset::new(
        schema,
        items,
        Provenance::Derived {
            from: "test".into(),
            operation: "constant".into(),
        },
    )
    .unwrap();
    assert!((reconstruction_metrics(&g, &data).unwrap() - 0.5).abs() < 1e-9);
}

#[test]
fn single_attribute_schema_has_no_preservation() {
    let schema = AttributeSchema::new(vec!["only".into()]).unwrap();
    let items = (0..4)
        .map(|i| AnnotatedImage {
            id: format!("s{i}"),
            pixels: Image::new(16, 16, vec![0.0; 16 * 16 * 3]).unwrap(),
            attrs: AttributeVector::new(vec![(i % 2) as u8]).unwrap(),
        })
        .collect();
    let data = Dataset::new(
        schema,
        items,
        Provenance::Derived {
            from: "t".into(),
            operation: "o".into(),
        },
    )
    .unwrap();
    let mut m = ModelConfig::new(16, 2, 4, 1);
    m.head_hidden = 4;
    let g = Generator::<f32>::new(m, &mut stream(0, Domain::Init, 0)).unwrap();
    let cfg = OracleConfig {
        blocks: 1,
        steps: 1,
        required_accuracy: 0.0,
        ..OracleConfig::default()
    };
    let oracle = train_oracle(&data, &cfg, 0).unwrap();
    assert!(matches!(
        preservation_rate(&g, &oracle, &data, 0),
        Err(Error::Schema(_))
    ));
}

#[test]
fn grid_layout_and_tiles() {
    let data = glyphs(4, 8);
    let g = generator(2);
    let sources: Vec<_> = data
        .items()
        .iter()
        .map(|it| (it.pixels.clone(), it.attrs.clone()))
        .collect();
    let edits: Vec<usize> = (0..6).collect();
    let grid = render_grid(&g, &sources, &edits, data.schema()).unwrap();
    assert_eq!((grid.rows, grid.cols), (4, 8));
    assert_eq!((grid.width(), grid.height()), (8 * 16, 4 * 16));
    for (i, (img, a)) in sources.iter().enumerate() {
        assert_eq!(grid.tile(i, 0), img.to_rgb8());
        let mut x = Tensor::<f32>::zeros(Shape::new(1, 3, 16, 16));
        img.write_chw(x.item_mut(0));
        let rec = g.edit(&x, std::slice::from_ref(a), Mode::Eval).unwrap();
        assert_eq!(grid.tile(i, 1), Image::from_tensor_item(&rec, 0).to_rgb8());
        for (c, &j) in edits.iter().enumerate() {
            let b = a.with_single_edit(data.schema(), j, !a.get(j));
            let out = g.edit(&x, std::slice::from_ref(&b), Mode::Eval).unwrap();
            assert_eq!(grid.tile(i, c + 2), Image::from_tensor_item(&out, 0).to_rgb8());
        }
    }
    let one = render_grid(&g, &sources[..1], &[], data.schema()).unwrap();
    assert_eq!((one.rows, one.cols), (1, 2));
    assert!(render_grid(&g, &[], &[], data.schema()).is_err());
}

#[test]
fn overrides_resolve_with_exclusive_groups() {
    let data = glyphs(1, 0);
    let schema = data.schema();
    let polo = AttributeVector::new(vec![0, 1, 1, 0, 1, 0]).unwrap();
    let vest = polo.with_overrides(schema, &[("vest".into(), 1)]).unwrap();
    assert_eq!(vest.bits(), &[1, 0, 1, 0, 1, 0]);
    let striped = polo
        .with_overrides(schema, &[("stripe".into(), 1), ("red".into(), 0)])
        .unwrap();
    assert_eq!(striped.bits(), &[0, 1, 1, 1, 0, 0]);
    assert_eq!(
        polo.with_overrides(schema, &[("sparkle".into(), 1)]),
        Err(Error::UnknownAttribute("sparkle".into()))
    );
    assert!(polo.with_overrides(schema, &[("red".into(), 2)]).is_err());
}
