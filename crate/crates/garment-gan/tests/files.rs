use std::fs;

use garment_gan::checkpoint::{checkpoint_bytes, load_checkpoint, load_oracle, save_checkpoint, save_oracle};
use garment_gan::manifest::{load_manifest, save_manifest};
use garment_gan::source::DataSource;
use garment_gan::Error;
use garment_gan_core::data::{generate_glyphs, GlyphConfig};
use garment_gan_core::eval::{train_oracle, OracleConfig};
use garment_gan_core::models::ModelConfig;
use garment_gan_core::training::{train, Schedule, Silent, TrainConfig, TrainState};

fn tiny_run() -> (garment_gan_core::data::Dataset, TrainConfig, TrainState<f32>) {
    let data = generate_glyphs(&GlyphConfig::six_attributes(12, 8, 0.3), 1).unwrap();
    let mut model = ModelConfig::new(8, 2, 2, 6);
    model.head_hidden = 4;
    let mut cfg = TrainConfig::new(Schedule::DesignSplit, model, 2);
    cfg.batch_size = 4;
    cfg.inner_dc_steps = 1;
    let state = train(&cfg, &data, &mut Silent).unwrap();
    (data, cfg, state)
}

#[test]
fn manifest_round_trip_keeps_ids_attributes_and_groups() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_glyphs(&GlyphConfig::six_attributes(3, 8, 0.3), 4).unwrap();
    save_manifest(&data, dir.path()).unwrap();
    let back = load_manifest(dir.path().join("manifest.csv")).unwrap();
    assert_eq!(back.schema(), data.schema());
    assert_eq!(back.len(), 3);
    for (a, b) in data.items().iter().zip(back.items()) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.attrs, b.attrs);
        assert_eq!(a.pixels.to_rgb8(), b.pixels.to_rgb8());
    }
}

#[test]
fn manifest_errors_name_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_glyphs(&GlyphConfig::six_attributes(3, 8, 0.3), 4).unwrap();
    let file = save_manifest(&data, dir.path()).unwrap();
    let text = fs::read_to_string(&file).unwrap();

    let lines: Vec<&str> = text.lines().collect();
    let (head, _) = lines[2].rsplit_once(',').unwrap();
    fs::write(&file, format!("{}\n{}\n{head},2\n", lines[0], lines[1])).unwrap();
    let err = load_manifest(&file).unwrap_err().to_string();
    assert!(err.contains("glyph-00001"), "{err}");

    fs::write(
        &file,
        format!("{}\n{}\n", lines[0], lines[1].rsplit_once(',').unwrap().0),
    )
    .unwrap();
    let err = load_manifest(&file).unwrap_err().to_string();
    assert!(err.contains("glyph-00000"), "{err}");

    fs::write(
        &file,
        format!("{}\n{}\n", lines[0], lines[1].replace("glyph-00000.png", "missing.png")),
    )
    .unwrap();
    let err = load_manifest(&file).unwrap_err().to_string();
    assert!(err.contains("glyph-00000") && err.contains("missing.png"), "{err}");

    fs::write(&file, format!("{}\n", lines[0])).unwrap();
    match load_manifest(&file) {
        Err(Error::Core(garment_gan_core::Error::EmptyDataset)) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn glyph_specs_parse() {
    let src: DataSource = "glyphs:count=10,size=16,seed=3,vest=0.15,polo=0.15,red=1"
        .parse()
        .unwrap();
    let d = src.load().unwrap();
    assert_eq!(d.len(), 10);
    assert_eq!(d.image_size(), (16, 16));
    let red = d.schema().index_of("red").unwrap();
    assert!(d.items().iter().all(|it| it.attrs.get(red)));
    assert!("glyphs:count=x".parse::<DataSource>().is_err());
    assert!("glyphs:sparkle=1".parse::<DataSource>().is_err());
    assert!(matches!(
        "some/dir".parse::<DataSource>().unwrap(),
        DataSource::Manifest(_)
    ));
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg, state) = tiny_run();
    let path = dir.path().join("a.ckpt");
    save_checkpoint(&path, data.schema(), &cfg, &state).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert!(back.state.bitwise_eq(&state));
    assert_eq!(back.config, cfg);
    assert_eq!(&back.schema, data.schema());
    assert_eq!(
        checkpoint_bytes(&back.schema, &back.config, &back.state).unwrap(),
        fs::read(&path).unwrap()
    );
}

#[test]
fn truncated_checkpoint_names_the_first_bad_array() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg, state) = tiny_run();
    let bytes = checkpoint_bytes(data.schema(), &cfg, &state).unwrap();
    let path = dir.path().join("t.ckpt");
    fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
    match load_checkpoint(&path) {
        Err(Error::CorruptCheckpoint { array, .. }) => assert_eq!(array, format!("opt_g_cls.v/{}", last_name(&state))),
        other => panic!("{other:?}"),
    }
    let mut wrong = bytes.clone();
    wrong[0] = b'X';
    fs::write(&path, &wrong).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint { .. })));
}

fn last_name(state: &TrainState<f32>) -> String {
    state.opt_g_cls.second.iter().last().unwrap().name.clone()
}

#[test]
fn version_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg, state) = tiny_run();
    let bytes = checkpoint_bytes(data.schema(), &cfg, &state).unwrap();
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header = String::from_utf8(bytes[16..16 + len].to_vec())
        .unwrap()
        .replace("\"version\":1", "\"version\":7");
    let mut out = bytes[..16].to_vec();
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&bytes[16 + len..]);
    let path = dir.path().join("v.ckpt");
    fs::write(&path, out).unwrap();
    let err = load_checkpoint(&path).unwrap_err().to_string();
    assert!(err.contains("version mismatch"), "{err}");
}

#[test]
fn oracle_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_glyphs(&GlyphConfig::six_attributes(200, 8, 0.3), 2).unwrap();
    let cfg = OracleConfig {
        blocks: 1,
        steps: 300,
        required_accuracy: 0.0,
        ..OracleConfig::default()
    };
    let oracle = train_oracle(&data, &cfg, 3).unwrap();
    let path = dir.path().join("oracle.ckpt");
    save_oracle(&path, data.schema(), &oracle).unwrap();
    let (schema, back) = load_oracle(&path).unwrap();
    assert_eq!(&schema, data.schema());
    assert_eq!(back, oracle);
    assert!(load_checkpoint(&path).is_err());
}
