mod common;

use std::fs;
use std::path::Path;

use rand::Rng;
use znet::model::{load_checkpoint, save_checkpoint, Architecture, TrainState, ZNet, ZNetConfig};
use znet::preprocess::{load_mhd, save_mhd, Volume, VolumeKind};
use znet::tensor::Precision;
use znet::Error;

#[test]
fn masks_and_intensities_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = common::rng(21);
    for i in 0..30 {
        let m = common::random_mask(&mut r, 9);
        let p = dir.path().join(format!("m{i}.mhd"));
        save_mhd(&p, &m).unwrap();
        let back = load_mhd(&p).unwrap();
        assert_eq!(back, m);

        let data = (0..m.data().len())
            .map(|_| r.gen_range(-2000.0f32..4000.0))
            .collect();
        let v = Volume::new(m.dims(), m.spacing(), data, VolumeKind::Intensity).unwrap();
        let p = dir.path().join(format!("v{i}.mhd"));
        save_mhd(&p, &v).unwrap();
        assert_eq!(load_mhd(&p).unwrap(), v);
    }
}

fn write_pair(dir: &Path, header: &str, raw: &[u8]) -> std::path::PathBuf {
    let p = dir.join("case.mhd");
    fs::write(&p, header).unwrap();
    fs::write(dir.join("case.raw"), raw).unwrap();
    p
}

fn parse_key(e: Error) -> String {
    match e {
        Error::Parse { key, .. } => key,
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn header_errors_name_the_offending_key() {
    let dir = tempfile::tempdir().unwrap();
    let good = "NDims = 3\nDimSize = 2 2 1\nElementSpacing = 1 1 1\nElementType = MET_SHORT\nElementDataFile = case.raw\n";
    assert!(load_mhd(write_pair(dir.path(), good, &[0u8; 8])).is_ok());

    let cases = [
        (good.replace("NDims = 3", "NDims = 2"), 8, "NDims"),
        (good.replace("DimSize = 2 2 1\n", ""), 8, "DimSize"),
        (
            good.replace("DimSize = 2 2 1", "DimSize = 2 x 1"),
            8,
            "DimSize",
        ),
        (good.to_string(), 7, "DimSize"),
        (
            good.replace("MET_SHORT", "MET_DOUBLE_COMPLEX"),
            8,
            "ElementType",
        ),
        (good.replace("1 1 1", "1 0 1"), 8, "ElementSpacing"),
        (good.replace("case.raw", "LOCAL"), 8, "ElementDataFile"),
        (
            format!("{good}CompressedData = True\n"),
            8,
            "CompressedData",
        ),
    ];
    for (header, raw_len, key) in cases {
        let err = load_mhd(write_pair(dir.path(), &header, &vec![0u8; raw_len])).unwrap_err();
        assert!(err.is_user_error());
        assert_eq!(parse_key(err), key, "{header}");
    }
}

#[test]
fn missing_payload_is_an_io_error_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("lonely.mhd");
    fs::write(
        &p,
        "NDims = 3\nDimSize = 1 1 1\nElementType = MET_UCHAR\nElementDataFile = gone.raw\n",
    )
    .unwrap();
    let err = load_mhd(&p).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("gone.raw"), "{err}");
}

#[test]
fn big_endian_shorts_are_decoded() {
    let dir = tempfile::tempdir().unwrap();
    let h = "NDims = 3\nDimSize = 2 1 1\nElementType = MET_SHORT\nBinaryDataByteOrderMSB = True\nElementDataFile = case.raw\n";
    let v = load_mhd(write_pair(dir.path(), h, &[0x01, 0x02, 0xff, 0xfe])).unwrap();
    assert_eq!(v.data(), &[258.0, -2.0]);
    assert_eq!(v.kind(), VolumeKind::Intensity);
}

#[test]
fn checkpoint_round_trip_and_config_guard() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("net.ckpt");
    let cfg = ZNetConfig::tiny();
    let net = ZNet::<f32>::new(cfg.clone(), 11).unwrap();
    let state = TrainState {
        adam_step: 9,
        epoch: 3,
        step: 9,
    };
    save_checkpoint(&p, &net, state).unwrap();
    assert!(!p.with_extension("tmp").exists());

    let ck = load_checkpoint::<f32>(&p, Some(&cfg)).unwrap();
    assert_eq!(ck.arch, Architecture::ZNet);
    let (back, st) = ck.into_net().unwrap();
    assert_eq!(st, state);
    assert_eq!(back.store().flat_values(), net.store().flat_values());

    // Loadable at the other precision, with the weights widened.
    let wide = load_checkpoint::<f64>(&p, None).unwrap();
    assert_eq!(wide.cfg.precision, Precision::F32);
    let (wide, _) = wide.into_net().unwrap();
    let widened: Vec<f64> = net
        .store()
        .flat_values()
        .iter()
        .map(|&v| v as f64)
        .collect();
    assert_eq!(wide.store().flat_values(), widened);

    let other = ZNetConfig {
        base_channels: 8,
        ..cfg.clone()
    };
    assert!(matches!(
        load_checkpoint::<f32>(&p, Some(&other)),
        Err(Error::Config(_))
    ));
}

#[test]
fn corrupt_checkpoints_are_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("net.ckpt");
    save_checkpoint(
        &p,
        &ZNet::<f32>::new(ZNetConfig::tiny(), 1).unwrap(),
        TrainState::default(),
    )
    .unwrap();
    let bytes = fs::read(&p).unwrap();

    fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(
        load_checkpoint::<f32>(&p, None),
        Err(Error::Parse { .. })
    ));

    let mut bad = bytes.clone();
    bad[0] = b'X';
    fs::write(&p, &bad).unwrap();
    assert_eq!(
        parse_key(load_checkpoint::<f32>(&p, None).unwrap_err()),
        "magic"
    );
}
