use bagrasp::image::{
    decode_pgm, decode_ppm, encode_pgm, encode_ppm, load_pgm, load_ppm, save_pgm, save_ppm,
    DepthImage, ImageError, RgbImage,
};
use bagrasp::learned::{LearnError, ModelParams};
use bagrasp::proposal::{read_proposals, ProposalError};
use std::mem::discriminant;

fn sample_rgb() -> RgbImage {
    RgbImage::from_fn(7, 5, |x, y| [(x * 37) as u8, (y * 51) as u8, ((x + y) * 13) as u8])
}

fn sample_depth() -> DepthImage {
    DepthImage::from_fn(6, 4, |x, y| (x * 1000 + y * 7919) as u16)
}

#[test]
fn ppm_file_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ppm");
    let img = sample_rgb();
    save_ppm(&img, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let back = load_ppm(&path).unwrap();
    assert_eq!(back, img);
    assert_eq!(encode_ppm(&back), bytes);
}

#[test]
fn pgm_file_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.pgm");
    let img = sample_depth();
    save_pgm(&img, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(load_pgm(&path).unwrap(), img);
    assert_eq!(encode_pgm(&img), bytes);
}

#[test]
fn hand_built_fixtures_parse() {
    let white = decode_ppm(b"P6\n1 1\n255\n\xff\xff\xff").unwrap();
    assert_eq!(white.get(0, 0), [255, 255, 255]);
    let commented = decode_ppm(b"P6\n# made by hand\n1 # width\n1\n# maxval next\n255\n\x01\x02\x03").unwrap();
    assert_eq!(commented.get(0, 0), [1, 2, 3]);
    let gradient = decode_pgm(b"P5\n2 2\n65535\n\x00\x00\x03\xe8\x07\xd0\x0b\xb8").unwrap();
    assert_eq!(gradient.pixels(), &[0, 1000, 2000, 3000]);
}

#[test]
fn malformed_images_have_distinct_errors() {
    let cases: [&[u8]; 6] = [
        b"P3\n1 1\n255\n\x00\x00\x00",
        b"P6\n1 x\n255\n\x00\x00\x00",
        b"P6\n2 1\n255\n\x00\x00\x00",
        b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00",
        b"P6\n0 1\n255\n",
        b"P6\n1 1\n255",
    ];
    let errors: Vec<ImageError> = cases.iter().map(|c| decode_ppm(c).unwrap_err()).collect();
    assert!(matches!(errors[0], ImageError::BadMagic { .. }));
    assert!(matches!(errors[1], ImageError::BadHeader(_)));
    assert!(matches!(errors[2], ImageError::Truncated { .. }));
    assert!(matches!(errors[3], ImageError::UnsupportedMaxval { .. }));
    assert!(matches!(errors[4], ImageError::InvalidDimensions { .. }));
    assert!(matches!(errors[5], ImageError::BadHeader(_)));
    let kinds: std::collections::HashSet<_> = errors[..5].iter().map(discriminant).collect();
    assert_eq!(kinds.len(), 5);
    assert!(matches!(
        decode_pgm(b"P5\n1 1\n255\n\x00"),
        Err(ImageError::UnsupportedMaxval { found: 255, .. })
    ));
    assert!(matches!(
        decode_pgm(b"P5\n2 2\n65535\n\x00\x00\x03"),
        Err(ImageError::Truncated { .. })
    ));
}

#[test]
fn missing_image_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_ppm(dir.path().join("none.ppm")), Err(ImageError::Io(_))));
}

#[test]
fn params_file_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.bin");
    let params = ModelParams::init(42);
    params.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let back = ModelParams::load(&path).unwrap();
    assert_eq!(back, params);
    assert_eq!(back.to_bytes(), bytes);

    let mut bad_magic = bytes.clone();
    bad_magic[1] ^= 0xff;
    let mut wrong_count = bytes.clone();
    wrong_count[8] = 11;
    let mut wrong_shape = bytes.clone();
    // first dimension of the first tensor
    wrong_shape[16] = 9;
    let errors = [
        ModelParams::from_bytes(&bad_magic).unwrap_err(),
        ModelParams::from_bytes(&wrong_shape).unwrap_err(),
        ModelParams::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err(),
        ModelParams::from_bytes(&[bytes.as_slice(), &[0u8; 8]].concat()).unwrap_err(),
    ];
    assert!(matches!(errors[0], LearnError::BadMagic));
    assert!(matches!(errors[1], LearnError::Architecture(_)));
    assert!(matches!(errors[2], LearnError::Truncated));
    assert!(matches!(errors[3], LearnError::TrailingBytes(8)));
    assert!(matches!(
        ModelParams::from_bytes(&wrong_count),
        Err(LearnError::Architecture(_))
    ));
}

#[test]
fn proposal_lines_parse_and_reject() {
    let text = "{\"x\":0.5,\"y\":0.1,\"theta\":0.2,\"t\":1.0}\n\n{\"x\":0.6,\"y\":0.0,\"theta\":0.0,\"t\":2.0}\n";
    let ps = read_proposals(text.as_bytes()).unwrap();
    assert_eq!(ps.len(), 2);
    assert_eq!(ps[1].x, 0.6);
    assert!(matches!(
        read_proposals("{\"x\":1}\n".as_bytes()),
        Err(ProposalError::Json { line: 1, .. })
    ));
    assert!(matches!(
        read_proposals("{\"x\":0.5,\"y\":0.1,\"theta\":0.2,\"t\":1.0}\nnope\n".as_bytes()),
        Err(ProposalError::Json { line: 2, .. })
    ));
}
