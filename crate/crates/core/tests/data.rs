use std::collections::HashSet;
use std::fs;

use covidx::data::image::{decode_bytes, encode_png, encode_pnm};
use covidx::data::{
    decode_image, gen_synthetic, load_manifest, plan_split, preprocess, resize_bilinear, split_dataset, ClassOrder,
    Label, ManifestEntry, PreprocessConfig, Raster, SplitMode,
};
use proptest::prelude::*;

fn entries(normal: usize, covid: usize) -> Vec<ManifestEntry> {
    let n = (0..normal).map(|i| ManifestEntry { image_path: format!("n{i}.pgm"), label: Label::Normal });
    let c = (0..covid).map(|i| ManifestEntry { image_path: format!("c{i}.pgm"), label: Label::Covid19 });
    // alternate classes so the manifest order carries no class blocks
    let mut out: Vec<ManifestEntry> = Vec::new();
    let (mut n, mut c) = (n.peekable(), c.peekable());
    while n.peek().is_some() || c.peek().is_some() {
        out.extend(n.next());
        out.extend(c.next());
    }
    out
}

fn class_counts(entries: &[ManifestEntry], idx: &[usize]) -> (usize, usize) {
    let c = idx.iter().filter(|&&i| entries[i].label == Label::Covid19).count();
    (idx.len() - c, c)
}

#[test]
fn fifty_images_holdout_and_three_way() {
    let e = entries(25, 25);
    let h = plan_split(&e, 0, SplitMode::Holdout).unwrap();
    assert_eq!(class_counts(&e, &h.train), (20, 20));
    assert_eq!(class_counts(&e, &h.test), (5, 5));
    assert_eq!(h.validation, h.test);
    let t = plan_split(&e, 0, SplitMode::ThreeWay).unwrap();
    assert_eq!(class_counts(&e, &t.train), (10, 10));
    assert_eq!(class_counts(&e, &t.validation), (10, 10));
    assert_eq!(class_counts(&e, &t.test), (5, 5));
}

#[test]
fn split_errors() {
    assert!(plan_split(&entries(5, 0), 0, SplitMode::Holdout).is_err());
    assert!(plan_split(&entries(2, 2), 0, SplitMode::ThreeWay).is_err());
    assert!(plan_split(&entries(1, 4), 0, SplitMode::Holdout).is_err());
    assert!(plan_split(&entries(2, 2), 0, SplitMode::Holdout).is_ok());
}

proptest! {
    #[test]
    fn split_partitions_are_disjoint_exhaustive_and_stratified(
        normal in 3usize..40,
        covid in 3usize..40,
        seed in any::<u64>(),
        three_way in any::<bool>(),
    ) {
        let mode = if three_way { SplitMode::ThreeWay } else { SplitMode::Holdout };
        let e = entries(normal, covid);
        let plan = plan_split(&e, seed, mode).unwrap();
        prop_assert_eq!(&plan, &plan_split(&e, seed, mode).unwrap());

        let mut parts = vec![&plan.train, &plan.test];
        if three_way {
            parts.push(&plan.validation);
        } else {
            prop_assert_eq!(&plan.validation, &plan.test);
        }
        let mut seen = HashSet::new();
        for p in &parts {
            prop_assert!(!p.is_empty());
            for &i in p.iter() {
                prop_assert!(seen.insert(i), "index {} in two partitions", i);
            }
        }
        prop_assert_eq!(seen.len(), e.len());

        // each class contributes round(0.2 n) to test, so the test share of a
        // class is within one sample of its proportional share
        for (class_n, pick) in [(normal, 0usize), (covid, 1usize)] {
            let in_test = [class_counts(&e, &plan.test).0, class_counts(&e, &plan.test).1][pick];
            prop_assert!((in_test as f64 - 0.2 * class_n as f64).abs() <= 1.0);
            if three_way {
                let tr = [class_counts(&e, &plan.train).0, class_counts(&e, &plan.train).1][pick];
                let va = [class_counts(&e, &plan.validation).0, class_counts(&e, &plan.validation).1][pick];
                prop_assert!(tr.abs_diff(va) <= 1);
            }
        }
    }

    #[test]
    fn pnm_round_trips_byte_exactly(
        h in 1usize..20,
        w in 1usize..20,
        rgb in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let channels = if rgb { 3 } else { 1 };
        let data: Vec<u8> = (0..h * w * channels).map(|i| (seed.wrapping_mul(i as u64 + 7) >> 13) as u8).collect();
        let raster = Raster::new(h, w, channels, data).unwrap();
        let bytes = encode_pnm(&raster);
        let back = decode_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &raster);
        prop_assert_eq!(encode_pnm(&back), bytes);
    }

    #[test]
    fn preprocess_range_and_shape(
        h in 1usize..40,
        w in 1usize..40,
        rgb in any::<bool>(),
        seed in any::<u64>(),
        s in 32usize..48,
    ) {
        let channels = if rgb { 3 } else { 1 };
        let data: Vec<u8> = (0..h * w * channels).map(|i| (seed.rotate_left(i as u32 % 64) >> 7) as u8).collect();
        let t = preprocess(&Raster::new(h, w, channels, data).unwrap(), &PreprocessConfig { target_size: s }).unwrap();
        prop_assert_eq!(t.shape(), &[3, s, s][..]);
        prop_assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn decodes_small_pgm() {
    let mut bytes = b"P5\n# comment\n2 2\n255\n".to_vec();
    bytes.extend([0, 64, 128, 255]);
    let r = decode_bytes(&bytes).unwrap();
    assert_eq!((r.height, r.width, r.channels), (2, 2, 1));
    assert_eq!(r.data, vec![0, 64, 128, 255]);
}

#[test]
fn png_channels_and_truncation() {
    let rgb = Raster::new(1, 2, 3, vec![10, 20, 30, 40, 50, 60]).unwrap();
    let bytes = encode_png(&rgb).unwrap();
    assert_eq!(decode_bytes(&bytes).unwrap(), rgb);
    assert!(decode_bytes(&bytes[..bytes.len() / 2]).is_err());
    assert!(decode_bytes(b"GIF89a").is_err());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.png");
    fs::write(&p, &bytes[..20]).unwrap();
    assert!(decode_image(&p).is_err());
}

/// Half-pixel bilinear reference: output pixel `i` samples source coordinate
/// `(i + 0.5) * in / out - 0.5`, clamped to the image.
fn reference_bilinear(src: &[[f64; 2]; 2], out: usize) -> Vec<f64> {
    let coord = |i: usize| (((i as f64 + 0.5) * 2.0 / out as f64) - 0.5).clamp(0.0, 1.0);
    let mut v = Vec::new();
    for y in 0..out {
        for x in 0..out {
            let (fy, fx) = (coord(y), coord(x));
            v.push(
                src[0][0] * (1.0 - fy) * (1.0 - fx)
                    + src[0][1] * (1.0 - fy) * fx
                    + src[1][0] * fy * (1.0 - fx)
                    + src[1][1] * fy * fx,
            );
        }
    }
    v
}

#[test]
fn bilinear_two_by_two_to_four_by_four() {
    let r = Raster::new(2, 2, 1, vec![0, 255, 255, 0]).unwrap();
    let got = resize_bilinear(&r, 4, 4).unwrap();
    let want = reference_bilinear(&[[0.0, 255.0], [255.0, 0.0]], 4);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-9, "{got:?} vs {want:?}");
    }
    assert_eq!(got[0], 0.0);
    assert_eq!(got[1], 63.75);
}

#[test]
fn constant_and_identity_resizes() {
    let c = Raster::new(7, 13, 1, vec![128; 91]).unwrap();
    let t = preprocess(&c, &PreprocessConfig { target_size: 32 }).unwrap();
    assert!(t.data().iter().all(|&v| v == (128.0f64 / 255.0) as f32));
    let data: Vec<u8> = (0..32 * 32).map(|i| (i * 7 % 256) as u8).collect();
    let id = Raster::new(32, 32, 1, data.clone()).unwrap();
    let t = preprocess(&id, &PreprocessConfig { target_size: 32 }).unwrap();
    for c in 0..3 {
        for (i, &d) in data.iter().enumerate() {
            assert_eq!(t.data()[c * 1024 + i], (d as f64 / 255.0) as f32);
        }
    }
    assert!(preprocess(&id, &PreprocessConfig { target_size: 16 }).is_err());
}

#[test]
fn one_hot_vectors() {
    let order = ClassOrder::default();
    for l in [Label::Normal, Label::Covid19] {
        let v = order.one_hot::<f64>(l);
        assert_eq!(v.sum(), 1.0);
        assert!(v.data().iter().all(|&x| x == 0.0 || x == 1.0));
        assert_eq!(v.data()[order.index(l)], 1.0);
    }
}

fn mean_intensity(dir: &std::path::Path, label: Label) -> f64 {
    let m = load_manifest(dir.join("manifest.csv")).unwrap();
    let (mut sum, mut n) = (0.0, 0usize);
    for e in m.iter().filter(|e| e.label == label) {
        let r = decode_image(e.resolve(dir)).unwrap();
        sum += r.data.iter().map(|&v| v as f64).sum::<f64>();
        n += r.data.len();
    }
    sum / n as f64
}

#[test]
fn synthetic_set_shape_means_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = gen_synthetic(25, 32, 7, a.path()).unwrap();
    gen_synthetic(25, 32, 7, b.path()).unwrap();
    let entries = load_manifest(&ma).unwrap();
    assert_eq!(entries.len(), 50);
    assert_eq!(fs::read_dir(a.path()).unwrap().count(), 51);
    for e in &entries {
        assert_eq!(fs::read(e.resolve(a.path())).unwrap(), fs::read(e.resolve(b.path())).unwrap());
    }
    assert_eq!(fs::read(&ma).unwrap(), fs::read(b.path().join("manifest.csv")).unwrap());

    let (n, c) = (mean_intensity(a.path(), Label::Normal), mean_intensity(a.path(), Label::Covid19));
    assert!((n - c).abs() / n.max(c) < 0.02, "normal {n} covid {c}");
}

#[test]
fn dataset_split_loads_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let m = gen_synthetic(5, 40, 3, dir.path()).unwrap();
    let e = load_manifest(&m).unwrap();
    let cfg = PreprocessConfig { target_size: 32 };
    let s = split_dataset(&e, dir.path(), 1, SplitMode::Holdout, &cfg).unwrap();
    assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 2, 2));
    for x in s.train.iter().chain(&s.test) {
        assert_eq!(x.image.shape(), &[3, 32, 32]);
        assert_eq!(x.target.data()[ClassOrder::default().index(x.label)], 1.0);
    }
    let paths: HashSet<&str> = s.train.iter().chain(&s.test).map(|x| x.path.as_str()).collect();
    assert_eq!(paths.len(), 10);
}
