use insomnia_eeg::edf_io::{read_edf, read_edf_header, write_edf, write_edf_signals, Channel, Recording};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_recording(rng: &mut ChaCha8Rng) -> Recording {
    let fs = [100.0, 128.0, 200.0, 256.0, 512.0][rng.gen_range(0..5)];
    let n = rng.gen_range(1..(fs as usize * 7));
    let scale = 10f64.powf(rng.gen_range(-1.0..3.5));
    let offset = rng.gen_range(-1.0..1.0) * scale;
    let samples = (0..n).map(|_| offset + scale * rng.gen_range(-1.0..1.0)).collect();
    let ch = if rng.gen_bool(0.5) { Channel::Fp2 } else { Channel::C4 };
    Recording::new("rt", ch, fs, samples)
}

#[test]
fn hundred_random_recordings_survive_within_one_lsb() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..100 {
        let r = random_recording(&mut rng);
        let path = dir.path().join(format!("r{i}.edf"));
        write_edf(&r, &path).unwrap();
        let back = read_edf(&path, r.channel.label()).unwrap();
        let lsb = read_edf_header(&path).unwrap().signals[0].gain();
        assert_eq!(back.fs, r.fs, "recording {i}");
        assert_eq!(back.samples.len(), r.samples.len(), "recording {i}");
        let worst = r.samples.iter().zip(&back.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= lsb, "recording {i}: error {worst} > lsb {lsb}");
    }
}

#[test]
fn two_signals_in_one_file_are_independent() {
    let dir = tempfile::tempdir().unwrap();
    let a = Recording::new("s", Channel::Fp2, 128.0, (0..500).map(|i| (i as f64 * 0.3).sin() * 50.0).collect());
    let b = Recording::new("s", Channel::C4, 128.0, (0..500).map(|i| i as f64 - 250.0).collect());
    let path = dir.path().join("two.edf");
    write_edf_signals(&[&a, &b], &path).unwrap();
    let h = read_edf_header(&path).unwrap();
    let fa = read_edf(&path, "Fp2").unwrap();
    let fb = read_edf(&path, "C4").unwrap();
    assert!(fa.samples.iter().zip(&a.samples).all(|(x, y)| (x - y).abs() <= h.signals[0].gain()));
    assert!(fb.samples.iter().zip(&b.samples).all(|(x, y)| (x - y).abs() <= h.signals[1].gain()));
}

/// Header bytes assembled field by field from the format description.
fn raw_header(num_records: u64, record_s: &str, signals: &[(&str, usize)]) -> Vec<u8> {
    fn field(out: &mut Vec<u8>, s: &str, width: usize) {
        assert!(s.len() <= width);
        out.extend_from_slice(s.as_bytes());
        out.extend(std::iter::repeat(b' ').take(width - s.len()));
    }
    let ns = signals.len();
    let mut h = Vec::new();
    field(&mut h, "0", 8);
    field(&mut h, "ins1", 80);
    field(&mut h, "Startdate 01-JAN-2001", 80);
    field(&mut h, "01.01.01", 8);
    field(&mut h, "22.19.06", 8);
    field(&mut h, &(256 * (ns + 1)).to_string(), 8);
    field(&mut h, "", 44);
    field(&mut h, &num_records.to_string(), 8);
    field(&mut h, record_s, 8);
    field(&mut h, &ns.to_string(), 4);
    let per = |h: &mut Vec<u8>, f: &dyn Fn(&(&str, usize)) -> String, w: usize| {
        for s in signals {
            field(h, &f(s), w);
        }
    };
    per(&mut h, &|s| s.0.to_string(), 16);
    per(&mut h, &|_| String::new(), 80);
    per(&mut h, &|_| "uV".into(), 8);
    per(&mut h, &|_| "-3000".into(), 8);
    per(&mut h, &|_| "3000".into(), 8);
    per(&mut h, &|_| "-32768".into(), 8);
    per(&mut h, &|_| "32767".into(), 8);
    per(&mut h, &|_| "HP:0.3Hz".into(), 80);
    per(&mut h, &|s| s.1.to_string(), 8);
    per(&mut h, &|_| String::new(), 32);
    assert_eq!(h.len(), 256 * (ns + 1));
    h
}

#[test]
fn cap_style_header_durations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("n1.edf");
    std::fs::write(&path, raw_header(29_970, "1", &[("Fp2-F4", 512), ("C4-A1", 512), ("ECG1-ECG2", 512)])).unwrap();
    let h = read_edf_header(&path).unwrap();
    assert_eq!(h.duration(), 29_970.0);
    let c4 = h.signal_index("C4").unwrap();
    assert_eq!(h.signals[c4].label, "C4-A1");
    assert_eq!(h.signals[c4].sampling_rate(h.record_duration), 512.0);
    assert_eq!(h.signal_index("Fp2"), Some(0));

    std::fs::write(&path, raw_header(3_600, "2", &[("C4-A1", 256)])).unwrap();
    let h = read_edf_header(&path).unwrap();
    assert_eq!(h.duration(), 7_200.0);
    assert_eq!(h.signals[0].sampling_rate(h.record_duration), 128.0);
}
