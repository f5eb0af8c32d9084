mod common;

use std::f64::consts::PI;

use latentfire::signal::{
    frame_count, hz_to_mel, mel_spectrogram, mel_to_hz, stft_magnitude, temporal_dft_tensor, AudioClip, Channelization, MelFilterbank,
    TemporalDftConfig,
};

fn tone(freq: f64, sr: u32, secs: f64) -> AudioClip {
    let n = (sr as f64 * secs) as usize;
    AudioClip::new((0..n).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / sr as f64).sin()).collect(), sr).unwrap()
}

#[test]
fn stft_frames_follow_hop() {
    let clip = tone(1000.0, 8000, 1.0);
    let s = stft_magnitude(&clip, 256, 128).unwrap();
    assert_eq!(s.frames(), frame_count(8000, 256, 128));
    assert_eq!(s.bands(), 129);
    let peak = (0..s.bands()).fold(0, |b, i| if s.magnitude.get(i, 10) > s.magnitude.get(b, 10) { i } else { b });
    assert_eq!(peak, 32);
}

#[test]
fn mel_scale_round_trips() {
    for hz in [0.0, 100.0, 440.0, 1000.0, 7999.0] {
        assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
    }
    assert!((hz_to_mel(1000.0) - 1000.0).abs() < 0.5);
}

#[test]
fn mel_energy_lands_in_tone_band() {
    let clip = tone(2000.0, 16000, 0.5);
    let s = mel_spectrogram(&clip, 40, 400, 160).unwrap();
    let bank = MelFilterbank::new(40, 400, 16000).unwrap();
    let totals: Vec<f64> = (0..s.bands()).map(|b| (0..s.frames()).map(|f| s.magnitude.get(b, f)).sum()).collect();
    let peak = (0..totals.len()).fold(0, |b, i| if totals[i] > totals[b] { i } else { b });
    assert!(bank.response(peak, 2000.0) > 0.0);
}

#[test]
fn filterbank_partitions_unity_between_centers() {
    let bank = MelFilterbank::new(20, 512, 16000).unwrap();
    let centers = bank.centers();
    for w in centers.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let total: f64 = (0..20).map(|b| bank.response(b, mid)).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn dft_tensor_shapes_by_channelization() {
    let v = common::video(64, |t, x, _| if x == 0 { (t % 4) as f64 } else { 0.0 });
    for (channels, expected) in [
        (Channelization::FullFrame, 1),
        (Channelization::Blocks { size: 4 }, 4),
        (Channelization::PerPixel, 64),
    ] {
        let cfg = TemporalDftConfig {
            window: 16,
            hop: 8,
            n_freq: Some(5),
            channels,
        };
        let x = temporal_dft_tensor(&v, &cfg).unwrap();
        assert_eq!(x.shape(), &[5, 7, expected]);
        assert!(x.data().iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn period_four_flicker_peaks_at_quarter_bin() {
    let v = common::video(64, |t, _, _| if t % 4 == 0 { 1.0 } else { 0.0 });
    let cfg = TemporalDftConfig {
        window: 16,
        hop: 16,
        n_freq: None,
        channels: Channelization::FullFrame,
    };
    let x = temporal_dft_tensor(&v, &cfg).unwrap();
    let ac: Vec<f64> = (1..x.shape()[0]).map(|f| x.get(&[f, 0, 0])).collect();
    let peak = 1 + (0..ac.len()).fold(0, |b, i| if ac[i] > ac[b] { i } else { b });
    assert_eq!(peak, 4);
}
