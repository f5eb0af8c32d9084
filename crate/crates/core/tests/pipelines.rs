mod common;

use common::{burst_clip, iou, video, Burst};
use latentfire::pipeline::{audio_pipeline, video_pipeline, AudioPipelineConfig, BandLabel, VideoPipelineConfig};
use latentfire::salient::LatentDim;
use latentfire::signal::{AudioClip, MelFilterbank};

fn fast_audio(seed: u64, k: LatentDim) -> AudioPipelineConfig {
    let mut cfg = AudioPipelineConfig {
        mel_bands: 32,
        k,
        ..AudioPipelineConfig::default()
    }
    .with_seed(seed);
    cfg.nmf.max_iters = 400;
    cfg.nmf.tol = 1e-5;
    cfg.nmf.objective_stride = 10;
    cfg
}

fn auto(k_max: usize) -> LatentDim {
    LatentDim::Auto {
        k_range: (1, k_max),
        perturb: Default::default(),
        rule: Default::default(),
    }
}

#[test]
fn audio_burst_is_detected_and_attributed() {
    let clip = burst_clip(16000, 10.0, &[Burst { freq: 1000.0, start: 2.0, end: 3.0 }], 11);
    let mut cfg = fast_audio(11, auto(3));
    cfg.labels = vec![BandLabel {
        label: "tone".into(),
        low: 800.0,
        high: 1250.0,
    }];
    let out = audio_pipeline(&clip, &cfg).unwrap();
    assert_eq!(out.events.events.len(), 1);
    let e = &out.events.events[0];
    assert!(iou((e.start_time, e.end_time), (2.0, 3.0)) >= 0.5);
    assert_eq!(e.label.as_deref(), Some("tone"));

    let w = &out.model.unwrap().w;
    let col = w.column(e.source);
    let peak = (0..col.len()).fold(0, |b, i| if col[i] > col[b] { i } else { b });
    let bank = MelFilterbank::new(32, 400, 16000).unwrap();
    assert!(bank.response(peak, 1000.0) > 0.0);
}

#[test]
fn two_bursts_come_from_two_sources() {
    let clip = burst_clip(
        16000,
        10.0,
        &[
            Burst { freq: 500.0, start: 2.0, end: 3.0 },
            Burst { freq: 3000.0, start: 6.0, end: 7.0 },
        ],
        5,
    );
    let out = audio_pipeline(&clip, &fast_audio(5, auto(4))).unwrap();
    let events = &out.events.events;
    assert_eq!(events.len(), 2, "{events:?}");
    assert!(iou((events[0].start_time, events[0].end_time), (2.0, 3.0)) >= 0.5);
    assert!(iou((events[1].start_time, events[1].end_time), (6.0, 7.0)) >= 0.5);
    assert_ne!(events[0].source, events[1].source);
}

#[test]
fn silence_yields_valid_empty_report() {
    let clip = AudioClip::new(vec![0.0; 32000], 16000).unwrap();
    let out = audio_pipeline(&clip, &fast_audio(0, LatentDim::Fixed(2))).unwrap();
    assert!(out.events.events.is_empty());
    let json = serde_json::to_value(&out.events).unwrap();
    assert_eq!(json["events"], serde_json::json!([]));
}

#[test]
fn audio_pipeline_is_deterministic() {
    let clip = burst_clip(8000, 4.0, &[Burst { freq: 1000.0, start: 1.0, end: 2.0 }], 3);
    let cfg = fast_audio(3, auto(2));
    let a = audio_pipeline(&clip, &cfg).unwrap();
    let b = audio_pipeline(&clip, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a.events).unwrap(), serde_json::to_string(&b.events).unwrap());
}

#[test]
fn video_flare_is_flagged() {
    let v = video(128, |t, x, y| {
        if x < 4 && y < 4 && (50..=60).contains(&t) {
            4.0 * (t - 49) as f64 / 11.0
        } else {
            0.0
        }
    });
    let out = video_pipeline(&v, &VideoPipelineConfig::default().with_seed(5)).unwrap();
    let events = &out.events.events;
    assert_eq!(events.len(), 1, "{events:?}");
    assert!(events[0].start_time <= 60.0 && events[0].end_time >= 50.0);
    assert_eq!(out.events.time_unit, "frames");
}

#[test]
fn constant_video_has_no_events() {
    let v = video(128, |_, _, _| 0.0);
    let out = video_pipeline(&v, &VideoPipelineConfig::default().with_seed(1)).unwrap();
    assert!(out.events.events.is_empty());
}

#[test]
fn spike_is_flagged_but_steady_flicker_is_not() {
    let v = video(128, |t, x, y| {
        let mut v = 0.0;
        if x < 4 && y < 4 && t % 4 < 2 {
            v += 1.0;
        }
        if x >= 4 && y >= 4 && t == 70 {
            v += 8.0;
        }
        v
    });
    let out = video_pipeline(&v, &VideoPipelineConfig::default().with_seed(5)).unwrap();
    let events = &out.events.events;
    assert!(!events.is_empty());
    for e in events {
        assert!(e.start_time <= 70.0 && e.end_time >= 70.0, "{e:?}");
        // a flicker event would span most of the clip
        assert!(e.end_time - e.start_time < 64.0);
    }
}
