use css_core::mixgen::{
    conversation_pools, dataset_manifest, read_index, render_conversation, source_file, write_conversation,
    write_index, MIXTURE_FILE,
};
use css_core::pipeline::{run_offline, run_online, PipelineConfig};
use css_core::separator::{IdentitySeparator, SeparatorKind, SeparatorSpec};
use css_core::{
    build_conversation, read_wav, AudioBufferF32, ConversationF32, EmitMode, FramingConfig, GroundTruthF32,
    MixtureSpec, StitchMode, UtteranceStyle,
};
use proptest::prelude::*;

const SR: u32 = 8000;

fn shuffled_oracle(seed: u64) -> SeparatorKind {
    SeparatorKind::Shuffle {
        inner: Box::new(SeparatorKind::OracleSource),
        seed,
    }
}

#[test]
fn single_precision_oracle_round_trip() {
    let pools = conversation_pools(3, 0, SR, UtteranceStyle::Phrased).unwrap();
    let conv: ConversationF32 = build_conversation([&pools[0], &pools[1]], &MixtureSpec::new(0.4, 11)).unwrap();
    let truth = GroundTruthF32::new(conv.clean.clone());
    let framing = FramingConfig::from_seconds(2.0, 1.0, SR).unwrap();
    let spec = SeparatorSpec::new(shuffled_oracle(5), framing.window(), SR);
    let cfg = |emit| PipelineConfig {
        framing,
        stitch: StitchMode::Oracle,
        emit,
        sample_rate: SR,
    };

    let mut sep = spec.build(Some(&truth), conv.mixture.len()).unwrap();
    let offline = run_offline(&conv.mixture, &cfg(EmitMode::Offline), sep.as_mut(), Some(&truth)).unwrap();
    for c in 0..2 {
        for (a, b) in offline.estimates.channel(c).iter().zip(&conv.clean[c]) {
            assert!((a - b).abs() < 1e-5);
        }
    }
    assert!(offline.decisions.iter().any(|d| !d.is_identity()));

    let mut sep = spec.build(Some(&truth), conv.mixture.len()).unwrap();
    let online = run_online(
        &conv.mixture,
        &cfg(EmitMode::Online { n_seg: 2 }),
        sep.as_mut(),
        Some(&truth),
        1234,
    )
    .unwrap();
    assert_eq!(online.estimates, offline.estimates);
}

#[test]
fn written_files_sum_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let entries: Vec<_> = [0.0, 0.6]
        .iter()
        .map(|&o| {
            let manifest = dataset_manifest(9, o, 0, SR, UtteranceStyle::Phrased).unwrap();
            write_conversation(dir.path(), &manifest).unwrap()
        })
        .collect();
    write_index(&dir.path().join("index.jsonl"), &entries).unwrap();
    let back = read_index(&dir.path().join("index.jsonl")).unwrap();
    assert_eq!(back, entries);

    for e in &back {
        let conv_dir = dir.path().join(&e.id);
        let mix: AudioBufferF32 = read_wav(conv_dir.join(MIXTURE_FILE)).unwrap();
        let s1: AudioBufferF32 = read_wav(conv_dir.join(source_file(0))).unwrap();
        let s2: AudioBufferF32 = read_wav(conv_dir.join(source_file(1))).unwrap();
        assert_eq!(mix.len(), e.duration_samples);
        for ((m, a), b) in mix.samples().iter().zip(s1.samples()).zip(s2.samples()) {
            assert_eq!(*m, a + b);
        }
        let manifest = css_core::mixgen::read_manifest(&conv_dir.join("manifest.json")).unwrap();
        let rendered = render_conversation::<f32>(&manifest).unwrap();
        assert_eq!(rendered.mixture, mix);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn identity_survives_any_chunking(
        hop in 1usize..40,
        ratio in 1usize..6,
        len in 1usize..600,
        n_seg_pick in 0usize..6,
        chunk in 1usize..97,
        seed in any::<u64>(),
    ) {
        let window = hop * ratio;
        let n_seg = 1 + n_seg_pick % ratio;
        let data: Vec<f64> = (0..len)
            .map(|t| ((t as u64).wrapping_mul(seed | 1) % 1000) as f64 / 500.0 - 1.0)
            .collect();
        let mix = css_core::AudioBufferF64::mono(data.clone(), SR).unwrap();
        let cfg = PipelineConfig {
            framing: FramingConfig::new(window, hop).unwrap(),
            stitch: StitchMode::CrossCorrelation,
            emit: EmitMode::Online { n_seg },
            sample_rate: SR,
        };
        let mut sep = IdentitySeparator::new(2, window);
        let out = run_online(&mix, &cfg, &mut sep, None, chunk).unwrap();
        prop_assert_eq!(out.estimates.len(), len);
        for c in 0..2 {
            for (a, b) in out.estimates.channel(c).iter().zip(&data) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
        prop_assert!(out.segment_timings.iter().all(|s| s.released_by_frame >= s.segment));
    }
}
