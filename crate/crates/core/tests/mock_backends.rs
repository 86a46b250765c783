use proptest::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use sha2::{Digest, Sha256};

use tonebridge_core::audio::AudioClip;
use tonebridge_core::backends::mock::{
    mock_caption, mock_chat, mock_embedding, mock_frequency, mock_labels, mock_music_clip, MOCK_EMBED_DIM, MOCK_LABELS,
    MOCK_SAMPLE_RATE,
};
use tonebridge_core::backends::{EmbedModality, Embedder, MockBackends, MusicGenerator};
use tonebridge_core::bridge::{render_bridge_messages, ChatMessage, Modality};
use tonebridge_core::captioning::Caption;
use tonebridge_core::templates::TemplateStore;

fn hex8(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..4].iter().map(|b| format!("{b:02x}")).collect()
}

fn peak_hz(clip: &AudioClip) -> f64 {
    let n = clip.samples().len();
    let mut buf: Vec<Complex<f64>> = clip.samples().iter().map(|&s| Complex::new(s as f64, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (bin, _) = buf[1..n / 2]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .unwrap();
    (bin + 1) as f64 * clip.sample_rate() as f64 / n as f64
}

#[test]
fn caption_format() {
    let img = b"\x89PNG fake";
    assert_eq!(mock_caption(img), format!("mock caption {}", hex8(img)));
}

#[test]
fn bridge_reply_keys_on_final_message() {
    let templates = TemplateStore::builtin();
    let messages = render_bridge_messages(
        &templates,
        &Caption::image("a cat on a sofa").unwrap(),
        None,
        Modality::Image,
    );
    let last = &messages.last().unwrap().content;
    assert_eq!(
        mock_chat(&templates, &messages),
        format!("mock music prompt {}", hex8(last.as_bytes()))
    );
}

#[test]
fn unknown_template_reply() {
    let templates = TemplateStore::builtin();
    let messages = vec![ChatMessage::system("be brief"), ChatMessage::user("hello")];
    assert!(mock_chat(&templates, &messages).starts_with("mock: "));
}

#[test]
fn tone_frequency_matches_digest() {
    let prompt = "gentle piano";
    let d = Sha256::digest(prompt.as_bytes());
    let expected = 220 + (u64::from_be_bytes(d[..8].try_into().unwrap()) % 440) as u32;
    assert_eq!(mock_frequency(prompt), expected);
}

#[test]
fn tone_peak_at_expected_frequency() {
    for prompt in ["gentle piano", "epic brass fanfare", "lofi beat with rain"] {
        let clip = mock_music_clip(prompt, 1.0);
        assert_eq!(clip.sample_rate(), MOCK_SAMPLE_RATE);
        assert_eq!(clip.channels(), 1);
        assert_eq!(clip.frame_count(), MOCK_SAMPLE_RATE as usize);
        let peak = peak_hz(&clip);
        assert!((peak - mock_frequency(prompt) as f64).abs() <= 1.0, "{prompt}: {peak}");
        let max = clip.samples().iter().map(|s| s.unsigned_abs()).max().unwrap() as f64 / i16::MAX as f64;
        assert!((max - 0.5).abs() < 0.01, "amplitude {max}");
    }
}

#[test]
fn trait_surface_matches_pure_functions() {
    let mock = MockBackends::new(TemplateStore::builtin());
    let payload = mock.generate("warm synth pads", 0.5).unwrap();
    assert_eq!(payload.wav, mock_music_clip("warm synth pads", 0.5).to_wav_bytes());
    assert_eq!(
        mock.embed(EmbedModality::Audio, b"abc").unwrap(),
        mock_embedding(b"abc")
    );
}

proptest! {
    #[test]
    fn pure_and_deterministic(bytes in proptest::collection::vec(any::<u8>(), 1..256)) {
        prop_assert_eq!(mock_caption(&bytes), mock_caption(&bytes));
        let e = mock_embedding(&bytes);
        prop_assert_eq!(&e, &mock_embedding(&bytes));
        prop_assert_eq!(e.dim(), MOCK_EMBED_DIM);
        let norm: f64 = e.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        let l = mock_labels(&bytes);
        prop_assert_eq!(&l, &mock_labels(&bytes));
        prop_assert_eq!(l.labels().len(), MOCK_LABELS.len());
        prop_assert!((l.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(l.probs().iter().all(|p| *p > 0.0));
    }

    #[test]
    fn tone_in_range(prompt in "[a-z ]{1,40}") {
        let f = mock_frequency(&prompt);
        prop_assert!((220..660).contains(&f));
        prop_assert_eq!(mock_music_clip(&prompt, 0.1).to_wav_bytes(), mock_music_clip(&prompt, 0.1).to_wav_bytes());
    }
}
