//! PCM-16 audio clips and their RIFF/WAVE encoding.

use std::io::Cursor;

use thiserror::Error;

pub const SUPPORTED_SAMPLE_RATES: [u32; 6] = [16_000, 22_050, 24_000, 32_000, 44_100, 48_000];

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("not a readable WAV payload: {0}")]
    Wav(#[from] hound::Error),
    #[error("unsupported sample rate {0} Hz")]
    SampleRate(u32),
    #[error("unsupported channel count {0}")]
    Channels(u16),
    #[error("unsupported sample format: {0}")]
    Format(String),
    #[error("clip has no samples")]
    Empty,
    #[error("backend reported {reported} Hz but the payload is {actual} Hz")]
    SampleRateMismatch { reported: u32, actual: u32 },
    #[error("clip lasts {actual:.3} s, requested {requested:.3} s")]
    DurationMismatch { requested: f64, actual: f64 },
    #[error("sample count {samples} is not a multiple of {channels} channels")]
    Ragged { samples: usize, channels: u16 },
}

/// Interleaved PCM-16 samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioClip {
    samples: Vec<i16>,
    sample_rate: u32,
    channels: u16,
}

impl AudioClip {
    pub fn new(samples: Vec<i16>, sample_rate: u32, channels: u16) -> Result<Self, AudioError> {
        if !SUPPORTED_SAMPLE_RATES.contains(&sample_rate) {
            return Err(AudioError::SampleRate(sample_rate));
        }
        if !(1..=2).contains(&channels) {
            return Err(AudioError::Channels(channels));
        }
        if samples.is_empty() {
            return Err(AudioError::Empty);
        }
        if !samples.len().is_multiple_of(channels as usize) {
            return Err(AudioError::Ragged {
                samples: samples.len(),
                channels,
            });
        }
        Ok(Self {
            samples,
            sample_rate,
            channels,
        })
    }

    pub fn samples(&self) -> &[i16] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> u16 {
        self.channels
    }

    pub fn frame_count(&self) -> usize {
        self.samples.len() / self.channels as usize
    }

    pub fn duration_s(&self) -> f64 {
        self.frame_count() as f64 / self.sample_rate as f64
    }

    /// Decodes a WAV payload. PCM-8/24/32 and IEEE float inputs are
    /// requantized to 16 bits.
    pub fn from_wav_bytes(bytes: &[u8]) -> Result<Self, AudioError> {
        let reader = hound::WavReader::new(Cursor::new(bytes))?;
        let spec = reader.spec();
        let samples: Vec<i16> = match (spec.sample_format, spec.bits_per_sample) {
            (hound::SampleFormat::Int, 16) => reader.into_samples::<i16>().collect::<Result<_, _>>()?,
            (hound::SampleFormat::Int, bits @ (8 | 24 | 32)) => {
                let shift = bits as i32 - 16;
                reader
                    .into_samples::<i32>()
                    .map(|s| {
                        s.map(|v| {
                            if shift >= 0 {
                                (v >> shift) as i16
                            } else {
                                (v << -shift) as i16
                            }
                        })
                    })
                    .collect::<Result<_, _>>()?
            }
            (hound::SampleFormat::Float, 32) => reader
                .into_samples::<f32>()
                .map(|s| s.map(|v| (v.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16))
                .collect::<Result<_, _>>()?,
            (format, bits) => return Err(AudioError::Format(format!("{format:?} {bits}-bit"))),
        };
        Self::new(samples, spec.sample_rate, spec.channels)
    }

    pub fn to_wav_bytes(&self) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels: self.channels,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::with_capacity(44 + self.samples.len() * 2));
        {
            let mut writer = hound::WavWriter::new(&mut cursor, spec).expect("in-memory writer");
            let mut samples = writer.get_i16_writer(self.samples.len() as u32);
            for s in &self.samples {
                samples.write_sample(*s);
            }
            samples.flush().expect("in-memory write");
            writer.finalize().expect("in-memory write");
        }
        cursor.into_inner()
    }
}
