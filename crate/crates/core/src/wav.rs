//! RIFF/WAVE input and output.
//!
//! Reads 16-bit integer PCM (scaled by 1/32768) and 32-bit float PCM; always
//! writes 32-bit float so that `read_wav(write_wav(b))` is exact for
//! buffers whose samples are representable in `f32`.

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::audio::{AudioBuffer, AudioError};
use crate::scalar::Real;

const PCM16_SCALE: f64 = 32768.0;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("no such file: {0}")]
    Missing(PathBuf),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("cannot write {path}: {source}")]
    Unwritable { path: PathBuf, source: io::Error },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

fn classify(path: &Path, err: hound::Error) -> WavError {
    match err {
        hound::Error::IoError(e) if e.kind() == io::ErrorKind::NotFound => {
            WavError::Missing(path.to_path_buf())
        }
        hound::Error::IoError(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
            WavError::MalformedHeader("truncated file".into())
        }
        hound::Error::IoError(e) => WavError::Io(e),
        hound::Error::FormatError(msg) => WavError::MalformedHeader(msg.into()),
        hound::Error::Unsupported => WavError::UnsupportedEncoding("unsupported format tag".into()),
        hound::Error::TooWide | hound::Error::InvalidSampleFormat => {
            WavError::UnsupportedEncoding("invalid sample format".into())
        }
        other => WavError::MalformedHeader(other.to_string()),
    }
}

pub fn read_wav<T: Real>(path: impl AsRef<Path>) -> Result<AudioBuffer<T>, WavError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(WavError::Missing(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| classify(path, e))?;
    let spec = reader.spec();
    let samples: Vec<T> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| T::lit(f64::from(v) / PCM16_SCALE)))
            .collect::<Result<_, _>>()
            .map_err(|e| classify(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| T::lit(f64::from(v))))
            .collect::<Result<_, _>>()
            .map_err(|e| classify(path, e))?,
        (format, bits) => {
            return Err(WavError::UnsupportedEncoding(format!(
                "{bits}-bit {format:?}"
            )))
        }
    };
    Ok(AudioBuffer::new(
        samples,
        usize::from(spec.channels),
        spec.sample_rate,
    )?)
}

pub fn write_wav<T: Real>(buffer: &AudioBuffer<T>, path: impl AsRef<Path>) -> Result<(), WavError> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: u16::try_from(buffer.channels())
            .map_err(|_| WavError::UnsupportedEncoding("too many channels".into()))?,
        sample_rate: buffer.sample_rate(),
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let unwritable = |e: hound::Error| match e {
        hound::Error::IoError(source) => WavError::Unwritable {
            path: path.to_path_buf(),
            source,
        },
        other => classify(path, other),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(unwritable)?;
    for &s in buffer.samples() {
        writer
            .write_sample(s.to_f64_lossy() as f32)
            .map_err(unwritable)?;
    }
    writer.finalize().map_err(unwritable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::fs;

    fn write_pcm16(path: &Path, samples: &[i16], channels: u16) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn reads_pcm16_silence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zeros.wav");
        write_pcm16(&path, &vec![0; 8000], 1);
        let buf: AudioBuffer<f64> = read_wav(&path).unwrap();
        assert_eq!(buf.len(), 8000);
        assert_eq!(buf.channels(), 1);
        assert!(buf.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn pcm16_full_scale_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("max.wav");
        write_pcm16(&path, &[32767, -32768], 1);
        let buf: AudioBuffer<f64> = read_wav(&path).unwrap();
        assert_eq!(buf.samples(), &[32767.0 / 32768.0, -1.0]);
    }

    #[test]
    fn float_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..10 {
            let channels = 1 + trial % 2;
            let len = rng.gen_range(0..500) * channels;
            let samples: Vec<f32> = (0..len).map(|_| rng.gen_range(-1.5f32..1.5)).collect();
            let buf = AudioBuffer::new(samples, channels, 8000).unwrap();
            let path = dir.path().join(format!("rt{trial}.wav"));
            write_wav(&buf, &path).unwrap();
            let back: AudioBuffer<f32> = read_wav(&path).unwrap();
            assert_eq!(back.channels(), buf.channels());
            let same = back
                .samples()
                .iter()
                .zip(buf.samples())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same && back.len() == buf.len(), "trial {trial}");
        }
    }

    #[test]
    fn empty_buffer_writes_empty_data_chunk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.wav");
        let buf = AudioBuffer::<f64>::mono(vec![], 8000).unwrap();
        write_wav(&buf, &path).unwrap();
        let back: AudioBuffer<f64> = read_wav(&path).unwrap();
        assert!(back.is_empty());
        let bytes = fs::read(&path).unwrap();
        let data = bytes.windows(4).position(|w| w == b"data").unwrap();
        assert_eq!(&bytes[data + 4..data + 8], &[0, 0, 0, 0]);
    }

    #[test]
    fn stereo_is_interleaved() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let buf = AudioBuffer::from_channels(&[vec![0.25f32, 0.5], vec![-0.25, -0.5]], 8000)
            .unwrap();
        write_wav(&buf, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let data = bytes.windows(4).position(|w| w == b"data").unwrap() + 8;
        let floats: Vec<f32> = bytes[data..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        assert_eq!(floats, vec![0.25, -0.25, 0.5, -0.5]);
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = read_wav::<f64>(dir.path().join("nope.wav"));
        assert!(matches!(missing, Err(WavError::Missing(_))));

        let garbage = dir.path().join("garbage.wav");
        fs::write(&garbage, b"RIFX1234nonsense").unwrap();
        assert!(matches!(
            read_wav::<f64>(&garbage),
            Err(WavError::MalformedHeader(_))
        ));

        let pcm8 = dir.path().join("pcm8.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 8,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&pcm8, spec).unwrap();
        w.write_sample(3i8).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            read_wav::<f64>(&pcm8),
            Err(WavError::UnsupportedEncoding(_))
        ));

        let buf = AudioBuffer::<f64>::mono(vec![0.0], 8000).unwrap();
        let bad = dir.path().join("no/such/dir/out.wav");
        assert!(matches!(
            write_wav(&buf, &bad),
            Err(WavError::Unwritable { .. })
        ));
    }
}
