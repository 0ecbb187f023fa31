//! Separator running in a child process, spoken to over stdin/stdout.
//!
//! Wire format, little-endian throughout:
//!
//! ```text
//! handshake request   "CSS1" | u32 sample_rate | u32 W | u32 C
//! handshake response  "CSS1"
//! frame request       u32 frame_index | W x f32
//! frame response      u32 frame_index | (C*W) x f32, channel-major
//! shutdown            u32 0xFFFFFFFF
//! ```

use std::io::{self, BufWriter, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use super::{check_frame_len, SeparatedFrame, Separator, SeparatorError};
use crate::framing::Frame;
use crate::scalar::Real;

pub const HANDSHAKE_MAGIC: &[u8; 4] = b"CSS1";
pub const SHUTDOWN_INDEX: u32 = u32::MAX;

pub fn encode_handshake(sample_rate: u32, window: usize, channels: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16);
    out.extend_from_slice(HANDSHAKE_MAGIC);
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(window as u32).to_le_bytes());
    out.extend_from_slice(&(channels as u32).to_le_bytes());
    out
}

pub fn encode_frame_request<T: Real>(index: u32, samples: &[T]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * samples.len());
    out.extend_from_slice(&index.to_le_bytes());
    for &s in samples {
        out.extend_from_slice(&(s.to_f64_lossy() as f32).to_le_bytes());
    }
    out
}

/// Splits a frame response into its index and `channels` planar channels.
pub fn decode_frame_response<T: Real>(
    bytes: &[u8],
    window: usize,
    channels: usize,
) -> Result<(u32, Vec<Vec<T>>), SeparatorError> {
    let expected = 4 + 4 * window * channels;
    if bytes.len() != expected {
        return Err(SeparatorError::Protocol(format!(
            "response has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let index = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let samples: Vec<T> = bytes[4..]
        .chunks_exact(4)
        .map(|c| T::lit(f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))))
        .collect();
    let planar = samples.chunks(window.max(1)).map(<[T]>::to_vec).collect();
    Ok((index, planar))
}

/// Frame-level separator backed by a long-running child process.
pub struct ExternalSeparator {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    responses: Receiver<io::Result<Vec<u8>>>,
    window: usize,
    channels: usize,
    timeout: Duration,
}

impl ExternalSeparator {
    /// Launches `command` and completes the handshake.
    pub fn spawn(
        command: &[String],
        sample_rate: u32,
        window: usize,
        channels: usize,
        timeout: Duration,
    ) -> Result<Self, SeparatorError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| SeparatorError::InvalidSpec("empty external command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(SeparatorError::Spawn)?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let mut stdout = child.stdout.take().expect("stdout is piped");

        let frame_bytes = 4 + 4 * window * channels;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut magic = vec![0u8; HANDSHAKE_MAGIC.len()];
            let first = stdout.read_exact(&mut magic).map(|()| magic);
            let failed = first.is_err();
            if tx.send(first).is_err() || failed {
                return;
            }
            loop {
                let mut buf = vec![0u8; frame_bytes];
                let res = stdout.read_exact(&mut buf).map(|()| buf);
                let failed = res.is_err();
                if tx.send(res).is_err() || failed {
                    return;
                }
            }
        });

        let mut sep = Self {
            child,
            stdin: Some(BufWriter::new(stdin)),
            responses: rx,
            window,
            channels,
            timeout,
        };
        sep.send(&encode_handshake(sample_rate, window, channels))?;
        let reply = sep.receive()?;
        if reply.as_slice() != HANDSHAKE_MAGIC {
            return Err(SeparatorError::Protocol(format!(
                "bad handshake reply {reply:02x?}"
            )));
        }
        Ok(sep)
    }

    fn exit_description(&mut self) -> String {
        let deadline = Instant::now() + Duration::from_millis(500);
        while Instant::now() < deadline {
            match self.child.try_wait() {
                Ok(Some(status)) => return status.to_string(),
                Ok(None) => thread::sleep(Duration::from_millis(10)),
                Err(e) => return e.to_string(),
            }
        }
        "closed its output".into()
    }

    fn send(&mut self, bytes: &[u8]) -> Result<(), SeparatorError> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| SeparatorError::ChildExited("already shut down".into()))?;
        match stdin.write_all(bytes).and_then(|()| stdin.flush()) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => {
                Err(SeparatorError::ChildExited(self.exit_description()))
            }
            Err(e) => Err(SeparatorError::Io(e)),
        }
    }

    fn receive(&mut self) -> Result<Vec<u8>, SeparatorError> {
        match self.responses.recv_timeout(self.timeout) {
            Ok(Ok(bytes)) => Ok(bytes),
            Ok(Err(e)) if e.kind() == io::ErrorKind::UnexpectedEof => {
                Err(SeparatorError::ChildExited(self.exit_description()))
            }
            Ok(Err(e)) => Err(SeparatorError::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(SeparatorError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                Err(SeparatorError::ChildExited(self.exit_description()))
            }
        }
    }

    /// Sends the shutdown sentinel and waits for the child to exit.
    pub fn shutdown(mut self) -> Result<std::process::ExitStatus, SeparatorError> {
        self.send(&SHUTDOWN_INDEX.to_le_bytes())?;
        self.stdin = None;
        Ok(self.child.wait()?)
    }
}

impl Drop for ExternalSeparator {
    fn drop(&mut self) {
        if let Some(mut stdin) = self.stdin.take() {
            let _ = stdin.write_all(&SHUTDOWN_INDEX.to_le_bytes());
            let _ = stdin.flush();
        }
        let deadline = Instant::now() + Duration::from_secs(1);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(5));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl<T: Real> Separator<T> for ExternalSeparator {
    fn channel_count(&self) -> usize {
        self.channels
    }

    fn separate(&mut self, frame: &Frame<T>) -> Result<SeparatedFrame<T>, SeparatorError> {
        check_frame_len(frame, self.window)?;
        let index = u32::try_from(frame.index)
            .ok()
            .filter(|&i| i != SHUTDOWN_INDEX)
            .ok_or_else(|| SeparatorError::Protocol(format!("frame index {} too large", frame.index)))?;
        self.send(&encode_frame_request(index, &frame.samples))?;
        let bytes = self.receive()?;
        let (got, channels) = decode_frame_response(&bytes, self.window, self.channels)?;
        if got != index {
            return Err(SeparatorError::Protocol(format!(
                "response for frame {got}, expected {index}"
            )));
        }
        Ok(SeparatedFrame {
            index: frame.index,
            start: frame.start,
            channels,
        })
    }
}
