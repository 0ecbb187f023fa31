//! Minimal external separator: channel 0 echoes the frame, the rest are
//! silent (or echo too with `--broadcast`). Used to exercise the
//! child-process protocol end to end.

use std::io::{self, BufReader, BufWriter, Read, Write};

use anyhow::{bail, Result};
use css_core::separator::{HANDSHAKE_MAGIC, SHUTDOWN_INDEX};

use crate::EchoArgs;

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn run(args: &EchoArgs) -> Result<()> {
    let mut input = BufReader::new(io::stdin().lock());
    let mut output = BufWriter::new(io::stdout().lock());

    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != HANDSHAKE_MAGIC {
        bail!("bad handshake magic {magic:02x?}");
    }
    let _sample_rate = read_u32(&mut input)?;
    let window = read_u32(&mut input)? as usize;
    let channels = read_u32(&mut input)? as usize;
    if let Some(expected) = args.expect_window {
        if expected != window {
            bail!("handshake window {window}, expected {expected}");
        }
    }
    output.write_all(HANDSHAKE_MAGIC)?;
    output.flush()?;

    let mut frame = vec![0u8; 4 * window];
    let silence = vec![0u8; 4 * window];
    loop {
        let index = read_u32(&mut input)?;
        if index == SHUTDOWN_INDEX {
            return Ok(());
        }
        input.read_exact(&mut frame)?;
        let reply = if args.wrong_index { index.wrapping_add(1) } else { index };
        output.write_all(&reply.to_le_bytes())?;
        output.write_all(&frame)?;
        for _ in 1..channels {
            output.write_all(if args.broadcast { &frame } else { &silence })?;
        }
        output.flush()?;
    }
}
