//! The PNS1 stream a trainer consumes: produce a few batches into memory,
//! then parse them back the way a reader on the other end of a pipe would.

use std::io::Cursor;

use aberro::dataset::{stream_batches, write_pipe, DatasetSpec, PipeReader};
use aberro::optics::Preset;

fn main() -> aberro::Result<()> {
    let spec = DatasetSpec::from_preset(&Preset::point_scanning(), 0, 7);

    let mut wire = Vec::new();
    let n = write_pipe(&mut wire, &spec, 4, Some(2))?;
    println!("{n} records, {} bytes", wire.len());

    let mut reader = PipeReader::new(Cursor::new(wire))?;
    let h = reader.header.clone();
    println!("volume {:?}, batch {}, record {} bytes", h.volume_shape, h.batch_size, h.record_len());
    while let Some(rec) = reader.next_record()? {
        let peak = rec.volume.iter().copied().fold(f32::MIN, f32::max);
        println!("a5 {:+.4}  a6 {:+.4}  peak {peak:.3}", rec.amplitudes[0], rec.amplitudes[1]);
    }

    // the same samples, in process
    let mut batches = stream_batches(&spec, 4)?;
    let first = batches.next().expect("stream is endless")?;
    println!("in-process batch indices {:?}, a5 of sample 0 {:+.4}", first.indices, first.amplitudes[0].get(5));
    Ok(())
}
