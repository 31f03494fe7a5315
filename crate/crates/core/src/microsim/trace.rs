use super::SimWorld;
use crate::topology::{MOVEMENT_COUNT, MOVEMENT_NAMES};
use std::io::Write;

/// Per-step CSV trace: clock, phase index, per-movement color and queue.
pub struct TraceWriter<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(writer: W) -> csv::Result<Self> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["clock_s".to_string(), "phase_index".to_string()];
        header.extend(MOVEMENT_NAMES.iter().map(|m| format!("color_{m}")));
        header.extend(MOVEMENT_NAMES.iter().map(|m| format!("queue_{m}")));
        out.write_record(&header)?;
        Ok(Self { out })
    }

    /// Records the world as it stands after a step.
    pub fn record(&mut self, world: &SimWorld) -> csv::Result<()> {
        let signal = world.signal();
        let mut row = Vec::with_capacity(2 + 2 * MOVEMENT_COUNT);
        row.push(world.clock_s().to_string());
        row.push(signal.phase_index().to_string());
        row.extend((0..MOVEMENT_COUNT).map(|m| signal.color(m).code().to_string()));
        row.extend((0..MOVEMENT_COUNT).map(|m| world.detectors().queue(m).to_string()));
        self.out.write_record(&row)
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        self.out.into_inner().map_err(|e| e.into_error())
    }
}
