use super::encode::{decode_frame, write_png};
use crate::protocol::FrameMessage;
use std::io;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

/// Where rank 0 delivers finished frames.
pub trait FrameSink: Send {
    fn deliver(&mut self, frame: &FrameMessage) -> io::Result<()>;

    /// Out-of-band JSON line, e.g. an error report for observers.
    fn notify(&mut self, _line: &str) -> io::Result<()> {
        Ok(())
    }

    /// Called once when the simulation ends.
    fn close(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Discards everything.
#[derive(Debug, Default)]
pub struct NullSink;

impl FrameSink for NullSink {
    fn deliver(&mut self, _frame: &FrameMessage) -> io::Result<()> {
        Ok(())
    }
}

/// Keeps frames in memory; clones share the same storage.
#[derive(Debug, Clone, Default)]
pub struct MemorySink {
    frames: Arc<Mutex<Vec<FrameMessage>>>,
    notes: Arc<Mutex<Vec<String>>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn frames(&self) -> Vec<FrameMessage> {
        self.frames.lock().unwrap().clone()
    }

    pub fn notes(&self) -> Vec<String> {
        self.notes.lock().unwrap().clone()
    }
}

impl FrameSink for MemorySink {
    fn deliver(&mut self, frame: &FrameMessage) -> io::Result<()> {
        self.frames.lock().unwrap().push(frame.clone());
        Ok(())
    }

    fn notify(&mut self, line: &str) -> io::Result<()> {
        self.notes.lock().unwrap().push(line.to_string());
        Ok(())
    }
}

/// Writes every frame as `frame_<step>.png` into a directory.
#[derive(Debug, Clone)]
pub struct DirectorySink {
    dir: PathBuf,
}

impl DirectorySink {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn path_for(&self, step: u64) -> PathBuf {
        self.dir.join(format!("frame_{step}.png"))
    }
}

impl FrameSink for DirectorySink {
    fn deliver(&mut self, frame: &FrameMessage) -> io::Result<()> {
        let rgba = decode_frame(&frame.image).map_err(io::Error::other)?;
        write_png(&self.path_for(frame.step), frame.image.width, frame.image.height, &rgba)
            .map_err(io::Error::other)
    }
}
