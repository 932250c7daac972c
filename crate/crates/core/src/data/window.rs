use super::{DataError, RawRecording};

/// Frame indices of the `len`-frame window centered on `t`, replicating
/// the first and last frame past the edges.
pub fn window_indices(frames: usize, t: usize, len: usize) -> Vec<usize> {
    let half = (len / 2) as isize;
    let last = frames as isize - 1;
    (-half..=half)
        .map(|o| (t as isize + o).clamp(0, last) as usize)
        .collect()
}

/// The window centered on one labeled frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowRef {
    pub center: usize,
    pub frames: Vec<usize>,
}

/// One window per frame of `rec`.
pub fn window_sequences(rec: &RawRecording, len: usize) -> Result<Vec<WindowRef>, DataError> {
    if len % 2 == 0 {
        return Err(DataError::Format(format!("window length must be odd, got {len}")));
    }
    let n = rec.frames();
    if n == 0 {
        return Err(DataError::RecordingTooShort(rec.subject_id.clone()));
    }
    Ok((0..n)
        .map(|t| WindowRef {
            center: t,
            frames: window_indices(n, t, len),
        })
        .collect())
}
