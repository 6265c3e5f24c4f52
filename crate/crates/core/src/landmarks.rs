//! Landmark vectors and per-video trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One frame of `M` landmarks stored as an interleaved `2M` vector
/// `[x0, y0, x1, y1, ...]` in image pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    coords: Vec<f64>,
}

impl LandmarkSet {
    pub fn from_flat(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() % 2 != 0 {
            return Err(Error::Shape(format!(
                "landmark vector must have even non-zero length, got {}",
                coords.len()
            )));
        }
        Ok(Self { coords })
    }

    pub fn from_points(points: &[[f64; 2]]) -> Result<Self> {
        Self::from_flat(points.iter().flat_map(|p| [p[0], p[1]]).collect())
    }

    pub fn num_landmarks(&self) -> usize {
        self.coords.len() / 2
    }

    /// Length of the interleaved vector (`2M`).
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        [self.coords[2 * i], self.coords[2 * i + 1]]
    }

    pub fn set_point(&mut self, i: usize, p: [f64; 2]) {
        self.coords[2 * i] = p[0];
        self.coords[2 * i + 1] = p[1];
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.coords.chunks_exact(2).map(|c| [c[0], c[1]])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|v| v.is_finite())
    }

    pub fn translated(&self, offset: [f64; 2]) -> Self {
        let coords = self
            .coords
            .chunks_exact(2)
            .flat_map(|c| [c[0] + offset[0], c[1] + offset[1]])
            .collect();
        Self { coords }
    }
}

/// Axis-aligned box `[x_min, y_min, x_max, y_max]` in image pixels.
pub type FrameBox = [f64; 4];

/// Ordered frames of one video plus the distance used to normalize errors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySequence {
    pub video_id: String,
    pub norm_distance: f64,
    pub frame_box: FrameBox,
    pub frames: Vec<LandmarkSet>,
}

impl TrajectorySequence {
    pub fn new(
        video_id: impl Into<String>,
        norm_distance: f64,
        frame_box: FrameBox,
        frames: Vec<LandmarkSet>,
    ) -> Result<Self> {
        let seq = Self {
            video_id: video_id.into(),
            norm_distance,
            frame_box,
            frames,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_landmarks();
        if let Some((t, f)) = self
            .frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.num_landmarks() != m)
        {
            return Err(Error::Shape(format!(
                "video {}: frame {t} has {} landmarks, expected {m}",
                self.video_id,
                f.num_landmarks()
            )));
        }
        if let Some(t) = self.frames.iter().position(|f| !f.is_finite()) {
            return Err(Error::NonFinite(format!(
                "video {}: frame {t} has non-finite coordinates",
                self.video_id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn num_landmarks(&self) -> usize {
        self.frames.first().map_or(0, LandmarkSet::num_landmarks)
    }

    /// Same metadata, different frames.
    pub fn with_frames(&self, frames: Vec<LandmarkSet>) -> Self {
        Self {
            video_id: self.video_id.clone(),
            norm_distance: self.norm_distance,
            frame_box: self.frame_box,
            frames,
        }
    }
}

/// Trajectory file document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub video_id: String,
    pub num_landmarks: usize,
    pub norm_distance: f64,
    pub frame_box: FrameBox,
    pub frames: Vec<Vec<[f64; 2]>>,
}

impl From<&TrajectorySequence> for TrajectoryFile {
    fn from(seq: &TrajectorySequence) -> Self {
        Self {
            video_id: seq.video_id.clone(),
            num_landmarks: seq.num_landmarks(),
            norm_distance: seq.norm_distance,
            frame_box: seq.frame_box,
            frames: seq.frames.iter().map(|f| f.points().collect()).collect(),
        }
    }
}

impl TryFrom<TrajectoryFile> for TrajectorySequence {
    type Error = Error;

    fn try_from(file: TrajectoryFile) -> Result<Self> {
        let frames = file
            .frames
            .iter()
            .map(|f| LandmarkSet::from_points(f))
            .collect::<Result<Vec<_>>>()?;
        if let Some(t) = frames
            .iter()
            .position(|f| f.num_landmarks() != file.num_landmarks)
        {
            return Err(Error::Shape(format!(
                "frame {t} does not carry num_landmarks = {}",
                file.num_landmarks
            )));
        }
        TrajectorySequence::new(file.video_id, file.norm_distance, file.frame_box, frames)
    }
}

impl TrajectorySequence {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&TrajectoryFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TrajectoryFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

/// Checks that two sequences line up frame for frame.
pub(crate) fn check_aligned(a: &TrajectorySequence, b: &TrajectorySequence) -> Result<()> {
    if a.len() != b.len() || a.num_landmarks() != b.num_landmarks() {
        return Err(Error::Shape(format!(
            "sequences {} ({} frames x {}) and {} ({} frames x {}) are not aligned",
            a.video_id,
            a.len(),
            a.num_landmarks(),
            b.video_id,
            b.len(),
            b.num_landmarks()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_length() {
        assert!(LandmarkSet::from_flat(vec![1.0, 2.0, 3.0]).is_err());
        assert!(LandmarkSet::from_flat(vec![]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let frames = vec![
            LandmarkSet::from_points(&[[1.5, 2.25], [3.0, 4.0]]).unwrap(),
            LandmarkSet::from_points(&[[1.75, 2.5], [3.125, 4.0]]).unwrap(),
        ];
        let seq = TrajectorySequence::new("v0", 100.0, [0.0, 0.0, 64.0, 64.0], frames).unwrap();
        let back = TrajectorySequence::from_json(&seq.to_json().unwrap()).unwrap();
        assert_eq!(seq, back);
    }

    #[test]
    fn json_field_names() {
        let seq = TrajectorySequence::new(
            "v",
            1.0,
            [0.0, 0.0, 1.0, 1.0],
            vec![LandmarkSet::from_points(&[[0.5, 0.5]]).unwrap()],
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&seq.to_json().unwrap()).unwrap();
        for key in ["video_id", "num_landmarks", "norm_distance", "frame_box", "frames"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["frames"][0][0][1], 0.5);
    }

    #[test]
    fn mismatched_landmark_counts_rejected() {
        let frames = vec![
            LandmarkSet::from_points(&[[1.0, 2.0]]).unwrap(),
            LandmarkSet::from_points(&[[1.0, 2.0], [3.0, 4.0]]).unwrap(),
        ];
        assert!(TrajectorySequence::new("v", 1.0, [0.0; 4], frames).is_err());
    }
}
