//! Raw depth maps: `FRDP`, version byte, little-endian `u32` width and height,
//! then `width·height` little-endian `f32` depths in meters, row-major.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use super::IoError;

pub const DEPTH_MAGIC: &[u8; 4] = b"FRDP";
pub const DEPTH_VERSION: u8 = 0x01;
const HEADER_LEN: usize = 4 + 1 + 4 + 4;

/// Half-width of the fallback window used when the centroid pixel has no depth.
pub const FALLBACK_RADIUS: i64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
}

#[inline]
fn valid_depth(v: f32) -> bool {
    v.is_finite() && v > 0.0
}

impl DepthMap {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self, IoError> {
        if values.len() != width as usize * height as usize {
            return Err(IoError::Format(format!(
                "{}x{} depth map needs {} values, got {}",
                width,
                height,
                width as usize * height as usize,
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    #[inline]
    pub fn raw(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Depth at a pixel, `None` when outside the image or invalid.
    pub fn get(&self, x: i64, y: i64) -> Option<f64> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return None;
        }
        let v = self.raw(x as u32, y as u32);
        valid_depth(v).then_some(v as f64)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(DEPTH_MAGIC);
        out.push(DEPTH_VERSION);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, IoError> {
        if bytes.len() < HEADER_LEN {
            return Err(IoError::Format("depth file shorter than header".into()));
        }
        if &bytes[..4] != DEPTH_MAGIC {
            return Err(IoError::Format("bad depth magic".into()));
        }
        if bytes[4] != DEPTH_VERSION {
            return Err(IoError::Format(format!("unsupported depth version {}", bytes[4])));
        }
        let width = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[9..13].try_into().unwrap());
        let body = &bytes[HEADER_LEN..];
        let expected = width as usize * height as usize;
        if body.len() != expected * 4 {
            return Err(IoError::Format(format!(
                "header says {width}x{height} ({expected} values) but body holds {} bytes",
                body.len()
            )));
        }
        let values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { width, height, values })
    }
}

pub fn read_depth_map(path: impl AsRef<Path>) -> Result<DepthMap, IoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| IoError::open(path, e))?;
    DepthMap::decode(&bytes)
}

pub fn write_depth_map(path: impl AsRef<Path>, map: &DepthMap) -> Result<(), IoError> {
    let path = path.as_ref();
    fs::write(path, map.encode()).map_err(|e| IoError::write(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DepthError {
    #[error("centroid outside the depth map")]
    OutOfBounds,
    #[error("no valid depth around the centroid")]
    Missing,
}

/// Depth at the bbox centroid: the rounded centroid pixel if valid, else the
/// median of valid depths in the surrounding 5×5 window.
pub fn sample_centroid_depth(cx: f64, cy: f64, depth: &DepthMap) -> Result<f64, DepthError> {
    if !cx.is_finite() || !cy.is_finite() {
        return Err(DepthError::OutOfBounds);
    }
    let x = cx.round_ties_even() as i64;
    let y = cy.round_ties_even() as i64;
    if x < 0 || y < 0 || x >= depth.width as i64 || y >= depth.height as i64 {
        return Err(DepthError::OutOfBounds);
    }
    if let Some(d) = depth.get(x, y) {
        return Ok(d);
    }
    let mut window: Vec<f64> = (-FALLBACK_RADIUS..=FALLBACK_RADIUS)
        .flat_map(|dy| (-FALLBACK_RADIUS..=FALLBACK_RADIUS).map(move |dx| (dx, dy)))
        .filter_map(|(dx, dy)| depth.get(x + dx, y + dy))
        .collect();
    median(&mut window).ok_or(DepthError::Missing)
}

/// Median; the mean of the two middle values for even counts.
pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Resolves a detection's `depth_ref` to a depth map.
pub trait DepthSource {
    fn depth_map(&self, reference: &str) -> Result<Arc<DepthMap>, IoError>;
}

/// For streams that only carry inline centroid depths.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoDepth;

impl DepthSource for NoDepth {
    fn depth_map(&self, reference: &str) -> Result<Arc<DepthMap>, IoError> {
        Err(IoError::Format(format!("no depth source configured for {reference}")))
    }
}

/// Reads depth files relative to a root directory, keeping the last one loaded.
#[derive(Debug)]
pub struct DepthDirectory {
    root: PathBuf,
    last: Mutex<Option<(String, Arc<DepthMap>)>>,
}

impl DepthDirectory {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), last: Mutex::new(None) }
    }
}

impl DepthSource for DepthDirectory {
    fn depth_map(&self, reference: &str) -> Result<Arc<DepthMap>, IoError> {
        let mut last = self.last.lock().expect("depth cache poisoned");
        if let Some((key, map)) = last.as_ref() {
            if key == reference {
                return Ok(Arc::clone(map));
            }
        }
        let map = Arc::new(read_depth_map(self.root.join(reference))?);
        *last = Some((reference.to_owned(), Arc::clone(&map)));
        Ok(map)
    }
}

#[derive(Debug, Default, Clone)]
pub struct InMemoryDepth {
    pub maps: HashMap<String, Arc<DepthMap>>,
}

impl InMemoryDepth {
    pub fn insert(&mut self, reference: impl Into<String>, map: DepthMap) {
        self.maps.insert(reference.into(), Arc::new(map));
    }
}

impl DepthSource for InMemoryDepth {
    fn depth_map(&self, reference: &str) -> Result<Arc<DepthMap>, IoError> {
        self.maps.get(reference).cloned().ok_or_else(|| IoError::Format(format!("unknown depth reference {reference}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_map_round_trips() {
        let map = DepthMap::new(2, 2, vec![1.0; 4]).unwrap();
        let decoded = DepthMap::decode(&map.encode()).unwrap();
        assert_eq!(decoded.values, vec![1.0; 4]);
        assert_eq!((decoded.width, decoded.height), (2, 2));
    }

    #[test]
    fn header_body_mismatch_is_format_error() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(DEPTH_MAGIC);
        bytes.push(DEPTH_VERSION);
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&4u32.to_le_bytes());
        for _ in 0..12 {
            bytes.extend_from_slice(&1.0f32.to_le_bytes());
        }
        assert!(matches!(DepthMap::decode(&bytes), Err(IoError::Format(_))));
    }

    #[test]
    fn bad_magic_and_version_rejected() {
        let mut bytes = DepthMap::new(1, 1, vec![1.0]).unwrap().encode();
        bytes[0] = b'X';
        assert!(DepthMap::decode(&bytes).is_err());
        let mut bytes = DepthMap::new(1, 1, vec![1.0]).unwrap().encode();
        bytes[4] = 2;
        assert!(DepthMap::decode(&bytes).is_err());
    }

    #[test]
    fn negative_values_preserved_but_invalid_on_sampling() {
        let map = DepthMap::decode(&DepthMap::new(1, 1, vec![-1.0]).unwrap().encode()).unwrap();
        assert_eq!(map.values, vec![-1.0]);
        assert_eq!(map.get(0, 0), None);
        assert_eq!(sample_centroid_depth(0.0, 0.0, &map), Err(DepthError::Missing));
    }

    #[test]
    fn centroid_pixel_depth_used_directly() {
        let mut values = vec![1.0; 25];
        values[2 * 5 + 2] = 2.5;
        let map = DepthMap::new(5, 5, values).unwrap();
        assert_eq!(sample_centroid_depth(2.2, 1.8, &map), Ok(2.5));
    }

    #[test]
    fn invalid_centroid_falls_back_to_window_median() {
        // 24 valid neighbours: 12 at 2.0, 12 at 4.0 -> median 3.0.
        let values: Vec<f32> = (0..25)
            .map(|i| match i {
                0..=11 => 2.0,
                12 => f32::NAN,
                _ => 4.0,
            })
            .collect();
        let valid: Vec<f32> = values.iter().copied().filter(|v| valid_depth(*v)).collect();
        assert_eq!(valid.len(), 24);
        let map = DepthMap::new(5, 5, values).unwrap();
        assert_eq!(sample_centroid_depth(2.0, 2.0, &map), Ok(3.0));
    }

    #[test]
    fn fully_invalid_window_is_missing() {
        let map = DepthMap::new(5, 5, vec![0.0; 25]).unwrap();
        assert_eq!(sample_centroid_depth(2.0, 2.0, &map), Err(DepthError::Missing));
        assert_eq!(sample_centroid_depth(9.0, 2.0, &map), Err(DepthError::OutOfBounds));
    }

    #[test]
    fn rounding_is_ties_to_even() {
        let map = DepthMap::new(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(sample_centroid_depth(0.5, 0.0, &map), Ok(1.0));
        assert_eq!(sample_centroid_depth(1.5, 0.0, &map), Ok(3.0));
    }

    #[test]
    fn directory_source_reads_files() {
        let dir = tempfile::tempdir().unwrap();
        let map = DepthMap::new(2, 1, vec![1.5, 2.5]).unwrap();
        write_depth_map(dir.path().join("a.frdp"), &map).unwrap();
        let src = DepthDirectory::new(dir.path());
        assert_eq!(*src.depth_map("a.frdp").unwrap(), map);
        assert_eq!(*src.depth_map("a.frdp").unwrap(), map);
        assert!(src.depth_map("missing.frdp").is_err());
    }
}
