//! On-disk formats: binary voter-field files, a generic float-grid
//! container for heatmaps/joints/priors, and JSON-lines annotations.
//!
//! Binary payloads are stored as little-endian float32; all in-memory
//! computation stays in float64. Round-trips are bit-exact at the
//! float32 representation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::geometry::LogPolarGrid;
use crate::pipeline::{keypoint_id, KEYPOINT_NAMES, NUM_ANNOTATED};
use crate::voting::VoterField;
use crate::{Error, Result};

pub const FIELD_MAGIC: &[u8; 4] = b"PVFD";
pub const GRID_MAGIC: &[u8; 4] = b"PVGR";
pub const FORMAT_VERSION: u32 = 1;

/// Reader wrapper that tracks the byte offset so parse errors can point
/// at the exact position.
struct Counting<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Counting<R> {
    fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.offset,
            message: message.into(),
        }
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| Error::Format {
            offset: self.offset,
            message: e.to_string(),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.read_exact(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut buf = [0u8; 8];
        self.read_exact(&mut buf)?;
        Ok(u64::from_le_bytes(buf))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut buf = [0u8; 8];
        self.read_exact(&mut buf)?;
        Ok(f64::from_le_bytes(buf))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        if len > 1 << 20 {
            return Err(self.fail(format!("string length {len} too large")));
        }
        let mut buf = vec![0u8; len];
        self.read_exact(&mut buf)?;
        String::from_utf8(buf).map_err(|e| self.fail(e.to_string()))
    }

    fn f32_payload(&mut self, count: usize) -> Result<Vec<f64>> {
        let mut raw = vec![0u8; count * 4];
        self.read_exact(&mut raw)?;
        Ok(raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect())
    }
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn check_magic<R: Read>(r: &mut Counting<R>, magic: &[u8; 4], what: &str) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(r.fail(format!("bad {what} magic {buf:?}")));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(r.fail(format!("unsupported {what} version {version}")));
    }
    Ok(())
}

/// A stack of voter fields for one image, one per keypoint.
#[derive(Debug, Clone)]
pub struct VoterFieldFile {
    pub image_height: usize,
    pub image_width: usize,
    pub stride: usize,
    pub grid: LogPolarGrid,
    pub fields: Vec<VoterField>,
}

impl VoterFieldFile {
    pub fn new(
        image_height: usize,
        image_width: usize,
        stride: usize,
        grid: LogPolarGrid,
        fields: Vec<VoterField>,
    ) -> Result<Self> {
        let file = Self {
            image_height,
            image_width,
            stride,
            grid,
            fields,
        };
        file.validate()?;
        Ok(file)
    }

    fn validate(&self) -> Result<()> {
        if self.stride == 0
            || self.image_height % self.stride != 0
            || self.image_width % self.stride != 0
        {
            return Err(Error::InvalidArgument(format!(
                "image {}x{} not divisible by stride {}",
                self.image_width, self.image_height, self.stride
            )));
        }
        let (h, w) = (self.image_height / self.stride, self.image_width / self.stride);
        for (i, f) in self.fields.iter().enumerate() {
            if f.height != h || f.width != w || f.num_classes != self.grid.num_classes() {
                return Err(Error::ShapeMismatch(format!(
                    "field {i} shape {}x{}x{} vs header {}x{}x{}",
                    f.height,
                    f.width,
                    f.num_classes,
                    h,
                    w,
                    self.grid.num_classes()
                )));
            }
            if f.stride != self.stride {
                return Err(Error::ShapeMismatch(format!(
                    "field {i} stride {} vs header {}",
                    f.stride, self.stride
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(FIELD_MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u64::<LittleEndian>(self.image_height as u64)?;
        w.write_u64::<LittleEndian>(self.image_width as u64)?;
        w.write_u64::<LittleEndian>(self.stride as u64)?;
        w.write_u64::<LittleEndian>(self.grid.num_classes() as u64)?;
        w.write_u64::<LittleEndian>(self.fields.len() as u64)?;
        w.write_u64::<LittleEndian>(self.grid.num_rings() as u64)?;
        w.write_u64::<LittleEndian>(self.grid.angular_bins() as u64)?;
        w.write_f64::<LittleEndian>(self.grid.angular_offset())?;
        w.write_u64::<LittleEndian>(self.grid.ring_boundaries().len() as u64)?;
        for &b in self.grid.ring_boundaries() {
            w.write_f64::<LittleEndian>(b)?;
        }
        for field in &self.fields {
            w.write_u64::<LittleEndian>(field.keypoint_id as u64)?;
            for &v in &field.values {
                w.write_f32::<LittleEndian>(v as f32)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = Counting::new(BufReader::new(File::open(path)?));
        check_magic(&mut r, FIELD_MAGIC, "voter field")?;
        let image_height = r.u64()? as usize;
        let image_width = r.u64()? as usize;
        let stride = r.u64()? as usize;
        let num_classes = r.u64()? as usize;
        let num_fields = r.u64()? as usize;
        let num_rings = r.u64()? as usize;
        let angular_bins = r.u64()? as usize;
        let angular_offset = r.f64()?;
        let num_boundaries = r.u64()? as usize;
        if num_boundaries > 64 {
            return Err(r.fail(format!("{num_boundaries} ring boundaries")));
        }
        let mut ring_boundaries = Vec::with_capacity(num_boundaries);
        for _ in 0..num_boundaries {
            ring_boundaries.push(r.f64()?);
        }
        let grid = LogPolarGrid::new(num_rings, angular_bins, ring_boundaries, angular_offset)?;
        if grid.num_classes() != num_classes {
            return Err(r.fail(format!(
                "header claims {num_classes} classes, grid gives {}",
                grid.num_classes()
            )));
        }
        if stride == 0 || image_height % stride != 0 || image_width % stride != 0 {
            return Err(r.fail("image dimensions not divisible by stride"));
        }
        if num_fields > 4096 {
            return Err(r.fail(format!("{num_fields} fields")));
        }
        let (h, w) = (image_height / stride, image_width / stride);
        let mut fields = Vec::with_capacity(num_fields);
        for _ in 0..num_fields {
            let keypoint_id = r.u64()? as usize;
            let values = r.f32_payload(h * w * num_classes)?;
            fields.push(VoterField::new(keypoint_id, h, w, stride, num_classes, values)?);
        }
        Self::new(image_height, image_width, stride, grid, fields)
    }
}

/// Generic named 2-D float grid with string metadata; used to dump
/// heatmaps, joint tables, conditionals and priors.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatGrid {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub metadata: BTreeMap<String, String>,
    pub values: Vec<f64>,
}

impl FloatGrid {
    pub fn new(name: impl Into<String>, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "grid values {} != {height}x{width}",
                values.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            height,
            width,
            metadata: BTreeMap::new(),
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(GRID_MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        write_string(&mut w, &self.name)?;
        w.write_u64::<LittleEndian>(self.height as u64)?;
        w.write_u64::<LittleEndian>(self.width as u64)?;
        w.write_u64::<LittleEndian>(self.metadata.len() as u64)?;
        for (k, v) in &self.metadata {
            write_string(&mut w, k)?;
            write_string(&mut w, v)?;
        }
        for &v in &self.values {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = Counting::new(BufReader::new(File::open(path)?));
        check_magic(&mut r, GRID_MAGIC, "grid")?;
        let name = r.string()?;
        let height = r.u64()? as usize;
        let width = r.u64()? as usize;
        if height.saturating_mul(width) > 1 << 28 {
            return Err(r.fail(format!("grid {height}x{width} too large")));
        }
        let num_meta = r.u64()? as usize;
        if num_meta > 1 << 16 {
            return Err(r.fail(format!("{num_meta} metadata entries")));
        }
        let mut metadata = BTreeMap::new();
        for _ in 0..num_meta {
            let k = r.string()?;
            let v = r.string()?;
            metadata.insert(k, v);
        }
        let values = r.f32_payload(height * width)?;
        Ok(Self {
            name,
            height,
            width,
            metadata,
            values,
        })
    }
}

/// One annotated (or predicted) person, as a JSON-lines record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PoseRecord {
    pub person_id: u64,
    /// Keypoint name -> pixel [x, y]; unnamed keypoints are missing.
    pub keypoints: BTreeMap<String, [f64; 2]>,
    /// Head rectangle-diagonal endpoints [x1, y1, x2, y2].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_rect: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Rough person center [x, y].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 2]>,
}

impl PoseRecord {
    /// The 16 annotated keypoint locations by canonical name.
    pub fn points16(&self) -> Vec<Option<(f64, f64)>> {
        (0..NUM_ANNOTATED)
            .map(|id| self.keypoints.get(KEYPOINT_NAMES[id]).map(|&[x, y]| (x, y)))
            .collect()
    }

    pub fn from_points16(person_id: u64, points: &[Option<(f64, f64)>]) -> Self {
        let keypoints = points
            .iter()
            .enumerate()
            .filter_map(|(id, p)| p.map(|(x, y)| (KEYPOINT_NAMES[id].to_string(), [x, y])))
            .collect();
        Self {
            person_id,
            keypoints,
            head_rect: None,
            scale: None,
            position: None,
        }
    }

    pub fn head_segment(&self) -> Option<((f64, f64), (f64, f64))> {
        self.head_rect
            .map(|[x1, y1, x2, y2]| ((x1, y1), (x2, y2)))
    }

    /// Rejects keypoint names outside the canonical vocabulary.
    pub fn validate(&self) -> Result<()> {
        for name in self.keypoints.keys() {
            if keypoint_id(name).is_none() {
                return Err(Error::InvalidArgument(format!("unknown keypoint {name:?}")));
            }
        }
        Ok(())
    }
}

pub fn load_records(path: &Path) -> Result<Vec<PoseRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PoseRecord = serde_json::from_str(line).map_err(|e| Error::Format {
            offset: lineno as u64 + 1,
            message: format!("line {}: {e}", lineno + 1),
        })?;
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}

pub fn save_records(path: &Path, records: &[PoseRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut w, record)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_file(seed: u64) -> VoterFieldFile {
        let grid = LogPolarGrid::default_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fields = (0..3)
            .map(|kp| {
                let mut f = random_field(&mut rng, 6, 5, grid.num_classes());
                f.keypoint_id = kp;
                f.stride = 4;
                f
            })
            .collect();
        VoterFieldFile::new(24, 20, 4, grid, fields).unwrap()
    }

    #[test]
    fn field_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fields.pvf");
        let mut file = sample_file(1);
        // quantize to f32 so the round-trip comparison is exact
        for f in &mut file.fields {
            for v in f.values.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
        file.save(&path).unwrap();
        let loaded = VoterFieldFile::load(&path).unwrap();
        assert_eq!(loaded.image_height, 24);
        assert_eq!(loaded.stride, 4);
        assert_eq!(loaded.grid.num_classes(), file.grid.num_classes());
        for (a, b) in file.fields.iter().zip(&loaded.fields) {
            assert_eq!(a.values, b.values);
            assert_eq!(a.keypoint_id, b.keypoint_id);
        }
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fields.pvf");
        sample_file(2).save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        match VoterFieldFile::load(&path) {
            Err(Error::Format { offset, .. }) => assert!(offset > 0 && offset < bytes.len() as u64),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fields.pvf");
        sample_file(3).save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            VoterFieldFile::load(&path),
            Err(Error::Format { offset: 4, .. })
        ));

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'P';
        bytes[4] = 99;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            VoterFieldFile::load(&path),
            Err(Error::Format { offset: 8, .. })
        ));
    }

    #[test]
    fn grid_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("heat.pvg");
        let values: Vec<f64> = (0..12).map(|i| (i as f64 * 0.25) as f32 as f64).collect();
        let mut grid = FloatGrid::new("heatmap/3", 3, 4, values).unwrap();
        grid.metadata.insert("keypoint".into(), "3".into());
        grid.metadata.insert("origin".into(), "-8,-8".into());
        grid.save(&path).unwrap();
        let loaded = FloatGrid::load(&path).unwrap();
        assert_eq!(loaded, grid);
    }

    #[test]
    fn records_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.jsonl");

        // empty file -> empty dataset
        std::fs::write(&path, "").unwrap();
        assert!(load_records(&path).unwrap().is_empty());

        let mut record = PoseRecord::from_points16(
            7,
            &[Some((1.0, 2.0)); NUM_ANNOTATED].to_vec(),
        );
        record.head_rect = Some([0.0, 0.0, 4.0, 3.0]);
        record.scale = Some(1.5);
        save_records(&path, &[record.clone()]).unwrap();
        let loaded = load_records(&path).unwrap();
        assert_eq!(loaded, vec![record]);
        assert_eq!(loaded[0].points16()[5], Some((1.0, 2.0)));
        assert_eq!(loaded[0].head_segment(), Some(((0.0, 0.0), (4.0, 3.0))));

        std::fs::write(&path, "{not json\n").unwrap();
        assert!(matches!(load_records(&path), Err(Error::Format { offset: 1, .. })));

        std::fs::write(&path, "{\"person_id\":1,\"keypoints\":{\"nose\":[1,2]}}\n").unwrap();
        assert!(load_records(&path).is_err());
    }

    #[test]
    fn header_field_mismatch_rejected() {
        let grid = LogPolarGrid::default_grid();
        let classes = grid.num_classes();
        let field = VoterField::new(0, 5, 5, 4, classes, vec![0.0; 25 * classes]).unwrap();
        // header says 24x20 -> 6x5 cells, field is 5x5
        assert!(VoterFieldFile::new(24, 20, 4, grid, vec![field]).is_err());
    }
}
