//! Voxel digital-twin data model and its on-disk directory format.
//!
//! A twin directory holds `header.json` plus raw little-endian arrays in
//! x-fastest order:
//!
//! | file         | element                          |
//! |--------------|----------------------------------|
//! | `labels.raw` | `u8` tissue label (0..=3)        |
//! | `layers.raw` | `u8` layer (0 none, 1 endo, 2 mid, 3 epi) |
//! | `fibers.raw` | `3 × f32` fiber direction        |
//! | `aha.raw`    | `u8` AHA segment (0 none, 1..=17)|
//!
//! Only `labels.raw` is mandatory. Missing optional arrays are filled in by
//! the [`crate::anatomy`] preprocessing passes.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Myocardial density used to turn voxel volumes into grams.
pub const MYOCARDIAL_DENSITY_G_PER_ML: f64 = 1.053;

/// Tolerance on the norm of stored fiber vectors.
pub const FIBER_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{what}: expected {expected} bytes, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("illegal label byte {byte} at voxel {index}")]
    IllegalLabelByte { byte: u8, index: usize },
    #[error("illegal {what} byte {byte} at voxel {index}")]
    IllegalByte {
        what: &'static str,
        byte: u8,
        index: usize,
    },
    #[error("fiber at voxel {index} has norm {norm}")]
    NonUnitFiber { index: usize, norm: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid twin: {0}")]
    InvalidTwin(String),
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("i/o failure on {path}: {source}")]
    IoFailure { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ModelError + '_ {
    move |source| ModelError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum TissueLabel {
    Outside = 0,
    Healthy = 1,
    BorderZone = 2,
    CoreZone = 3,
}

impl TissueLabel {
    pub fn from_byte(byte: u8) -> Option<Self> {
        match byte {
            0 => Some(Self::Outside),
            1 => Some(Self::Healthy),
            2 => Some(Self::BorderZone),
            3 => Some(Self::CoreZone),
            _ => None,
        }
    }

    /// Any ventricular tissue, scar included.
    pub fn is_myocardium(self) -> bool {
        self != Self::Outside
    }

    /// Tissue that can carry an action potential.
    pub fn is_excitable(self) -> bool {
        matches!(self, Self::Healthy | Self::BorderZone)
    }

    pub fn is_scar(self) -> bool {
        matches!(self, Self::BorderZone | Self::CoreZone)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum Layer {
    None = 0,
    Endo = 1,
    Mid = 2,
    Epi = 3,
}

impl Layer {
    pub fn from_byte(byte: u8) -> Option<Self> {
        match byte {
            0 => Some(Self::None),
            1 => Some(Self::Endo),
            2 => Some(Self::Mid),
            3 => Some(Self::Epi),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Surface {
    Endo,
    Epi,
}

/// Shape family of the twin; drives how transmural depth and the long axis
/// are derived during preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// Flat wall: endocardium at the lowest z face, epicardium at the highest.
    /// The long axis runs along y (base at y = 0) and the circumference along x.
    Slab,
    /// Half ellipsoid shell with its symmetry axis along z, truncated at the
    /// base plane `center_mm[2]`; the apex points towards -z.
    EllipsoidShell {
        center_mm: [f64; 3],
        outer_radii_mm: [f64; 3],
        wall_mm: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacingSite {
    pub id: u32,
    pub aha_segment: u8,
    pub surface: Surface,
    pub center_voxel: [usize; 3],
    #[serde(default = "default_capture_radius")]
    pub capture_radius_mm: f64,
}

fn default_capture_radius() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub origin_mm: [f64; 3],
    pub labels: Vec<TissueLabel>,
}

impl VoxelGrid {
    pub fn new(
        dims: [usize; 3],
        spacing_mm: [f64; 3],
        origin_mm: [f64; 3],
        labels: Vec<TissueLabel>,
    ) -> Result<Self, ModelError> {
        let grid = Self {
            dims,
            spacing_mm,
            origin_mm,
            labels,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dims.contains(&0) {
            return Err(ModelError::InvalidGrid(format!("dims {:?}", self.dims)));
        }
        if self.spacing_mm.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(ModelError::InvalidGrid(format!(
                "spacing {:?}",
                self.spacing_mm
            )));
        }
        if self.labels.len() != self.len() {
            return Err(ModelError::DimensionMismatch {
                what: "labels".into(),
                expected: self.len(),
                found: self.labels.len(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    /// Voxel center in millimeters.
    #[inline]
    pub fn position_mm(&self, index: usize) -> [f64; 3] {
        let c = self.coords(index);
        [
            self.origin_mm[0] + c[0] as f64 * self.spacing_mm[0],
            self.origin_mm[1] + c[1] as f64 * self.spacing_mm[1],
            self.origin_mm[2] + c[2] as f64 * self.spacing_mm[2],
        ]
    }

    pub fn voxel_volume_ml(&self) -> f64 {
        self.spacing_mm.iter().product::<f64>() / 1000.0
    }

    pub fn count(&self, label: TissueLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Neighbor indices within the 3×3×3 block (excluding the voxel itself).
    pub fn neighbors26(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let [i, j, k] = self.coords(index);
        let d = self.dims;
        (0..27usize).filter_map(move |n| {
            if n == 13 {
                return None;
            }
            let di = (n % 3) as isize - 1;
            let dj = ((n / 3) % 3) as isize - 1;
            let dk = (n / 9) as isize - 1;
            let ni = i as isize + di;
            let nj = j as isize + dj;
            let nk = k as isize + dk;
            if ni < 0
                || nj < 0
                || nk < 0
                || ni >= d[0] as isize
                || nj >= d[1] as isize
                || nk >= d[2] as isize
            {
                return None;
            }
            Some(ni as usize + d[0] * (nj as usize + d[1] * nk as usize))
        })
    }

    /// Face neighbors only.
    pub fn neighbors6(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let [i, j, k] = self.coords(index);
        let d = self.dims;
        const OFFS: [[isize; 3]; 6] = [
            [-1, 0, 0],
            [1, 0, 0],
            [0, -1, 0],
            [0, 1, 0],
            [0, 0, -1],
            [0, 0, 1],
        ];
        OFFS.iter().filter_map(move |o| {
            let ni = i as isize + o[0];
            let nj = j as isize + o[1];
            let nk = k as isize + o[2];
            if ni < 0
                || nj < 0
                || nk < 0
                || ni >= d[0] as isize
                || nj >= d[1] as isize
                || nk >= d[2] as isize
            {
                return None;
            }
            Some(ni as usize + d[0] * (nj as usize + d[1] * nk as usize))
        })
    }

    pub fn distance_mm(&self, a: usize, b: usize) -> f64 {
        let pa = self.position_mm(a);
        let pb = self.position_mm(b);
        dist(pa, pb)
    }
}

pub(crate) fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Anatomical substrate for simulation. Per-voxel arrays that have not been
/// computed yet are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalTwin {
    pub grid: VoxelGrid,
    pub geometry: Geometry,
    pub layers: Option<Vec<Layer>>,
    pub fibers: Option<Vec<[f32; 3]>>,
    pub aha_segment: Option<Vec<u8>>,
    pub pacing_sites: Vec<PacingSite>,
}

impl DigitalTwin {
    /// Twin with labels only; everything else left for preprocessing.
    pub fn from_grid(grid: VoxelGrid, geometry: Geometry) -> Self {
        Self {
            grid,
            geometry,
            layers: None,
            fibers: None,
            aha_segment: None,
            pacing_sites: Vec::new(),
        }
    }

    pub fn is_preprocessed(&self) -> bool {
        self.layers.is_some()
            && self.fibers.is_some()
            && self.aha_segment.is_some()
            && self.pacing_sites.len() == 34
    }

    pub fn label(&self, index: usize) -> TissueLabel {
        self.grid.labels[index]
    }

    pub fn layer(&self, index: usize) -> Layer {
        self.layers.as_ref().map_or(Layer::None, |l| l[index])
    }

    pub fn segment(&self, index: usize) -> u8 {
        self.aha_segment.as_ref().map_or(0, |a| a[index])
    }

    pub fn site(&self, id: u32) -> Option<&PacingSite> {
        self.pacing_sites.iter().find(|s| s.id == id)
    }

    /// Checks every per-voxel invariant of the twin.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.grid.validate()?;
        let n = self.grid.len();
        if !self.grid.labels.iter().any(|l| l.is_myocardium()) {
            return Err(ModelError::InvalidTwin("no myocardial voxels".into()));
        }
        if let Some(layers) = &self.layers {
            check_len("layers", n, layers.len())?;
            for (index, (&l, &t)) in layers.iter().zip(&self.grid.labels).enumerate() {
                if (l == Layer::None) != (t == TissueLabel::Outside) {
                    return Err(ModelError::InvalidTwin(format!(
                        "layer {l:?} on {t:?} voxel {index}"
                    )));
                }
            }
        }
        if let Some(fibers) = &self.fibers {
            check_len("fibers", n * 3 * 4, fibers.len() * 3 * 4)?;
            for (index, (f, &t)) in fibers.iter().zip(&self.grid.labels).enumerate() {
                let norm = fiber_norm(f);
                if t.is_excitable() {
                    if (norm - 1.0).abs() > FIBER_NORM_TOLERANCE {
                        return Err(ModelError::NonUnitFiber { index, norm });
                    }
                } else if norm != 0.0 {
                    return Err(ModelError::NonUnitFiber { index, norm });
                }
            }
        }
        if let Some(aha) = &self.aha_segment {
            check_len("aha", n, aha.len())?;
            for (index, (&s, &t)) in aha.iter().zip(&self.grid.labels).enumerate() {
                if s > 17 {
                    return Err(ModelError::IllegalByte {
                        what: "aha",
                        byte: s,
                        index,
                    });
                }
                if (s == 0) != (t == TissueLabel::Outside) {
                    return Err(ModelError::InvalidTwin(format!(
                        "aha segment {s} on {t:?} voxel {index}"
                    )));
                }
            }
        }
        for site in &self.pacing_sites {
            let [i, j, k] = site.center_voxel;
            if i >= self.grid.dims[0] || j >= self.grid.dims[1] || k >= self.grid.dims[2] {
                return Err(ModelError::InvalidTwin(format!(
                    "pacing site {} outside the grid",
                    site.id
                )));
            }
        }
        Ok(())
    }
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected != found {
        return Err(ModelError::DimensionMismatch {
            what: what.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

pub(crate) fn fiber_norm(f: &[f32; 3]) -> f64 {
    let (x, y, z) = (f[0] as f64, f[1] as f64, f[2] as f64);
    (x * x + y * y + z * z).sqrt()
}

/// Mass in grams of all voxels carrying `label`.
pub fn tissue_mass(twin: &DigitalTwin, label: TissueLabel) -> f64 {
    twin.grid.count(label) as f64 * twin.grid.voxel_volume_ml() * MYOCARDIAL_DENSITY_G_PER_ML
}

/// Mass in grams of all non-OUTSIDE voxels.
pub fn myocardial_mass(twin: &DigitalTwin) -> f64 {
    let n = twin.grid.labels.iter().filter(|l| l.is_myocardium()).count();
    n as f64 * twin.grid.voxel_volume_ml() * MYOCARDIAL_DENSITY_G_PER_ML
}

const HEADER: &str = "header.json";
const LABELS: &str = "labels.raw";
const LAYERS: &str = "layers.raw";
const FIBERS: &str = "fibers.raw";
const AHA: &str = "aha.raw";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    origin_mm: [f64; 3],
    order: String,
    geometry: Geometry,
    files: HeaderFiles,
    #[serde(default)]
    pacing_sites: Vec<PacingSite>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HeaderFiles {
    labels: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layers: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fibers: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aha: Option<String>,
}

pub fn save_twin(twin: &DigitalTwin, dir: impl AsRef<Path>) -> Result<(), ModelError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let header = Header {
        dims: twin.grid.dims,
        spacing_mm: twin.grid.spacing_mm,
        origin_mm: twin.grid.origin_mm,
        order: "x-fastest".into(),
        geometry: twin.geometry.clone(),
        files: HeaderFiles {
            labels: LABELS.into(),
            layers: twin.layers.as_ref().map(|_| LAYERS.into()),
            fibers: twin.fibers.as_ref().map(|_| FIBERS.into()),
            aha: twin.aha_segment.as_ref().map(|_| AHA.into()),
        },
        pacing_sites: twin.pacing_sites.clone(),
    };
    write_file(dir, HEADER, serde_json::to_vec_pretty(&header)?)?;
    write_file(
        dir,
        LABELS,
        twin.grid.labels.iter().map(|&l| l as u8).collect(),
    )?;
    if let Some(layers) = &twin.layers {
        write_file(dir, LAYERS, layers.iter().map(|&l| l as u8).collect())?;
    }
    if let Some(fibers) = &twin.fibers {
        let mut bytes = Vec::with_capacity(fibers.len() * 12);
        for f in fibers {
            for c in f {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
        write_file(dir, FIBERS, bytes)?;
    }
    if let Some(aha) = &twin.aha_segment {
        write_file(dir, AHA, aha.clone())?;
    }
    Ok(())
}

fn write_file(dir: &Path, name: &str, bytes: Vec<u8>) -> Result<(), ModelError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(io_err(&path))
}

fn read_file(dir: &Path, name: &str) -> Result<Vec<u8>, ModelError> {
    let path = dir.join(name);
    match fs::read(&path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Err(ModelError::MissingFile(path)),
        Err(e) => Err(ModelError::IoFailure { path, source: e }),
    }
}

pub fn load_twin(dir: impl AsRef<Path>) -> Result<DigitalTwin, ModelError> {
    let dir = dir.as_ref();
    let header: Header = serde_json::from_slice(&read_file(dir, HEADER)?)?;
    if header.order != "x-fastest" {
        return Err(ModelError::InvalidGrid(format!(
            "unsupported voxel order {:?}",
            header.order
        )));
    }
    if header.dims.contains(&0) {
        return Err(ModelError::InvalidGrid(format!("dims {:?}", header.dims)));
    }
    let n = header.dims.iter().product::<usize>();

    let raw = read_file(dir, &header.files.labels)?;
    check_len("labels.raw", n, raw.len())?;
    let labels = raw
        .iter()
        .enumerate()
        .map(|(index, &byte)| {
            TissueLabel::from_byte(byte).ok_or(ModelError::IllegalLabelByte { byte, index })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let grid = VoxelGrid::new(header.dims, header.spacing_mm, header.origin_mm, labels)?;

    let layers = match &header.files.layers {
        Some(name) => {
            let raw = read_file(dir, name)?;
            check_len("layers.raw", n, raw.len())?;
            Some(
                raw.iter()
                    .enumerate()
                    .map(|(index, &byte)| {
                        Layer::from_byte(byte).ok_or(ModelError::IllegalByte {
                            what: "layer",
                            byte,
                            index,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            )
        }
        None => None,
    };
    let fibers = match &header.files.fibers {
        Some(name) => {
            let raw = read_file(dir, name)?;
            check_len("fibers.raw", n * 12, raw.len())?;
            Some(
                raw.chunks_exact(12)
                    .map(|c| {
                        let f = |o: usize| f32::from_le_bytes([c[o], c[o + 1], c[o + 2], c[o + 3]]);
                        [f(0), f(4), f(8)]
                    })
                    .collect(),
            )
        }
        None => None,
    };
    let aha_segment = match &header.files.aha {
        Some(name) => {
            let raw = read_file(dir, name)?;
            check_len("aha.raw", n, raw.len())?;
            Some(raw)
        }
        None => None,
    };

    let twin = DigitalTwin {
        grid,
        geometry: header.geometry,
        layers,
        fibers,
        aha_segment,
        pacing_sites: header.pacing_sites,
    };
    twin.validate()?;
    Ok(twin)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DigitalTwin {
        let mut labels = vec![TissueLabel::Healthy; 4 * 3 * 2];
        labels[0] = TissueLabel::Outside;
        labels[5] = TissueLabel::CoreZone;
        let grid = VoxelGrid::new([4, 3, 2], [1.0, 1.0, 1.0], [0.0; 3], labels).unwrap();
        DigitalTwin::from_grid(grid, Geometry::Slab)
    }

    #[test]
    fn index_and_coords_agree() {
        let t = tiny();
        for idx in 0..t.grid.len() {
            let [i, j, k] = t.grid.coords(idx);
            assert_eq!(t.grid.index(i, j, k), idx);
        }
        assert_eq!(t.grid.index(1, 2, 1), 1 + 4 * (2 + 3));
    }

    #[test]
    fn neighbor_counts() {
        let t = tiny();
        // corner of a 4x3x2 grid
        assert_eq!(t.grid.neighbors26(0).count(), 7);
        assert_eq!(t.grid.neighbors6(0).count(), 3);
        let center = t.grid.index(1, 1, 0);
        assert_eq!(t.grid.neighbors26(center).count(), 17);
    }

    #[test]
    fn masses() {
        let t = tiny();
        assert_eq!(tissue_mass(&t, TissueLabel::BorderZone), 0.0);
        let total = tissue_mass(&t, TissueLabel::Healthy)
            + tissue_mass(&t, TissueLabel::BorderZone)
            + tissue_mass(&t, TissueLabel::CoreZone);
        assert!((total - myocardial_mass(&t)).abs() < 1e-12);

        let grid = VoxelGrid::new(
            [10, 10, 10],
            [1.0; 3],
            [0.0; 3],
            vec![TissueLabel::CoreZone; 1000],
        )
        .unwrap();
        let t = DigitalTwin::from_grid(grid, Geometry::Slab);
        assert!((tissue_mass(&t, TissueLabel::CoreZone) - 1.053).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_bad_dims() {
        assert!(VoxelGrid::new([0, 1, 1], [1.0; 3], [0.0; 3], vec![]).is_err());
        assert!(VoxelGrid::new([1, 1, 1], [0.0, 1.0, 1.0], [0.0; 3], vec![TissueLabel::Healthy]).is_err());
        assert!(matches!(
            VoxelGrid::new([2, 1, 1], [1.0; 3], [0.0; 3], vec![TissueLabel::Healthy]),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn load_reports_missing_header() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_twin(dir.path()),
            Err(ModelError::MissingFile(_))
        ));
    }

    #[test]
    fn short_labels_are_a_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        save_twin(&tiny(), dir.path()).unwrap();
        fs::write(dir.path().join(LABELS), [1u8; 5]).unwrap();
        assert!(matches!(
            load_twin(dir.path()),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn label_byte_seven_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_twin(&tiny(), dir.path()).unwrap();
        let mut raw = fs::read(dir.path().join(LABELS)).unwrap();
        raw[3] = 7;
        fs::write(dir.path().join(LABELS), raw).unwrap();
        assert!(matches!(
            load_twin(dir.path()),
            Err(ModelError::IllegalLabelByte { byte: 7, index: 3 })
        ));
    }

    #[test]
    fn non_unit_fiber_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = tiny();
        let mut fibers: Vec<[f32; 3]> = t
            .grid
            .labels
            .iter()
            .map(|l| if l.is_excitable() { [1.0, 0.0, 0.0] } else { [0.0; 3] })
            .collect();
        fibers[3] = [0.5, 0.0, 0.0];
        t.fibers = Some(fibers);
        // bypass validation on save, catch it on load
        save_twin(&t, dir.path()).unwrap();
        assert!(matches!(
            load_twin(dir.path()),
            Err(ModelError::NonUnitFiber { index: 3, .. })
        ));
    }

    #[test]
    fn unwritable_path_is_io_failure() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let err = save_twin(&tiny(), blocker.join("twin")).unwrap_err();
        assert!(matches!(err, ModelError::IoFailure { .. }));
    }
}
