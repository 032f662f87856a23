//! Dataset directories.
//!
//! ```text
//! cameras.txt
//! view_0000.png   mask_0000.png   depth_0000.pfm (optional)
//! gt/view_0000.png                gt/depth_0000.pfm (optional)
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use painpaint_core::harness::SyntheticDataset;
use painpaint_core::inpaint::OracleInpainter;
use painpaint_core::propagation::GroundTruthDepth;
use painpaint_core::{DepthMap, Image, ViewId, ViewRecord};

use crate::error::{Error, Result};
use crate::formats::format_cameras;
use crate::io;

pub const CAMERAS: &str = "cameras.txt";
pub const GT_DIR: &str = "gt";

pub fn view_name(id: ViewId) -> String {
    format!("view_{id:04}.png")
}

pub fn mask_name(id: ViewId) -> String {
    format!("mask_{id:04}.png")
}

pub fn depth_name(id: ViewId) -> String {
    format!("depth_{id:04}.pfm")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthView {
    pub image: Image,
    pub depth: Option<DepthMap>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub views: Vec<ViewRecord>,
    pub ground_truth: BTreeMap<ViewId, GroundTruthView>,
    /// FNV-1a over every file read; changes whenever the inputs change.
    pub fingerprint: u64,
}

struct Fnv(u64);

/// FNV-1a hash of `bytes`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = Fnv(FNV_OFFSET);
    h.feed(bytes);
    h.0
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

impl Fnv {
    fn feed(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

fn read_hashed(path: &Path, h: &mut Fnv) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    h.feed(path.file_name().map(|n| n.as_encoded_bytes()).unwrap_or_default());
    h.feed(&bytes);
    Ok(bytes)
}

fn image_from(path: &Path, bytes: &[u8]) -> Result<Image> {
    io::decode_image(bytes).map_err(|source| Error::Image { path: path.into(), source })
}

fn depth_from(path: &Path, bytes: &[u8]) -> Result<DepthMap> {
    io::decode_pfm(bytes).map_err(|m| Error::format(path, 0, m))
}

fn check_size(path: &Path, got: (usize, usize), want: (usize, usize)) -> Result<()> {
    if got != want {
        return Err(Error::Data(format!("{}: size {}x{} does not match camera {}x{}", path.display(), got.0, got.1, want.0, want.1)));
    }
    Ok(())
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Dataset> {
        let mut h = Fnv(FNV_OFFSET);
        let cam_path = root.join(CAMERAS);
        let cam_bytes = read_hashed(&cam_path, &mut h)?;
        let cams = crate::formats::parse_cameras(&cam_path, &String::from_utf8_lossy(&cam_bytes))?;
        if cams.is_empty() {
            return Err(Error::Data(format!("{}: no cameras", cam_path.display())));
        }
        let mut views = Vec::with_capacity(cams.len());
        let mut ground_truth = BTreeMap::new();
        for (id, camera) in cams {
            let dims = camera.dims();
            let p = root.join(view_name(id));
            let image = image_from(&p, &read_hashed(&p, &mut h)?)?;
            check_size(&p, image.dims(), dims)?;
            let p = root.join(mask_name(id));
            let mask = io::decode_mask(&read_hashed(&p, &mut h)?).map_err(|source| Error::Image { path: p.clone(), source })?;
            check_size(&p, mask.dims(), dims)?;
            let p = root.join(depth_name(id));
            let depth = if p.exists() {
                let d = depth_from(&p, &read_hashed(&p, &mut h)?)?;
                check_size(&p, d.dims(), dims)?;
                Some(d)
            } else {
                None
            };
            let gp = root.join(GT_DIR).join(view_name(id));
            if gp.exists() {
                let image = image_from(&gp, &read_hashed(&gp, &mut h)?)?;
                check_size(&gp, image.dims(), dims)?;
                let dp = root.join(GT_DIR).join(depth_name(id));
                let depth = if dp.exists() {
                    let d = depth_from(&dp, &read_hashed(&dp, &mut h)?)?;
                    check_size(&dp, d.dims(), dims)?;
                    Some(d)
                } else {
                    None
                };
                ground_truth.insert(id, GroundTruthView { image, depth });
            }
            views.push(ViewRecord { id, image, mask, depth, camera });
        }
        Ok(Dataset { root: root.to_path_buf(), views, ground_truth, fingerprint: h.0 })
    }

    pub fn view(&self, id: ViewId) -> Result<&ViewRecord> {
        self.views.iter().find(|v| v.id == id).ok_or_else(|| Error::Usage(format!("view {id} is not in the dataset")))
    }

    pub fn has_ground_truth(&self) -> bool {
        self.views.iter().all(|v| self.ground_truth.contains_key(&v.id))
    }

    fn missing_gt(&self, what: &str) -> Error {
        Error::Data(format!("{}: {what} needs ground truth under {GT_DIR}/ for every view", self.root.display()))
    }

    pub fn oracle_inpainter(&self) -> Result<OracleInpainter> {
        if !self.has_ground_truth() {
            return Err(self.missing_gt("the oracle inpainter"));
        }
        Ok(OracleInpainter::new(self.ground_truth.iter().map(|(id, gt)| (*id, gt.image.clone()))))
    }

    pub fn depth_oracle(&self) -> Result<GroundTruthDepth> {
        let mut out = GroundTruthDepth::default();
        for v in &self.views {
            let d = self.ground_truth.get(&v.id).and_then(|g| g.depth.clone()).ok_or_else(|| self.missing_gt("ground-truth depth"))?;
            out.insert(v.id, d);
        }
        Ok(out)
    }

    /// Ground-truth images as full views, for evaluation.
    pub fn ground_truth_records(&self) -> Option<Vec<ViewRecord>> {
        self.views
            .iter()
            .map(|v| {
                let gt = self.ground_truth.get(&v.id)?;
                Some(ViewRecord { image: gt.image.clone(), depth: gt.depth.clone(), ..v.clone() })
            })
            .collect()
    }
}

/// Writes a generated dataset in the directory layout above.
pub fn save_synthetic(root: &Path, ds: &SyntheticDataset) -> Result<()> {
    let cams: Vec<_> = ds.views.iter().map(|v| (v.id, v.camera)).collect();
    io::write(&root.join(CAMERAS), format_cameras(&cams).as_bytes())?;
    for (v, gt) in ds.views.iter().zip(&ds.ground_truth) {
        io::save_image(&root.join(view_name(v.id)), &v.image)?;
        io::save_mask(&root.join(mask_name(v.id)), &v.mask)?;
        if let Some(d) = &v.depth {
            io::save_depth(&root.join(depth_name(v.id)), d)?;
        }
        io::save_image(&root.join(GT_DIR).join(view_name(v.id)), &gt.image)?;
        io::save_depth(&root.join(GT_DIR).join(depth_name(v.id)), &gt.depth)?;
    }
    Ok(())
}
