//! Text formats: cameras, precomputed matches and features, graph cache,
//! trajectory log and metric reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use painpaint_core::consistency::{ConsistencyError, FeatureChannel, FeatureExtractor, FeatureInput, FeatureVector};
use painpaint_core::graph::{Correspondence, MatchError, MatchSet, Matcher, PerspectiveGraph};
use painpaint_core::metrics::{MetricTable, Psnr};
use painpaint_core::sampler::TrajectoryEntry;
use painpaint_core::{Camera, Intrinsics, Pose, ViewId, ViewRecord};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_nums<T: std::str::FromStr>(path: &Path, line: usize, fields: &[&str]) -> Result<Vec<T>> {
    fields
        .iter()
        .map(|f| f.parse::<T>().map_err(|_| Error::format(path, line, format!("'{f}' is not a number"))))
        .collect()
}

/// One line per view: `id fx fy cx cy width height` then the 16 entries of
/// the row-major world-to-camera matrix.
pub fn format_cameras(cameras: &[(ViewId, Camera)]) -> String {
    let mut out = String::from("# id fx fy cx cy width height world_to_camera[16] (row-major)\n");
    for (id, c) in cameras {
        let k = &c.intrinsics;
        write!(out, "{id} {} {} {} {} {} {}", k.fx, k.fy, k.cx, k.cy, c.width, c.height).unwrap();
        for v in c.pose.to_row_major() {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_cameras(path: &Path, text: &str) -> Result<Vec<(ViewId, Camera)>> {
    let mut out: Vec<(ViewId, Camera)> = Vec::new();
    for (line, rec) in records(text) {
        let f: Vec<&str> = rec.split_whitespace().collect();
        if f.len() != 23 {
            return Err(Error::format(path, line, format!("expected 23 fields, found {}", f.len())));
        }
        let id: ViewId = parse_nums(path, line, &f[0..1])?[0];
        let k: Vec<f64> = parse_nums(path, line, &f[1..5])?;
        let size: Vec<usize> = parse_nums(path, line, &f[5..7])?;
        let m: Vec<f64> = parse_nums(path, line, &f[7..23])?;
        let pose = Pose::from_row_major(&m.try_into().expect("16 values")).map_err(|e| Error::format(path, line, e.to_string()))?;
        let cam = Camera::new(Intrinsics::new(k[0], k[1], k[2], k[3]), pose, size[0], size[1])
            .map_err(|e| Error::format(path, line, e.to_string()))?;
        if out.iter().any(|(i, _)| *i == id) {
            return Err(Error::format(path, line, format!("duplicate view {id}")));
        }
        out.push((id, cam));
    }
    Ok(out)
}

pub fn load_cameras(path: &Path) -> Result<Vec<(ViewId, Camera)>> {
    parse_cameras(path, &read_text(path)?)
}

/// Precomputed matches. Each pair starts with `pair i j` followed by rows
/// `u_i v_i u_j v_j confidence`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileMatcher {
    pairs: BTreeMap<(ViewId, ViewId), MatchSet>,
}

impl FileMatcher {
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        let mut current: Option<(ViewId, ViewId)> = None;
        for (line, rec) in records(text) {
            let f: Vec<&str> = rec.split_whitespace().collect();
            if f[0] == "pair" {
                if f.len() != 3 {
                    return Err(Error::format(path, line, "expected 'pair i j'"));
                }
                let ids: Vec<ViewId> = parse_nums(path, line, &f[1..3])?;
                let key = (ids[0], ids[1]);
                if pairs.contains_key(&key) || pairs.contains_key(&(key.1, key.0)) {
                    return Err(Error::format(path, line, format!("pair {} {} listed twice", key.0, key.1)));
                }
                pairs.insert(key, MatchSet::default());
                current = Some(key);
                continue;
            }
            let key = current.ok_or_else(|| Error::format(path, line, "match row before any 'pair' line"))?;
            if f.len() != 5 {
                return Err(Error::format(path, line, format!("expected 5 fields, found {}", f.len())));
            }
            let v: Vec<f64> = parse_nums(path, line, &f)?;
            if !(0.0..=1.0).contains(&v[4]) {
                return Err(Error::format(path, line, "confidence must be in [0, 1]"));
            }
            pairs.get_mut(&key).unwrap().pairs.push(Correspondence { pixel_i: (v[0], v[1]), pixel_j: (v[2], v[3]), confidence: v[4] });
        }
        Ok(Self { pairs })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(path, &read_text(path)?)
    }

    pub fn format(pairs: &BTreeMap<(ViewId, ViewId), MatchSet>) -> String {
        let mut out = String::new();
        for ((i, j), set) in pairs {
            writeln!(out, "pair {i} {j}").unwrap();
            for c in &set.pairs {
                writeln!(out, "{} {} {} {} {}", c.pixel_i.0, c.pixel_i.1, c.pixel_j.0, c.pixel_j.1, c.confidence).unwrap();
            }
        }
        out
    }
}

impl Matcher for FileMatcher {
    fn match_views(&self, a: &ViewRecord, b: &ViewRecord) -> Result<MatchSet, MatchError> {
        if let Some(m) = self.pairs.get(&(a.id, b.id)) {
            return Ok(m.clone());
        }
        if let Some(m) = self.pairs.get(&(b.id, a.id)) {
            return Ok(m.swapped());
        }
        Err(MatchError::MissingPair(a.id, b.id))
    }
}

/// Feature vectors looked up by image key: `key` for RGB, `key:depth` for
/// the depth channel. One line per image: the key, then the values.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedFeatures {
    vectors: BTreeMap<String, FeatureVector>,
}

impl PrecomputedFeatures {
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut vectors = BTreeMap::new();
        for (line, rec) in records(text) {
            let mut f = rec.split_whitespace();
            let key = f.next().expect("non-empty record").to_string();
            let values: Vec<f64> = parse_nums(path, line, &f.collect::<Vec<_>>())?;
            let v = FeatureVector::new(values).map_err(|e| Error::format(path, line, e.to_string()))?;
            if vectors.insert(key.clone(), v).is_some() {
                return Err(Error::format(path, line, format!("duplicate key '{key}'")));
            }
        }
        Ok(Self { vectors })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(path, &read_text(path)?)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl FeatureExtractor for PrecomputedFeatures {
    fn extract(&self, input: &FeatureInput<'_>) -> Result<FeatureVector, ConsistencyError> {
        let key = input.key.ok_or_else(|| ConsistencyError::Extractor("precomputed features need an image key".into()))?;
        let lookup = match input.channel {
            FeatureChannel::Rgb => key.to_string(),
            FeatureChannel::Depth => format!("{key}:depth"),
        };
        self.vectors.get(&lookup).cloned().ok_or_else(|| ConsistencyError::Extractor(format!("no features for '{lookup}'")))
    }
}

/// On-disk graph. `key` identifies the inputs the graph was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub key: String,
    pub tau: f64,
    pub nodes: Vec<ViewId>,
    pub edges: Vec<(ViewId, ViewId, f64)>,
}

impl GraphFile {
    pub fn from_graph(graph: &PerspectiveGraph, key: impl Into<String>) -> Self {
        Self { key: key.into(), tau: graph.tau(), nodes: graph.nodes().collect(), edges: graph.edges().collect() }
    }

    pub fn to_graph(&self) -> PerspectiveGraph {
        let mut g = PerspectiveGraph::new(self.nodes.iter().copied(), self.tau);
        for &(a, b, w) in &self.edges {
            g.set_edge(a, b, w);
        }
        g
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("graph serializes") + "\n";
        crate::io::write(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(path, e.line(), e.to_string()))
    }
}

/// One JSON object per line.
pub fn format_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<Vec<T>> {
    records(text).map(|(line, rec)| serde_json::from_str(rec).map_err(|e| Error::format(path, line, e.to_string()))).collect()
}

pub fn load_trajectory(path: &Path) -> Result<Vec<TrajectoryEntry>> {
    parse_jsonl(path, &read_text(path)?)
}

fn psnr_text(p: Psnr) -> String {
    match p {
        Psnr::Perfect => "inf".into(),
        Psnr::Finite(db) => format!("{db}"),
    }
}

fn psnr_json(p: Psnr) -> serde_json::Value {
    match p {
        Psnr::Perfect => "inf".into(),
        Psnr::Finite(db) => db.into(),
    }
}

/// `view,psnr,ssim,masked_psnr,masked_ssim`; perfect PSNR is `inf`, missing
/// masked values are empty.
pub fn format_metrics_csv(table: &MetricTable) -> String {
    let mut out = String::from("view,psnr,ssim,masked_psnr,masked_ssim\n");
    for r in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.view,
            psnr_text(r.psnr),
            r.ssim,
            r.masked_psnr.map(psnr_text).unwrap_or_default(),
            r.masked_ssim.map(|s| s.to_string()).unwrap_or_default()
        )
        .unwrap();
    }
    out
}

pub fn format_metrics_summary(table: &MetricTable) -> String {
    let v = serde_json::json!({
        "views": table.rows.len(),
        "mean_psnr": psnr_json(table.mean_psnr),
        "mean_ssim": table.mean_ssim,
        "mean_masked_psnr": table.mean_masked_psnr.map(psnr_json),
        "mean_masked_ssim": table.mean_masked_ssim,
    });
    serde_json::to_string_pretty(&v).expect("summary serializes") + "\n"
}
