//! Plain-text dataset archive.
//!
//! ```text
//! <dir>/dataset.json          manifest: store config, demo ids, skill index
//! <dir>/demos/<id>.demo       one record per demonstration
//! ```
//!
//! A record is line oriented. Trajectory rows are `t tx ty tz qw qx qy qz g`,
//! clouds are a count line followed by `x y z` rows and the embedding is a
//! count line followed by one value per line. Floats use the shortest decimal
//! form that parses back to the same bits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{validate_id, Dataset, Demonstration, EndEffectorState, Gripper, StoreConfig};
use crate::embedding::{occupancy_embedding, GeometryEmbedding};
use crate::error::{Error, Result};
use crate::se3::{Frame, PointCloud, Pose, Vec3};

pub const MANIFEST_FILE: &str = "dataset.json";
const DEMO_DIR: &str = "demos";
const RECORD_MAGIC: &str = "mt3-demo 1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: StoreConfig,
    demos: Vec<String>,
    skill_index: BTreeMap<String, BTreeSet<String>>,
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        write!(out, "{v}").unwrap();
    }
    out.push('\n');
}

fn push_state(out: &mut String, s: &EndEffectorState) {
    write!(out, "{} ", s.time_index).unwrap();
    let p = s.pose.to_array();
    for v in p {
        write!(out, "{v} ").unwrap();
    }
    writeln!(out, "{}", s.gripper.as_bit()).unwrap();
}

pub fn format_trajectory_rows(trajectory: &[EndEffectorState]) -> String {
    let mut out = String::new();
    for s in trajectory {
        push_state(&mut out, s);
    }
    out
}

pub fn format_cloud(cloud: &PointCloud) -> String {
    let mut out = format!("{}\n", cloud.len());
    for p in cloud.points() {
        push_row(&mut out, p.iter().copied());
    }
    out
}

/// Line cursor that reports 1-based line numbers in errors.
struct Lines<'a> {
    path: &'a Path,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, path: &'a Path) -> Self {
        Self {
            path,
            iter: text.lines().enumerate(),
            line: 0,
        }
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        match self.iter.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(Error::parse(
                self.path,
                self.line + 1,
                format!("unexpected end of file, expected {what}"),
            )),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(self.path, self.line, message)
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next(key)?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest),
            _ if line == key => Ok(""),
            _ => Err(self.err(format!("expected `{key} ...`"))),
        }
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let v = self.keyed(key)?;
        v.trim()
            .parse()
            .map_err(|_| self.err(format!("bad {key} count {v:?}")))
    }
}

fn parse_f64(lines: &Lines, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| lines.err(format!("not a number: {tok:?}")))?;
    if !v.is_finite() {
        return Err(lines.err(format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

fn parse_floats<const N: usize>(lines: &Lines, line: &str) -> Result<[f64; N]> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != N {
        return Err(lines.err(format!("expected {N} values, found {}", toks.len())));
    }
    let mut out = [0.0; N];
    for (o, t) in out.iter_mut().zip(toks) {
        *o = parse_f64(lines, t)?;
    }
    Ok(out)
}

fn parse_state(lines: &Lines, line: &str) -> Result<EndEffectorState> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != 9 {
        return Err(lines.err(format!(
            "trajectory row needs 9 fields (t tx ty tz qw qx qy qz g), found {}",
            toks.len()
        )));
    }
    let time_index: u64 = toks[0]
        .parse()
        .map_err(|_| lines.err(format!("bad time index {:?}", toks[0])))?;
    let mut pose = [0.0; 7];
    for (v, t) in pose.iter_mut().zip(&toks[1..8]) {
        *v = parse_f64(lines, t)?;
    }
    let q = &pose[3..7];
    let n2: f64 = q.iter().map(|c| c * c).sum();
    if (n2.sqrt() - 1.0).abs() > 1e-6 {
        return Err(lines.err(format!("quaternion norm {} is not 1", n2.sqrt())));
    }
    let gripper = toks[8]
        .parse::<u8>()
        .ok()
        .and_then(Gripper::from_bit)
        .ok_or_else(|| lines.err(format!("gripper must be 0 or 1, got {:?}", toks[8])))?;
    Ok(EndEffectorState {
        pose: Pose::from_array(pose),
        gripper,
        time_index,
    })
}

fn check_times(lines: &Lines, prev: Option<u64>, s: &EndEffectorState) -> Result<()> {
    if prev.is_some_and(|p| s.time_index <= p) {
        return Err(lines.err("time indices must be strictly increasing"));
    }
    Ok(())
}

/// Parses a standalone trajectory file (rows only, blank lines skipped).
pub fn parse_trajectory_rows(text: &str, path: &Path) -> Result<Vec<EndEffectorState>> {
    let mut lines = Lines::new(text, path);
    let mut out: Vec<EndEffectorState> = Vec::new();
    while let Ok(line) = lines.next("row") {
        if line.trim().is_empty() {
            continue;
        }
        let s = parse_state(&lines, line)?;
        check_times(&lines, out.last().map(|p| p.time_index), &s)?;
        out.push(s);
    }
    if out.len() < 2 {
        return Err(Error::parse(
            path,
            lines.line.max(1),
            format!("trajectory needs at least 2 rows, found {}", out.len()),
        ));
    }
    Ok(out)
}

fn parse_cloud_body(lines: &mut Lines) -> Result<PointCloud> {
    let n: usize = {
        let l = lines.next("point count")?;
        l.trim()
            .parse()
            .map_err(|_| lines.err(format!("bad point count {l:?}")))?
    };
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let l = lines.next("point row")?;
        let [x, y, z] = parse_floats::<3>(lines, l)?;
        points.push(Vec3::new(x, y, z));
    }
    Ok(PointCloud::from_trusted(points, Frame::Robot))
}

/// Parses a robot-frame cloud file: a count line then `x y z` rows.
pub fn parse_cloud(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = Lines::new(text, path);
    let cloud = parse_cloud_body(&mut lines)?;
    while let Ok(l) = lines.next("") {
        if !l.trim().is_empty() {
            return Err(lines.err("trailing data after the declared points"));
        }
    }
    Ok(cloud)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_cloud_file(path: &Path) -> Result<PointCloud> {
    parse_cloud(&read_text(path)?, path)
}

pub fn read_trajectory_file(path: &Path) -> Result<Vec<EndEffectorState>> {
    parse_trajectory_rows(&read_text(path)?, path)
}

fn format_record(d: &Demonstration) -> String {
    let mut out = String::new();
    writeln!(out, "{RECORD_MAGIC}").unwrap();
    writeln!(out, "id {}", d.id).unwrap();
    writeln!(out, "description {}", serde_json::to_string(&d.description).unwrap()).unwrap();
    writeln!(out, "micro_skill {}", serde_json::to_string(&d.micro_skill).unwrap()).unwrap();
    match &d.object_instance_id {
        Some(i) => writeln!(out, "instance {}", serde_json::to_string(i).unwrap()).unwrap(),
        None => writeln!(out, "instance -").unwrap(),
    }
    match &d.object_pose {
        Some(p) => {
            out.push_str("object_pose ");
            push_row(&mut out, p.to_array());
        }
        None => writeln!(out, "object_pose -").unwrap(),
    }
    writeln!(out, "trajectory {}", d.trajectory.len()).unwrap();
    out.push_str(&format_trajectory_rows(&d.trajectory));
    out.push_str("cloud\n");
    out.push_str(&format_cloud(&d.object_cloud));
    writeln!(out, "embedding {}", d.embedding.values().len()).unwrap();
    for v in d.embedding.values() {
        writeln!(out, "{v}").unwrap();
    }
    out
}

fn json_field(lines: &Lines, raw: &str) -> Result<String> {
    serde_json::from_str(raw).map_err(|e| lines.err(format!("bad quoted string: {e}")))
}

fn parse_record(text: &str, path: &Path, config: &StoreConfig) -> Result<Demonstration> {
    let mut lines = Lines::new(text, path);
    if lines.next("header")? != RECORD_MAGIC {
        return Err(lines.err(format!("expected header `{RECORD_MAGIC}`")));
    }
    let id = lines.keyed("id")?.to_string();
    validate_id(&id).map_err(|e| lines.err(e.to_string()))?;
    let raw = lines.keyed("description")?;
    let description = json_field(&lines, raw)?;
    let raw = lines.keyed("micro_skill")?;
    let micro_skill = json_field(&lines, raw)?;
    let object_instance_id = match lines.keyed("instance")? {
        "-" => None,
        raw => Some(json_field(&lines, raw)?),
    };
    let object_pose = match lines.keyed("object_pose")? {
        "-" => None,
        raw => Some(Pose::from_array(parse_floats::<7>(&lines, raw)?)),
    };
    let m = lines.count("trajectory")?;
    let mut trajectory: Vec<EndEffectorState> = Vec::with_capacity(m);
    for _ in 0..m {
        let l = lines.next("trajectory row")?;
        let s = parse_state(&lines, l)?;
        check_times(&lines, trajectory.last().map(|p| p.time_index), &s)?;
        trajectory.push(s);
    }
    if trajectory.len() < 2 {
        return Err(lines.err("trajectory needs at least 2 rows"));
    }
    lines.keyed("cloud")?;
    let object_cloud = parse_cloud_body(&mut lines)?;
    let n = lines.count("embedding")?;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let l = lines.next("embedding value")?;
        values.push(parse_f64(&lines, l.trim())?);
    }
    let embedding = GeometryEmbedding::from_values(values, config.grid.clone())
        .map_err(|e| lines.err(e.to_string()))?;
    let recomputed = occupancy_embedding(&object_cloud, &config.grid)
        .map_err(|e| lines.err(e.to_string()))?;
    if recomputed != embedding {
        return Err(lines.err("stored embedding does not match the object cloud"));
    }
    Ok(Demonstration {
        id,
        description,
        micro_skill,
        object_cloud,
        trajectory,
        embedding,
        object_instance_id,
        object_pose,
    })
}

fn record_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(DEMO_DIR).join(format!("{id}.demo"))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    // write-then-rename so an interrupted save never leaves a torn record
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl Dataset {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let demo_dir = dir.join(DEMO_DIR);
        fs::create_dir_all(&demo_dir).map_err(|e| Error::io(&demo_dir, e))?;
        for d in self.demos.values() {
            write_file(&record_path(dir, &d.id), &format_record(d))?;
        }
        let manifest = Manifest {
            format: "mt3-dataset".into(),
            version: 1,
            config: self.config.clone(),
            demos: self.demos.keys().cloned().collect(),
            skill_index: self.skill_index.clone(),
        };
        let json = serde_json::to_string_pretty(&manifest).unwrap();
        write_file(&dir.join(MANIFEST_FILE), &(json + "\n"))
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = read_text(&manifest_path)?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: manifest_path.clone(),
            source,
        })?;
        if manifest.format != "mt3-dataset" || manifest.version != 1 {
            return Err(Error::parse(&manifest_path, 1, "unsupported dataset format"));
        }
        let mut ds = Dataset::new(manifest.config)?;
        for id in &manifest.demos {
            validate_id(id).map_err(|e| Error::parse(&manifest_path, 1, e.to_string()))?;
            let path = record_path(dir, id);
            let demo = parse_record(&read_text(&path)?, &path, &ds.config)?;
            if &demo.id != id {
                return Err(Error::parse(&path, 2, format!("record id {:?} != {id:?}", demo.id)));
            }
            ds.insert(demo)?;
        }
        if ds.skill_index != manifest.skill_index {
            return Err(Error::parse(
                &manifest_path,
                1,
                "skill_index does not match the demonstration records",
            ));
        }
        Ok(ds)
    }
}
