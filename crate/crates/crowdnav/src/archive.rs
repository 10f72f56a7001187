//! Line-delimited JSON demonstration archives.
//!
//! A file starts with one `archive` record, followed by episodes. Each
//! episode is an `episode` header, its `window` records, then one `step`
//! record per simulation step. Floats are written in shortest round-trip
//! form, so reading an archive back reproduces every value bit for bit.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crowdnav_core::demo::{DemoSource, DemoWindow, Demonstration, Outcome};
use crowdnav_core::features::{build_feature_map, FeatureMap, GridWindow, LAYER_NAMES};
use crowdnav_core::geometry::Vec2;
use crowdnav_core::nav::RuntimeConfig;
use crowdnav_core::sim::{make_scenario, PedestrianState, RobotState, Scenario, SimClock, WorldState};
use crowdnav_core::svcr::compute_svcr;

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("unsupported archive version {0}")]
    Version(u32),
    #[error("line {line}: {reason}")]
    Structure { line: usize, reason: String },
    #[error("episode {episode}: {reason}")]
    Replay { episode: u64, reason: String },
    #[error(transparent)]
    Core(#[from] crowdnav_core::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub version: u32,
    pub dt: f64,
    pub scenario: Scenario,
    /// Settings the features and SVCR were computed with.
    pub config: RuntimeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub version: u32,
    pub id: u64,
    pub dt: f64,
    pub scenario: Scenario,
    pub source: DemoSource,
    pub outcome: Outcome,
    pub complete: bool,
    pub steps: usize,
    pub windows: usize,
    pub trajectory_length: f64,
    pub n_s: u64,
    pub svcr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub episode: u64,
    pub index: usize,
    pub start_step: usize,
    pub goal_state: usize,
    pub waypoint: Vec2,
    pub window: GridWindow,
    pub layer_names: Vec<String>,
    /// One row-major `m × m` array per layer.
    pub layers: Vec<Vec<f64>>,
    pub visited: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: u64,
    pub t: usize,
    pub robot: RobotState,
    pub pedestrians: Vec<PedestrianState>,
    /// Command applied from this step to the next; absent on the last step.
    pub command: Option<Vec2>,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Archive(ArchiveHeader),
    Episode(EpisodeHeader),
    Window(WindowRecord),
    Step(StepRecord),
}

/// All records of one demonstration, in file order.
pub fn demo_records(demo: &Demonstration) -> Vec<Record> {
    let mut out = Vec::with_capacity(1 + demo.windows.len() + demo.robot_states.len());
    out.push(Record::Episode(EpisodeHeader {
        version: ARCHIVE_VERSION,
        id: demo.id,
        dt: demo.dt,
        scenario: demo.scenario.clone(),
        source: demo.source.clone(),
        outcome: demo.outcome,
        complete: demo.complete,
        steps: demo.robot_states.len(),
        windows: demo.windows.len(),
        trajectory_length: demo.trajectory_length,
        n_s: demo.n_s,
        svcr: demo.svcr,
    }));
    for (index, w) in demo.windows.iter().enumerate() {
        out.push(Record::Window(WindowRecord {
            episode: demo.id,
            index,
            start_step: w.start_step,
            goal_state: w.goal_state,
            waypoint: w.waypoint,
            window: w.window,
            layer_names: LAYER_NAMES.iter().map(|s| s.to_string()).collect(),
            layers: w.features.layers.clone(),
            visited: w.visited.clone(),
        }));
    }
    for t in 0..demo.robot_states.len() {
        out.push(Record::Step(StepRecord {
            episode: demo.id,
            t,
            robot: demo.robot_states[t],
            pedestrians: demo.pedestrian_history[t].clone(),
            command: demo.commands.get(t).copied(),
            window: demo.step_window[t],
        }));
    }
    out
}

/// The archive lines of one demonstration, newline terminated.
pub fn demo_to_jsonl(demo: &Demonstration) -> String {
    let mut s = String::new();
    for r in demo_records(demo) {
        s.push_str(&serde_json::to_string(&r).expect("records serialize"));
        s.push('\n');
    }
    s
}

/// Appends episodes to an archive file, writing the header when the file
/// is new.
pub struct ArchiveWriter {
    out: BufWriter<File>,
    path: PathBuf,
    next_id: u64,
}

impl ArchiveWriter {
    pub fn create(path: &Path, header: &ArchiveHeader) -> Result<Self, ArchiveError> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", serde_json::to_string(&Record::Archive(header.clone())).unwrap())?;
        out.flush()?;
        Ok(Self { out, path: path.to_path_buf(), next_id: 0 })
    }

    /// Opens an existing archive for appending (its header must match
    /// `header`'s version), or creates a new one.
    pub fn append(path: &Path, header: &ArchiveHeader) -> Result<Self, ArchiveError> {
        if !path.exists() || std::fs::metadata(path)?.len() == 0 {
            return Self::create(path, header);
        }
        let existing = read_archive(path)?;
        let next_id = existing.demos.iter().map(|d| d.id + 1).max().unwrap_or(0);
        let out = BufWriter::new(OpenOptions::new().append(true).open(path)?);
        Ok(Self { out, path: path.to_path_buf(), next_id })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Id the next appended episode should carry.
    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn write(&mut self, demo: &Demonstration) -> Result<(), ArchiveError> {
        self.out.write_all(demo_to_jsonl(demo).as_bytes())?;
        self.out.flush()?;
        self.next_id = self.next_id.max(demo.id + 1);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub header: ArchiveHeader,
    pub demos: Vec<Demonstration>,
}

pub fn write_archive(path: &Path, header: &ArchiveHeader, demos: &[Demonstration]) -> Result<(), ArchiveError> {
    let mut w = ArchiveWriter::create(path, header)?;
    for d in demos {
        w.write(d)?;
    }
    Ok(())
}

pub fn read_archive(path: &Path) -> Result<Archive, ArchiveError> {
    parse_archive(BufReader::new(File::open(path)?))
}

struct Partial {
    header: EpisodeHeader,
    windows: Vec<DemoWindow>,
    steps: Vec<StepRecord>,
}

fn structure(line: usize, reason: impl Into<String>) -> ArchiveError {
    ArchiveError::Structure { line, reason: reason.into() }
}

pub fn parse_archive(reader: impl BufRead) -> Result<Archive, ArchiveError> {
    let mut header: Option<ArchiveHeader> = None;
    let mut demos = Vec::new();
    let mut current: Option<Partial> = None;
    let mut last_line = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|source| ArchiveError::Parse { line: line_no, source })?;
        match record {
            Record::Archive(h) => {
                if header.is_some() {
                    return Err(structure(line_no, "second archive header"));
                }
                if h.version != ARCHIVE_VERSION {
                    return Err(ArchiveError::Version(h.version));
                }
                header = Some(h);
            }
            Record::Episode(h) => {
                if header.is_none() {
                    return Err(structure(line_no, "episode before archive header"));
                }
                if h.version != ARCHIVE_VERSION {
                    return Err(ArchiveError::Version(h.version));
                }
                if let Some(p) = current.take() {
                    demos.push(finish(p, line_no)?);
                }
                current = Some(Partial { header: h, windows: Vec::new(), steps: Vec::new() });
            }
            Record::Window(w) => {
                let p = current.as_mut().ok_or_else(|| structure(line_no, "window outside an episode"))?;
                if w.episode != p.header.id || w.index != p.windows.len() {
                    return Err(structure(line_no, "window out of order"));
                }
                if w.layer_names.iter().map(String::as_str).ne(LAYER_NAMES.iter().copied()) {
                    return Err(structure(line_no, "unexpected feature layers"));
                }
                p.windows.push(DemoWindow {
                    window: w.window,
                    waypoint: w.waypoint,
                    start_step: w.start_step,
                    goal_state: w.goal_state,
                    features: FeatureMap { window: w.window, layers: w.layers },
                    visited: w.visited,
                });
            }
            Record::Step(s) => {
                let p = current.as_mut().ok_or_else(|| structure(line_no, "step outside an episode"))?;
                if s.episode != p.header.id || s.t != p.steps.len() {
                    return Err(structure(line_no, "step out of order"));
                }
                p.steps.push(s);
            }
        }
    }
    if let Some(p) = current.take() {
        demos.push(finish(p, last_line)?);
    }
    let header = header.ok_or_else(|| structure(0, "missing archive header"))?;
    Ok(Archive { header, demos })
}

fn finish(p: Partial, line: usize) -> Result<Demonstration, ArchiveError> {
    let h = p.header;
    if p.steps.len() != h.steps || p.windows.len() != h.windows {
        return Err(structure(line, format!("episode {} is truncated", h.id)));
    }
    if p.steps.iter().any(|s| s.window >= p.windows.len()) {
        return Err(structure(line, format!("episode {} refers to a missing window", h.id)));
    }
    let commands: Vec<Vec2> = p.steps.iter().filter_map(|s| s.command).collect();
    if commands.len() + 1 != p.steps.len().max(1) {
        return Err(structure(line, format!("episode {} has misplaced commands", h.id)));
    }
    Ok(Demonstration {
        id: h.id,
        dt: h.dt,
        scenario: h.scenario,
        source: h.source,
        outcome: h.outcome,
        complete: h.complete,
        robot_states: p.steps.iter().map(|s| s.robot).collect(),
        pedestrian_history: p.steps.iter().map(|s| s.pedestrians.clone()).collect(),
        commands,
        step_window: p.steps.iter().map(|s| s.window).collect(),
        windows: p.windows,
        trajectory_length: h.trajectory_length,
        n_s: h.n_s,
        svcr: h.svcr,
    })
}

/// World snapshot at `step` of a recorded demonstration.
pub fn world_at(demo: &Demonstration, step: usize, config: &RuntimeConfig) -> Result<WorldState, ArchiveError> {
    let base = make_scenario(&demo.scenario, &config.sim)?;
    Ok(WorldState {
        clock: SimClock { step_index: step as u64, dt: demo.dt },
        robot: demo.robot_states[step],
        robot_goal: base.robot_goal,
        pedestrians: demo.pedestrian_history[step].clone(),
        obstacles: base.obstacles,
    })
}

/// Replay closure: recomputes every stored feature map from the raw state
/// history and the SVCR from the windows, and demands exact equality.
pub fn verify_demo(demo: &Demonstration, config: &RuntimeConfig) -> Result<(), ArchiveError> {
    let fail = |reason: String| ArchiveError::Replay { episode: demo.id, reason };
    for (k, w) in demo.windows.iter().enumerate() {
        if w.start_step >= demo.robot_states.len() {
            return Err(fail(format!("window {k} starts after the last step")));
        }
        let world = world_at(demo, w.start_step, config)?;
        let fm = build_feature_map(&world, &w.window, w.waypoint, &config.features);
        if fm.layers != w.features.layers {
            return Err(fail(format!("window {k} features differ from the recomputation")));
        }
    }
    let (n_s, svcr) = compute_svcr(demo, &config.svcr)?;
    if n_s != demo.n_s || svcr.to_bits() != demo.svcr.to_bits() {
        return Err(fail(format!("stored SVCR ({}, {}) but recomputed ({n_s}, {svcr})", demo.n_s, demo.svcr)));
    }
    let length = crowdnav_core::demo::trajectory_length(&demo.robot_states);
    if length.to_bits() != demo.trajectory_length.to_bits() {
        return Err(fail("trajectory length differs".into()));
    }
    Ok(())
}

pub fn verify_archive(archive: &Archive) -> Result<(), ArchiveError> {
    archive.demos.iter().try_for_each(|d| verify_demo(d, &archive.header.config))
}
