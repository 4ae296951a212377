//! Deterministic synthetic scenes: agents on piecewise-linear paths emitting
//! detections, noisy embeddings and ground truth, with scripted occlusions.
//!
//! Generator: `ChaCha8Rng::seed_from_u64(seed)`. Standard normals come from
//! `rand_distr::StandardNormal`. Per frame, for each agent visible that frame in
//! ascending agent id, the generator draws `dim` normals (embedding noise), one
//! uniform (score jitter) and one uniform (dropout), in that order, whether or
//! not the values end up used. Identity vectors are drawn first (see
//! [`identity_vectors`]).
//!
//! Embedding noise has per-component standard deviation `sigma / sqrt(dim)`,
//! so `sigma` is the expected norm of the noise vector.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::association::iou;
use crate::error::{Error, Result};
use crate::kv;
use crate::mot_io::{self, DetectionFileRow, FrameDetections, GtRow};
use crate::types::{BoundingBox, Detection, Embedding};

/// Minimum pairwise cosine distance between generated identities.
pub const MIN_IDENTITY_DISTANCE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub frame: u32,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    /// Ground-truth id; also the `<k>` in `agent.<k>.*` script keys.
    pub id: u64,
    pub width: f64,
    pub height: f64,
    pub path: Vec<Waypoint>,
    /// Inclusive frame intervals. Empty means visible on every frame.
    pub visible: Vec<(u32, u32)>,
}

impl AgentSpec {
    pub fn new(id: u64, size: (f64, f64), path: &[(u32, f64, f64)]) -> Self {
        AgentSpec {
            id,
            width: size.0,
            height: size.1,
            path: path
                .iter()
                .map(|&(frame, cx, cy)| Waypoint { frame, cx, cy })
                .collect(),
            visible: Vec::new(),
        }
    }

    pub fn visible_during(mut self, intervals: &[(u32, u32)]) -> Self {
        self.visible = intervals.to_vec();
        self
    }

    pub fn is_visible(&self, frame: u32) -> bool {
        self.visible.is_empty() || self.visible.iter().any(|&(a, b)| a <= frame && frame <= b)
    }

    /// Linear interpolation between waypoints, held constant outside them.
    pub fn position(&self, frame: u32) -> (f64, f64) {
        let first = self.path[0];
        if frame <= first.frame {
            return (first.cx, first.cy);
        }
        for w in self.path.windows(2) {
            let (a, b) = (w[0], w[1]);
            if frame <= b.frame {
                let t = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
                return (a.cx + t * (b.cx - a.cx), a.cy + t * (b.cy - a.cy));
            }
        }
        let last = self.path[self.path.len() - 1];
        (last.cx, last.cy)
    }

    pub fn bbox(&self, frame: u32) -> BoundingBox {
        let (cx, cy) = self.position(frame);
        BoundingBox {
            left: cx - self.width / 2.0,
            top: cy - self.height / 2.0,
            width: self.width,
            height: self.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioScript {
    pub image_width: f64,
    pub image_height: f64,
    pub frames: u32,
    pub dim: usize,
    pub sigma: f64,
    pub iou_trigger: f64,
    pub beta: f64,
    pub dropout: f64,
    pub seed: u64,
    /// Cosine similarity shared by every pair of identity vectors.
    pub identity_similarity: f64,
    pub score: f64,
    pub score_jitter: f64,
    pub agents: Vec<AgentSpec>,
}

impl Default for ScenarioScript {
    fn default() -> Self {
        ScenarioScript {
            image_width: 1920.0,
            image_height: 1080.0,
            frames: 100,
            dim: 64,
            sigma: 0.05,
            iou_trigger: 0.3,
            beta: 0.6,
            dropout: 1.0,
            seed: 0,
            identity_similarity: 0.4,
            score: 0.9,
            score_jitter: 0.0,
            agents: Vec::new(),
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Scenario(msg.into())
}

fn parse_path(line: usize, raw: &str) -> Result<Vec<Waypoint>> {
    raw.split_whitespace()
        .map(|tok| {
            let p: Vec<&str> = tok.split(':').collect();
            let err = || Error::parse(line, format!("invalid waypoint `{tok}`, expected frame:cx:cy"));
            if p.len() != 3 {
                return Err(err());
            }
            Ok(Waypoint {
                frame: p[0].parse().map_err(|_| err())?,
                cx: p[1].parse().map_err(|_| err())?,
                cy: p[2].parse().map_err(|_| err())?,
            })
        })
        .collect()
}

fn parse_intervals(line: usize, raw: &str) -> Result<Vec<(u32, u32)>> {
    raw.split(',')
        .map(|tok| {
            let tok = tok.trim();
            let err = || Error::parse(line, format!("invalid interval `{tok}`, expected a-b"));
            let (a, b) = tok.split_once('-').ok_or_else(err)?;
            Ok((a.trim().parse().map_err(|_| err())?, b.trim().parse().map_err(|_| err())?))
        })
        .collect()
}

fn parse_size(line: usize, raw: &str) -> Result<(f64, f64)> {
    let err = || Error::parse(line, format!("invalid size `{raw}`, expected WxH"));
    let (w, h) = raw.split_once('x').ok_or_else(err)?;
    Ok((w.trim().parse().map_err(|_| err())?, h.trim().parse().map_err(|_| err())?))
}

impl ScenarioScript {
    pub fn validate(&self) -> Result<()> {
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return Err(bad("image size must be positive"));
        }
        if self.frames == 0 {
            return Err(bad("frames must be >= 1"));
        }
        if self.dim == 0 {
            return Err(bad("dim must be >= 1"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(bad("sigma must be >= 0"));
        }
        for (name, v) in [
            ("beta", self.beta),
            ("dropout", self.dropout),
            ("iou_trigger", self.iou_trigger),
            ("score", self.score),
            ("score_jitter", self.score_jitter),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.identity_similarity)
            || 1.0 - self.identity_similarity < MIN_IDENTITY_DISTANCE
        {
            return Err(bad(format!(
                "identity_similarity must be in [0, {}]",
                1.0 - MIN_IDENTITY_DISTANCE
            )));
        }
        if !self.agents.is_empty() && self.agents.len() + 1 > self.dim {
            return Err(bad(format!(
                "{} agents need dim >= {}",
                self.agents.len(),
                self.agents.len() + 1
            )));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if i > 0 && self.agents[i - 1].id >= a.id {
                return Err(bad("agent ids must be unique and ascending"));
            }
            if a.id == 0 {
                return Err(bad("agent ids start at 1"));
            }
            if !(a.width > 0.0 && a.height > 0.0) {
                return Err(bad(format!("agent {} has a non-positive size", a.id)));
            }
            if a.path.is_empty() {
                return Err(bad(format!("agent {} has no path", a.id)));
            }
            if a.path.windows(2).any(|w| w[0].frame >= w[1].frame) {
                return Err(bad(format!("agent {} waypoints must have increasing frames", a.id)));
            }
            if a.visible.iter().any(|&(s, e)| s == 0 || s > e) {
                return Err(bad(format!("agent {} has an invalid visibility interval", a.id)));
            }
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut s = ScenarioScript::default();
        let mut agents: std::collections::BTreeMap<u64, (Option<(f64, f64)>, Vec<Waypoint>, Vec<(u32, u32)>)> =
            Default::default();
        for e in kv::entries(text)? {
            if let Some(rest) = e.key.strip_prefix("agent.") {
                let (id, field) = rest
                    .split_once('.')
                    .ok_or_else(|| Error::UnknownKey(e.key.to_string()))?;
                let id: u64 = id.parse().map_err(|_| Error::UnknownKey(e.key.to_string()))?;
                let slot = agents.entry(id).or_default();
                match field {
                    "size" => slot.0 = Some(parse_size(e.line, e.value)?),
                    "path" => slot.1 = parse_path(e.line, e.value)?,
                    "visible" => slot.2 = parse_intervals(e.line, e.value)?,
                    _ => return Err(Error::UnknownKey(e.key.to_string())),
                }
                continue;
            }
            match e.key {
                "image_width" => s.image_width = kv::value(&e)?,
                "image_height" => s.image_height = kv::value(&e)?,
                "frames" => s.frames = kv::value(&e)?,
                "dim" => s.dim = kv::value(&e)?,
                "sigma" => s.sigma = kv::value(&e)?,
                "iou_trigger" => s.iou_trigger = kv::value(&e)?,
                "beta" => s.beta = kv::value(&e)?,
                "dropout" => s.dropout = kv::value(&e)?,
                "seed" => s.seed = kv::value(&e)?,
                "identity_similarity" => s.identity_similarity = kv::value(&e)?,
                "score" => s.score = kv::value(&e)?,
                "score_jitter" => s.score_jitter = kv::value(&e)?,
                other => return Err(Error::UnknownKey(other.to_string())),
            }
        }
        for (id, (size, path, visible)) in agents {
            let (width, height) = size.ok_or_else(|| bad(format!("agent {id} has no size")))?;
            s.agents.push(AgentSpec {
                id,
                width,
                height,
                path,
                visible,
            });
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "image_width={}", self.image_width);
        let _ = writeln!(s, "image_height={}", self.image_height);
        let _ = writeln!(s, "frames={}", self.frames);
        let _ = writeln!(s, "dim={}", self.dim);
        let _ = writeln!(s, "sigma={}", self.sigma);
        let _ = writeln!(s, "iou_trigger={}", self.iou_trigger);
        let _ = writeln!(s, "beta={}", self.beta);
        let _ = writeln!(s, "dropout={}", self.dropout);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "identity_similarity={}", self.identity_similarity);
        let _ = writeln!(s, "score={}", self.score);
        let _ = writeln!(s, "score_jitter={}", self.score_jitter);
        for a in &self.agents {
            let _ = writeln!(s, "agent.{}.size={}x{}", a.id, a.width, a.height);
            let path: Vec<String> = a
                .path
                .iter()
                .map(|w| format!("{}:{}:{}", w.frame, w.cx, w.cy))
                .collect();
            let _ = writeln!(s, "agent.{}.path={}", a.id, path.join(" "));
            if !a.visible.is_empty() {
                let vis: Vec<String> = a.visible.iter().map(|(x, y)| format!("{x}-{y}")).collect();
                let _ = writeln!(s, "agent.{}.visible={}", a.id, vis.join(","));
            }
        }
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn image_size(&self) -> (f64, f64) {
        (self.image_width, self.image_height)
    }
}

/// One emitted detection with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDetection {
    pub detection: Detection,
    pub agent: u64,
    /// Embedding was blended with an overlapping agent's identity.
    pub blended: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedFrame {
    pub frame: u32,
    pub detections: Vec<SimulatedDetection>,
    /// Agents visible but suppressed by occlusion this frame.
    pub dropped: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub frame_count: u32,
    /// Identity vector per agent, in script order.
    pub identities: Vec<(u64, Embedding)>,
    /// One entry per frame `1..=frame_count`.
    pub frames: Vec<SimulatedFrame>,
}

impl Dataset {
    pub fn identity(&self, agent: u64) -> Option<&Embedding> {
        self.identities.iter().find(|(id, _)| *id == agent).map(|(_, e)| e)
    }

    /// Per-frame detections as the tracker consumes them, including empty frames.
    pub fn detection_frames(&self) -> Vec<FrameDetections> {
        self.frames
            .iter()
            .map(|f| FrameDetections {
                frame: f.frame,
                detections: f.detections.iter().map(|d| d.detection.clone()).collect(),
            })
            .collect()
    }

    pub fn detection_rows(&self) -> Vec<DetectionFileRow> {
        self.all()
            .map(|d| DetectionFileRow {
                frame: d.detection.frame,
                id: -1,
                bbox: d.detection.bbox,
                score: d.detection.score,
                extra: [-1.0; 3],
            })
            .collect()
    }

    pub fn embeddings(&self) -> Vec<Embedding> {
        self.all()
            .map(|d| d.detection.embedding.clone().expect("simulated detections carry embeddings"))
            .collect()
    }

    pub fn ground_truth(&self) -> Vec<GtRow> {
        self.all()
            .map(|d| GtRow {
                frame: d.detection.frame,
                id: d.agent,
                bbox: d.detection.bbox,
            })
            .collect()
    }

    fn all(&self) -> impl Iterator<Item = &SimulatedDetection> {
        self.frames.iter().flat_map(|f| &f.detections)
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(v: Vec<f64>) -> Result<Embedding> {
    Embedding::unit(v).map_err(|_| bad("degenerate random vector"))
}

/// Identity vectors `sqrt(s) * u + sqrt(1 - s) * r_k`, where `u` and the `r_k`
/// are orthonormal (Gram-Schmidt over standard-normal draws), so every pair has
/// cosine similarity exactly `s` up to rounding.
pub fn identity_vectors(rng: &mut ChaCha8Rng, count: usize, dim: usize, s: f64) -> Result<Vec<Embedding>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count + 1);
    while basis.len() < count + 1 {
        let mut v = normal_vec(rng, dim);
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= n);
        basis.push(v);
    }
    let (a, b) = (s.sqrt(), (1.0 - s).sqrt());
    let u = &basis[0];
    basis[1..]
        .iter()
        .map(|r| unit(u.iter().zip(r).map(|(x, y)| a * x + b * y).collect()))
        .collect()
}

/// Rounds through the file formats so in-memory data equals parsed data.
fn quantize_embedding(v: &[f64]) -> Result<Embedding> {
    let q = v
        .iter()
        .map(|x| format!("{x:.8}").parse::<f64>().expect("formatted float parses"))
        .collect();
    unit(q)
}

fn quantize(x: f64, digits: usize) -> f64 {
    format!("{x:.digits$}").parse().expect("formatted float parses")
}

/// Generates the dataset described by `script`.
pub fn simulate(script: &ScenarioScript) -> Result<Dataset> {
    script.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let dim = script.dim;
    let ids = identity_vectors(&mut rng, script.agents.len(), dim, script.identity_similarity)?;
    for i in 0..ids.len() {
        for j in 0..i {
            if 1.0 - ids[i].dot(&ids[j]) < MIN_IDENTITY_DISTANCE - 1e-9 {
                return Err(bad("identity vectors are not separable"));
            }
        }
    }
    let noise_scale = script.sigma / (dim as f64).sqrt();

    let mut frames = Vec::with_capacity(script.frames as usize);
    for frame in 1..=script.frames {
        let visible: Vec<usize> = (0..script.agents.len())
            .filter(|&k| script.agents[k].is_visible(frame))
            .collect();
        let boxes: Vec<BoundingBox> = visible.iter().map(|&k| script.agents[k].bbox(frame)).collect();

        let mut out = SimulatedFrame {
            frame,
            detections: Vec::new(),
            dropped: Vec::new(),
        };
        for (vi, &k) in visible.iter().enumerate() {
            let noise = normal_vec(&mut rng, dim);
            let jitter: f64 = rng.random();
            let drop_draw: f64 = rng.random();
            let agent = &script.agents[k];

            // Strongest overlapping partner, and whether anyone overlapping is in front.
            let mut partner: Option<(usize, f64)> = None;
            let mut behind = false;
            for (vj, &other) in visible.iter().enumerate() {
                if vj == vi {
                    continue;
                }
                let o = iou(&boxes[vi], &boxes[vj]);
                if o <= script.iou_trigger {
                    continue;
                }
                if partner.is_none_or(|(_, best)| o > best) {
                    partner = Some((other, o));
                }
                let (mine, theirs) = (boxes[vi].bottom(), boxes[vj].bottom());
                if theirs > mine || (theirs == mine && other > k) {
                    behind = true;
                }
            }
            if behind && drop_draw < script.dropout {
                out.dropped.push(agent.id);
                continue;
            }

            let identity = ids[k].values();
            let noisy: Vec<f64> = identity
                .iter()
                .zip(&noise)
                .map(|(x, n)| x + noise_scale * n)
                .collect();
            let raw = match partner {
                Some((p, _)) => {
                    let own = unit(noisy)?;
                    own.values()
                        .iter()
                        .zip(ids[p].values())
                        .map(|(a, b)| (1.0 - script.beta) * a + script.beta * b)
                        .collect()
                }
                None => noisy,
            };
            let embedding = quantize_embedding(&raw)?;
            let score = quantize(
                (script.score + script.score_jitter * (2.0 * jitter - 1.0)).clamp(0.0, 1.0),
                6,
            );
            let b = boxes[vi];
            let bbox = BoundingBox::new(quantize(b.left, 2), quantize(b.top, 2), b.width, b.height)?;
            out.detections.push(SimulatedDetection {
                detection: Detection::new(frame, bbox, score, Some(embedding)),
                agent: agent.id,
                blended: partner.is_some(),
            });
        }
        frames.push(out);
    }
    Ok(Dataset {
        dim,
        frame_count: script.frames,
        identities: script.agents.iter().map(|a| a.id).zip(ids).collect(),
        frames,
    })
}

pub const DET_FILE: &str = "det.txt";
pub const EMBEDDING_FILE: &str = "embeddings.txt";
pub const GT_FILE: &str = "gt.txt";

/// Writes `det.txt`, `embeddings.txt` and `gt.txt` into `out_dir`, creating it
/// if needed.
pub fn emit_dataset(script: &ScenarioScript, out_dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = out_dir.as_ref();
    let data = simulate(script)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    mot_io::write_detection_rows(&data.detection_rows(), dir.join(DET_FILE))?;
    mot_io::write_embeddings(&data.embeddings(), data.dim, dir.join(EMBEDDING_FILE))?;
    mot_io::write_ground_truth(&data.ground_truth(), dir.join(GT_FILE))?;
    Ok(data)
}

/// Ready-made scenarios. Each has a bundled script file under `scenarios/`.
pub mod presets {
    use super::*;

    /// Agent 1 walks left and stops at frame 40, exactly where agent 2 appears
    /// in front of it and keeps walking left. Agent 1 is hidden (its box is
    /// dropped) until the two separate at frame 48, while agent 2's embedding
    /// is contaminated by agent 1's identity. A tracker following agent 1 by
    /// motion ends up bound to agent 2.
    pub fn canonical_crossing(seed: u64) -> ScenarioScript {
        ScenarioScript {
            frames: 150,
            seed,
            agents: vec![
                AgentSpec::new(1, (60.0, 150.0), &[(1, 1200.0, 540.0), (40, 1044.0, 540.0)]),
                AgentSpec::new(2, (60.0, 150.0), &[(40, 1044.0, 544.0), (150, 604.0, 544.0)])
                    .visible_during(&[(40, 150)]),
            ],
            ..ScenarioScript::default()
        }
    }

    /// Agent 2 passes in front of a standing agent 1; their boxes overlap
    /// above the trigger on frames 43 to 46 only. Nothing is dropped.
    pub fn occlusion_blip(seed: u64) -> ScenarioScript {
        ScenarioScript {
            frames: 100,
            beta: 0.4,
            dropout: 0.0,
            seed,
            agents: vec![
                AgentSpec::new(1, (60.0, 150.0), &[(1, 960.0, 540.0)]),
                AgentSpec::new(2, (60.0, 150.0), &[(1, 264.0, 550.0), (100, 1848.0, 550.0)]),
            ],
            ..ScenarioScript::default()
        }
    }

    /// Eight agents on straight random paths through the middle of the frame,
    /// with score jitter (some detections fall below the high-score cut) and
    /// probabilistic dropout of occluded boxes.
    pub fn cluttered_crossing(seed: u64) -> ScenarioScript {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c1u64);
        let frames = 150;
        let agents = (1..=8u64)
            .map(|id| {
                let mut pt = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
                let (x0, y0) = (pt(300.0, 1620.0), pt(300.0, 780.0));
                let (x1, y1) = (pt(300.0, 1620.0), pt(300.0, 780.0));
                let (w, h) = (pt(45.0, 65.0).round(), pt(120.0, 170.0).round());
                AgentSpec::new(
                    id,
                    (w, h),
                    &[(1, x0.round(), y0.round()), (frames, x1.round(), y1.round())],
                )
            })
            .collect();
        ScenarioScript {
            frames,
            beta: 0.6,
            dropout: 0.5,
            score: 0.75,
            score_jitter: 0.25,
            seed,
            agents,
            ..ScenarioScript::default()
        }
    }

    /// `agents` agents on a 10-wide grid, each swaying horizontally; boxes never
    /// overlap. Used for throughput checks.
    pub fn dense(seed: u64, agents: usize, frames: u32) -> ScenarioScript {
        let cols = 10usize;
        let rows = agents.div_ceil(cols).max(1);
        let (cw, ch) = (1920.0 / cols as f64, 1080.0 / rows as f64);
        let agents = (0..agents)
            .map(|k| {
                let (c, r) = ((k % cols) as f64, (k / cols) as f64);
                let (cx, cy) = (cw * (c + 0.5), ch * (r + 0.5));
                let sway = if k % 2 == 0 { 40.0 } else { -40.0 };
                let mut path = Vec::new();
                let mut f = 1;
                let mut side = -1.0;
                while f <= frames {
                    path.push((f, cx + side * sway, cy));
                    side = -side;
                    f += 100;
                }
                AgentSpec::new(k as u64 + 1, (40.0, (ch * 0.6).min(120.0)), &path)
            })
            .collect();
        ScenarioScript {
            frames,
            seed,
            agents,
            ..ScenarioScript::default()
        }
    }
}
