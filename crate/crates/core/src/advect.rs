//! Particle advection through a segment's flow fields.
//!
//! A grid of particles is seeded on the first flow field and moved with the
//! explicit update `x(t+1) = x(t) + F(x(t)) * B`, where the binary gate `B`
//! closes a trajectory for good once the particle leaves the frame, leaves
//! the foreground, stalls, or turns against its previous displacement.

use std::io::Write;

use crate::flow::FlowField;
use crate::image::GrayImage;
use crate::{Error, Result};

/// One trajectory sample: frame index, position and the displacement taken
/// from that position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub t: usize,
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
}

impl TrackPoint {
    pub fn magnitude(&self) -> f64 {
        self.u.hypot(self.v)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrackPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Euclidean distance between the first and last points.
    pub fn extent(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => (b.x - a.x).hypot(b.y - a.y),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvectParams {
    pub stride: usize,
    pub min_extent: f64,
    pub coherence_cos_min: f64,
    pub magnitude_min: f64,
    pub use_foreground_mask: bool,
}

impl Default for AdvectParams {
    fn default() -> Self {
        Self {
            stride: 2,
            min_extent: 5.0,
            coherence_cos_min: 0.0,
            magnitude_min: 0.05,
            use_foreground_mask: true,
        }
    }
}

impl AdvectParams {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::InvalidConfig("advect: stride must be >= 1".into()));
        }
        if !(self.min_extent >= 0.0) || !(self.magnitude_min >= 0.0) {
            return Err(Error::InvalidConfig(
                "advect: min_extent and magnitude_min must be >= 0".into(),
            ));
        }
        if !(-1.0..=1.0).contains(&self.coherence_cos_min) {
            return Err(Error::InvalidConfig(
                "advect: coherence_cos_min must lie in [-1, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Particles seeded on a regular grid, with the two flow maps holding the
/// current horizontal and vertical coordinate of every source.
#[derive(Debug, Clone)]
pub struct ParticleGrid {
    width: usize,
    height: usize,
    stride: usize,
    sources: Vec<(f64, f64)>,
    active: Vec<bool>,
    map_x: Vec<f64>,
    map_y: Vec<f64>,
    last_step: Vec<Option<(f64, f64)>>,
    tracks: Vec<Trajectory>,
}

impl ParticleGrid {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn sources(&self) -> &[(f64, f64)] {
        &self.sources
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Horizontal flow map: current x of every particle, indexed by source.
    pub fn map_x(&self) -> &[f64] {
        &self.map_x
    }

    /// Vertical flow map.
    pub fn map_y(&self) -> &[f64] {
        &self.map_y
    }

    pub fn position(&self, i: usize) -> (f64, f64) {
        (self.map_x[i], self.map_y[i])
    }

    pub fn tracks(&self) -> &[Trajectory] {
        &self.tracks
    }

    pub fn into_tracks(self) -> Vec<Trajectory> {
        self.tracks
    }

    fn in_bounds(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }
}

/// Seeds particles at `(i * stride, j * stride)` for every grid point inside
/// the frame.
pub fn init_particles(width: usize, height: usize, stride: usize) -> Result<ParticleGrid> {
    if stride == 0 || stride >= width.min(height) {
        return Err(Error::StrideTooLarge {
            stride,
            width,
            height,
        });
    }
    let mut sources = Vec::new();
    for y in (0..height).step_by(stride) {
        for x in (0..width).step_by(stride) {
            sources.push((x as f64, y as f64));
        }
    }
    let n = sources.len();
    Ok(ParticleGrid {
        width,
        height,
        stride,
        map_x: sources.iter().map(|s| s.0).collect(),
        map_y: sources.iter().map(|s| s.1).collect(),
        sources,
        active: vec![true; n],
        last_step: vec![None; n],
        tracks: vec![Trajectory::default(); n],
    })
}

/// Everything the gate looks at for one particle at one step.
#[derive(Debug, Clone, Copy)]
pub struct GateInput {
    pub in_bounds: bool,
    /// Mask value at the particle, `None` when no mask applies.
    pub mask: Option<f64>,
    pub flow: (f64, f64),
    pub previous: Option<(f64, f64)>,
}

/// The binary factor `B` of the advection update.
pub fn gate(input: &GateInput, params: &AdvectParams) -> bool {
    if !input.in_bounds {
        return false;
    }
    if params.use_foreground_mask {
        if let Some(m) = input.mask {
            if m < 0.5 {
                return false;
            }
        }
    }
    let (u, v) = input.flow;
    let mag = u.hypot(v);
    if mag < params.magnitude_min {
        return false;
    }
    if let Some((pu, pv)) = input.previous {
        let norms = mag * pu.hypot(pv);
        // direction is undefined for a zero vector; only magnitude_min = 0
        // lets one through
        if norms > 0.0 && (u * pu + v * pv) / norms < params.coherence_cos_min {
            return false;
        }
    }
    true
}

/// One advection step over every active particle. Returns the emitted points
/// paired with the particle index.
pub fn advect_step(
    grid: &mut ParticleGrid,
    flow: &FlowField,
    mask: Option<&GrayImage>,
    params: &AdvectParams,
    t: usize,
) -> Result<Vec<(usize, TrackPoint)>> {
    if flow.dims() != (grid.width, grid.height) {
        return Err(Error::FrameSizeMismatch(
            grid.width,
            grid.height,
            flow.width(),
            flow.height(),
        ));
    }
    if let Some(m) = mask {
        if m.dims() != flow.dims() {
            return Err(Error::FrameSizeMismatch(
                grid.width,
                grid.height,
                m.width(),
                m.height(),
            ));
        }
    }

    let mut emitted = Vec::new();
    for i in 0..grid.len() {
        if !grid.active[i] {
            continue;
        }
        let (x, y) = grid.position(i);
        let in_bounds = grid.in_bounds(x, y);
        let (sample, mask_value) = if in_bounds {
            let m = mask.map(|m| m.get(x.round() as usize, y.round() as usize));
            (flow.sample(x, y), m)
        } else {
            ((0.0, 0.0), None)
        };
        let pass = gate(
            &GateInput {
                in_bounds,
                mask: mask_value,
                flow: sample,
                previous: grid.last_step[i],
            },
            params,
        );
        if !pass {
            grid.active[i] = false;
            continue;
        }
        let (u, v) = sample;
        let point = TrackPoint { t, x, y, u, v };
        grid.tracks[i].points.push(point);
        grid.map_x[i] = x + u;
        grid.map_y[i] = y + v;
        grid.last_step[i] = Some(sample);
        emitted.push((i, point));
    }
    Ok(emitted)
}

/// Advects a fresh particle grid through `flows` and returns every non-empty
/// trajectory in source order. `masks[k]`, when given, is the foreground mask
/// of the frame `flows[k]` starts from.
pub fn extract_trajectories(
    flows: &[FlowField],
    masks: Option<&[GrayImage]>,
    params: &AdvectParams,
) -> Result<Vec<Trajectory>> {
    params.validate()?;
    let Some(first) = flows.first() else {
        return Ok(Vec::new());
    };
    if let Some(m) = masks {
        if m.len() != flows.len() {
            return Err(Error::MaskCountMismatch {
                frames: flows.len(),
                masks: m.len(),
            });
        }
    }
    let mut grid = init_particles(first.width(), first.height(), params.stride)?;
    for (t, flow) in flows.iter().enumerate() {
        let mask = masks.map(|m| &m[t]);
        advect_step(&mut grid, flow, mask, params, t)?;
    }
    Ok(grid.into_tracks().into_iter().filter(|t| !t.is_empty()).collect())
}

/// Keeps the trajectories whose start-to-end distance reaches `min_extent`.
pub fn filter_trajectories(trajs: Vec<Trajectory>, min_extent: f64) -> Vec<Trajectory> {
    trajs.into_iter().filter(|t| t.extent() >= min_extent).collect()
}

/// Writes `traj_id,t,x,y,u,v` rows, six decimals per coordinate.
pub fn write_trajectories_csv<W: Write>(trajs: &[Trajectory], mut out: W) -> std::io::Result<()> {
    writeln!(out, "traj_id,t,x,y,u,v")?;
    for (id, traj) in trajs.iter().enumerate() {
        for p in &traj.points {
            writeln!(
                out,
                "{id},{},{:.6},{:.6},{:.6},{:.6}",
                p.t, p.x, p.y, p.u, p.v
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_params() -> AdvectParams {
        AdvectParams {
            stride: 2,
            min_extent: 0.0,
            coherence_cos_min: 0.0,
            magnitude_min: 0.05,
            use_foreground_mask: true,
        }
    }

    #[test]
    fn grid_enumeration() {
        let g = init_particles(10, 10, 2).unwrap();
        assert_eq!(g.len(), 25);
        let xs: Vec<f64> = g.sources().iter().take(5).map(|s| s.0).collect();
        assert_eq!(xs, vec![0.0, 2.0, 4.0, 6.0, 8.0]);
        assert!(g.active().iter().all(|&a| a));
        assert_eq!(g.map_x()[7], 4.0);
        assert_eq!(g.map_y()[7], 2.0);
    }

    #[test]
    fn full_resolution_grid() {
        assert_eq!(init_particles(180, 144, 1).unwrap().len(), 25920);
    }

    #[test]
    fn oversized_stride() {
        let err = init_particles(4, 4, 5).unwrap_err();
        assert!(err.to_string().starts_with("stride too large"));
        assert!(init_particles(4, 4, 0).is_err());
    }

    #[test]
    fn gate_rules() {
        let p = open_params();
        let base = GateInput {
            in_bounds: true,
            mask: Some(1.0),
            flow: (1.0, 0.0),
            previous: None,
        };
        assert!(gate(&base, &p));
        assert!(!gate(&GateInput { in_bounds: false, ..base }, &p));
        assert!(!gate(&GateInput { mask: Some(0.0), ..base }, &p));
        assert!(gate(
            &GateInput { mask: Some(0.0), ..base },
            &AdvectParams { use_foreground_mask: false, ..p.clone() }
        ));
        assert!(!gate(&GateInput { flow: (0.01, 0.0), ..base }, &p));
        // reversal against the previous displacement
        assert!(!gate(
            &GateInput { flow: (-1.0, 0.0), previous: Some((1.0, 0.0)), ..base },
            &p
        ));
        // perpendicular turn: cos = 0 is still allowed at the default threshold
        assert!(gate(
            &GateInput { flow: (0.0, 1.0), previous: Some((1.0, 0.0)), ..base },
            &p
        ));
    }

    #[test]
    fn zero_flow_closes_everything() {
        let mut g = init_particles(8, 8, 2).unwrap();
        let before: Vec<_> = (0..g.len()).map(|i| g.position(i)).collect();
        let out = advect_step(&mut g, &FlowField::zeros(8, 8), None, &open_params(), 0).unwrap();
        assert!(out.is_empty());
        assert!(g.active().iter().all(|&a| !a));
        let after: Vec<_> = (0..g.len()).map(|i| g.position(i)).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn unit_step() {
        let mut g = init_particles(8, 8, 3).unwrap();
        let i = g.sources().iter().position(|&s| s == (3.0, 3.0)).unwrap();
        let out =
            advect_step(&mut g, &FlowField::constant(8, 8, 1.0, 0.0), None, &open_params(), 4)
                .unwrap();
        assert_eq!(g.position(i), (4.0, 3.0));
        let (_, p) = out.iter().find(|(j, _)| *j == i).unwrap();
        assert_eq!(*p, TrackPoint { t: 4, x: 3.0, y: 3.0, u: 1.0, v: 0.0 });
    }

    #[test]
    fn closed_particles_stay_closed() {
        let mut g = init_particles(8, 8, 2).unwrap();
        let p = open_params();
        advect_step(&mut g, &FlowField::zeros(8, 8), None, &p, 0).unwrap();
        let out = advect_step(&mut g, &FlowField::constant(8, 8, 1.0, 1.0), None, &p, 1).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn repeated_unit_steps() {
        let flows = vec![FlowField::constant(10, 6, 1.0, 0.0); 5];
        let trajs = extract_trajectories(&flows, None, &open_params()).unwrap();
        let tr = trajs
            .iter()
            .find(|t| (t.points[0].x, t.points[0].y) == (2.0, 2.0))
            .unwrap();
        assert_eq!(tr.len(), 5);
        let xs: Vec<f64> = tr.points.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![2.0, 3.0, 4.0, 5.0, 6.0]);
        let last = tr.points.last().unwrap();
        assert_eq!(last.x + last.u, 7.0);
        assert!(trajs.iter().all(|t| t.len() <= flows.len()));
    }

    #[test]
    fn background_masks_yield_nothing() {
        let flows = vec![FlowField::constant(10, 6, 1.0, 0.0); 3];
        let masks = vec![GrayImage::zeros(10, 6); 3];
        let trajs = extract_trajectories(&flows, Some(&masks), &open_params()).unwrap();
        assert!(trajs.is_empty());
        assert!(extract_trajectories(&[], None, &open_params()).unwrap().is_empty());
        assert!(extract_trajectories(&flows, Some(&masks[..2]), &open_params()).is_err());
    }

    fn line(x0: f64, y0: f64, x1: f64, y1: f64) -> Trajectory {
        Trajectory {
            points: vec![
                TrackPoint { t: 0, x: x0, y: y0, u: 0.0, v: 0.0 },
                TrackPoint { t: 1, x: x1, y: y1, u: 0.0, v: 0.0 },
            ],
        }
    }

    #[test]
    fn extent_filter() {
        let trajs = vec![line(1.0, 1.0, 1.0, 1.0), line(0.0, 0.0, 3.0, 4.0), line(0.0, 0.0, 3.0, 3.9)];
        let kept = filter_trajectories(trajs.clone(), 5.0);
        assert_eq!(kept, vec![trajs[1].clone()]);
        assert_eq!(filter_trajectories(trajs.clone(), 0.0), trajs);
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_trajectories_csv(&[line(0.0, 0.5, 1.25, 2.0)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "traj_id,t,x,y,u,v\n0,0,0.000000,0.500000,0.000000,0.000000\n\
             0,1,1.250000,2.000000,0.000000,0.000000\n"
        );
    }
}
