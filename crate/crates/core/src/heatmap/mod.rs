//! Gaussian heatmap encoding and decoding.
//!
//! Landmarks are rendered as isotropic Gaussians on a low-resolution grid
//! and recovered either by integer argmax ("conventional", CHR) or by the
//! closed-form three-sample fit ("fractional", FHR) that restores the
//! sub-pixel part of the peak location.

mod format;

pub use format::{read_stack, write_stack, MAGIC, VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::LandmarkSet;
use crate::par;

/// Floor applied to sampled activations before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Image pixels per heatmap pixel.
    pub scale: f64,
    /// Gaussian standard deviation in heatmap pixels.
    pub sigma: f64,
}

impl GridSpec {
    pub fn new(width: usize, height: usize, scale: f64, sigma: f64) -> Result<Self> {
        let grid = Self {
            width,
            height,
            scale,
            sigma,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 4 || self.height < 4 {
            return Err(Error::InvalidGrid(format!(
                "grid must be at least 4x4, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidGrid(format!("scale must be > 0, got {}", self.scale)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidGrid(format!("sigma must be > 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// How encoded centers are placed on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    /// Keep the fractional center.
    Fractional,
    /// Round the center to the nearest grid node (half away from zero).
    Rounded,
}

/// How peaks are recovered from a heatmap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    /// Closed-form sub-pixel peak from three samples.
    Fhr,
    /// Integer argmax.
    Chr,
}

/// A single row-major activation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Heatmap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::Shape(format!(
                "heatmap {width}x{height} cannot hold {} values",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Evaluates the Gaussian at every integer node.
    pub fn gaussian(width: usize, height: usize, center: [f64; 2], sigma: f64) -> Self {
        let inv = 1.0 / (2.0 * sigma * sigma);
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            let dy = y as f64 - center[1];
            for x in 0..width {
                let dx = x as f64 - center[0];
                values.push((-(dx * dx + dy * dy) * inv).exp());
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }
}

/// One heatmap per landmark, sharing a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    pub grid: GridSpec,
    pub maps: Vec<Heatmap>,
}

impl HeatmapStack {
    pub fn new(grid: GridSpec, maps: Vec<Heatmap>) -> Result<Self> {
        grid.validate()?;
        if let Some(i) = maps
            .iter()
            .position(|m| m.width != grid.width || m.height != grid.height)
        {
            return Err(Error::Shape(format!(
                "map {i} does not match the {}x{} grid",
                grid.width, grid.height
            )));
        }
        Ok(Self { grid, maps })
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

/// Renders one Gaussian heatmap per landmark.
///
/// Landmarks are in image pixels; they are divided by `grid.scale` to get
/// heatmap coordinates and must land inside `[0, width-1] x [0, height-1]`.
pub fn render_heatmaps(
    landmarks: &LandmarkSet,
    grid: &GridSpec,
    mode: RenderMode,
) -> Result<HeatmapStack> {
    grid.validate()?;
    let max_x = (grid.width - 1) as f64;
    let max_y = (grid.height - 1) as f64;
    let mut centers = Vec::with_capacity(landmarks.num_landmarks());
    for (index, [x, y]) in landmarks.points().enumerate() {
        let (hx, hy) = (x / grid.scale, y / grid.scale);
        if !(0.0..=max_x).contains(&hx) || !(0.0..=max_y).contains(&hy) {
            return Err(Error::OutOfDomain { index, x, y });
        }
        centers.push(match mode {
            RenderMode::Fractional => [hx, hy],
            RenderMode::Rounded => [hx.round(), hy.round()],
        });
    }
    let maps = par::map(&centers, |c| {
        Heatmap::gaussian(grid.width, grid.height, *c, grid.sigma)
    });
    Ok(HeatmapStack { grid: *grid, maps })
}

/// Integer location of the maximum; ties go to the smallest row-major index.
pub fn argmax_peak(h: &Heatmap) -> Result<(usize, usize)> {
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in h.values.iter().enumerate() {
        if v.is_nan() {
            return Err(Error::InvalidHeatmap(format!(
                "NaN at ({}, {})",
                i % h.width,
                i / h.width
            )));
        }
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    Ok((best % h.width, best / h.width))
}

/// Sub-pixel peak estimate in heatmap coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakEstimate {
    pub x: f64,
    pub y: f64,
    /// The argmax node used as the anchor.
    pub anchor: (usize, usize),
    /// At least one sampled activation was `<= 0` and got floored.
    pub clamped: bool,
}

/// Closed-form fractional peak from the argmax and two neighbours.
///
/// The neighbours are `+1` in x and `+1` in y, mirrored to `-1` when the
/// argmax sits on the right or bottom edge.
pub fn fractional_peak(h: &Heatmap, sigma: f64) -> Result<PeakEstimate> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidGrid(format!("sigma must be > 0, got {sigma}")));
    }
    let anchor = argmax_peak(h)?;
    let dx = if anchor.0 + 1 < h.width { 1 } else { -1 };
    let dy = if anchor.1 + 1 < h.height { 1 } else { -1 };
    fractional_peak_at(h, sigma, anchor, (dx, dy))
}

/// Three-sample fit at an explicit anchor and offset direction
/// (`dx, dy` each `+1` or `-1`).
pub fn fractional_peak_at(
    h: &Heatmap,
    sigma: f64,
    anchor: (usize, usize),
    offsets: (i64, i64),
) -> Result<PeakEstimate> {
    let (dx, dy) = offsets;
    if dx.abs() != 1 || dy.abs() != 1 {
        return Err(Error::InvalidHeatmap(format!(
            "sample offsets must be +-1, got ({dx}, {dy})"
        )));
    }
    let (ax, ay) = (anchor.0 as i64, anchor.1 as i64);
    let (x1, y2) = (ax + dx, ay + dy);
    if x1 < 0 || x1 >= h.width as i64 || y2 < 0 || y2 >= h.height as i64 {
        return Err(Error::InvalidHeatmap(format!(
            "samples around ({ax}, {ay}) leave the {}x{} grid",
            h.width, h.height
        )));
    }
    let h0 = h.get(anchor.0, anchor.1);
    let h1 = h.get(x1 as usize, anchor.1);
    let h2 = h.get(anchor.0, y2 as usize);
    let (x, y, clamped) = three_point_solve(
        [h0, h1, h2],
        [ax as f64, ay as f64],
        [x1 as f64, ay as f64],
        [ax as f64, y2 as f64],
        sigma,
    )?;
    Ok(PeakEstimate {
        x,
        y,
        anchor,
        clamped,
    })
}

/// Solves for the Gaussian center from activations at `p0`, `p1 = p0 +
/// (dx, 0)` and `p2 = p0 + (0, dy)`.
///
/// The log-difference identity gives the center projected onto each offset,
/// `c . (p1 - p0)`; dividing by the signed offset recovers the coordinate
/// for either sampling direction.
pub fn three_point_solve(
    samples: [f64; 3],
    p0: [f64; 2],
    p1: [f64; 2],
    p2: [f64; 2],
    sigma: f64,
) -> Result<(f64, f64, bool)> {
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidHeatmap("NaN among sampled values".into()));
    }
    let clamped = samples.iter().any(|&v| v <= 0.0);
    let [l0, l1, l2] = samples.map(|v| v.max(LOG_FLOOR).ln());
    let s2 = sigma * sigma;
    let proj_x = s2 * (l1 - l0) - 0.5 * (p0[0] * p0[0] - p1[0] * p1[0] + p0[1] * p0[1] - p1[1] * p1[1]);
    let proj_y = s2 * (l2 - l0) - 0.5 * (p0[0] * p0[0] - p2[0] * p2[0] + p0[1] * p0[1] - p2[1] * p2[1]);
    let x = proj_x / (p1[0] - p0[0]);
    let y = proj_y / (p2[1] - p0[1]);
    Ok((x, y, clamped))
}

/// Decoded landmarks plus per-landmark clamp flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub landmarks: LandmarkSet,
    pub clamped: Vec<bool>,
}

/// Recovers image-pixel landmarks from a stack.
pub fn decode_stack(stack: &HeatmapStack, mode: DecodeMode) -> Result<LandmarkSet> {
    decode_stack_detailed(stack, mode).map(|d| d.landmarks)
}

pub fn decode_stack_detailed(stack: &HeatmapStack, mode: DecodeMode) -> Result<Decoded> {
    stack.grid.validate()?;
    if stack.maps.is_empty() {
        return Err(Error::Shape("empty heatmap stack".into()));
    }
    let sigma = stack.grid.sigma;
    let peaks = par::try_map(&stack.maps, |h| match mode {
        DecodeMode::Fhr => fractional_peak(h, sigma).map(|p| ([p.x, p.y], p.clamped)),
        DecodeMode::Chr => argmax_peak(h).map(|(x, y)| ([x as f64, y as f64], false)),
    })?;
    let scale = stack.grid.scale;
    let coords = peaks
        .iter()
        .flat_map(|(p, _)| [p[0] * scale, p[1] * scale])
        .collect();
    Ok(Decoded {
        landmarks: LandmarkSet::from_flat(coords)?,
        clamped: peaks.iter().map(|(_, c)| *c).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(w: usize, h: usize, scale: f64, sigma: f64) -> GridSpec {
        GridSpec::new(w, h, scale, sigma).unwrap()
    }

    fn one(x: f64, y: f64) -> LandmarkSet {
        LandmarkSet::from_points(&[[x, y]]).unwrap()
    }

    #[test]
    fn rounded_mode_discards_fraction() {
        let g = grid(64, 128, 1.0, 3.0);
        let stack = render_heatmaps(&one(29.55, 77.38), &g, RenderMode::Rounded).unwrap();
        assert_eq!(argmax_peak(&stack.maps[0]).unwrap(), (30, 77));
        assert_eq!(stack.maps[0].get(30, 77), 1.0);
    }

    #[test]
    fn integer_center_values() {
        let g = grid(32, 32, 1.0, 3.0);
        for mode in [RenderMode::Fractional, RenderMode::Rounded] {
            let stack = render_heatmaps(&one(10.0, 20.0), &g, mode).unwrap();
            assert_eq!(stack.maps[0].get(10, 20), 1.0);
            assert_abs_diff_eq!(stack.maps[0].get(13, 20), (-0.5f64).exp(), epsilon = 1e-15);
        }
    }

    #[test]
    fn fractional_value_matches_formula() {
        let g = grid(64, 128, 1.0, 3.0);
        let stack = render_heatmaps(&one(29.55, 77.38), &g, RenderMode::Fractional).unwrap();
        // 40-digit evaluation of the Gaussian at (30, 77)
        assert_abs_diff_eq!(stack.maps[0].get(30, 77), 0.980_912_299_768_237_057, epsilon = 1e-14);
    }

    #[test]
    fn rendered_values_in_unit_interval() {
        let g = grid(16, 16, 1.0, 2.0);
        let stack = render_heatmaps(&one(7.3, 2.9), &g, RenderMode::Fractional).unwrap();
        assert!(stack.maps[0].values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn out_of_grid_rejected_with_index() {
        let g = grid(16, 16, 2.0, 2.0);
        let lm = LandmarkSet::from_points(&[[3.0, 3.0], [31.0, 4.0]]).unwrap();
        match render_heatmaps(&lm, &g, RenderMode::Fractional) {
            Err(Error::OutOfDomain { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(render_heatmaps(&one(-0.1, 3.0), &g, RenderMode::Fractional).is_err());
    }

    #[test]
    fn argmax_near_fraction() {
        let g = grid(32, 32, 1.0, 3.0);
        let stack = render_heatmaps(&one(10.4, 20.4), &g, RenderMode::Fractional).unwrap();
        assert_eq!(argmax_peak(&stack.maps[0]).unwrap(), (10, 20));
    }

    #[test]
    fn argmax_tie_rule() {
        let mut h = Heatmap::new(4, 4, vec![0.0; 16]).unwrap();
        h.set(1, 1, 1.0);
        h.set(2, 2, 1.0);
        assert_eq!(argmax_peak(&h).unwrap(), (1, 1));
        let flat = Heatmap::new(4, 4, vec![0.25; 16]).unwrap();
        assert_eq!(argmax_peak(&flat).unwrap(), (0, 0));
    }

    #[test]
    fn nan_rejected() {
        let mut h = Heatmap::new(4, 4, vec![0.0; 16]).unwrap();
        h.set(3, 2, f64::NAN);
        assert!(matches!(argmax_peak(&h), Err(Error::InvalidHeatmap(_))));
        assert!(matches!(fractional_peak(&h, 1.0), Err(Error::InvalidHeatmap(_))));
    }

    #[test]
    fn fractional_peak_recovers_center() {
        let h = Heatmap::gaussian(64, 128, [29.55, 77.38], 3.0);
        let p = fractional_peak(&h, 3.0).unwrap();
        assert_abs_diff_eq!(p.x, 29.55, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 77.38, epsilon = 1e-9);
        assert!(!p.clamped);
    }

    #[test]
    fn integer_center_is_exact() {
        let h = Heatmap::gaussian(32, 32, [10.0, 20.0], 3.0);
        let p = fractional_peak(&h, 3.0).unwrap();
        assert_abs_diff_eq!(p.x, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 20.0, epsilon = 1e-12);
    }

    #[test]
    fn corner_and_edge_anchors() {
        let h = Heatmap::gaussian(16, 16, [0.3, 0.3], 3.0);
        let p = fractional_peak(&h, 3.0).unwrap();
        assert_eq!(p.anchor, (0, 0));
        assert_abs_diff_eq!(p.x, 0.3, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 0.3, epsilon = 1e-9);

        // argmax on the right/bottom edges forces the mirrored samples
        let h = Heatmap::gaussian(16, 16, [14.8, 14.7], 3.0);
        let p = fractional_peak(&h, 3.0).unwrap();
        assert_eq!(p.anchor, (15, 15));
        assert_abs_diff_eq!(p.x, 14.8, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 14.7, epsilon = 1e-9);
    }

    #[test]
    fn all_sampling_directions_agree() {
        let h = Heatmap::gaussian(32, 32, [12.37, 9.81], 2.0);
        let anchor = argmax_peak(&h).unwrap();
        for dx in [-1, 1] {
            for dy in [-1, 1] {
                let p = fractional_peak_at(&h, 2.0, anchor, (dx, dy)).unwrap();
                assert_abs_diff_eq!(p.x, 12.37, epsilon = 1e-9);
                assert_abs_diff_eq!(p.y, 9.81, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn nonpositive_samples_are_clamped() {
        let mut h = Heatmap::gaussian(16, 16, [5.2, 5.4], 1.0);
        h.set(6, 5, -0.1);
        let p = fractional_peak(&h, 1.0).unwrap();
        assert!(p.clamped);
        assert!(p.x.is_finite() && p.y.is_finite());
    }

    #[test]
    fn noise_on_samples_degrades_continuously() {
        let sigma = 3.0;
        let h = Heatmap::gaussian(32, 32, [11.3, 17.6], sigma);
        let anchor = argmax_peak(&h).unwrap();
        let mut prev = f64::INFINITY;
        for a in [1e-2, 1e-4, 1e-6] {
            let mut noisy = h.clone();
            noisy.set(anchor.0, anchor.1, h.get(anchor.0, anchor.1) + a);
            noisy.set(anchor.0 + 1, anchor.1, h.get(anchor.0 + 1, anchor.1) - a);
            noisy.set(anchor.0, anchor.1 + 1, h.get(anchor.0, anchor.1 + 1) + a);
            let p = fractional_peak_at(&noisy, sigma, anchor, (1, 1)).unwrap();
            let err = (p.x - 11.3).hypot(p.y - 17.6);
            assert!(err < prev, "error {err} did not shrink at a={a}");
            assert!(err < 100.0 * a, "error {err} too large at a={a}");
            prev = err;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn decode_at_large_scale() {
        let scale = 930.0 / 128.0;
        let g = grid(128, 128, scale, 3.0);
        let lm = one(214.8, 562.6);
        let stack = render_heatmaps(&lm, &g, RenderMode::Fractional).unwrap();
        let fhr = decode_stack(&stack, DecodeMode::Fhr).unwrap();
        assert_abs_diff_eq!(fhr.point(0)[0], 214.8, epsilon = 1e-6);
        assert_abs_diff_eq!(fhr.point(0)[1], 562.6, epsilon = 1e-6);
        let chr = decode_stack(&stack, DecodeMode::Chr).unwrap();
        assert_eq!(chr.point(0), [217.968_75, 559.453_125]);
        assert!((chr.point(0)[0] - 214.8).abs() <= 0.5 * scale);
        assert!((chr.point(0)[1] - 562.6).abs() <= 0.5 * scale);
    }

    #[test]
    fn fhr_matches_chr_on_integer_centers() {
        let g = grid(32, 32, 1.0, 3.0);
        let lm = LandmarkSet::from_points(&[[4.0, 9.0], [20.0, 31.0]]).unwrap();
        let stack = render_heatmaps(&lm, &g, RenderMode::Fractional).unwrap();
        let a = decode_stack(&stack, DecodeMode::Fhr).unwrap();
        let b = decode_stack(&stack, DecodeMode::Chr).unwrap();
        for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-12);
        }
    }

    #[test]
    fn grid_invariants() {
        assert!(GridSpec::new(3, 8, 1.0, 1.0).is_err());
        assert!(GridSpec::new(8, 8, 0.0, 1.0).is_err());
        assert!(GridSpec::new(8, 8, 1.0, -1.0).is_err());
    }
}
