//! Marine feature extraction: coastline contours, per-azimuth nearest
//! candidates, and removal of sectors not rescanned between frames.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{PointCloud2D, PolarLayout, RadarFrame, RadarPoint};

/// Which side of the reflectivity step marks the coastline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    /// Contour pixels are at least as bright as their 3×3 neighborhood mean.
    #[default]
    HighPass,
    /// Contour pixels are at most as bright as their 3×3 neighborhood mean.
    LowPass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourMask {
    mask: Vec<bool>,
    width: usize,
    pub filter_kind: FilterKind,
}

impl ContourMask {
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    #[inline]
    pub fn at_index(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    /// Clears mask pixels dimmer than `min_intensity`.
    pub fn restrict_to_intensity(&mut self, frame: &RadarFrame, min_intensity: f64) {
        for (m, &v) in self.mask.iter_mut().zip(frame.pixels()) {
            if f64::from(v) < min_intensity {
                *m = false;
            }
        }
    }
}

/// Boundary pixels: a large one-sided intensity step along either axis, and
/// the polarity test of `filter_kind` against the 3×3 mean.
///
/// The one-sided step is the larger of the forward and backward difference,
/// so a pixel adjacent to a step is detected even when the central difference
/// cancels (an isolated lit pixel is all boundary).
pub fn extract_contour(
    frame: &RadarFrame,
    filter_kind: FilterKind,
    grad_threshold: f64,
) -> Result<ContourMask> {
    if !(grad_threshold > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "grad_threshold must be positive, got {grad_threshold}"
        )));
    }
    let w = frame.width();
    let px = |r: usize, c: usize| f64::from(frame.get(r, c));
    let mut mask = vec![false; w * w];
    for r in 0..w {
        for c in 0..w {
            let v = px(r, c);
            let step = |a: Option<f64>, b: Option<f64>| {
                let fa = a.map_or(0.0, |a| (a - v).abs());
                let fb = b.map_or(0.0, |b| (b - v).abs());
                fa.max(fb)
            };
            let gx = step(
                (c + 1 < w).then(|| px(r, c + 1)),
                c.checked_sub(1).map(|cm| px(r, cm)),
            );
            let gy = step(
                (r + 1 < w).then(|| px(r + 1, c)),
                r.checked_sub(1).map(|rm| px(rm, c)),
            );
            if gx.hypot(gy) <= grad_threshold {
                continue;
            }
            let (mut sum, mut n) = (0.0, 0usize);
            for rr in r.saturating_sub(1)..=(r + 1).min(w - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                    sum += px(rr, cc);
                    n += 1;
                }
            }
            let mean = sum / n as f64;
            mask[r * w + c] = match filter_kind {
                FilterKind::HighPass => v >= mean,
                FilterKind::LowPass => v <= mean,
            };
        }
    }
    Ok(ContourMask {
        mask,
        width: w,
        filter_kind,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Every contour pixel, no per-bin selection.
    Contour,
    KNearest,
    /// Brightest-first baseline.
    KStrongest,
}

/// Candidate selection strategy applied to the contour mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    #[default]
    KNearest,
    KStrongest,
    Contour,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureCloud {
    pub points: PointCloud2D,
    pub provenance: Vec<Provenance>,
    pub source_frame_id: u64,
}

impl FeatureCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count_in_bin(&self, bin: u32) -> usize {
        self.points
            .points
            .iter()
            .filter(|p| p.azimuth_bin == bin)
            .count()
    }
}

fn check_mask(frame: &RadarFrame, contour: &ContourMask) -> Result<()> {
    if contour.width != frame.width() {
        return Err(Error::Incongruent(format!(
            "contour mask is {}px wide, frame {} is {}px",
            contour.width,
            frame.frame_id(),
            frame.width()
        )));
    }
    Ok(())
}

fn point_at(frame: &RadarFrame, idx: usize, bin: usize) -> RadarPoint {
    let w = frame.width();
    let [x, y] = frame.pixel_to_metric(idx / w, idx % w);
    RadarPoint {
        x,
        y,
        intensity: f64::from(frame.pixels()[idx]),
        azimuth_bin: bin as u32,
    }
}

fn select_per_bin(
    frame: &RadarFrame,
    contour: &ContourMask,
    k: usize,
    bins: usize,
    provenance: Provenance,
    order: impl Fn(&PolarLayout, usize, usize) -> std::cmp::Ordering,
) -> Result<FeatureCloud> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    check_mask(frame, contour)?;
    let layout = PolarLayout::for_frame(frame, bins);
    let mut per_bin: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for idx in 0..contour.mask.len() {
        if contour.mask[idx] {
            if let Some(b) = layout.corridor(idx) {
                per_bin[b].push(idx);
            }
        }
    }
    let mut points = Vec::new();
    for (bin, candidates) in per_bin.iter_mut().enumerate() {
        candidates.sort_by(|&a, &b| order(&layout, a, b).then(a.cmp(&b)));
        points.extend(candidates.iter().take(k).map(|&idx| point_at(frame, idx, bin)));
    }
    let provenance = vec![provenance; points.len()];
    Ok(FeatureCloud {
        points: PointCloud2D { points },
        provenance,
        source_frame_id: frame.frame_id(),
    })
}

/// Up to `k` contour pixels per azimuth corridor, nearest to the sensor first.
///
/// Each pixel belongs to exactly one corridor, so no point is selected twice.
pub fn select_k_nearest(
    frame: &RadarFrame,
    contour: &ContourMask,
    k: usize,
    bins: usize,
) -> Result<FeatureCloud> {
    select_per_bin(frame, contour, k, bins, Provenance::KNearest, |l, a, b| {
        l.range_px(a).total_cmp(&l.range_px(b))
    })
}

/// Up to `k` contour pixels per corridor, brightest first (nearest breaks ties).
pub fn select_k_strongest(
    frame: &RadarFrame,
    contour: &ContourMask,
    k: usize,
    bins: usize,
) -> Result<FeatureCloud> {
    let px = frame.pixels();
    select_per_bin(frame, contour, k, bins, Provenance::KStrongest, |l, a, b| {
        px[b].total_cmp(&px[a])
            .then(l.range_px(a).total_cmp(&l.range_px(b)))
    })
}

/// Every contour pixel inside `r_max`.
pub fn contour_points(frame: &RadarFrame, contour: &ContourMask, bins: usize) -> Result<FeatureCloud> {
    select_per_bin(frame, contour, usize::MAX, bins, Provenance::Contour, |l, a, b| {
        l.range_px(a).total_cmp(&l.range_px(b))
    })
}

pub fn select_features(
    frame: &RadarFrame,
    contour: &ContourMask,
    selection: Selection,
    k: usize,
    bins: usize,
) -> Result<FeatureCloud> {
    match selection {
        Selection::KNearest => select_k_nearest(frame, contour, k, bins),
        Selection::KStrongest => select_k_strongest(frame, contour, k, bins),
        Selection::Contour => contour_points(frame, contour, bins),
    }
}

/// Azimuth bins judged unchanged since the previous frame.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapReport {
    stale: Vec<bool>,
    /// Disjoint half-open bin intervals `[start, end)` covering the stale bins.
    pub stale_sectors: Vec<(usize, usize)>,
    pub dropped_fraction: f64,
}

impl OverlapReport {
    pub fn from_stale(stale: Vec<bool>) -> Self {
        let mut sectors = Vec::new();
        let mut start = None;
        for (b, &s) in stale.iter().enumerate() {
            match (s, start) {
                (true, None) => start = Some(b),
                (false, Some(s0)) => {
                    sectors.push((s0, b));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s0) = start {
            sectors.push((s0, stale.len()));
        }
        let dropped = if stale.is_empty() {
            0.0
        } else {
            stale.iter().filter(|&&s| s).count() as f64 / stale.len() as f64
        };
        OverlapReport {
            stale,
            stale_sectors: sectors,
            dropped_fraction: dropped,
        }
    }

    /// Report with no stale bins.
    pub fn empty(bins: usize) -> Self {
        OverlapReport::from_stale(vec![false; bins])
    }

    pub fn bins(&self) -> usize {
        self.stale.len()
    }

    pub fn is_stale(&self, bin: usize) -> bool {
        self.stale.get(bin).copied().unwrap_or(false)
    }

    pub fn stale_mask(&self) -> &[bool] {
        &self.stale
    }
}

/// Bins whose mean absolute intensity change is below `change_threshold`.
///
/// The mean runs over the corridor pixels that hold a return in either
/// frame; empty sea would otherwise dilute every change below threshold. A
/// corridor with no returns in either frame carries no evidence: a run of
/// such corridors is stale only when the corridors on both sides of it are.
pub fn eliminate_overlap(
    prev: &RadarFrame,
    curr: &RadarFrame,
    change_threshold: f64,
    bins: usize,
) -> Result<OverlapReport> {
    prev.check_congruent(curr)?;
    let layout = PolarLayout::for_frame(curr, bins);
    let mut sum = vec![0.0f64; bins];
    let mut count = vec![0usize; bins];
    for (idx, (a, b)) in prev.pixels().iter().zip(curr.pixels()).enumerate() {
        if let Some(bin) = layout.corridor(idx) {
            if *a > 0.0 || *b > 0.0 {
                sum[bin] += f64::from((a - b).abs());
                count[bin] += 1;
            }
        }
    }
    let verdicts: Vec<Option<bool>> = sum
        .iter()
        .zip(&count)
        .map(|(&s, &n)| (n > 0).then(|| s / (n as f64) < change_threshold))
        .collect();
    Ok(OverlapReport::from_stale(fill_unknown(&verdicts)))
}

/// Resolves each circular run of `None` from its two known neighbours.
fn fill_unknown(verdicts: &[Option<bool>]) -> Vec<bool> {
    let n = verdicts.len();
    let Some(anchor) = verdicts.iter().position(Option::is_some) else {
        return vec![false; n];
    };
    let mut out: Vec<bool> = verdicts.iter().map(|v| v.unwrap_or(false)).collect();
    let mut last_known = anchor;
    for step in 1..=n {
        let b = (anchor + step) % n;
        if let Some(v) = verdicts[b] {
            if v && verdicts[last_known] == Some(true) {
                let mut k = (last_known + 1) % n;
                while k != b {
                    out[k] = true;
                    k = (k + 1) % n;
                }
            }
            last_known = b;
        }
    }
    out
}

/// Bins whose recorded scan time did not advance between the two frames.
pub fn eliminate_overlap_by_timestamps(prev: &[f64], curr: &[f64]) -> Result<OverlapReport> {
    if prev.len() != curr.len() {
        return Err(Error::Incongruent(format!(
            "sector time tables have {} and {} bins",
            prev.len(),
            curr.len()
        )));
    }
    Ok(OverlapReport::from_stale(
        prev.iter().zip(curr).map(|(a, b)| b <= a).collect(),
    ))
}

/// Removes points whose source azimuth bin is stale.
pub fn apply_overlap_dropout(cloud: &FeatureCloud, report: &OverlapReport) -> FeatureCloud {
    let (points, provenance): (Vec<_>, Vec<_>) = cloud
        .points
        .points
        .iter()
        .zip(&cloud.provenance)
        .filter(|(p, _)| !report.is_stale(p.azimuth_bin as usize))
        .map(|(p, v)| (*p, *v))
        .unzip();
    FeatureCloud {
        points: PointCloud2D { points },
        provenance,
        source_frame_id: cloud.source_frame_id,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::PolarLayout;
    use proptest::prelude::*;

    fn frame_from(width: usize, f: impl Fn(f64, f64) -> f32) -> RadarFrame {
        let c = (width / 2) as f64;
        let mut img = Vec::with_capacity(width * width);
        for r in 0..width {
            for col in 0..width {
                img.push(f(c - r as f64, col as f64 - c));
            }
        }
        RadarFrame::new(img, width, 1.0, 0.0, 0).unwrap()
    }

    fn rings(radii: &[f64]) -> RadarFrame {
        frame_from(101, |x, y| {
            let r = x.hypot(y);
            if radii.iter().any(|&rr| (r - rr).abs() < 0.5) {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn uniform_frame_has_no_contour() {
        let f = RadarFrame::new(vec![0.7; 21 * 21], 21, 1.0, 0.0, 0).unwrap();
        assert!(extract_contour(&f, FilterKind::HighPass, 0.1).unwrap().is_empty());
    }

    #[test]
    fn filled_disk_gives_boundary_ring() {
        let radius = 20.0;
        let f = frame_from(81, |x, y| if x.hypot(y) <= radius { 1.0 } else { 0.0 });
        let m = extract_contour(&f, FilterKind::HighPass, 0.5).unwrap();
        assert!(!m.is_empty());
        let c = 40.0;
        for r in 0..81 {
            for col in 0..81 {
                let d = (c - r as f64).hypot(col as f64 - c);
                if m.get(r, col) {
                    assert!((d - radius).abs() <= 1.0, "mask pixel at distance {d}");
                }
                if d < radius - 1.5 {
                    assert!(!m.get(r, col));
                }
            }
        }
        // low-pass picks the dark side of the same step
        let low = extract_contour(&f, FilterKind::LowPass, 0.5).unwrap();
        for r in 0..81 {
            for col in 0..81 {
                if low.get(r, col) {
                    assert_eq!(f.get(r, col), 0.0);
                }
            }
        }
    }

    #[test]
    fn isolated_pixel_is_contour() {
        let f = frame_from(11, |x, y| if x == 2.0 && y == 1.0 { 1.0 } else { 0.0 });
        let m = extract_contour(&f, FilterKind::HighPass, 0.5).unwrap();
        assert!(m.get(3, 6));
        assert_eq!(m.count(), 1);
        let strict = extract_contour(&f, FilterKind::HighPass, 1.5).unwrap();
        assert!(strict.is_empty());
    }

    #[test]
    fn nonpositive_threshold_rejected() {
        let f = RadarFrame::zeros(11, 1.0, 0.0, 0).unwrap();
        assert!(extract_contour(&f, FilterKind::HighPass, 0.0).is_err());
    }

    #[test]
    fn empty_contour_selects_nothing() {
        let f = RadarFrame::zeros(21, 1.0, 0.0, 0).unwrap();
        let m = extract_contour(&f, FilterKind::HighPass, 0.5).unwrap();
        assert!(select_k_nearest(&f, &m, 3, 360).unwrap().is_empty());
    }

    #[test]
    fn k1_on_concentric_rings_keeps_inner() {
        let f = rings(&[15.0, 35.0]);
        let m = extract_contour(&f, FilterKind::HighPass, 0.5).unwrap();
        // corridors must be wide enough at the inner radius to contain a pixel
        let sel = select_k_nearest(&f, &m, 1, 36).unwrap();
        assert!(!sel.is_empty());
        for p in &sel.points.points {
            assert!(p.x.hypot(p.y) < 16.0);
        }
    }

    #[test]
    fn k2_on_concentric_rings_keeps_both() {
        let f = rings(&[15.0, 35.0]);
        let m = extract_contour(&f, FilterKind::HighPass, 0.5).unwrap();
        let sel = select_k_nearest(&f, &m, 2, 90).unwrap();
        for b in 0..90 {
            assert!(sel.count_in_bin(b) <= 2);
        }
        // each ring is a few pixels thick per corridor at 4° bins, so with
        // k = 2 the outer ring only appears where the inner one is thin
        let sel = select_k_nearest(&f, &m, 12, 90).unwrap();
        let outer = sel.points.points.iter().filter(|p| p.x.hypot(p.y) > 30.0).count();
        let inner = sel.points.points.iter().filter(|p| p.x.hypot(p.y) < 20.0).count();
        assert!(outer > 0 && inner > 0);
    }

    #[test]
    fn strongest_prefers_brighter_pixels() {
        let f = frame_from(61, |x, y| {
            let r = x.hypot(y);
            if (r - 10.0).abs() < 0.5 {
                0.5
            } else if (r - 25.0).abs() < 0.5 {
                1.0
            } else {
                0.0
            }
        });
        let m = extract_contour(&f, FilterKind::HighPass, 0.3).unwrap();
        let sel = select_k_strongest(&f, &m, 1, 36).unwrap();
        assert!(sel.points.points.iter().all(|p| p.intensity == 1.0));
    }

    #[test]
    fn identical_frames_are_all_stale() {
        let f = rings(&[20.0]);
        let rep = eliminate_overlap(&f, &f, 0.02, 360).unwrap();
        assert_eq!(rep.dropped_fraction, 1.0);
        assert_eq!(rep.stale_sectors, vec![(0, 360)]);
    }

    #[test]
    fn fully_changed_frames_have_no_stale_bins() {
        let a = RadarFrame::zeros(41, 1.0, 0.0, 0).unwrap();
        let b = RadarFrame::new(vec![0.5; 41 * 41], 41, 1.0, 1.0, 1).unwrap();
        let rep = eliminate_overlap(&a, &b, 0.02, 90).unwrap();
        assert!(rep.stale_sectors.is_empty());
        assert_eq!(rep.dropped_fraction, 0.0);
    }

    #[test]
    fn unknown_runs_follow_agreeing_neighbours() {
        let (t, f, u) = (Some(true), Some(false), None);
        assert_eq!(fill_unknown(&[t, u, u, t, f, u, t, u]), vec![true, true, true, true, false, false, true, true]);
        assert_eq!(fill_unknown(&[u, u, u]), vec![false; 3]);
        assert_eq!(fill_unknown(&[u, t, u]), vec![true; 3]);
    }

    #[test]
    fn timestamp_path_marks_unswept_bins() {
        let prev: Vec<f64> = (0..8).map(|b| b as f64).collect();
        let curr: Vec<f64> = (0..8).map(|b| if b < 3 { b as f64 } else { 10.0 + b as f64 }).collect();
        let rep = eliminate_overlap_by_timestamps(&prev, &curr).unwrap();
        assert_eq!(rep.stale_sectors, vec![(0, 3)]);
    }

    fn ring_cloud(k: usize) -> FeatureCloud {
        let f = rings(&[10.0, 20.0, 30.0, 40.0]);
        let m = extract_contour(&f, FilterKind::HighPass, 0.5).unwrap();
        select_k_nearest(&f, &m, k, 36).unwrap()
    }

    #[test]
    fn dropout_identity_and_total() {
        let cloud = ring_cloud(2);
        assert_eq!(apply_overlap_dropout(&cloud, &OverlapReport::empty(36)), cloud);
        let all = OverlapReport::from_stale(vec![true; 36]);
        assert!(apply_overlap_dropout(&cloud, &all).is_empty());
    }

    #[test]
    fn half_stale_halves_uniform_ring() {
        let k = 2;
        let cloud = ring_cloud(k);
        let rep = OverlapReport::from_stale((0..36).map(|b| b < 18).collect());
        let kept = apply_overlap_dropout(&cloud, &rep);
        let half = cloud.len() as f64 / 2.0;
        assert!((kept.len() as f64 - half).abs() <= 2.0 * k as f64);
    }

    fn blob_frame() -> impl Strategy<Value = RadarFrame> {
        prop::collection::vec(prop::sample::select(vec![0u8, 128, 255]), 31 * 31)
            .prop_map(|px| RadarFrame::from_u8(&px, 31, 1.0, 0.0, 0).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn k_nearest_is_monotone_in_k(f in blob_frame(), k in 1usize..6) {
            let m = extract_contour(&f, FilterKind::HighPass, 0.3).unwrap();
            let small = select_k_nearest(&f, &m, k, 24).unwrap();
            let large = select_k_nearest(&f, &m, k + 1, 24).unwrap();
            for p in &small.points.points {
                prop_assert!(large.points.points.contains(p));
            }
        }

        #[test]
        fn selected_points_lie_on_contour_and_are_nearest(f in blob_frame(), k in 1usize..5) {
            let bins = 24;
            let m = extract_contour(&f, FilterKind::HighPass, 0.3).unwrap();
            let sel = select_k_nearest(&f, &m, k, bins).unwrap();
            let layout = PolarLayout::new(31, bins);
            for p in &sel.points.points {
                let (r, c) = f.metric_to_pixel(p.xy()).unwrap();
                prop_assert!(m.get(r, c));
                prop_assert!(sel.count_in_bin(p.azimuth_bin) <= k);
                // no unselected contour pixel in the same bin is strictly closer
                let d = p.x.hypot(p.y);
                let selected_here = sel.count_in_bin(p.azimuth_bin);
                for idx in 0..31 * 31 {
                    if m.at_index(idx) && layout.corridor(idx) == Some(p.azimuth_bin as usize) {
                        let q = f.pixel_to_metric(idx / 31, idx % 31);
                        let chosen = sel.points.points.iter().any(|s| s.xy() == q);
                        if !chosen && selected_here < k {
                            prop_assert!(q[0].hypot(q[1]) >= d);
                        }
                        if !chosen {
                            prop_assert!(q[0].hypot(q[1]) >= d - 1e-9);
                        }
                    }
                }
            }
        }

        #[test]
        fn overlap_is_symmetric(a in blob_frame(), b in blob_frame(), t in 0.0..0.6f64) {
            let ab = eliminate_overlap(&a, &b, t, 24).unwrap();
            let ba = eliminate_overlap(&b, &a, t, 24).unwrap();
            prop_assert_eq!(ab, ba);
        }
    }
}
