//! Streamline data model, uniform arc-length resampling and coordinate
//! normalization.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Number of points every streamline is resampled to before it enters a network.
pub const DEFAULT_RESAMPLE_POINTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// `self + t * (other - self)`
    pub fn lerp(&self, other: &Point3, t: f64) -> Point3 {
        Point3::new(
            self.x + t * (other.x - self.x),
            self.y + t * (other.y - self.y),
            self.z + t * (other.z - self.z),
        )
    }
}

/// An ordered 3D polyline, optionally tagged with the bundle it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Streamline {
    pub id: u64,
    pub points: Vec<Point3>,
    pub label: Option<String>,
}

impl Streamline {
    /// Builds a streamline, checking the point-count and finiteness invariants.
    pub fn new(id: u64, points: Vec<Point3>, label: Option<String>) -> Result<Self> {
        let s = Self { id, points, label };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::InvalidStreamline {
                id: self.id,
                reason: format!("needs at least 2 points, has {}", self.points.len()),
            });
        }
        if let Some(i) = self.points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidStreamline {
                id: self.id,
                reason: format!("point {i} is not finite"),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    /// The same fiber traversed in the opposite direction.
    pub fn reversed(&self) -> Streamline {
        let mut points = self.points.clone();
        points.reverse();
        Streamline {
            id: self.id,
            points,
            label: self.label.clone(),
        }
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let mut bb = BoundingBox::empty();
        for p in &self.points {
            bb.include(p);
        }
        bb
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StreamlineSet {
    pub streamlines: Vec<Streamline>,
    /// File path or generator description the set came from.
    pub source: String,
}

impl StreamlineSet {
    pub fn new(streamlines: Vec<Streamline>, source: impl Into<String>) -> Result<Self> {
        let set = Self {
            streamlines,
            source: source.into(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.streamlines.len());
        for s in &self.streamlines {
            s.validate()?;
            if !seen.insert(s.id) {
                return Err(Error::InvalidStreamline {
                    id: s.id,
                    reason: "duplicate id".into(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.streamlines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streamlines.is_empty()
    }

    /// Distinct labels in order of first appearance.
    pub fn labels(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.streamlines
            .iter()
            .filter_map(|s| s.label.as_deref())
            .filter(|l| seen.insert(*l))
            .map(str::to_owned)
            .collect()
    }

    pub fn with_label<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a Streamline> + 'a {
        self.streamlines
            .iter()
            .filter(move |s| s.label.as_deref() == Some(label))
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl BoundingBox {
    pub fn empty() -> Self {
        Self {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.min[a] > self.max[a])
    }

    pub fn include(&mut self, p: &Point3) {
        for (a, v) in p.to_array().into_iter().enumerate() {
            self.min[a] = self.min[a].min(v);
            self.max[a] = self.max[a].max(v);
        }
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        let mut out = *self;
        for a in 0..3 {
            out.min[a] = out.min[a].min(other.min[a]);
            out.max[a] = out.max[a].max(other.max[a]);
        }
        out
    }

    /// Closed-interval overlap on every axis.
    pub fn intersects(&self, other: &BoundingBox) -> bool {
        if self.is_empty() || other.is_empty() {
            return false;
        }
        (0..3).all(|a| self.min[a] <= other.max[a] && other.min[a] <= self.max[a])
    }
}

/// Resamples `s` to `n` points spaced equally in arc length along its
/// piecewise-linear curve. Endpoints are copied bit-exactly.
pub fn resample_uniform(s: &Streamline, n: usize) -> Result<Streamline> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "resample count must be at least 2, got {n}"
        )));
    }
    if s.points.len() < 2 {
        return Err(Error::InvalidStreamline {
            id: s.id,
            reason: "needs at least 2 points".into(),
        });
    }

    let mut cumulative = Vec::with_capacity(s.points.len());
    cumulative.push(0.0);
    let mut total = 0.0;
    for w in s.points.windows(2) {
        total += w[0].distance(&w[1]);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::InvalidStreamline {
            id: s.id,
            reason: "zero total arc length".into(),
        });
    }

    let first = s.points[0];
    let last = *s.points.last().unwrap();
    let mut out = Vec::with_capacity(n);
    out.push(first);

    let step = total / (n - 1) as f64;
    let mut seg = 0;
    for j in 1..n - 1 {
        let target = step * j as f64;
        while seg + 2 < cumulative.len() && cumulative[seg + 1] < target {
            seg += 1;
        }
        let seg_len = cumulative[seg + 1] - cumulative[seg];
        let p = if seg_len > 0.0 {
            let t = ((target - cumulative[seg]) / seg_len).clamp(0.0, 1.0);
            s.points[seg].lerp(&s.points[seg + 1], t)
        } else {
            s.points[seg]
        };
        out.push(p);
    }
    out.push(last);

    Ok(Streamline {
        id: s.id,
        points: out,
        label: s.label.clone(),
    })
}

/// Per-axis affine map `(v - offset) * scale` onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationTransform {
    pub offset: [f64; 3],
    pub scale: [f64; 3],
}

impl Default for NormalizationTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl NormalizationTransform {
    pub fn identity() -> Self {
        Self {
            offset: [0.0; 3],
            scale: [1.0; 3],
        }
    }

    pub fn new(offset: [f64; 3], scale: [f64; 3]) -> Result<Self> {
        let t = Self { offset, scale };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if !self.offset[a].is_finite() || !(self.scale[a] > 0.0) || !self.scale[a].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "normalization axis {a}: offset {} scale {}",
                    self.offset[a], self.scale[a]
                )));
            }
        }
        Ok(())
    }

    pub fn apply_point(&self, p: &Point3) -> Point3 {
        Point3::new(
            (p.x - self.offset[0]) * self.scale[0],
            (p.y - self.offset[1]) * self.scale[1],
            (p.z - self.offset[2]) * self.scale[2],
        )
    }

    pub fn invert_point(&self, p: &Point3) -> Point3 {
        Point3::new(
            p.x / self.scale[0] + self.offset[0],
            p.y / self.scale[1] + self.offset[1],
            p.z / self.scale[2] + self.offset[2],
        )
    }

    pub fn invert(&self, s: &Streamline) -> Streamline {
        Streamline {
            id: s.id,
            points: s.points.iter().map(|p| self.invert_point(p)).collect(),
            label: s.label.clone(),
        }
    }
}

/// Fits the transform mapping the bounding box of every point in `sets`
/// onto `[-1, 1]^3`. Axes with zero extent map to 0 with unit scale.
pub fn fit_normalization(sets: &[&StreamlineSet]) -> Result<NormalizationTransform> {
    let mut bb = BoundingBox::empty();
    for set in sets {
        for s in &set.streamlines {
            bb = bb.union(&s.bounding_box());
        }
    }
    if bb.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot fit a normalization on an empty point set".into(),
        ));
    }
    let mut offset = [0.0; 3];
    let mut scale = [1.0; 3];
    for a in 0..3 {
        let extent = bb.max[a] - bb.min[a];
        if extent > 0.0 {
            offset[a] = 0.5 * (bb.min[a] + bb.max[a]);
            scale[a] = 2.0 / extent;
        } else {
            offset[a] = bb.min[a];
        }
    }
    NormalizationTransform::new(offset, scale)
}

pub fn apply_normalization(t: &NormalizationTransform, s: &Streamline) -> Streamline {
    Streamline {
        id: s.id,
        points: s.points.iter().map(|p| t.apply_point(p)).collect(),
        label: s.label.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[[f64; 3]]) -> Streamline {
        Streamline::new(0, points.iter().copied().map(Point3::from_array).collect(), None).unwrap()
    }

    #[test]
    fn resample_midpoint() {
        let s = line(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let r = resample_uniform(&s, 3).unwrap();
        assert_eq!(
            r.points,
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(0.5, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0)
            ]
        );
    }

    #[test]
    fn resample_identity_on_uniform_segment() {
        let pts: Vec<[f64; 3]> = (0..5).map(|i| [i as f64 * 0.25, 0.0, 0.0]).collect();
        let s = line(&pts);
        let r = resample_uniform(&s, 5).unwrap();
        for (a, b) in r.points.iter().zip(&s.points) {
            assert!(a.distance(b) <= 1e-12);
        }
    }

    #[test]
    fn resample_rejects_degenerate() {
        let s = line(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]);
        assert!(resample_uniform(&s, 10).is_err());
        let s = line(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert!(resample_uniform(&s, 1).is_err());
    }

    #[test]
    fn resample_handles_repeated_points() {
        let s = line(&[[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let r = resample_uniform(&s, 5).unwrap();
        for (j, p) in r.points.iter().enumerate() {
            assert!((p.x - 0.5 * j as f64).abs() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn streamline_invariants() {
        assert!(Streamline::new(1, vec![Point3::default()], None).is_err());
        assert!(Streamline::new(1, vec![Point3::default(), Point3::new(f64::NAN, 0.0, 0.0)], None).is_err());
        let a = line(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        let set = StreamlineSet::new(vec![a.clone(), a], "dup");
        assert!(matches!(set, Err(Error::InvalidStreamline { .. })));
    }

    #[test]
    fn normalization_symmetric_box() {
        let set = StreamlineSet::new(vec![line(&[[0.0; 3], [2.0, 2.0, 2.0]])], "t").unwrap();
        let t = fit_normalization(&[&set]).unwrap();
        assert_eq!(t.offset, [1.0; 3]);
        assert_eq!(t.scale, [1.0; 3]);
        assert_eq!(t.apply_point(&Point3::new(2.0, 2.0, 2.0)), Point3::new(1.0, 1.0, 1.0));
    }

    #[test]
    fn normalization_degenerate_extent() {
        let set = StreamlineSet::new(vec![line(&[[5.0; 3], [5.0; 3]])], "t").unwrap();
        let t = fit_normalization(&[&set]).unwrap();
        assert_eq!(t.apply_point(&Point3::new(5.0, 5.0, 5.0)), Point3::new(0.0, 0.0, 0.0));
        assert_eq!(t.scale, [1.0; 3]);
    }

    #[test]
    fn normalization_empty_input() {
        let empty = StreamlineSet::default();
        assert!(fit_normalization(&[&empty]).is_err());
        assert!(fit_normalization(&[]).is_err());
    }

    #[test]
    fn identity_transform_is_noop() {
        let s = line(&[[0.3, -2.0, 7.5], [1.0, 4.0, -3.0]]);
        assert_eq!(apply_normalization(&NormalizationTransform::identity(), &s), s);
    }

    #[test]
    fn bounding_box_overlap() {
        let a = line(&[[0.0; 3], [1.0; 3]]).bounding_box();
        let b = line(&[[1.0; 3], [2.0; 3]]).bounding_box();
        let c = line(&[[1.5; 3], [2.0; 3]]).bounding_box();
        assert!(a.intersects(&b));
        assert!(!a.intersects(&c));
        assert!(!a.intersects(&BoundingBox::empty()));
    }
}
