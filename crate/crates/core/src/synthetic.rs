//! Deterministic synthetic fiber bundles.
//!
//! Each bundle is a family of parametric curves around a center. Every
//! streamline draws its own small shape jitter, may be stored in either
//! traversal direction, and receives isotropic Gaussian point noise. A
//! left/right pair is two bundles whose centers differ only in the sign of x.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::streamline::{Point3, Streamline, StreamlineSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Circle in the x-y plane, advancing linearly in z.
    Helix,
    /// Half circle in the x-z plane.
    Arc,
    /// Sinusoid in x along a line parallel to y.
    Sine,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Helix => "helix",
            Family::Arc => "arc",
            Family::Sine => "sine",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "helix" => Ok(Family::Helix),
            "arc" => Ok(Family::Arc),
            "sine" => Ok(Family::Sine),
            other => Err(Error::InvalidArgument(format!("unknown bundle family `{other}`"))),
        }
    }
}

/// Per-streamline shape parameters. `jitter` entries lie in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeParams {
    pub family: Family,
    pub center: Point3,
    pub size: f64,
    pub jitter: [f64; 3],
}

pub const HELIX_TURNS: f64 = 1.25;

impl ShapeParams {
    /// Noise-free curve point at parameter `t` in `[0, 1]`.
    pub fn point(&self, t: f64) -> Point3 {
        let c = self.center;
        let s = self.size;
        let [u1, u2, u3] = self.jitter;
        match self.family {
            Family::Helix => {
                let r = 0.25 * s * (1.0 + 0.15 * u1);
                let theta = 0.3 * u2 + 2.0 * PI * HELIX_TURNS * t;
                Point3::new(
                    c.x + r * theta.cos(),
                    c.y + r * theta.sin(),
                    c.z + 0.05 * s * u3 + s * (t - 0.5),
                )
            }
            Family::Arc => {
                let r = 0.5 * s * (1.0 + 0.15 * u1);
                let alpha = 0.2 * u2 + PI * t;
                Point3::new(c.x + r * alpha.cos(), c.y + 0.1 * s * u3, c.z + r * alpha.sin())
            }
            Family::Sine => {
                let amp = 0.2 * s * (1.0 + 0.15 * u1);
                Point3::new(
                    c.x + amp * (2.0 * PI * t + 0.3 * u2).sin(),
                    c.y + s * (t - 0.5),
                    c.z + 0.1 * s * u3,
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleSpec {
    pub name: String,
    pub family: Family,
    pub center: Point3,
    pub size: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub bundles: Vec<BundleSpec>,
    pub noise_sigma: f64,
    pub points_per_streamline: usize,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise sigma must be a finite non-negative number, got {}", self.noise_sigma));
        }
        if self.points_per_streamline < 2 {
            return bad(format!("points per streamline must be at least 2, got {}", self.points_per_streamline));
        }
        let mut names = HashSet::new();
        for b in &self.bundles {
            if b.name.is_empty() || b.name == "-" || b.name.chars().any(char::is_whitespace) {
                return bad(format!("invalid bundle name `{}`", b.name));
            }
            if !names.insert(b.name.as_str()) {
                return bad(format!("duplicate bundle name `{}`", b.name));
            }
            if b.count == 0 {
                return bad(format!("bundle `{}` has zero streamlines", b.name));
            }
            if !(b.size > 0.0) || !b.size.is_finite() || !b.center.is_finite() {
                return bad(format!("bundle `{}` has invalid geometry", b.name));
            }
        }
        Ok(())
    }

    /// Parses the `SPEC 1` text format. `seed` is supplied separately since
    /// the file carries geometry only.
    pub fn parse(text: &str, seed: u64) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, l)) if l.split_whitespace().collect::<Vec<_>>() == ["SPEC", "1"] => {}
            Some((n, l)) => return Err(Error::parse(n, format!("malformed header `{l}`"))),
            None => return Err(Error::parse(1, "malformed header: empty file")),
        }

        let mut noise = None;
        let mut points = None;
        let mut bundles = Vec::new();
        for (n, l) in lines {
            let tok: Vec<_> = l.split_whitespace().collect();
            let num = |t: &str| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(n, format!("malformed number `{t}`")))
            };
            let int = |t: &str| {
                t.parse::<usize>()
                    .map_err(|_| Error::parse(n, format!("malformed integer `{t}`")))
            };
            match tok.as_slice() {
                ["noise", s] => noise = Some(num(s)?),
                ["points", m] => points = Some(int(m)?),
                ["bundle", name, family, cx, cy, cz, size, count] => bundles.push(BundleSpec {
                    name: name.to_string(),
                    family: family.parse().map_err(|e: Error| Error::parse(n, e.to_string()))?,
                    center: Point3::new(num(cx)?, num(cy)?, num(cz)?),
                    size: num(size)?,
                    count: int(count)?,
                }),
                _ => return Err(Error::parse(n, format!("unrecognized line `{l}`"))),
            }
        }

        let spec = SyntheticSpec {
            seed,
            bundles,
            noise_sigma: noise.ok_or_else(|| Error::parse(0, "missing `noise` line"))?,
            points_per_streamline: points.ok_or_else(|| Error::parse(0, "missing `points` line"))?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: impl AsRef<Path>, seed: u64) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, seed)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "SPEC 1\nnoise {}\npoints {}\n",
            self.noise_sigma, self.points_per_streamline
        );
        for b in &self.bundles {
            out.push_str(&format!(
                "bundle {} {} {} {} {} {} {}\n",
                b.name, b.family, b.center.x, b.center.y, b.center.z, b.size, b.count
            ));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_text().as_bytes())
    }
}

/// Generates the labeled streamline set described by `spec`. The output is a
/// pure function of `spec`; ids run consecutively from 0 in bundle order.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec) -> Result<StreamlineSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = (spec.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.noise_sigma).expect("validated sigma"));
    let m = spec.points_per_streamline;

    let total: usize = spec.bundles.iter().map(|b| b.count).sum();
    let mut streamlines = Vec::with_capacity(total);
    let mut id = 0u64;
    for bundle in &spec.bundles {
        for _ in 0..bundle.count {
            let params = ShapeParams {
                family: bundle.family,
                center: bundle.center,
                size: bundle.size,
                jitter: [
                    rng.random_range(-1.0..=1.0),
                    rng.random_range(-1.0..=1.0),
                    rng.random_range(-1.0..=1.0),
                ],
            };
            let reverse: bool = rng.random_bool(0.5);
            let mut points: Vec<Point3> = (0..m)
                .map(|i| params.point(i as f64 / (m - 1) as f64))
                .collect();
            if let Some(noise) = &noise {
                for p in &mut points {
                    p.x += noise.sample(&mut rng);
                    p.y += noise.sample(&mut rng);
                    p.z += noise.sample(&mut rng);
                }
            }
            if reverse {
                points.reverse();
            }
            streamlines.push(Streamline {
                id,
                points,
                label: Some(bundle.name.clone()),
            });
            id += 1;
        }
    }

    StreamlineSet::new(streamlines, format!("synthetic seed={}", spec.seed))
}
