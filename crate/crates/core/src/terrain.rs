//! Gap terrain: a flat ground line at height 0 interrupted by gaps.
//!
//! Gap intervals are half-open, `[start, end)`. Each gap has vertical walls
//! down to a floor at [`GAP_FLOOR`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Depth of the floor inside a gap (m).
pub const GAP_FLOOR: f64 = -1.0;

pub const STANDARD_PLATFORM: f64 = 1.4;
pub const CHALLENGING_PLATFORM: f64 = 0.30;
pub const WIDTH_RANGE: [f64; 2] = [0.14, 0.20];
pub const FIRST_GAP_RANGE: [f64; 2] = [1.25, 2.25];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gap {
    pub start: f64,
    pub end: f64,
}

impl Gap {
    pub fn width(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.start && x < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainSpec {
    pub gaps: Vec<Gap>,
    pub total_length: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TerrainMode {
    /// No gaps.
    Flat,
    /// Platforms of 1.4 m between gaps.
    #[default]
    Standard,
    /// Platforms of 0.30 m between gaps.
    Challenging,
}

impl TerrainMode {
    pub fn platform(self) -> f64 {
        match self {
            TerrainMode::Flat | TerrainMode::Standard => STANDARD_PLATFORM,
            TerrainMode::Challenging => CHALLENGING_PLATFORM,
        }
    }
}

/// Terrain generator settings held by the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerrainConfig {
    pub mode: TerrainMode,
    pub n_gaps: usize,
    pub width_range: [f64; 2],
    pub first_gap_range: [f64; 2],
}

impl Default for TerrainConfig {
    fn default() -> Self {
        Self {
            mode: TerrainMode::Standard,
            n_gaps: 7,
            width_range: WIDTH_RANGE,
            first_gap_range: FIRST_GAP_RANGE,
        }
    }
}

impl TerrainConfig {
    pub fn flat() -> Self {
        Self {
            mode: TerrainMode::Flat,
            n_gaps: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [wl, wh] = self.width_range;
        if !(wl > 0.0 && wl <= wh && wh.is_finite()) {
            return Err(Error::config("terrain.width_range", "need 0 < min <= max"));
        }
        let [fl, fh] = self.first_gap_range;
        if !(fl.is_finite() && fh.is_finite() && fl <= fh) {
            return Err(Error::config("terrain.first_gap_range", "need min <= max"));
        }
        if fl < 0.5 {
            return Err(Error::config(
                "terrain.first_gap_range",
                "first gap must start at least 0.5 m ahead of the robot",
            ));
        }
        Ok(())
    }

    pub fn effective_gaps(&self) -> usize {
        match self.mode {
            TerrainMode::Flat => 0,
            _ => self.n_gaps,
        }
    }

    /// Generates a terrain with this config's ranges.
    pub fn generate(&self, seed_value: u64) -> TerrainSpec {
        let mut rng = seed::rng(seed_value, &[seed::stream::TERRAIN]);
        let n = self.effective_gaps();
        let mut gaps = Vec::with_capacity(n);
        let mut start = sample(&mut rng, self.first_gap_range);
        for _ in 0..n {
            let width = sample(&mut rng, self.width_range);
            gaps.push(Gap {
                start,
                end: start + width,
            });
            start += width + self.mode.platform();
        }
        let total_length = gaps.last().map_or(0.0, |g| g.end + self.mode.platform());
        TerrainSpec {
            gaps,
            total_length,
            seed: seed_value,
        }
    }
}

fn sample<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Standard generator: first gap start ~ U[1.25, 2.25] m, widths ~ U[0.14, 0.20] m.
pub fn generate_terrain(n_gaps: usize, mode: TerrainMode, seed_value: u64) -> TerrainSpec {
    TerrainConfig {
        mode,
        n_gaps,
        ..TerrainConfig::default()
    }
    .generate(seed_value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ground {
    Surface { height: f64 },
    Gap { index: usize, gap: Gap },
}

impl TerrainSpec {
    pub fn flat() -> Self {
        Self {
            gaps: Vec::new(),
            total_length: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, g) in self.gaps.iter().enumerate() {
            if !(g.start.is_finite() && g.end.is_finite() && g.end > g.start) {
                return Err(Error::config(format!("terrain.gaps[{i}]"), "need start < end"));
            }
            if i > 0 && g.start < self.gaps[i - 1].end {
                return Err(Error::config(
                    format!("terrain.gaps[{i}]"),
                    "gaps must be ordered and disjoint",
                ));
            }
        }
        Ok(())
    }

    /// Index of the gap containing `x`, if any.
    pub fn gap_index(&self, x: f64) -> Option<usize> {
        // first gap whose end is > x
        let i = self.gaps.partition_point(|g| g.end <= x);
        match self.gaps.get(i) {
            Some(g) if g.contains(x) => Some(i),
            _ => None,
        }
    }

    pub fn ground_query(&self, x: f64) -> Ground {
        match self.gap_index(x) {
            Some(index) => Ground::Gap {
                index,
                gap: self.gaps[index],
            },
            None => Ground::Surface { height: 0.0 },
        }
    }

    /// Nearest gap whose end lies strictly ahead of `x`.
    pub fn next_gap(&self, x: f64) -> Option<(usize, &Gap)> {
        let i = self.gaps.partition_point(|g| g.end <= x);
        self.gaps.get(i).map(|g| (i, g))
    }

    /// Wall positions bounding the platform that contains `x`: the end of the
    /// gap behind it and the start of the gap ahead of it.
    pub(crate) fn walls_around(&self, x: f64) -> (Option<f64>, Option<f64>) {
        let i = self.gaps.partition_point(|g| g.end <= x);
        let left = if i > 0 { Some(self.gaps[i - 1].end) } else { None };
        let right = self.gaps.get(i).map(|g| g.start);
        (left, right)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("terrain serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let t: Self = toml::from_str(s).map_err(|e| Error::ConfigParse(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_gaps_is_flat() {
        let t = generate_terrain(0, TerrainMode::Standard, 3);
        assert!(t.gaps.is_empty());
        assert_eq!(t.ground_query(5.0), Ground::Surface { height: 0.0 });
    }

    #[test]
    fn standard_generator_is_deterministic_and_in_range() {
        let a = generate_terrain(7, TerrainMode::Standard, 42);
        let b = generate_terrain(7, TerrainMode::Standard, 42);
        assert_eq!(a, b);
        assert_eq!(a.gaps.len(), 7);
        assert!((1.25..2.25).contains(&a.gaps[0].start));
        for w in a.gaps.windows(2) {
            assert!((w[1].start - w[0].end - STANDARD_PLATFORM).abs() < 1e-12);
        }
        for g in &a.gaps {
            assert!((0.14..=0.20).contains(&g.width()));
        }
        assert!(a.validate().is_ok());
    }

    #[test]
    fn challenging_platforms() {
        let t = generate_terrain(8, TerrainMode::Challenging, 9);
        assert_eq!(t.gaps.len(), 8);
        for w in t.gaps.windows(2) {
            let sep = w[1].start - w[0].start;
            assert!((sep - (w[0].width() + 0.30)).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_mode_ignores_gap_count() {
        let cfg = TerrainConfig {
            mode: TerrainMode::Flat,
            n_gaps: 5,
            ..TerrainConfig::default()
        };
        assert!(cfg.generate(1).gaps.is_empty());
    }

    #[test]
    fn ground_query_half_open() {
        let t = TerrainSpec {
            gaps: vec![Gap { start: 1.0, end: 1.2 }],
            total_length: 3.0,
            seed: 0,
        };
        assert!(matches!(t.ground_query(1.0), Ground::Gap { index: 0, .. }));
        assert!(matches!(t.ground_query(1.1), Ground::Gap { .. }));
        assert_eq!(t.ground_query(1.2), Ground::Surface { height: 0.0 });
        assert_eq!(t.ground_query(0.5), Ground::Surface { height: 0.0 });
        assert_eq!(t.next_gap(0.5).map(|(i, _)| i), Some(0));
        assert_eq!(t.next_gap(1.1).map(|(i, _)| i), Some(0));
        assert!(t.next_gap(1.2).is_none());
        assert_eq!(t.walls_around(1.5), (Some(1.2), None));
        assert_eq!(t.walls_around(0.5), (None, Some(1.0)));
    }

    #[test]
    fn toml_round_trip() {
        let t = generate_terrain(3, TerrainMode::Standard, 5);
        let back = TerrainSpec::from_toml(&t.to_toml()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn overlapping_gaps_rejected() {
        let t = TerrainSpec {
            gaps: vec![Gap { start: 1.0, end: 1.2 }, Gap { start: 1.1, end: 1.3 }],
            total_length: 3.0,
            seed: 0,
        };
        assert!(t.validate().is_err());
    }
}
