use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpeedError {
    #[error("speed distribution needs at least one bin")]
    Empty,
    #[error("expected {edges} bin edges for {bins} frequencies")]
    EdgeCount { edges: usize, bins: usize },
    #[error("bin edges must be finite, non-negative and strictly increasing")]
    Edges,
    #[error("frequencies must be non-negative and sum to 1 (got {0})")]
    Frequencies(f64),
}

/// Histogram of instantaneous linear speeds, mm/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpeedSpec", into = "SpeedSpec")]
pub struct SpeedDistribution {
    edges: Vec<f64>,
    frequencies: Vec<f64>,
    cumulative: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedSpec {
    pub bin_edges: Vec<f64>,
    pub frequencies: Vec<f64>,
}

impl TryFrom<SpeedSpec> for SpeedDistribution {
    type Error = SpeedError;

    fn try_from(s: SpeedSpec) -> Result<Self, SpeedError> {
        SpeedDistribution::new(s.bin_edges, s.frequencies)
    }
}

impl From<SpeedDistribution> for SpeedSpec {
    fn from(d: SpeedDistribution) -> Self {
        SpeedSpec { bin_edges: d.edges, frequencies: d.frequencies }
    }
}

impl Default for SpeedDistribution {
    /// Twelve 10 mm/s bins over `[0, 120]` mm/s peaking at 50–70 mm/s.
    fn default() -> Self {
        let edges = (0..=12).map(|i| i as f64 * 10.0).collect();
        let freqs = vec![0.01, 0.02, 0.04, 0.07, 0.11, 0.16, 0.18, 0.15, 0.11, 0.07, 0.05, 0.03];
        SpeedDistribution::new(edges, freqs).expect("default speed distribution is valid")
    }
}

impl SpeedDistribution {
    pub fn new(edges: Vec<f64>, frequencies: Vec<f64>) -> Result<Self, SpeedError> {
        if frequencies.is_empty() {
            return Err(SpeedError::Empty);
        }
        if edges.len() != frequencies.len() + 1 {
            return Err(SpeedError::EdgeCount { edges: edges.len(), bins: frequencies.len() });
        }
        if edges.iter().any(|e| !e.is_finite() || *e < 0.0) || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SpeedError::Edges);
        }
        let total: f64 = frequencies.iter().sum();
        if frequencies.iter().any(|f| f.is_nan() || *f < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(SpeedError::Frequencies(total));
        }
        let mut acc = 0.0;
        let cumulative = frequencies
            .iter()
            .map(|f| {
                acc += f;
                acc
            })
            .collect();
        Ok(SpeedDistribution { edges, frequencies, cumulative })
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Picks a bin by `u1` against the cumulative frequencies, then a
    /// uniform speed inside it by `u2`.
    pub fn draw(&self, u1: f64, u2: f64) -> f64 {
        let last = self.frequencies.len() - 1;
        let bin = self.cumulative.partition_point(|&c| c <= u1).min(last);
        // Skip empty bins that share a cumulative value with the chosen edge.
        let bin = (bin..=last).find(|&b| self.frequencies[b] > 0.0).unwrap_or(bin);
        let (lo, hi) = (self.edges[bin], self.edges[bin + 1]);
        lo + u2 * (hi - lo)
    }

    /// Largest speed the distribution can produce.
    pub fn max_speed(&self) -> f64 {
        *self.edges.last().expect("validated non-empty")
    }
}

/// Free-function form of [`SpeedDistribution::draw`].
pub fn draw_speed(dist: &SpeedDistribution, u1: f64, u2: f64) -> f64 {
    dist.draw(u1, u2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_bin_is_forced() {
        let d = SpeedDistribution::new(vec![40.0, 60.0], vec![1.0]).unwrap();
        for u in [0.0, 0.3, 0.999] {
            let v = d.draw(u, u);
            assert!((40.0..=60.0).contains(&v));
        }
    }

    #[test]
    fn lower_edge_selects_first_bin() {
        let d = SpeedDistribution::default();
        let v = d.draw(0.0, 0.5);
        assert_eq!(v, 5.0);
    }

    #[test]
    fn empirical_frequencies_match() {
        let d = SpeedDistribution::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 12];
        let n = 100_000;
        for _ in 0..n {
            let v = d.draw(rng.gen(), rng.gen());
            counts[((v / 10.0) as usize).min(11)] += 1;
        }
        for (c, f) in counts.iter().zip(d.frequencies()) {
            assert!((*c as f64 / n as f64 - f).abs() <= 0.01);
        }
    }

    #[test]
    fn rejects_invalid() {
        assert_eq!(SpeedDistribution::new(vec![0.0], vec![]), Err(SpeedError::Empty));
        assert!(SpeedDistribution::new(vec![0.0, 1.0], vec![0.5]).is_err());
        assert!(SpeedDistribution::new(vec![1.0, 0.0], vec![1.0]).is_err());
        assert!(SpeedDistribution::new(vec![0.0, 1.0, 2.0], vec![1.0]).is_err());
    }

    #[test]
    fn zero_weight_bins_are_never_drawn() {
        let d = SpeedDistribution::new(vec![0.0, 10.0, 20.0, 30.0], vec![0.0, 1.0, 0.0]).unwrap();
        for u in [0.0, 0.5, 0.9999] {
            assert!((10.0..=20.0).contains(&d.draw(u, 0.5)));
        }
    }
}
