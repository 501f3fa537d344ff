use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference level that takes effect at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t: f64,
    pub level: f64,
}

impl Segment {
    pub fn new(t: f64, level: f64) -> Self {
        Self { t, level }
    }
}

/// Piecewise-constant reference, one segment list per tracked output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceProgram {
    pub outputs: Vec<Vec<Segment>>,
}

impl ReferenceProgram {
    pub fn constant(levels: &[f64]) -> Self {
        Self { outputs: levels.iter().map(|&l| vec![Segment::new(0.0, l)]).collect() }
    }

    pub fn validate(&self, h_max: f64) -> Result<()> {
        for (i, segs) in self.outputs.iter().enumerate() {
            if segs.is_empty() {
                return Err(Error::Config(format!("reference output {i} has no segments")));
            }
            for s in segs {
                if !s.t.is_finite() || !(0.0..=h_max).contains(&s.level) {
                    return Err(Error::Config(format!("reference output {i}: bad segment {s:?}")));
                }
            }
            if segs.windows(2).any(|w| w[1].t <= w[0].t) {
                return Err(Error::Config(format!("reference output {i}: start times must increase strictly")));
            }
        }
        Ok(())
    }

    /// Reference vector at time `t`.
    pub fn at(&self, t: f64) -> Vec<f64> {
        self.outputs.iter().map(|s| generate_reference(s, t)).collect()
    }

    /// All times at which any output changes level, ascending.
    pub fn change_times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self.outputs.iter().flat_map(|s| s.iter().skip(1).map(|g| g.t)).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }
}

/// Right-continuous lookup; times before the first segment take its level.
pub fn generate_reference(segments: &[Segment], t: f64) -> f64 {
    let idx = segments.partition_point(|s| s.t <= t);
    segments[idx.saturating_sub(1)].level
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prog() -> Vec<Segment> {
        vec![Segment::new(10.0, 0.3), Segment::new(20.0, 0.4)]
    }

    #[test]
    fn lookup_examples() {
        assert_eq!(generate_reference(&prog(), 0.0), 0.3);
        assert_eq!(generate_reference(&prog(), 19.999), 0.3);
        assert_eq!(generate_reference(&prog(), 20.0), 0.4);
        assert_eq!(generate_reference(&prog(), 1e6), 0.4);
        let single = [Segment::new(0.0, 0.25)];
        for t in [-5.0, 0.0, 3.0, 1e9] {
            assert_eq!(generate_reference(&single, t), 0.25);
        }
    }

    #[test]
    fn validation() {
        let ok = ReferenceProgram { outputs: vec![prog()] };
        assert!(ok.validate(0.62).is_ok());
        let unordered = ReferenceProgram { outputs: vec![vec![Segment::new(5.0, 0.1), Segment::new(5.0, 0.2)]] };
        assert!(unordered.validate(0.62).is_err());
        let too_high = ReferenceProgram { outputs: vec![vec![Segment::new(0.0, 0.7)]] };
        assert!(too_high.validate(0.62).is_err());
        assert!(ReferenceProgram { outputs: vec![vec![]] }.validate(0.62).is_err());
    }

    #[test]
    fn change_times_merge_outputs() {
        let p = ReferenceProgram {
            outputs: vec![prog(), vec![Segment::new(0.0, 0.2), Segment::new(15.0, 0.1), Segment::new(20.0, 0.2)]],
        };
        assert_eq!(p.change_times(), vec![15.0, 20.0]);
    }
}
