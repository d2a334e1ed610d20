//! Six-condition comparison of anchor choice and appearance strategy.

use rayon::prelude::*;

use crate::appearance::FeatureStrategy;
use crate::fusion::fuse;
use crate::geometry::CoordinateMode;
use crate::metrics::{evaluate, EvalReport, LabeledTimeline, MatchingParams};
use crate::simulator::{simulate, Scenario};
use crate::{Error, Result};

/// One (anchor, appearance) combination. `number` is 1-based, bbox-center
/// rows first, then foot rows, each in none/mean/pd-aware order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Condition {
    pub number: usize,
    pub coordinate_mode: CoordinateMode,
    pub feature_strategy: FeatureStrategy,
}

pub fn conditions() -> Vec<Condition> {
    CoordinateMode::ALL
        .iter()
        .flat_map(|&m| FeatureStrategy::ALL.iter().map(move |&f| (m, f)))
        .enumerate()
        .map(|(i, (coordinate_mode, feature_strategy))| Condition {
            number: i + 1,
            coordinate_mode,
            feature_strategy,
        })
        .collect()
}

pub const METRICS: [&str; 3] = ["hota", "idf1", "mota"];

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub condition: Condition,
    /// `(seed, report)` in the order seeds were given.
    pub per_seed: Vec<(u64, EvalReport)>,
}

impl AblationRow {
    fn values(report: &EvalReport) -> [f64; 3] {
        [report.hota, report.idf1, report.mota]
    }

    /// Mean HOTA, IDF1 and MOTA over seeds.
    pub fn mean(&self) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for (_, r) in &self.per_seed {
            for (a, v) in acc.iter_mut().zip(Self::values(r)) {
                *a += v;
            }
        }
        acc.map(|a| a / self.per_seed.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

/// Simulates `scenario` once per seed and runs fusion and evaluation under
/// every condition. Seeds run in parallel; the result does not depend on
/// scheduling.
pub fn run_ablation(scenario: &Scenario, seeds: &[u64], params: &MatchingParams) -> Result<AblationTable> {
    if seeds.is_empty() {
        return Err(Error::invalid("seeds", "at least one seed is required"));
    }
    let conds = conditions();
    let per_seed: Vec<Vec<EvalReport>> = seeds
        .par_iter()
        .map(|&seed| {
            let s = scenario.clone().with_seed(seed);
            let sim = simulate(&s)?;
            let tracklets = sim.tracklets();
            conds
                .par_iter()
                .map(|c| {
                    let mut cfg = s.fusion.clone();
                    cfg.coordinate_mode = c.coordinate_mode;
                    cfg.feature_strategy = c.feature_strategy;
                    let tracks = fuse(&tracklets, &sim.rig, &cfg)?;
                    evaluate(&sim.ground_truth, &LabeledTimeline::from_tracks(&tracks)?, params)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let rows = conds
        .iter()
        .enumerate()
        .map(|(i, &condition)| AblationRow {
            condition,
            per_seed: seeds.iter().zip(&per_seed).map(|(&s, r)| (s, r[i].clone())).collect(),
        })
        .collect();
    Ok(AblationTable {
        seeds: seeds.to_vec(),
        rows,
    })
}

impl AblationTable {
    /// Long-format CSV: one row per condition, seed and metric, followed by
    /// the per-condition means with `seed` set to `mean`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::invalid("ablation csv", e.to_string());
        w.write_record(["condition", "coordinate_mode", "feature_strategy", "seed", "metric", "value"])
            .map_err(err)?;
        let mut push = |row: &AblationRow, seed: String, values: [f64; 3]| -> Result<()> {
            for (m, v) in METRICS.iter().zip(values) {
                w.write_record([
                    row.condition.number.to_string(),
                    row.condition.coordinate_mode.to_string(),
                    row.condition.feature_strategy.to_string(),
                    seed.clone(),
                    m.to_string(),
                    format!("{v:.6}"),
                ])
                .map_err(err)?;
            }
            Ok(())
        };
        for row in &self.rows {
            for (seed, r) in &row.per_seed {
                push(row, seed.to_string(), AblationRow::values(r))?;
            }
        }
        for row in &self.rows {
            push(row, "mean".into(), row.mean())?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid("ablation csv", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Fixed-width table of the means.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<5} {:<12} {:<9} {:>7} {:>7} {:>7}\n",
            "cond", "anchor", "features", "HOTA", "IDF1", "MOTA"
        );
        for row in &self.rows {
            let [h, i, m] = row.mean();
            s.push_str(&format!(
                "{:<5} {:<12} {:<9} {:>7.2} {:>7.2} {:>7.2}\n",
                format!("({})", row.condition.number),
                row.condition.coordinate_mode.as_str(),
                row.condition.feature_strategy.as_str(),
                h,
                i,
                m
            ));
        }
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        s.push_str(&format!("mean over seeds {}\n", seeds.join(",")));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{CameraPlacement, NoiseConfig};

    fn quiet_scenario() -> Scenario {
        let mut s = Scenario::reference();
        s.world.n_workers = 1;
        s.world.n_frames = 80;
        s.noise = NoiseConfig::default();
        s.cameras.truncate(2);
        for c in &mut s.cameras {
            *c = CameraPlacement {
                misalignment: 0.0,
                mount_height_ratio: 0.0,
                distortion: None,
                ..c.clone()
            };
        }
        s
    }

    #[test]
    fn condition_order() {
        let c = conditions();
        assert_eq!(c.len(), 6);
        assert_eq!((c[0].coordinate_mode, c[0].feature_strategy), (CoordinateMode::BboxCenter, FeatureStrategy::None));
        assert_eq!((c[4].coordinate_mode, c[4].feature_strategy), (CoordinateMode::Foot, FeatureStrategy::SimpleAveraging));
        assert_eq!(c[5].number, 6);
    }

    #[test]
    fn needs_a_seed() {
        assert!(run_ablation(&quiet_scenario(), &[], &MatchingParams::default()).is_err());
    }

    #[test]
    fn noiseless_rows_are_perfect() {
        let t = run_ablation(&quiet_scenario(), &[1, 2], &MatchingParams::default()).unwrap();
        for row in &t.rows {
            assert_eq!(row.mean(), [100.0; 3], "{:?}", row.condition);
        }
        let csv = t.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 1 + 6 * 3 * 2 + 6 * 3);
        assert!(csv.ends_with("6,foot,pd-aware,mean,mota,100.000000\n"));
        let text = t.to_text();
        assert!(text.lines().nth(1).unwrap().starts_with("(1)   bbox-center  none"));
    }
}
