//! Multi-scale epoch plans: samples are shuffled, grouped into global
//! batches, and each batch is assigned one resolution and the sub-batch size
//! that fits it in memory, with gradient accumulation making up the rest.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::XorShift64;

pub const GRID: usize = 64;
pub const DEFAULT_BATCH: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    P,
    H,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "P" | "p" => Ok(Variant::P),
            "H" | "h" => Ok(Variant::H),
            other => Err(Error::Config(format!("unknown variant {other:?}, expected P or H"))),
        }
    }
}

/// One height with a range of widths sampled on a 64-px grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScalePattern {
    pub height: usize,
    pub width_min: usize,
    pub width_max: usize,
    pub sub_batch: usize,
}

impl ScalePattern {
    pub fn widths(&self) -> impl Iterator<Item = usize> {
        (self.width_min..=self.width_max).step_by(GRID)
    }
}

// (height, width_min, width_max, sub-batch P, sub-batch H)
const TABLE: [(usize, usize, usize, usize, usize); 8] = [
    (512, 640, 768, 8, 8),
    (576, 704, 832, 8, 8),
    (640, 832, 960, 8, 8),
    (704, 896, 1024, 8, 4),
    (768, 960, 1088, 4, 4),
    (896, 1152, 1280, 4, 4),
    (960, 1216, 1344, 4, 2),
    (1024, 1280, 1280, 4, 2),
];

/// The height missing between 768 and 896; its sub-batch follows both neighbors.
const INFERRED_ROW: (usize, usize, usize, usize, usize) = (832, 1024, 1152, 4, 4);

fn pattern(row: (usize, usize, usize, usize, usize), variant: Variant) -> ScalePattern {
    let (height, width_min, width_max, p, h) = row;
    ScalePattern {
        height,
        width_min,
        width_max,
        sub_batch: match variant {
            Variant::P => p,
            Variant::H => h,
        },
    }
}

/// The eight published resolution rows.
pub fn table_patterns(variant: Variant) -> Vec<ScalePattern> {
    TABLE.iter().map(|&r| pattern(r, variant)).collect()
}

/// Published rows plus the 832-px row, expanding to 25 concrete resolutions.
pub fn default_patterns(variant: Variant) -> Vec<ScalePattern> {
    let mut rows = table_patterns(variant);
    rows.insert(5, pattern(INFERRED_ROW, variant));
    rows
}

/// Every `(height, width, sub_batch)` reachable from `patterns`.
pub fn concrete_patterns(patterns: &[ScalePattern]) -> Vec<(usize, usize, usize)> {
    patterns
        .iter()
        .flat_map(|p| p.widths().map(move |w| (p.height, w, p.sub_batch)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanGroup {
    pub height: usize,
    pub width: usize,
    pub sub_batch: usize,
    pub steps: usize,
    pub samples: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct EpochPlan {
    pub groups: Vec<PlanGroup>,
}

pub fn make_epoch_plan(
    num_samples: usize,
    patterns: &[ScalePattern],
    batch: usize,
    seed: u64,
) -> Result<EpochPlan> {
    if num_samples == 0 {
        return Err(Error::Config("an epoch needs at least one sample".into()));
    }
    if patterns.is_empty() {
        return Err(Error::Config("no scale patterns".into()));
    }
    for p in patterns {
        if p.sub_batch == 0 || batch % p.sub_batch != 0 {
            return Err(Error::SubBatch {
                sub_batch: p.sub_batch,
                batch,
            });
        }
    }
    let choices = concrete_patterns(patterns);
    let mut rng = XorShift64::new(seed);
    let mut order: Vec<usize> = (0..num_samples).collect();
    rng.shuffle(&mut order);
    let groups = order
        .chunks(batch)
        .map(|samples| {
            let (height, width, sub_batch) = choices[rng.below(choices.len())];
            PlanGroup {
                height,
                width,
                sub_batch,
                steps: samples.len().div_ceil(sub_batch),
                samples: samples.to_vec(),
            }
        })
        .collect();
    Ok(EpochPlan { groups })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Duplicate { sample: usize },
    Missing { sample: usize },
    Accumulation { group: usize, sub_batch: usize, steps: usize },
    Oversized { group: usize, size: usize },
    EarlyPartial { group: usize },
    OffGrid { group: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Duplicate { sample } => write!(f, "sample {sample} scheduled more than once"),
            Violation::Missing { sample } => write!(f, "sample {sample} never scheduled"),
            Violation::Accumulation { group, sub_batch, steps } => {
                write!(f, "group {group}: sub-batch {sub_batch} x {steps} steps does not cover the batch")
            }
            Violation::Oversized { group, size } => write!(f, "group {group} holds {size} samples"),
            Violation::EarlyPartial { group } => write!(f, "partial group {group} is not last"),
            Violation::OffGrid { group } => write!(f, "group {group} resolution is off the 64-px grid"),
        }
    }
}

/// Checks coverage of `0..num_samples` and per-group accumulation arithmetic.
pub fn validate_plan(plan: &EpochPlan, num_samples: usize, batch: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let last = plan.groups.len().saturating_sub(1);
    for (i, g) in plan.groups.iter().enumerate() {
        let size = g.samples.len();
        if g.height % GRID != 0 || g.width % GRID != 0 {
            out.push(Violation::OffGrid { group: i });
        }
        if size > batch || size == 0 {
            out.push(Violation::Oversized { group: i, size });
        } else if size < batch && i != last {
            out.push(Violation::EarlyPartial { group: i });
        }
        let expected_steps = if size == batch {
            (g.sub_batch * g.steps == batch).then_some(g.steps)
        } else {
            (g.sub_batch > 0 && g.steps == size.div_ceil(g.sub_batch)).then_some(g.steps)
        };
        if expected_steps.is_none() {
            out.push(Violation::Accumulation {
                group: i,
                sub_batch: g.sub_batch,
                steps: g.steps,
            });
        }
        for &s in &g.samples {
            if !seen.insert(s) || s >= num_samples {
                out.push(Violation::Duplicate { sample: s });
            }
        }
    }
    out.extend(
        (0..num_samples)
            .filter(|s| !seen.contains(s))
            .map(|sample| Violation::Missing { sample }),
    );
    out
}

/// One group per line: `H W sub_batch steps idx,idx,...`.
impl fmt::Display for EpochPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            let idx: Vec<String> = g.samples.iter().map(usize::to_string).collect();
            writeln!(f, "{} {} {} {} {}", g.height, g.width, g.sub_batch, g.steps, idx.join(","))?;
        }
        Ok(())
    }
}

impl FromStr for EpochPlan {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut groups = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: n + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", fields.len())));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|e| err(format!("{s:?}: {e}")));
            let samples = fields[4].split(',').map(num).collect::<Result<Vec<_>>>()?;
            groups.push(PlanGroup {
                height: num(fields[0])?,
                width: num(fields[1])?,
                sub_batch: num(fields[2])?,
                steps: num(fields[3])?,
                samples,
            });
        }
        Ok(EpochPlan { groups })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(sub_batch: usize) -> Vec<ScalePattern> {
        vec![ScalePattern {
            height: 512,
            width_min: 640,
            width_max: 640,
            sub_batch,
        }]
    }

    #[test]
    fn single_group_arithmetic() {
        let plan = make_epoch_plan(8, &uniform(2), 8, 1).unwrap();
        assert_eq!(plan.groups.len(), 1);
        assert_eq!(plan.groups[0].steps, 4);
    }

    #[test]
    fn two_full_groups() {
        let plan = make_epoch_plan(16, &uniform(8), 8, 1).unwrap();
        assert_eq!(plan.groups.len(), 2);
        assert!(plan.groups.iter().all(|g| g.steps == 1 && g.samples.len() == 8));
    }

    #[test]
    fn partial_group_keeps_its_size() {
        let plan = make_epoch_plan(13, &uniform(2), 8, 3).unwrap();
        assert_eq!(plan.groups.len(), 2);
        assert_eq!(plan.groups[1].samples.len(), 5);
        assert_eq!(plan.groups[1].steps, 3);
        assert!(validate_plan(&plan, 13, 8).is_empty());
    }

    #[test]
    fn bad_sub_batch_is_rejected() {
        assert!(matches!(make_epoch_plan(8, &uniform(3), 8, 1), Err(Error::SubBatch { .. })));
        assert!(make_epoch_plan(0, &uniform(2), 8, 1).is_err());
    }

    #[test]
    fn thousand_samples_cover_exactly_once() {
        let plan = make_epoch_plan(1000, &default_patterns(Variant::H), 8, 7).unwrap();
        assert!(validate_plan(&plan, 1000, 8).is_empty());
        let mut all: Vec<usize> = plan.groups.iter().flat_map(|g| g.samples.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        for g in &plan.groups {
            assert_eq!(g.sub_batch * g.steps, 8);
        }
    }

    #[test]
    fn injected_faults() {
        let mut plan = make_epoch_plan(16, &uniform(2), 8, 1).unwrap();
        let dup = plan.groups[0].samples[0];
        plan.groups[1].samples[0] = dup;
        let v = validate_plan(&plan, 16, 8);
        assert_eq!(v.iter().filter(|v| matches!(v, Violation::Duplicate { .. })).count(), 1);

        let mut plan = make_epoch_plan(16, &uniform(2), 8, 1).unwrap();
        plan.groups[0].sub_batch = 3;
        plan.groups[0].steps = 3;
        assert_eq!(
            validate_plan(&plan, 16, 8),
            vec![Violation::Accumulation { group: 0, sub_batch: 3, steps: 3 }]
        );
    }

    #[test]
    fn table_rows() {
        let h = table_patterns(Variant::H);
        assert_eq!(h.len(), 8);
        assert_eq!(h[0].height, 512);
        assert_eq!(h[0].sub_batch, 8);
        assert_eq!(h[7].height, 1024);
        assert_eq!(h[7].sub_batch, 2);
        assert_eq!(concrete_patterns(&h).len(), 22);
        let p = table_patterns(Variant::P);
        assert_eq!(p.iter().map(|r| r.sub_batch).collect::<Vec<_>>(), [8, 8, 8, 8, 4, 4, 4, 4]);
    }

    #[test]
    fn defaults_expand_to_25_resolutions() {
        for variant in [Variant::P, Variant::H] {
            let all = concrete_patterns(&default_patterns(variant));
            let distinct: BTreeSet<(usize, usize)> = all.iter().map(|&(h, w, _)| (h, w)).collect();
            assert_eq!(distinct.len(), 25);
            let heights: BTreeSet<usize> = all.iter().map(|p| p.0).collect();
            assert_eq!(heights, (512..=1024).step_by(64).collect());
        }
    }

    fn memory_ratio(variant: Variant) -> f64 {
        let proxy: Vec<usize> = concrete_patterns(&default_patterns(variant))
            .iter()
            .map(|&(h, w, b)| h * w * b)
            .collect();
        *proxy.iter().max().unwrap() as f64 / *proxy.iter().min().unwrap() as f64
    }

    #[test]
    fn memory_proxy_spread() {
        assert!(memory_ratio(Variant::H) < 2.2);
        // 704x1024x8 against 512x640x8
        assert_eq!(memory_ratio(Variant::P), 704.0 * 1024.0 / (512.0 * 640.0));
    }

    #[test]
    fn plan_text_round_trip_and_determinism() {
        let a = make_epoch_plan(50, &default_patterns(Variant::P), 8, 11).unwrap();
        let b = make_epoch_plan(50, &default_patterns(Variant::P), 8, 11).unwrap();
        assert_eq!(a.to_string(), b.to_string());
        assert_eq!(a.to_string().parse::<EpochPlan>().unwrap(), a);
        let c = make_epoch_plan(50, &default_patterns(Variant::P), 8, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn plan_parse_errors_carry_line_numbers() {
        let err = "512 640 8 1 0,1\n512 640 x 1 2\n".parse::<EpochPlan>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(matches!("1 2 3\n".parse::<EpochPlan>(), Err(Error::Parse { line: 1, .. })));
    }
}
