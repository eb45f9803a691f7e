//! Aligned Rank Transform and balanced 2×2×2 within-tile repeated-measures
//! ANOVA over pooled tile values.

mod fdist;
mod table;

pub use fdist::{f_cdf_upper, incomplete_beta, ln_gamma};
pub use table::{read_long_table, read_long_table_from, write_anova_csv, write_long_table, write_long_table_to};

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("insufficient data: {complete} complete tiles, need at least 2")]
    InsufficientData { complete: usize },
    #[error("unbalanced design: {0}")]
    Unbalanced(String),
    #[error("invalid long table: {0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
}

/// One pooled observation: a tile's metric value under one factor combination.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub tile: u32,
    /// Levels of factors A, B and C.
    pub factors: [String; 3],
    pub metric: String,
    pub value: f64,
    /// Optional repeat of the same condition (e.g. viewing angle); averaged
    /// before analysis.
    pub replicate: Option<String>,
}

type RecordKey = (String, [String; 3], Option<String>, u32);

impl Record {
    fn key(&self) -> RecordKey {
        (self.metric.clone(), self.factors.clone(), self.replicate.clone(), self.tile)
    }
}

/// Long-format table of pooled observations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LongTable {
    records: Vec<Record>,
}

impl LongTable {
    /// Records are kept sorted by (metric, factors, replicate, tile).
    pub fn new(mut records: Vec<Record>) -> Result<Self, StatsError> {
        for r in &records {
            if r.tile == 0 {
                return Err(StatsError::Invalid("tile ids start at 1".into()));
            }
            if !r.value.is_finite() {
                return Err(StatsError::Invalid(format!("tile {} {}: non-finite value", r.tile, r.metric)));
            }
        }
        records.sort_by_key(Record::key);
        if let Some(w) = records.windows(2).find(|w| w[0].key() == w[1].key()) {
            let r = &w[0];
            return Err(StatsError::Invalid(format!(
                "duplicate record for tile {} at ({}, {}, {}) {}",
                r.tile, r.factors[0], r.factors[1], r.factors[2], r.metric
            )));
        }
        Ok(LongTable { records })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn metrics(&self) -> Vec<String> {
        self.records.iter().map(|r| r.metric.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Sorted levels of each factor.
    pub fn levels(&self) -> [Vec<String>; 3] {
        std::array::from_fn(|f| {
            self.records.iter().map(|r| r.factors[f].clone()).collect::<BTreeSet<_>>().into_iter().collect()
        })
    }

    pub fn for_metric(&self, metric: &str) -> LongTable {
        LongTable { records: self.records.iter().filter(|r| r.metric == metric).cloned().collect() }
    }

    /// Averages replicates of the same (tile, factors, metric).
    pub fn collapse_replicates(&self) -> LongTable {
        let mut groups: BTreeMap<(String, [String; 3], u32), (f64, usize)> = BTreeMap::new();
        for r in &self.records {
            let e = groups.entry((r.metric.clone(), r.factors.clone(), r.tile)).or_default();
            e.0 += r.value;
            e.1 += 1;
        }
        let records = groups
            .into_iter()
            .map(|((metric, factors, tile), (sum, n))| Record {
                tile,
                factors,
                metric,
                value: sum / n as f64,
                replicate: None,
            })
            .collect();
        LongTable::new(records).expect("collapsing keeps the table valid")
    }

    /// Replaces every record of the factor cells (and replicates) present
    /// in `incoming` with the incoming records.
    pub fn upsert(&self, incoming: &LongTable) -> Result<LongTable, StatsError> {
        let replaced: BTreeSet<([String; 3], Option<String>)> =
            incoming.records.iter().map(|r| (r.factors.clone(), r.replicate.clone())).collect();
        let mut records: Vec<Record> = self
            .records
            .iter()
            .filter(|r| !replaced.contains(&(r.factors.clone(), r.replicate.clone())))
            .cloned()
            .collect();
        records.extend(incoming.records.iter().cloned());
        LongTable::new(records)
    }
}

pub const FACTOR_NAMES: [&str; 3] = ["A", "B", "C"];

/// Result of complete-case filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct CompleteCases {
    pub table: LongTable,
    /// Tiles removed because at least one factor cell was missing.
    pub dropped: Vec<u32>,
}

fn require_two_levels(levels: &[Vec<String>; 3]) -> Result<(), StatsError> {
    match (0..3).find(|&f| levels[f].len() != 2) {
        Some(f) => {
            Err(StatsError::Unbalanced(format!("factor {} has {} level(s), need 2", FACTOR_NAMES[f], levels[f].len())))
        }
        None => Ok(()),
    }
}

/// Keeps only tiles that have a value in all 8 factor cells for every
/// metric in the table.
pub fn complete_cases(table: &LongTable) -> Result<CompleteCases, StatsError> {
    let metrics = table.metrics();
    let mut cells: BTreeMap<u32, BTreeSet<(&str, &[String; 3])>> = BTreeMap::new();
    for r in &table.records {
        cells.entry(r.tile).or_default().insert((r.metric.as_str(), &r.factors));
    }
    require_two_levels(&table.levels())?;
    let needed = 8 * metrics.len();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (&t, c) in &cells {
        if c.len() == needed {
            kept.push(t);
        } else {
            dropped.push(t);
        }
    }
    if kept.len() < 2 {
        return Err(StatsError::InsufficientData { complete: kept.len() });
    }
    let keep: BTreeSet<u32> = kept.into_iter().collect();
    let records = table.records.iter().filter(|r| keep.contains(&r.tile)).cloned().collect();
    Ok(CompleteCases { table: LongTable { records }, dropped })
}

/// A model term of the 2×2×2 design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Effect {
    A,
    B,
    C,
    AB,
    AC,
    BC,
    ABC,
}

impl Effect {
    pub const ALL: [Effect; 7] = [Effect::A, Effect::B, Effect::C, Effect::AB, Effect::AC, Effect::BC, Effect::ABC];

    pub fn name(self) -> &'static str {
        match self {
            Effect::A => "A",
            Effect::B => "B",
            Effect::C => "C",
            Effect::AB => "A:B",
            Effect::AC => "A:C",
            Effect::BC => "B:C",
            Effect::ABC => "A:B:C",
        }
    }

    /// Factor bits in cell-index order: A = 4, B = 2, C = 1.
    pub fn mask(self) -> usize {
        match self {
            Effect::A => 4,
            Effect::B => 2,
            Effect::C => 1,
            Effect::AB => 6,
            Effect::AC => 5,
            Effect::BC => 3,
            Effect::ABC => 7,
        }
    }

    /// ±1 contrast coefficient of cell `k` (level 1 = +, level 0 = −).
    pub fn sign(self, cell: usize) -> f64 {
        if (self.mask() & !cell).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }
}

/// Balanced within-tile data: 8 cells per tile, cell `k = 4a + 2b + c`
/// with level indices in sorted level order.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub levels: [[String; 2]; 3],
    pub tiles: Vec<u32>,
    pub values: Vec<[f64; 8]>,
}

impl Design {
    /// From a single-metric table without replicates, complete for every tile.
    pub fn from_table(table: &LongTable) -> Result<Design, StatsError> {
        if table.metrics().len() != 1 {
            return Err(StatsError::Unbalanced(format!("expected one metric, found {}", table.metrics().len())));
        }
        if table.records.iter().any(|r| r.replicate.is_some()) {
            return Err(StatsError::Unbalanced("replicates must be collapsed first".into()));
        }
        let levels = table.levels();
        require_two_levels(&levels)?;
        let levels: [[String; 2]; 3] = std::array::from_fn(|f| [levels[f][0].clone(), levels[f][1].clone()]);
        let mut by_tile: BTreeMap<u32, [Option<f64>; 8]> = BTreeMap::new();
        for r in &table.records {
            let idx = |f: usize| usize::from(r.factors[f] == levels[f][1]);
            by_tile.entry(r.tile).or_default()[4 * idx(0) + 2 * idx(1) + idx(2)] = Some(r.value);
        }
        let mut tiles = Vec::new();
        let mut values = Vec::new();
        for (t, cells) in by_tile {
            if cells.iter().any(Option::is_none) {
                return Err(StatsError::Unbalanced(format!("tile {t} is missing a factor cell")));
            }
            tiles.push(t);
            values.push(cells.map(|c| c.unwrap()));
        }
        Ok(Design { levels, tiles, values })
    }
}

fn cell_means(values: &[[f64; 8]]) -> [f64; 8] {
    let n = values.len() as f64;
    std::array::from_fn(|k| values.iter().map(|v| v[k]).sum::<f64>() / n)
}

/// Estimated effect at each cell by inclusion–exclusion over the marginal
/// means of the effect's factor subsets (e.g. A:B → μ_AB − μ_A − μ_B + μ).
pub fn effect_estimates(cell_means: &[f64; 8], effect: Effect) -> [f64; 8] {
    let s = effect.mask();
    // Marginal mean over the factors in `t` at the levels of cell k.
    let marginal = |t: usize, k: usize| {
        let members: Vec<usize> = (0..8).filter(|&j| j & t == k & t).collect();
        members.iter().map(|&j| cell_means[j]).sum::<f64>() / members.len() as f64
    };
    std::array::from_fn(|k| {
        let mut est = 0.0;
        let mut t = s;
        loop {
            let sign = if (s & !t).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
            est += sign * marginal(t, k);
            if t == 0 {
                break;
            }
            t = (t - 1) & s;
        }
        est
    })
}

/// Aligned responses for `effect`: y − (full-cell mean) + effect estimate.
pub fn align(values: &[[f64; 8]], effect: Effect) -> Vec<[f64; 8]> {
    let mu = cell_means(values);
    let est = effect_estimates(&mu, effect);
    values.iter().map(|v| std::array::from_fn(|k| v[k] - mu[k] + est[k])).collect()
}

/// Ranks 1..N; ties share the mean of the ranks they span.
pub fn rank_midtie(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j share their average.
        let r = (i + 1 + j) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = r;
        }
        i = j;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnovaRow {
    pub effect: Effect,
    pub f: f64,
    pub df1: f64,
    pub df2: f64,
    pub p: f64,
}

/// Within-tile F for `effect` with the effect×tile interaction as error
/// term. For a one-degree-of-freedom contrast this is `n·d̄² / s_d²` over
/// the per-tile contrasts `d_t = Σ_k c_k y_tk`.
pub fn rm_anova(values: &[[f64; 8]], effect: Effect) -> Result<AnovaRow, StatsError> {
    let n = values.len();
    if n < 2 {
        return Err(StatsError::InsufficientData { complete: n });
    }
    let d: Vec<f64> = values.iter().map(|v| (0..8).map(|k| effect.sign(k) * v[k]).sum()).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let ss_error: f64 = d.iter().map(|x| (x - mean).powi(2)).sum();
    let ss_effect = n as f64 * mean * mean;
    let df2 = (n - 1) as f64;
    let (f, p) = if ss_error > 0.0 {
        let f = ss_effect / (ss_error / df2);
        (f, f_cdf_upper(f, 1.0, df2))
    } else if ss_effect > 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (0.0, 1.0)
    };
    Ok(AnovaRow { effect, f, df1: 1.0, df2, p })
}

/// ART ANOVA: align for each effect, rank all aligned responses together,
/// then test that effect on the ranks.
pub fn art_anova(values: &[[f64; 8]]) -> Result<Vec<AnovaRow>, StatsError> {
    Effect::ALL
        .iter()
        .map(|&e| {
            let aligned = align(values, e);
            let flat: Vec<f64> = aligned.iter().flatten().copied().collect();
            let ranks = rank_midtie(&flat);
            let ranked: Vec<[f64; 8]> = ranks.chunks_exact(8).map(|c| c.try_into().unwrap()).collect();
            rm_anova(&ranked, e)
        })
        .collect()
}

/// Full analysis of one metric of a long table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricAnalysis {
    pub metric: String,
    pub levels: [[String; 2]; 3],
    pub n_tiles: usize,
    pub dropped: Vec<u32>,
    pub rows: Vec<AnovaRow>,
}

/// Filter to `metric`, average replicates, drop incomplete tiles, run ART ANOVA.
pub fn analyze_metric(table: &LongTable, metric: &str) -> Result<MetricAnalysis, StatsError> {
    let sub = table.for_metric(metric);
    if sub.is_empty() {
        return Err(StatsError::Invalid(format!("no records for metric `{metric}`")));
    }
    let cc = complete_cases(&sub.collapse_replicates())?;
    let design = Design::from_table(&cc.table)?;
    Ok(MetricAnalysis {
        metric: metric.to_string(),
        levels: design.levels.clone(),
        n_tiles: design.tiles.len(),
        dropped: cc.dropped,
        rows: art_anova(&design.values)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn rec(tile: u32, cell: usize, value: f64) -> Record {
        let lv = |bit: usize, a: &str, b: &str| if cell & bit != 0 { b.to_string() } else { a.to_string() };
        Record {
            tile,
            factors: [lv(4, "endo", "lidar"), lv(2, "abdomen", "liver"), lv(1, "close", "far")],
            metric: "depth_accuracy".into(),
            value,
            replicate: None,
        }
    }

    fn full_table(n: u32, f: impl Fn(u32, usize) -> f64) -> LongTable {
        LongTable::new((1..=n).flat_map(|t| (0..8).map(move |k| (t, k))).map(|(t, k)| rec(t, k, f(t, k))).collect())
            .unwrap()
    }

    fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 8]> {
        (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_midtie(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(rank_midtie(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(rank_midtie(&[1.0, 2.0, 2.0, 0.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn rank_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let v: Vec<f64> = (0..40).map(|_| rng.random_range(0..10) as f64).collect();
            let ranks = rank_midtie(&v);
            for (i, &x) in v.iter().enumerate() {
                let below = v.iter().filter(|&&y| y < x).count() as f64;
                let equal = v.iter().filter(|&&y| y == x).count() as f64;
                assert_eq!(ranks[i], below + (equal + 1.0) / 2.0);
            }
        }
    }

    #[test]
    fn duplicates_rejected_third_level_only_at_analysis() {
        let mut r = full_table(2, |_, _| 0.0).records().to_vec();
        r.push(r[0].clone());
        assert!(LongTable::new(r).is_err());
        let mut r = full_table(2, |_, _| 0.0).records().to_vec();
        r[0].factors[0] = "third".into();
        let table = LongTable::new(r).unwrap();
        assert!(matches!(Design::from_table(&table), Err(StatsError::Unbalanced(_))));
    }

    #[test]
    fn complete_cases_drops_partial_tiles() {
        let full = full_table(10, |t, k| (t as usize * 8 + k) as f64);
        let cc = complete_cases(&full).unwrap();
        assert_eq!(cc.table, full);
        assert!(cc.dropped.is_empty());
        let missing: Vec<Record> = full
            .records()
            .iter()
            .filter(|r| !(r.tile == 7 && r.factors[2] == "far" && r.factors[0] == "endo" && r.factors[1] == "liver"))
            .cloned()
            .collect();
        let cc = complete_cases(&LongTable::new(missing).unwrap()).unwrap();
        assert_eq!(cc.dropped, vec![7]);
        assert!(cc.table.records().iter().all(|r| r.tile != 7));
        assert_eq!(cc.table.len(), 72);
    }

    #[test]
    fn complete_cases_matches_brute_force_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let full = full_table(12, |_, _| 1.0);
            let kept: Vec<Record> = full.records().iter().filter(|_| rng.random_bool(0.97)).cloned().collect();
            let table = LongTable::new(kept.clone()).unwrap();
            let expected: Vec<u32> = (1..=12).filter(|&t| kept.iter().filter(|r| r.tile == t).count() == 8).collect();
            match complete_cases(&table) {
                Ok(cc) => {
                    let got: BTreeSet<u32> = cc.table.records().iter().map(|r| r.tile).collect();
                    assert_eq!(got.into_iter().collect::<Vec<_>>(), expected);
                }
                Err(StatsError::InsufficientData { complete }) => assert_eq!(complete, expected.len()),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn insufficient_data() {
        let t = full_table(1, |_, _| 0.0);
        assert!(matches!(complete_cases(&t), Err(StatsError::InsufficientData { complete: 1 })));
    }

    #[test]
    fn single_level_factor_is_named() {
        let records: Vec<Record> =
            full_table(3, |_, _| 0.0).records().iter().filter(|r| r.factors[1] == "liver").cloned().collect();
        let err = complete_cases(&LongTable::new(records).unwrap()).unwrap_err();
        assert!(err.to_string().contains("factor B has 1 level(s)"), "{err}");
    }

    #[test]
    fn replicates_are_averaged() {
        let mut records = Vec::new();
        for (rep, v) in [("0", 1.0), ("1", 3.0)] {
            let mut r = rec(1, 0, v);
            r.replicate = Some(rep.into());
            records.push(r);
        }
        let t = LongTable::new(records).unwrap().collapse_replicates();
        assert_eq!(t.len(), 1);
        assert_eq!(t.records()[0].value, 2.0);
    }

    #[test]
    fn upsert_replaces_condition() {
        let base = full_table(3, |_, _| 1.0);
        let incoming = LongTable::new((1..=3).map(|t| rec(t, 5, 9.0)).collect()).unwrap();
        let merged = base.upsert(&incoming).unwrap();
        assert_eq!(merged.len(), 24);
        assert_eq!(merged.records().iter().filter(|r| r.value == 9.0).count(), 3);
    }

    #[test]
    fn pure_main_effect_alignment() {
        // y = ±1 on A only, plus a tile offset.
        let values: Vec<[f64; 8]> = (0..6).map(|t| std::array::from_fn(|k| Effect::A.sign(k) + t as f64)).collect();
        let aligned = align(&values, Effect::A);
        let mu = cell_means(&aligned);
        for (k, m) in mu.iter().enumerate() {
            assert!((m - Effect::A.sign(k)).abs() < 1e-10);
        }
        for e in Effect::ALL.into_iter().filter(|&e| e != Effect::A) {
            assert!(effect_estimates(&mu, e).iter().all(|x| x.abs() < 1e-10));
        }
    }

    #[test]
    fn aligned_diagnostics_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let values = random_values(&mut rng, 10);
            for target in Effect::ALL {
                let aligned = align(&values, target);
                let total: f64 = aligned.iter().flatten().sum();
                assert!(total.abs() < 1e-9);
                for other in Effect::ALL.into_iter().filter(|&e| e != target) {
                    assert!(rm_anova(&aligned, other).unwrap().f < 1e-8);
                }
            }
        }
    }

    #[test]
    fn constant_responses_give_zero_f() {
        let values = vec![[2.5; 8]; 5];
        for e in Effect::ALL {
            let row = rm_anova(&values, e).unwrap();
            assert_eq!((row.f, row.p), (0.0, 1.0));
        }
    }

    #[test]
    fn zero_error_variance_gives_infinite_f() {
        let values: Vec<[f64; 8]> = (0..4).map(|_| std::array::from_fn(|k| Effect::B.sign(k))).collect();
        let row = rm_anova(&values, Effect::B).unwrap();
        assert_eq!((row.f, row.p), (f64::INFINITY, 0.0));
    }

    /// Classical sums of squares for a three-tile dataset, from the
    /// tile × A marginal table.
    #[test]
    fn hand_worked_sums_of_squares() {
        let values: Vec<[f64; 8]> = vec![
            [1.0, 2.0, 3.0, 4.0, 6.0, 5.0, 9.0, 8.0],
            [2.0, 2.0, 1.0, 3.0, 4.0, 7.0, 6.0, 5.0],
            [0.0, 1.0, 2.0, 2.0, 8.0, 6.0, 7.0, 9.0],
        ];
        // Tile × A means (over 4 cells each).
        let m = |t: usize, a: usize| values[t][4 * a..4 * a + 4].iter().sum::<f64>() / 4.0;
        let grand: f64 = values.iter().flatten().sum::<f64>() / 24.0;
        let a_mean = |a: usize| (0..3).map(|t| m(t, a)).sum::<f64>() / 3.0;
        let t_mean = |t: usize| values[t].iter().sum::<f64>() / 8.0;
        let ss_a: f64 = (0..2).map(|a| 12.0 * (a_mean(a) - grand).powi(2)).sum();
        let ss_at: f64 = (0..3)
            .flat_map(|t| (0..2).map(move |a| (t, a)))
            .map(|(t, a)| 4.0 * (m(t, a) - a_mean(a) - t_mean(t) + grand).powi(2))
            .sum();
        let expected = ss_a / (ss_at / 2.0);
        let row = rm_anova(&values, Effect::A).unwrap();
        assert!((row.f - expected).abs() < 1e-12 * expected);
        assert_eq!((row.df1, row.df2), (1.0, 2.0));
    }

    #[test]
    fn large_effect_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Normal::new(0.0, 0.0003).unwrap();
        let values: Vec<[f64; 8]> = (0..30)
            .map(|_| std::array::from_fn(|k| if k & 4 != 0 { 0.005 } else { 0.0 } + noise.sample(&mut rng)))
            .collect();
        let rows = art_anova(&values).unwrap();
        assert!(rows[0].p < 0.001);
    }

    #[test]
    fn analyze_from_table() {
        let t = full_table(8, |t, k| if k & 2 != 0 { 1.0 } else { 0.0 } + 0.01 * ((t as usize * 7 + k * 3) % 5) as f64);
        let a = analyze_metric(&t, "depth_accuracy").unwrap();
        assert_eq!(a.n_tiles, 8);
        assert_eq!(a.levels[1], ["abdomen".to_string(), "liver".to_string()]);
        assert!(a.rows[1].p < 1e-3);
        assert!(analyze_metric(&t, "nope").is_err());
    }
}
